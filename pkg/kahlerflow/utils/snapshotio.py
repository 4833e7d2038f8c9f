"""
Snapshot container of a run: one `.npz` file holding the stacked potentials, their time derivatives and
the step diagnostics, plus a JSON header with the model spec, schedule and failure record, so that a
series can be reloaded for re-analysis or resumed.
"""
import json
import numpy as np
import kahlerflow.utils as utils
import kahlerflow.cohomology as cohomology
from kahlerflow.cmaflow import Snapshot, SnapshotSeries, StepSchedule
from kahlerflow.fibrationmodel import ModelSpec, build_model
from kahlerflow.utils.errors import MissingArtifacts

FORMAT = "kahlerflow-snapshots"
VERSION = 1


def _header(series: SnapshotSeries) -> dict:
    statistics = series.diagnostics.get("solve_statistics", {})
    return {
        "format": FORMAT,
        "version": VERSION,
        "model": series.model.spec.to_dict(),
        "class_data": series.class_data.to_dict(),
        "schedule": series.schedule.to_dict(),
        "failure": series.failure,
        "solve_statistics": statistics,
    }


def save_series(series: SnapshotSeries, path) -> None:
    """Writes `series` to `path` (an `.npz` file)."""
    snapshots = series.snapshots
    np.savez_compressed(
        path,
        header=np.array(json.dumps(_header(series))),
        times=np.array([s.t for s in snapshots], dtype=float),
        steps=np.array([s.step for s in snapshots], dtype=np.int64),
        dt_last=np.array([s.dt_last for s in snapshots], dtype=float),
        phi=np.stack([s.phi for s in snapshots]),
        dphi_dt=np.stack([s.dphi_dt for s in snapshots]),
        dt_history=np.asarray(series.diagnostics.get("dt_history", []), dtype=float),
        positivity_margin=np.asarray(series.diagnostics.get("positivity_margin", []), dtype=float),
    )
    utils.logger.info(f"{__name__}: wrote {len(snapshots)} snapshots to {path}")


def read_header(path) -> dict:
    try:
        with np.load(path) as data:
            header = json.loads(str(data["header"]))
    except FileNotFoundError:
        utils.logger.error(f"{__name__}: snapshot file {path} not found")
        raise MissingArtifacts(f"snapshot file {path} not found")
    if header.get("format") != FORMAT or header.get("version") != VERSION:
        utils.logger.error(f"{__name__}: {path} is not a version {VERSION} snapshot file")
        raise ValueError(f"{path} is not a version {VERSION} {FORMAT} file")
    return header


def load_series(path) -> SnapshotSeries:
    """
    Reads a series written by `save_series`. The model is rebuilt from the stored spec and the reference
    volume form recomputed; the stored failure record is kept, the exception object is not.
    """
    header = read_header(path)
    model = build_model(ModelSpec.from_dict(header["model"]))
    omega = cohomology.reference_volume_form(model, model.class_data)
    schedule = StepSchedule(**header["schedule"])
    with np.load(path) as data:
        if data["phi"].shape[1:] != model.shape:
            utils.logger.error(f"{__name__}: snapshot grid {data['phi'].shape[1:]} does not match {model.shape}")
            raise ValueError(f"snapshot grid {data['phi'].shape[1:]} does not match the model grid {model.shape}")
        snapshots = [Snapshot(t=float(t), step=int(k), phi=phi, dphi_dt=dphi, dt_last=float(dt))
                     for t, k, phi, dphi, dt in zip(data["times"], data["steps"], data["phi"], data["dphi_dt"],
                                                    data["dt_last"])]
        diagnostics = {
            "dt_history": data["dt_history"].tolist(),
            "positivity_margin": data["positivity_margin"].tolist(),
            "solve_statistics": header.get("solve_statistics", {}),
        }
    utils.logger.info(f"{__name__}: read {len(snapshots)} snapshots of {model} from {path}")
    return SnapshotSeries(model=model, omega=omega, schedule=schedule, snapshots=snapshots,
                          diagnostics=diagnostics, failure=header.get("failure"))
