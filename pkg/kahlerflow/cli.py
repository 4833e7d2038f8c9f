"""
Command-line driver: `run`, `solve-base`, `report` and `sweep`.

A run reads a YAML configuration, builds the model, solves the limit potentials, integrates the flow,
evaluates the estimators and the verdict registry, and writes into its run directory

- `config.yaml`: the effective configuration (re-running it reproduces `series.csv` byte for byte)
- `series.csv`: one row per snapshot, columns `t`, `E` and one per observable
- `snapshots.npz`: the snapshot container (for `--resume` and re-analysis)
- `report.json`: class data, elliptic residuals, series index, verdicts and run metadata
- `run.log` and `plots/`

Exit codes: 0 success, 1 configuration error, 2 pipeline failure, 3 verdict failures.
"""
import argparse
import copy
import itertools
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
import numpy as np
import pandas as pd
import kahlerflow.utils as utils
import kahlerflow.cohomology as cohomology
import kahlerflow.cmaflow as cmaflow
import kahlerflow.estimators as estimators
import kahlerflow.verdicts as verdicts
from kahlerflow.cmaflow import StepSchedule
from kahlerflow.ellipticsolvers import NORMALIZATIONS, LimitPotentials, solve_limit_potentials
from kahlerflow.fibrationmodel import ModelSpec, build_model
from kahlerflow.utils import configio, plotting, snapshotio
from kahlerflow.utils.errors import (
    ConfigError,
    InvalidClass,
    KahlerFlowError,
    MissingArtifacts,
    NonPositiveInitialMetric,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PIPELINE = 2
EXIT_VERDICTS = 3

OUTPUT_ENV = "KAHLERFLOW_OUT"
DEFAULT_OUTPUT = "kahlerflow-runs"
REPORT_FILES = ("report.json", "series.csv")

MODES = ("spr", "ske")

C0_NOTE = ("C0_BRACKET checks the decrease of the oscillation envelope and membership of the limit in the "
           "fitted affine family; the literal bracket endpoints depend on the normalization of rho_SPR and rho_B.")


# --- configuration --------------------------------------------------------------

@dataclass
class VerdictsConfig:
    registry: list = None
    tolerances: verdicts.VerdictTolerances = field(default_factory=verdicts.VerdictTolerances)
    fail_on_verdicts: bool = True


@dataclass
class EllipticOptions:
    tolerance: float = 1e-12
    max_iterations: int = 50
    min_step: float = 2.0**-30
    normalization: str = "flow"

    def solver_options(self) -> dict:
        return {"tolerance": self.tolerance, "max_iterations": self.max_iterations, "min_step": self.min_step}


@dataclass
class LiYauOptions:
    A_min: float = 1e-3
    margin: float = 0.5
    A_max: float = 1e6


@dataclass
class OutputConfig:
    dir: str = None
    name: str = None
    snapshots: bool = True
    plots: bool = True
    image_format: str = "svg"


@dataclass
class RunConfig:
    """
    A run configuration. Every section has defaults, so an empty document runs the ProductFlat model
    with a zero perturbation. `estimators` selects observable groups (default: all) and `sweep` maps
    dotted keys to value lists for `cmd_sweep`.
    """
    model: ModelSpec = field(default_factory=ModelSpec)
    schedule: StepSchedule = field(default_factory=StepSchedule)
    estimators: list = None
    verdicts: VerdictsConfig = field(default_factory=VerdictsConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    mode: str = "spr"
    elliptic: EllipticOptions = field(default_factory=EllipticOptions)
    liyau: LiYauOptions = field(default_factory=LiYauOptions)
    sweep: dict = None

    def to_dict(self) -> dict:
        return asdict(self)


def validate_run_config(config: RunConfig) -> RunConfig:
    """Range checks that need more than the key types. Raises `ConfigError` with the dotted key."""
    if config.mode not in MODES:
        utils.logger.error(f"{__name__}: mode must be one of {MODES}, got {config.mode}")
        raise ConfigError(f"expected one of {MODES}, got {config.mode!r}", key="mode")
    if config.estimators is not None:
        unknown = sorted(set(config.estimators) - set(estimators.ESTIMATOR_GROUPS))
        if unknown:
            utils.logger.error(f"{__name__}: unknown estimator groups {unknown}")
            raise ConfigError(f"unknown estimator groups {unknown}, expected some of {estimators.ESTIMATOR_GROUPS}",
                              key="estimators")
    if config.verdicts.registry is not None:
        unknown = sorted(set(config.verdicts.registry) - set(verdicts.REGISTRY))
        if unknown:
            utils.logger.error(f"{__name__}: unknown theorem ids {unknown}")
            raise ConfigError(f"unknown theorem ids {unknown}", key="verdicts.registry")
    if config.elliptic.normalization not in NORMALIZATIONS:
        utils.logger.error(f"{__name__}: elliptic.normalization must be one of {NORMALIZATIONS}")
        raise ConfigError(f"expected one of {NORMALIZATIONS}, got {config.elliptic.normalization!r}", key="elliptic.normalization")
    if config.output.image_format not in ("svg", "pdf", "png"):
        raise ConfigError(f"expected svg, pdf or png, got {config.output.image_format!r}", key="output.image_format")

    try:
        config.model.grid.validate()
    except ValueError as error:
        raise ConfigError(str(error), key="model.grid")
    try:
        cls = cohomology.class_data(config.model)
    except InvalidClass as error:
        raise ConfigError(str(error), key="model")
    try:
        config.schedule.resolve(cls.T)
    except ValueError as error:
        raise ConfigError(str(error), key="schedule")
    tolerances = config.verdicts.tolerances
    if not 0.0 < tolerances.lipschitz_quantile < 1.0:
        raise ConfigError("expected a value in (0, 1)", key="verdicts.tolerances.lipschitz_quantile")
    if tolerances.min_decades > tolerances.asymptotic_decades:
        raise ConfigError("min_decades exceeds asymptotic_decades", key="verdicts.tolerances.min_decades")
    return config


def build_run_config(data: dict) -> RunConfig:
    return validate_run_config(configio.build_dataclass(RunConfig, data, ""))


def _apply_override(data: dict, key: str, value) -> None:
    # `resolution` sets both grid axes
    if key == "resolution":
        configio.set_dotted(data, "model.grid.n_fibre", value)
        configio.set_dotted(data, "model.grid.n_base", value)
    else:
        configio.set_dotted(data, key, value)


def load_run_config(path, overrides: dict = None) -> RunConfig:
    """
    Reads and validates a run configuration. `overrides` maps dotted keys to values applied on top of
    the document (the command-line flags end up here).
    """
    data = configio.load_yaml(path)
    for key, value in (overrides or {}).items():
        if value is not None:
            _apply_override(data, key, value)
    config = build_run_config(data)
    utils.logger.info(f"{__name__}: loaded configuration {path}")
    return config


def output_root(out: str = None) -> str:
    """`out`, else `$KAHLERFLOW_OUT`, else `./kahlerflow-runs`."""
    return out or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT


def _run_name(config: RunConfig, config_path) -> str:
    if config.output.name:
        return config.output.name
    return os.path.splitext(os.path.basename(str(config_path)))[0]


# --- reports --------------------------------------------------------------------

def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else None
    return value


@dataclass
class RunReport:
    """
    Everything a run produced, except the arrays: configuration echo, class data, elliptic residuals,
    the series index (file, columns, meta), verdicts and wall-clock metadata.
    """
    config: dict
    class_data: dict = field(default_factory=dict)
    elliptic: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)
    run: dict = field(default_factory=dict)
    plots: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def failure(self) -> dict:
        return self.run.get("failure")

    def count(self, status: str) -> int:
        return sum(1 for v in self.verdicts if v["status"] == status)

    @property
    def all_passed(self) -> bool:
        return len(self.verdicts) > 0 and self.count("passed") == len(self.verdicts)

    def exit_code(self, fail_on_verdicts: bool = True) -> int:
        if self.failure is not None or self.elliptic.get("failures"):
            return EXIT_PIPELINE
        if fail_on_verdicts and self.count("failed") > 0:
            return EXIT_VERDICTS
        return EXIT_OK

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def write(self, path) -> None:
        with open(path, "w") as handle:
            json.dump(self.to_dict(), handle, indent=2)

    @classmethod
    def read(cls, path) -> "RunReport":
        with open(path, "r") as handle:
            return cls(**json.load(handle))


def elliptic_summary(model, potentials: LimitPotentials) -> dict:
    summary = {
        "mode": potentials.mode,
        "residuals": potentials.residuals(),
        "failures": dict(potentials.failures),
        "bracket_widths": potentials.bracket_widths(model),
        "solutions": {},
    }
    for name, solution in (("rho_SPR", potentials.rho_spr), ("rho_SKE", potentials.rho_ske),
                           ("rho_B", potentials.rho_b), ("rho_B_prime", potentials.rho_b_prime)):
        if solution is not None:
            summary["solutions"][name] = solution.to_dict()
    if potentials.G is not None:
        summary["G_mass"] = {"mass": potentials.G.mass, "target_mass": potentials.G.target_mass,
                             "mass_error": potentials.G.mass_error, "fibre_volume_V": potentials.G.fibre_volume_V,
                             "reference": potentials.G.reference,
                             "normalization": potentials.G.normalization,
                             "fibre_constant_spread": float(np.ptp(potentials.G.fibre_constant))}
    return summary


def _verdict_summary(verdict_list: list) -> str:
    counts = {status: sum(1 for v in verdict_list if v.status == status) for status in ("passed", "failed", "skipped")}
    return ", ".join(f"{n} {status}" for status, n in counts.items())


# --- pipeline -------------------------------------------------------------------

def execute_run(config: RunConfig, run_dir: str, resume: bool = False) -> RunReport:
    """
    Runs the whole pipeline into `run_dir`. Numerical failures are recorded in the report instead of
    raised; model validation errors raise `ConfigError`.
    """
    os.makedirs(run_dir, exist_ok=True)
    handler = utils.attach_run_log(run_dir)
    started = datetime.now(timezone.utc).isoformat()
    start_time = time.perf_counter()
    report = RunReport(config=config.to_dict(), notes=[C0_NOTE])
    try:
        configio.dump_yaml(config.to_dict(), os.path.join(run_dir, "config.yaml"))
        try:
            model = build_model(config.model)
        except (InvalidClass, NonPositiveInitialMetric) as error:
            raise ConfigError(str(error), key="model")
        cls = model.class_data
        report.class_data = cls.to_dict()
        try:
            omega = cohomology.reference_volume_form(model, cls)
            report.class_data["kappa"] = omega.kappa
            report.class_data["omega_ric_residual"] = omega.ric_residual
            potentials = solve_limit_potentials(model, omega, config.mode, config.elliptic.solver_options(),
                                                normalization=config.elliptic.normalization)
            report.elliptic = elliptic_summary(model, potentials)

            snapshot_path = os.path.join(run_dir, "snapshots.npz")
            previous = None
            if resume:
                if os.path.exists(snapshot_path):
                    previous = snapshotio.load_series(snapshot_path)
                else:
                    utils.logger.warning(f"{__name__}: nothing to resume in {run_dir}, starting at t = 0")
            series = cmaflow.run(model, config.schedule, omega, resume=previous)
            if config.output.snapshots:
                snapshotio.save_series(series, snapshot_path)

            tolerances = config.verdicts.tolerances
            bundle = estimators.collect_series(series, potentials, config.estimators, tolerances,
                                               vconfig_options=asdict(config.liyau))
            bundle.to_csv(os.path.join(run_dir, "series.csv"))
            report.series = {"file": "series.csv", "columns": list(bundle.columns), "n_snapshots": len(bundle),
                             "meta": bundle.meta}
            verdict_list = verdicts.run_registry(bundle, tolerances, config.verdicts.registry)
            report.verdicts = [v.to_dict() for v in verdict_list]
            utils.logger.info(f"{__name__}: verdicts: {_verdict_summary(verdict_list)}")
            report.run = {"completed": series.completed, "failure": series.failure,
                          "solve_statistics": series.diagnostics.get("solve_statistics", {})}
            if config.output.plots:
                report.plots = [os.path.relpath(p, run_dir) for p in plotting.render_panels(
                    bundle, os.path.join(run_dir, "plots"), tolerances, config.output.image_format)]
        except ConfigError:
            raise
        except KahlerFlowError as error:
            utils.logger.error(f"{__name__}: pipeline failed: {type(error).__name__}: {error}")
            report.run["failure"] = {"error": type(error).__name__, "message": str(error)}
        report.run["started"] = started
        report.run["wall_clock"] = time.perf_counter() - start_time
        report.write(os.path.join(run_dir, "report.json"))
        utils.logger.info(f"{__name__}: run written to {run_dir}")
    finally:
        utils.detach_run_log(handler)
    return report


def cmd_run(config_path, out: str = None, resolution_override: int = None, eps_stop: float = None,
            mode: str = None, registry: list = None, resume: bool = False) -> RunReport:
    """Runs one configuration into `<out>/<name>` and returns its report."""
    overrides = {"resolution": resolution_override, "schedule.eps_stop": eps_stop, "mode": mode,
                 "verdicts.registry": list(registry) if registry else None}
    config = load_run_config(config_path, overrides)
    run_dir = os.path.join(out or config.output.dir or output_root(), _run_name(config, config_path))
    return execute_run(config, run_dir, resume=resume)


def cmd_solve_base(config_path, out: str = None, resolution_override: int = None, mode: str = None) -> dict:
    """
    Solves the limit potentials without running the flow. Writes `base_potentials.npz` (fields) and
    `elliptic.json` (residuals, G' mass check, bracket widths) and returns the summary.
    """
    config = load_run_config(config_path, {"resolution": resolution_override, "mode": mode})
    run_dir = os.path.join(out or config.output.dir or output_root(), _run_name(config, config_path))
    os.makedirs(run_dir, exist_ok=True)
    handler = utils.attach_run_log(run_dir)
    try:
        try:
            model = build_model(config.model)
        except (InvalidClass, NonPositiveInitialMetric) as error:
            raise ConfigError(str(error), key="model")
        omega = cohomology.reference_volume_form(model, model.class_data)
        potentials = solve_limit_potentials(model, omega, config.mode, config.elliptic.solver_options(),
                                            normalization=config.elliptic.normalization)
        fields = {"psi0": model.psi0, "fibre_nodes": model.fibre.nodes, "base_nodes": model.base.nodes}
        for name, solution in (("rho_SPR", potentials.rho_spr), ("rho_SKE", potentials.rho_ske),
                               ("rho_B", potentials.rho_b), ("rho_B_prime", potentials.rho_b_prime)):
            if solution is not None:
                fields[name] = solution.potential
        if potentials.G is not None:
            fields["G_prime"] = potentials.G.values
        np.savez(os.path.join(run_dir, "base_potentials.npz"), **fields)
        summary = _jsonable(elliptic_summary(model, potentials))
        summary["class_data"] = _jsonable(model.class_data.to_dict())
        with open(os.path.join(run_dir, "elliptic.json"), "w") as handle:
            json.dump(summary, handle, indent=2)
        utils.logger.info(f"{__name__}: limit potentials written to {run_dir}")
    finally:
        utils.detach_run_log(handler)
    return summary


def render_report(report: RunReport) -> str:
    """Markdown summary of a run report."""
    lines = ["# kahlerflow run", ""]
    model = report.config.get("model", {})
    lines.append(f"- model: {model.get('kind')} a0 = {model.get('a0')}, b0 = {model.get('b0')}, "
                 f"psi0 = {model.get('psi0', {}).get('profile')}")
    if report.class_data:
        lines.append(f"- T = {report.class_data.get('T')}, lambda = {report.class_data.get('lambda')}, "
                     f"c_B = {report.class_data.get('base_limit_coeff')}")
    if report.failure is not None:
        lines.append(f"- **run stopped early**: {report.failure.get('error')}: {report.failure.get('message')}")
    for name, message in report.elliptic.get("failures", {}).items():
        lines.append(f"- **{name} failed**: {message}")
    lines += ["", "| theorem | status | notes |", "|---|---|---|"]
    for verdict in report.verdicts:
        lines.append(f"| {verdict['theorem_id']} | {verdict['status']} | {verdict['notes']} |")
    lines.append("")
    lines += [f"> {note}" for note in report.notes]
    return "\n".join(lines) + "\n"


def cmd_report(run_dir: str) -> list:
    """
    Re-renders the panels of a run from `report.json` and `series.csv` and writes `report.md`.
    Returns the written files. Raises `MissingArtifacts` listing the expected files if any is absent.
    """
    missing = [name for name in REPORT_FILES if not os.path.exists(os.path.join(run_dir, name))]
    if missing:
        utils.logger.error(f"{__name__}: {run_dir} lacks {missing}")
        raise MissingArtifacts(f"{run_dir} lacks {missing}; a run directory holds {list(REPORT_FILES)}")
    report = RunReport.read(os.path.join(run_dir, "report.json"))
    meta = dict(report.series.get("meta", {}))
    if report.failure is not None:
        meta["failure"] = report.failure
    bundle = estimators.ObservableSeries.from_csv(os.path.join(run_dir, "series.csv"), meta)
    tolerances = verdicts.VerdictTolerances.from_dict(report.config["verdicts"]["tolerances"])
    image_format = report.config.get("output", {}).get("image_format", "svg")
    written = plotting.render_panels(bundle, os.path.join(run_dir, "plots"), tolerances, image_format)
    summary_path = os.path.join(run_dir, "report.md")
    with open(summary_path, "w") as handle:
        handle.write(render_report(report))
    utils.logger.info(f"{__name__}: report of {run_dir} rendered with {len(written)} panels")
    return written + [summary_path]


# --- sweeps ---------------------------------------------------------------------

def parse_grid(params: list) -> dict:
    """`["model.a0=1,2,4", "resolution=17,33"]` -> `{"model.a0": [1, 2, 4], "resolution": [17, 33]}`."""
    grid = {}
    for param in params or []:
        if "=" not in param:
            utils.logger.error(f"{__name__}: sweep parameter `{param}` is not of the form key=v1,v2")
            raise ConfigError(f"expected key=v1,v2,..., got {param!r}", key="sweep")
        key, values = param.split("=", 1)
        grid[key.strip()] = [configio.parse_scalar(v) for v in values.split(",")]
    return grid


def _key_constants(report: RunReport) -> dict:
    constants = {}
    picks = {
        "DIAM_FIBRE": ("diam_fibre_max_exponent", "diam_fibre_max_constant"),
        "TYPE_I": ("final",),
        "VOLUME": ("relative_error",),
        "AVG": ("exponent",),
        "SUBMERSION_RATE": ("exponent",),
        "U_CONV": ("exponent",),
        "LIPSCHITZ_H": ("quantile_slope", "max_h_over_E"),
    }
    for verdict in report.verdicts:
        for key in picks.get(verdict["theorem_id"], ()):
            if key in verdict["measured"]:
                constants[f"{verdict['theorem_id']}.{key}"] = verdict["measured"][key]
    return constants


def _sweep_worker(data: dict, run_dir: str) -> dict:
    row = {"run_dir": run_dir}
    try:
        config = build_run_config(data)
        report = execute_run(config, run_dir)
    except ConfigError as error:
        row.update(status="config_error", error=str(error))
        return row
    except Exception as error:
        row.update(status="error", error=f"{type(error).__name__}: {error}")
        return row
    row["status"] = "failed" if report.failure is not None else "completed"
    if report.failure is not None:
        row["error"] = f"{report.failure.get('error')}: {report.failure.get('message')}"
    for verdict in report.verdicts:
        row[verdict["theorem_id"]] = verdict["status"]
    row.update(_key_constants(report))
    return row


def cmd_sweep(config_path, grid: dict = None, out: str = None, workers: int = None) -> pd.DataFrame:
    """
    Runs the cartesian product of `grid` (dotted key -> values, merged over the template's `sweep`
    section) concurrently, one process per run, and writes `sweep.csv` with one row per combination.
    A failing combination gets its status and error in its row; the others are unaffected.
    """
    template = configio.load_yaml(config_path)
    merged = dict(template.get("sweep") or {})
    merged.update(grid or {})
    template.pop("sweep", None)
    if not merged:
        utils.logger.error(f"{__name__}: empty sweep grid")
        raise ConfigError("empty sweep grid: give --param or a `sweep` section", key="sweep")
    for key, values in merged.items():
        if not isinstance(values, (list, tuple)) or len(values) == 0:
            raise ConfigError("expected a non-empty list of values", key=f"sweep.{key}")
    # the template itself must be valid
    base = build_run_config(copy.deepcopy(template))
    sweep_dir = os.path.join(out or base.output.dir or output_root(), _run_name(base, config_path))
    os.makedirs(sweep_dir, exist_ok=True)

    keys = list(merged)
    jobs = []
    for i, combination in enumerate(itertools.product(*(merged[k] for k in keys))):
        data = copy.deepcopy(template)
        data.setdefault("output", {})
        data["output"]["dir"] = None
        for key, value in zip(keys, combination):
            _apply_override(data, key, value)
        jobs.append((dict(zip(keys, combination)), data, os.path.join(sweep_dir, f"run_{i:03d}")))
    utils.logger.info(f"{__name__}: sweeping {len(jobs)} configurations over {keys}")

    with ProcessPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(_sweep_worker, data, run_dir) for _, data, run_dir in jobs]
        rows = []
        for (params, _, _), future in zip(jobs, futures):
            try:
                row = future.result()
            except Exception as error:
                row = {"status": "error", "error": f"{type(error).__name__}: {error}"}
            rows.append({**params, **row})

    frame = pd.DataFrame(rows)
    frame.to_csv(os.path.join(sweep_dir, "sweep.csv"), index=False, float_format="%.17g")
    failed = int(np.sum(frame["status"] != "completed"))
    utils.logger.info(f"{__name__}: sweep written to {sweep_dir}, {failed} of {len(frame)} runs did not complete")
    return frame


# --- entry point ----------------------------------------------------------------

LOG_LEVELS = {"debug": utils.DEBUG, "info": utils.INFO, "warning": utils.WARNING, "error": utils.ERROR}


def _add_common(parser: argparse.ArgumentParser, overrides: bool = True):
    parser.add_argument("--config", required=True, help="YAML run configuration.")
    parser.add_argument("--out", default=None, help=f"Output root (default: ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT}).")
    if overrides:
        parser.add_argument("--resolution-override", type=int, default=None,
                            help="Grid points on both axes, overriding model.grid.")
        parser.add_argument("--mode", choices=MODES, default=None, help="Reference construction feeding G'.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kahlerflow",
                                     description="Numerical laboratory for collapsing Kähler-Ricci flows on model fibrations.")
    parser.add_argument("--log-level", choices=list(LOG_LEVELS), default="info")
    parser.add_argument("--log-file", default=None, help="Also log to this file.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Solve, integrate, estimate and check one configuration.")
    _add_common(run)
    run.add_argument("--eps-stop", type=float, default=None, help="Final gap T - t_end.")
    run.add_argument("--registry", default=None, help="Comma-separated subset of theorem ids.")
    run.add_argument("--resume", action="store_true", help="Continue from the run directory's snapshots.")
    run.add_argument("--no-fail-on-verdicts", action="store_true", help="Exit 0 even if verdicts failed.")

    base = sub.add_parser("solve-base", help="Solve the limit potentials only.")
    _add_common(base)

    report = sub.add_parser("report", help="Re-render the report and panels of a run directory.")
    report.add_argument("run_dir")

    sweep = sub.add_parser("sweep", help="Run a parameter grid concurrently.")
    _add_common(sweep, overrides=False)
    sweep.add_argument("--param", action="append", default=[], help="Dotted key and values, e.g. model.a0=1,2,4.")
    sweep.add_argument("--workers", type=int, default=None)
    return parser


def main(argv: list = None) -> int:
    args = build_parser().parse_args(argv)
    utils.configure_logging(level=LOG_LEVELS[args.log_level], log_to_console=True, log_file=args.log_file)
    try:
        if args.command == "run":
            registry = [r.strip() for r in args.registry.split(",")] if args.registry else None
            report = cmd_run(args.config, args.out, args.resolution_override, args.eps_stop, args.mode,
                             registry, args.resume)
            print(f"{report.count('passed')} passed, {report.count('failed')} failed, "
                  f"{report.count('skipped')} skipped")
            fail_on_verdicts = report.config["verdicts"]["fail_on_verdicts"] and not args.no_fail_on_verdicts
            return report.exit_code(fail_on_verdicts)
        if args.command == "solve-base":
            summary = cmd_solve_base(args.config, args.out, args.resolution_override, args.mode)
            if "G_mass" in summary:
                mass = summary["G_mass"]
                print(f"G' mass check: {mass['mass']:.12g} vs {mass['target_mass']:.12g} "
                      f"(relative error {mass['mass_error']:.3e})")
            print(f"bracket widths: {summary['bracket_widths']}")
            return EXIT_PIPELINE if summary["failures"] else EXIT_OK
        if args.command == "report":
            for path in cmd_report(args.run_dir):
                print(path)
            return EXIT_OK
        if args.command == "sweep":
            frame = cmd_sweep(args.config, parse_grid(args.param), args.out, args.workers)
            print(frame.to_string(index=False))
            return EXIT_OK if bool(np.all(frame["status"] == "completed")) else EXIT_PIPELINE
    except ConfigError as error:
        print(f"configuration error: {error}", file=sys.stderr)
        return EXIT_CONFIG
    except (KahlerFlowError, OSError, ValueError) as error:
        print(f"{type(error).__name__}: {error}", file=sys.stderr)
        return EXIT_PIPELINE
    return EXIT_OK
