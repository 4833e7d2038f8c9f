import pytest
import json
import textwrap
import numpy as np
import kahlerflow as kf
import kahlerflow.cli as cli
import kahlerflow.utils as utils
from kahlerflow.utils import snapshotio, plotting
from kahlerflow.utils.errors import MissingArtifacts

PRODUCT = """\
model:
  kind: ProductFlat
  a0: 2.0
  b0: 1.0
  grid:
    n_fibre: 17
    n_base: 17
    stencil_order: 2
output:
  plots: false
"""


def write(tmp_path, text, name="product.yaml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return str(path)


def test_product_run_passes_every_verdict(tmp_path):
    config = write(tmp_path, PRODUCT)
    code = cli.main(["--log-level", "warning", "run", "--config", config, "--out", str(tmp_path / "a")])
    assert code == cli.EXIT_OK
    run_dir = tmp_path / "a" / "product"
    for name in ("config.yaml", "series.csv", "snapshots.npz", "report.json", "run.log"):
        assert (run_dir / name).exists(), name
    report = json.loads((run_dir / "report.json").read_text())
    assert [v["theorem_id"] for v in report["verdicts"]] == list(kf.REGISTRY)
    failed = [v["theorem_id"] for v in report["verdicts"] if not v["passed"]]
    assert failed == []
    assert report["run"]["completed"]
    assert "kahlerflow.ellipticsolvers: rho_SPR solved" in (run_dir / "run.log").read_text()
    assert report["class_data"]["T"] == pytest.approx(np.log(2.0))

    # the effective configuration reproduces the series byte for byte
    code = cli.main(["--log-level", "warning", "run", "--config", str(run_dir / "config.yaml"),
                     "--out", str(tmp_path / "b")])
    assert code == cli.EXIT_OK
    again = tmp_path / "b" / "config" / "series.csv"
    assert again.read_bytes() == (run_dir / "series.csv").read_bytes()


def test_verdict_failures_exit_code(tmp_path):
    config = write(tmp_path, PRODUCT + textwrap.dedent("""\
        verdicts:
          registry: [VOLUME]
          tolerances:
            volume_rel_tol: 1.0e-9
        """))
    out = str(tmp_path / "runs")
    assert cli.main(["--log-level", "warning", "run", "--config", config, "--out", out]) == cli.EXIT_VERDICTS
    assert cli.main(["--log-level", "warning", "run", "--config", config, "--out", out,
                     "--no-fail-on-verdicts"]) == cli.EXIT_OK


def test_malformed_config_exit_code(tmp_path):
    config = write(tmp_path, "model:\n  kind: ProductFlat\n  a1: 2.0\n")
    assert cli.main(["run", "--config", config, "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    config = write(tmp_path, "model:\n  psi0:\n    profile: FibreBump\n    amplitude: 100.0\n", "steep.yaml")
    assert cli.main(["run", "--config", config, "--out", str(tmp_path)]) == cli.EXIT_CONFIG


def test_report_needs_artifacts(tmp_path):
    with pytest.raises(MissingArtifacts):
        cli.cmd_report(str(tmp_path))
    assert cli.main(["report", str(tmp_path)]) == cli.EXIT_PIPELINE


def test_report_rerenders(tmp_path):
    config = write(tmp_path, PRODUCT)
    report = cli.cmd_run(config, out=str(tmp_path), eps_stop=0.05, registry=["VOLUME", "TYPE_I"])
    assert [v["theorem_id"] for v in report.verdicts] == ["VOLUME", "TYPE_I"]
    written = cli.cmd_report(str(tmp_path / "product"))
    assert written[-1].endswith("report.md")
    text = (tmp_path / "product" / "report.md").read_text()
    assert "| VOLUME |" in text and "ProductFlat" in text


def test_panel_figures(tmp_path):
    model = kf.build_model(kf.ModelSpec(grid=kf.GridSpec(n_fibre=17, n_base=17)))
    series = kf.run(model, kf.StepSchedule())
    bundle = kf.collect_series(series, kf.solve_limit_potentials(model, series.omega))
    figure = plotting.panel_figure(bundle, "diameter")
    names = [trace.name for trace in figure.data]
    assert "diam_fibre_max" in names
    assert any(name.startswith("diam_fibre_max fit, exponent 0.5") for name in names)
    empty = kf.ObservableSeries(columns={"t": np.zeros(3), "E": np.ones(3)}, meta={"T": 1.0, "eps_stop": 0.1})
    assert plotting.panel_figure(empty, "liyau") is None


def test_solve_base(tmp_path):
    config = write(tmp_path, PRODUCT.replace("ProductFlat", "SphereBase").replace("b0: 1.0", "b0: 4.0")
                   + "  \n" + "mode: ske\n")
    assert cli.main(["--log-level", "warning", "solve-base", "--config", config, "--out", str(tmp_path)]) == cli.EXIT_OK
    run_dir = tmp_path / "product"
    summary = json.loads((run_dir / "elliptic.json").read_text())
    assert summary["failures"] == {}
    assert summary["G_mass"]["mass_error"] < 1e-12
    assert summary["G_mass"]["reference"] == "ske"
    with np.load(run_dir / "base_potentials.npz") as fields:
        assert fields["rho_B"].shape == (17,)
        assert fields["rho_SPR"].shape == (17, 17)


def test_snapshot_file(tmp_path):
    model = kf.build_model(kf.ModelSpec(kind="SphereBase", b0=4.0, psi0=kf.InitialPerturbation("CoupledBump", 0.05),
                                        grid=kf.GridSpec(n_fibre=17, n_base=17)))
    series = kf.run(model, kf.StepSchedule(eps_stop=0.2))
    path = tmp_path / "snapshots.npz"
    snapshotio.save_series(series, path)
    header = snapshotio.read_header(path)
    assert header["model"]["kind"] == "SphereBase"
    loaded = snapshotio.load_series(path)
    assert loaded.completed
    assert np.array_equal(loaded.times, series.times)
    for a, b in zip(loaded.snapshots, series.snapshots):
        assert np.array_equal(a.phi, b.phi) and np.array_equal(a.dphi_dt, b.dphi_dt)
    with pytest.raises(MissingArtifacts):
        snapshotio.read_header(tmp_path / "missing.npz")


def test_resume(tmp_path):
    short = write(tmp_path, PRODUCT.replace("output:\n  plots: false\n", "")
                  + "schedule:\n  eps_stop: 0.05\n  max_steps: 100\noutput:\n  name: product\n  plots: false\n",
                  "short.yaml")
    full = write(tmp_path, PRODUCT + "schedule:\n  eps_stop: 0.05\n")
    assert cli.main(["--log-level", "warning", "run", "--config", short, "--out", str(tmp_path / "resumed")]) == cli.EXIT_PIPELINE
    report = json.loads((tmp_path / "resumed" / "product" / "report.json").read_text())
    assert report["run"]["failure"]["error"] == "MaxStepsExceeded"

    code = cli.main(["--log-level", "warning", "run", "--config", full, "--out", str(tmp_path / "resumed"),
                     "--registry", "VOLUME", "--resume", "--no-fail-on-verdicts"])
    assert code == cli.EXIT_OK
    assert cli.main(["--log-level", "warning", "run", "--config", full, "--out", str(tmp_path / "fresh"),
                     "--registry", "VOLUME", "--no-fail-on-verdicts"]) == cli.EXIT_OK
    resumed = (tmp_path / "resumed" / "product" / "series.csv").read_bytes()
    assert resumed == (tmp_path / "fresh" / "product" / "series.csv").read_bytes()


def test_sweep(tmp_path):
    config = write(tmp_path, PRODUCT + "verdicts:\n  registry: [VOLUME]\n")
    frame = cli.cmd_sweep(config, {"model.a0": [2.0, -1.0], "model.psi0.profile": ["Zero"]}, out=str(tmp_path), workers=2)
    assert len(frame) == 2
    assert list(frame["status"]) == ["completed", "config_error"]
    assert frame["VOLUME"].iloc[0] == "passed"
    assert (tmp_path / "product" / "sweep.csv").exists()
    assert (tmp_path / "product" / "run_000" / "series.csv").exists()


def test_sweep_needs_a_grid(tmp_path):
    config = write(tmp_path, PRODUCT)
    assert cli.main(["sweep", "--config", config, "--out", str(tmp_path)]) == cli.EXIT_CONFIG


def test_configure_logging_file_modes(tmp_path):
    with pytest.raises(ValueError):
        utils.configure_logging(log_to_console=False, file_mode="x")
    path = tmp_path / "kahlerflow.log"
    utils.configure_logging(level=utils.INFO, log_to_console=False, log_file=str(path))
    utils.logger.info("kahlerflow.tests: first")
    utils.configure_logging(level=utils.INFO, log_to_console=False, log_file=str(path), file_mode="a")
    utils.logger.info("kahlerflow.tests: second")
    utils.configure_logging(level=utils.WARNING, log_to_console=False)
    text = path.read_text()
    assert "INFO     kahlerflow.tests: first" in text and "kahlerflow.tests: second" in text
