"""
Log-log panels of an observable series against `E(t)`, written as static images with plotly/kaleido.
Every panel is drawn from the series columns alone, so a report can be re-rendered from `series.csv`.
"""
import os
import numpy as np
import kahlerflow.utils as utils
import kahlerflow.verdicts as verdicts
from kahlerflow.utils.errors import InsufficientWindow, MissingSeries

# panel name -> (title, y-axis label, columns, columns with a fitted power law)
PANELS = {
    "volume": ("Volume form control", "ratio", ("vol_ratio_min", "vol_ratio_max", "volume_over_E"), ()),
    "diameter": ("Fibre and region diameters", "diameter", ("diam_fibre_max", "diam_fibre_min", "diam_region"),
                 ("diam_fibre_max",)),
    "curvature": ("Scalar curvature", "curvature", ("R_sup", "typeI_sup", "zhang"), ()),
    "distances": ("Distances to the limit potentials", "sup distance",
                  ("dist_submersion", "dist_base", "u_dist", "avg_dev"), ("dist_submersion", "u_dist", "avg_dev")),
    "traces": ("Traces and metric equivalence", "value",
               ("tr_eta_sup", "E_tr_omega0_sup", "eig_ratio_min", "eig_ratio_max", "dtphi_sup_abs", "u_sup_abs"), ()),
    "liyau": ("Li-Yau quantities", "value", ("v_over_E_min", "v_over_E_max", "liyau_grad_sup", "liyau_lap_sup"), ()),
}


def _positive(E, values):
    keep = np.isfinite(values) & (values > 0) & (E > 0)
    return E[keep], values[keep]


def _fitted_line(bundle, name, window, tolerances):
    E = bundle.column("E")[window]
    values = bundle.column(name)[window]
    correction = name != "diam_fibre_max"
    fit = verdicts.fit_power_law(E, values, tolerances.min_samples, tolerances.min_decades, correction=correction)
    line = np.exp(fit.log_constant + fit.exponent * np.log(E) + fit.correction * E)
    return E, line, fit


def panel_figure(bundle, panel: str, tolerances: verdicts.VerdictTolerances = None):
    """
    Builds the plotly figure of one panel, or returns `None` if none of its columns are in the bundle.
    """
    import plotly.graph_objects as go

    tol = tolerances or verdicts.VerdictTolerances()
    title, y_label, columns, fitted = PANELS[panel]
    available = [name for name in columns if bundle.has(name)]
    if not available:
        return None
    E_all = bundle.column("E")
    try:
        window = verdicts.bundle_window(bundle, tol)
    except (InsufficientWindow, MissingSeries, KeyError):
        window = None

    fig = go.Figure()
    for name in available:
        E, values = _positive(E_all, np.abs(bundle.column(name)))
        fig.add_trace(go.Scatter(x=E, y=values, mode="lines+markers", marker=dict(size=3), name=name))
        if name in fitted and window is not None:
            try:
                E_fit, line, fit = _fitted_line(bundle, name, window, tol)
            except InsufficientWindow:
                continue
            fig.add_trace(go.Scatter(x=E_fit, y=line, mode="lines", line=dict(dash="dash"),
                                     name=f"{name} fit, exponent {fit.exponent:.3f}"))
    if bundle.meta.get("failure"):
        title += f" (stopped: {bundle.meta['failure'].get('error')})"
    fig.update_layout(title=title, width=900, height=600, template="simple_white",
                      xaxis=dict(title="E(t)", type="log", autorange="reversed"),
                      yaxis=dict(title=y_label, type="log"))
    return fig


def render_panels(bundle, out_dir, tolerances: verdicts.VerdictTolerances = None, image_format: str = "svg") -> list:
    """
    Writes every panel with data to `out_dir/<panel>.<image_format>` and returns the written paths.
    Image export needs kaleido; failures are logged as warnings and the panel is skipped.
    """
    try:
        import plotly.graph_objects  # noqa: F401
    except ImportError:
        utils.logger.error(f"{__name__}: plotly module not found. It should be installed with kahlerflow.")
        raise ImportError("plotly module not found. It should be installed with kahlerflow.")

    os.makedirs(out_dir, exist_ok=True)
    written = []
    for panel in PANELS:
        fig = panel_figure(bundle, panel, tolerances)
        if fig is None:
            utils.logger.info(f"{__name__}: no data for panel `{panel}`")
            continue
        path = os.path.join(out_dir, f"{panel}.{image_format}")
        try:
            fig.write_image(path, format=image_format)
            written.append(path)
            utils.logger.info(f"{__name__}: panel `{panel}` saved as {path}")
        except Exception as e:
            utils.logger.warning(f"{__name__}: Could not save panel `{panel}`. Error: {e}")
            utils.logger.warning(f"{__name__}: Static image export may require additional system dependencies.")
    return written
