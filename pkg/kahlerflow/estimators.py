"""
Observables of the flow computed from snapshots: volume ratios, fibre and region diameters, scalar
curvature (two ways), the Ricci potential `u`, traces and metric equivalence, fibre averages, the
`v`-field with its Li-Yau quantities, and the heat-equation residuals of `u` and `phi_t + phi`.

`collect_series` evaluates all of them along a `SnapshotSeries` into an `ObservableSeries`,
the bundle the verdicts are computed from and the CSV is written from.
"""
from dataclasses import dataclass, field
import numpy as np
import pandas as pd
import kahlerflow.utils as utils
import kahlerflow.cohomology as cohomology
import kahlerflow.verdicts as verdicts
from kahlerflow.abstractellipticproblem import EllipticSolution
from kahlerflow.cmaflow import FlowState, SnapshotSeries, positivity_margin
from kahlerflow.fibrationmodel import Model, MetricField, hessian, laplacian, gradient_norm_sq
from kahlerflow.utils.errors import InsufficientWindow, MissingSeries, VPositivityFailure

COLUMN_GROUPS = {
    "volume": ("vol_ratio_min", "vol_ratio_max", "volume", "volume_over_E", "positivity_margin"),
    "diameter": ("diam_fibre_max", "diam_fibre_min", "diam_region"),
    "curvature": ("R_sup", "R_inf", "R_b_sup", "R_discrepancy", "typeI_sup", "zhang"),
    "traces": ("tr_eta_sup", "tr_eta_inf", "E_tr_omega0_sup", "eig_ratio_min", "eig_ratio_max"),
    "potential": ("phi_sup", "phi_inf", "phi_barrier", "dtphi_sup", "dtphi_inf", "dtphi_sup_abs", "u_sup_abs", "avg_dev"),
    "limits": ("phi_sub_mid", "phi_sub_osc", "phi_base_mid", "phi_base_osc", "u_sub_mid", "u_sub_osc",
               "dist_submersion", "dist_base", "u_dist"),
    "liyau": ("v_min", "v_over_E_min", "v_over_E_max", "liyau_grad_sup", "liyau_lap_sup", "liyau_lap_inf"),
    "heat": ("heat_residual_u", "heat_residual_dtphi"),
}
ESTIMATOR_GROUPS = tuple(COLUMN_GROUPS)


@dataclass
class Observable:
    name: str
    t: float
    value: float


@dataclass
class ObservableSeries:
    """
    Observable time series of one run. `columns` maps column names to arrays aligned with the
    snapshots (`t` and `E` first); `meta` carries the scalars the verdicts need (`T`, `eps_stop`,
    `limit_volume`, `bracket_width`, fitted constants).
    """
    columns: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            utils.logger.error(f"{__name__}: no series `{name}`")
            raise MissingSeries(name)
        return self.columns[name]

    def has(self, name: str) -> bool:
        return name in self.columns

    def __len__(self):
        return len(self.columns.get("t", []))

    def observables(self, name: str) -> list:
        return [Observable(name, float(t), float(v)) for t, v in zip(self.column("t"), self.column(name))]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({name: np.asarray(values, dtype=float) for name, values in self.columns.items()})

    def to_csv(self, path) -> None:
        # %.17g round-trips doubles, so identical runs give identical bytes
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def from_csv(cls, path, meta: dict = None) -> "ObservableSeries":
        frame = pd.read_csv(path)
        return cls(columns={name: frame[name].to_numpy(dtype=float) for name in frame.columns}, meta=dict(meta or {}))


# --- pointwise observables --------------------------------------------------------

def volume_ratio(state: FlowState, omega, cls: cohomology.ClassData) -> tuple:
    """`(min, max)` over the grid of `omega(t)^2 / (E(t) Omega)`."""
    E = cohomology.e_factor(state.t, cls.T)
    ratio = state.metric.det / (E * np.exp(omega.log_density))
    return float(ratio.min()), float(ratio.max())


def fibre_diameters(state: FlowState) -> np.ndarray:
    """Diameter surrogate of every fibre `X_b` (one value per base node)."""
    return state.metric.fibre.diameter_surrogate(state.metric.ff, axis=0)


def fibre_diameter(state: FlowState, b: int) -> float:
    """
    max(meridian length, half of the largest invariant circle) of the fibre over base node `b`;
    within a factor 2 of the diameter of `(X_b, omega(t)|X_b)` and with its exact collapse rate.
    """
    return float(state.metric.fibre.diameter_surrogate(state.metric.ff[:, b], axis=0))


def region_diameter(state: FlowState) -> float:
    """Diameter surrogate of the total space: the larger of the fibre and base-direction surrogates."""
    base = state.metric.base.diameter_surrogate(state.metric.bb, axis=1)
    return float(max(np.max(fibre_diameters(state)), np.max(base)))


@dataclass
class ScalarCurvature:
    """`direct`: from `log det`; `decomposed`: from `(1 - e^{t-T}) R = 2 e^{t-T} - tr f^*eta - Delta u`."""
    direct: np.ndarray
    decomposed: np.ndarray

    @property
    def sup(self) -> float:
        return float(self.direct.max())

    @property
    def inf(self) -> float:
        return float(self.direct.min())

    @property
    def discrepancy(self) -> float:
        return float(np.max(np.abs(self.direct - self.decomposed)))


def _one_minus_s(t: float, T: float) -> float:
    return float(-np.expm1(t - T))


def ricci_potential(state: FlowState, cls: cohomology.ClassData) -> np.ndarray:
    """`u = (1 - e^{t-T}) d phi/dt + phi`, with the analytic time derivative."""
    return _one_minus_s(state.t, cls.T) * state.rhs + state.phi.values


def trace_eta(metric: MetricField, cls: cohomology.ClassData) -> np.ndarray:
    """`tr_omega f^*eta`."""
    return cls.c_B * metric.ff / metric.det


def scalar_curvature(state: FlowState, cls: cohomology.ClassData, u: np.ndarray = None) -> ScalarCurvature:
    """Scalar curvature computed directly and through the Ricci potential decomposition."""
    metric = state.metric
    h_ff, h_fb, h_bb = hessian(metric.fibre, metric.base, np.log(metric.det))
    direct = metric.trace(metric.fibre.background_ricci - h_ff, -h_fb, metric.base.background_ricci - h_bb)

    if u is None:
        u = ricci_potential(state, cls)
    s = float(np.exp(state.t - cls.T))
    decomposed = (cls.n * s - trace_eta(metric, cls) - laplacian(metric, u)) / _one_minus_s(state.t, cls.T)
    return ScalarCurvature(direct=direct, decomposed=decomposed)


def generalized_eigenvalues(metric: MetricField, reference: MetricField) -> tuple:
    """Nodewise eigenvalues `mu_min <= mu_max` of `det(metric - mu * reference) = 0`."""
    p = metric.ff * reference.bb + metric.bb * reference.ff - 2.0 * metric.fb * reference.fb
    disc = np.sqrt(np.clip(p**2 - 4.0 * metric.det * reference.det, 0.0, None))
    return (p - disc) / (2.0 * reference.det), (p + disc) / (2.0 * reference.det)


def traces(model: Model, state: FlowState) -> dict:
    """
    `tr_omega f^*eta` (sup, inf), `E(t) tr_omega omega_0` (sup), and the extremal eigenvalues of
    `omega(t)` against `omega_REF(t)` over the grid.
    """
    cls = model.class_data
    metric = state.metric
    E = cohomology.e_factor(state.t, cls.T)
    g0 = model.initial_metric
    tr_eta = trace_eta(metric, cls)
    tr_omega0 = metric.trace(g0.ff, g0.fb, g0.bb)
    low, high = generalized_eigenvalues(metric, model.reference_metric(state.t))
    return {
        "tr_eta_sup": float(tr_eta.max()),
        "tr_eta_inf": float(tr_eta.min()),
        "E_tr_omega0_sup": float(E * tr_omega0.max()),
        "eig_ratio_min": float(low.min()),
        "eig_ratio_max": float(high.max()),
    }


def fibre_average(model: Model, f: np.ndarray) -> tuple:
    """
    Fibre-wise average of `f` against `omega_{0,b}` (one value per base node) and
    `sup |f - f^*(average)|`.
    """
    weights = model.fibre.quadrature[:, None] * model.initial_metric.ff
    average = np.sum(weights * f, axis=0) / np.sum(weights, axis=0)
    return average, float(np.max(np.abs(f - average[None, :])))


@dataclass
class VConfig:
    """
    `v = 2 A E(t) - (u - (1 - e^{-T}) f^*rho'_B - offset)`, with `A` chosen so that `A E <= v <= 3 A E`
    and `offset` the fitted additive constant of `u`.
    """
    A: float
    rho_b_prime: EllipticSolution
    offset: float = 0.0

    def target(self, model: Model) -> np.ndarray:
        scale = -np.expm1(-model.class_data.T)
        return scale * self.rho_b_prime.potential[None, :] + self.offset


def fit_vconfig(E: np.ndarray, deviation_sup: np.ndarray, rho_b_prime: EllipticSolution, offset: float = 0.0,
                A_min: float = 1e-3, margin: float = 0.5, A_max: float = 1e6) -> VConfig:
    """
    `A = max(A_min, (1 + margin) max_t sup|u - target - offset| / E(t))`, which keeps `A E <= v <= 3 A E`.
    Raises `VPositivityFailure` if that `A` exceeds `A_max`.
    """
    A = max(A_min, (1.0 + margin) * float(np.max(np.asarray(deviation_sup) / np.asarray(E))))
    if not np.isfinite(A) or A > A_max:
        utils.logger.error(f"{__name__}: no A <= {A_max} keeps v positive (needed A = {A:.3e})")
        raise VPositivityFailure(f"no A <= {A_max} keeps v positive (needed A = {A:.3e})")
    return VConfig(A=A, rho_b_prime=rho_b_prime, offset=offset)


def v_and_liyau(model: Model, state: FlowState, vcfg: VConfig, u: np.ndarray = None) -> dict:
    """
    The `v`-field and its Li-Yau observables `sup |grad v|^2 / v`, `sup Delta v`, `inf Delta v`.
    Raises `VPositivityFailure` if `v` is not positive on the grid.
    """
    cls = model.class_data
    E = cohomology.e_factor(state.t, cls.T)
    if u is None:
        u = ricci_potential(state, cls)
    v = 2.0 * vcfg.A * E - (u - vcfg.target(model))
    if np.any(v <= 0):
        utils.logger.error(f"{__name__}: v not positive at t = {state.t} (A = {vcfg.A})")
        raise VPositivityFailure(f"v not positive at t = {state.t} (A = {vcfg.A})")
    lap = laplacian(state.metric, v)
    return {
        "v": v,
        "v_min": float(v.min()),
        "v_over_E_min": float(v.min() / E),
        "v_over_E_max": float(v.max() / E),
        "liyau_grad_sup": float(np.max(gradient_norm_sq(state.metric, v) / v)),
        "liyau_lap_sup": float(lap.max()),
        "liyau_lap_inf": float(lap.min()),
    }


def heat_residual_u(pair: tuple, cls: cohomology.ClassData, u_pair: tuple = None) -> float:
    """
    `sup |du/dt - Delta u + m - tr f^*eta|` between two snapshots: time difference of `u`, spatial terms
    averaged over both ends.
    """
    s0, s1 = pair
    u0, u1 = u_pair if u_pair is not None else (ricci_potential(s0, cls), ricci_potential(s1, cls))
    du = (u1 - u0) / (s1.t - s0.t)
    spatial = 0.5 * (laplacian(s0.metric, u0) + laplacian(s1.metric, u1))
    tr = 0.5 * (trace_eta(s0.metric, cls) + trace_eta(s1.metric, cls))
    return float(np.max(np.abs(du - spatial + cls.m - tr)))


def heat_residual_dtphi(model: Model, pair: tuple) -> float:
    """
    Residual of the evolution of `w = phi_t + phi`:
    `(d/dt - Delta) w + n - (n - m) / (1 - e^{t-T}) + lam tr omega_0 - tr f^*eta / (1 - e^{-T})`.
    """
    cls = model.class_data
    g0 = model.initial_metric

    def spatial(state):
        w = state.rhs + state.phi.values
        forcing = (cls.n - (cls.n - cls.m) / _one_minus_s(state.t, cls.T)
                   + cls.lam * state.metric.trace(g0.ff, g0.fb, g0.bb)
                   - trace_eta(state.metric, cls) / -np.expm1(-cls.T))
        return w, forcing - laplacian(state.metric, w)

    s0, s1 = pair
    w0, rest0 = spatial(s0)
    w1, rest1 = spatial(s1)
    return float(np.max(np.abs((w1 - w0) / (s1.t - s0.t) + 0.5 * (rest0 + rest1))))


def barrier_term(model: Model, omega, t: float) -> float:
    """`sup log(E(t)^{-1} omega_REF(t)^2 / Omega)`, whose running maximum bounds `phi` from above."""
    ref = model.reference_metric(t)
    E = cohomology.e_factor(t, model.class_data.T)
    return float(np.max(np.log(ref.det) - np.log(E) - omega.log_density))


# --- series -------------------------------------------------------------------------

def _mid_osc(f: np.ndarray) -> tuple:
    lo, hi = float(f.min()), float(f.max())
    return 0.5 * (lo + hi), hi - lo


def _additive_constant(columns: dict, prefix: str, window) -> float:
    if window is None:
        return float(columns[f"{prefix}_mid"][-1])
    return verdicts.fit_additive_constant(columns["E"], columns[f"{prefix}_mid"], window)


def collect_series(series: SnapshotSeries, potentials=None, estimators=None, tolerances=None,
                   vconfig_options: dict = {}) -> ObservableSeries:
    """
    Evaluates the selected estimator groups (default: all of `ESTIMATOR_GROUPS`) on every snapshot.

    `potentials` is an `ellipticsolvers.LimitPotentials`; without it (or without `rho'_B`) the `limits`
    and `liyau` groups are left out. `vconfig_options` may set `A_min`, `margin` and `A_max`.
    """
    groups = list(ESTIMATOR_GROUPS) if estimators is None else list(estimators)
    unknown = set(groups) - set(ESTIMATOR_GROUPS)
    if unknown:
        utils.logger.error(f"{__name__}: unknown estimator groups {sorted(unknown)}")
        raise ValueError(f"unknown estimator groups {sorted(unknown)}, expected some of {ESTIMATOR_GROUPS}")
    model, omega, cls = series.model, series.omega, series.class_data
    tol = tolerances or verdicts.VerdictTolerances()

    have_limits = potentials is not None and potentials.rho_b is not None and potentials.rho_b_prime is not None
    if "limits" in groups and not have_limits:
        utils.logger.warning(f"{__name__}: limit potentials unavailable, dropping the limits and liyau estimators")
    if not have_limits:
        groups = [g for g in groups if g not in ("limits", "liyau")]
    elif "liyau" in groups and "limits" not in groups:
        groups.append("limits")

    scale = -np.expm1(-cls.T)
    if have_limits:
        sub_target = scale * potentials.rho_b_prime.potential[None, :]
        base_target = potentials.rho_b.potential[None, :]

    n = len(series)
    columns = {"t": np.empty(n), "E": np.empty(n)}
    for group in groups:
        for name in COLUMN_GROUPS[group]:
            columns[name] = np.full(n, np.nan)

    u_fields = []
    previous = None
    barrier = 0.0
    for i, state in enumerate(series.states()):
        t = state.t
        E = cohomology.e_factor(t, cls.T)
        columns["t"][i] = t
        columns["E"][i] = E
        u = ricci_potential(state, cls)
        if "liyau" in groups:
            u_fields.append(u)

        if "volume" in groups:
            columns["vol_ratio_min"][i], columns["vol_ratio_max"][i] = volume_ratio(state, omega, cls)
            volume = model.volume(state.metric)
            columns["volume"][i] = volume
            columns["volume_over_E"][i] = volume / E
            columns["positivity_margin"][i] = positivity_margin(model, state)
        if "diameter" in groups:
            diameters = fibre_diameters(state)
            columns["diam_fibre_max"][i] = diameters.max()
            columns["diam_fibre_min"][i] = diameters.min()
            columns["diam_region"][i] = region_diameter(state)
        if "curvature" in groups:
            R = scalar_curvature(state, cls, u)
            columns["R_sup"][i] = R.sup
            columns["R_inf"][i] = R.inf
            columns["R_b_sup"][i] = float(R.decomposed.max())
            columns["R_discrepancy"][i] = R.discrepancy
            columns["typeI_sup"][i] = _one_minus_s(t, cls.T) * R.sup
            columns["zhang"][i] = (cls.T - t) ** 2 * R.sup
        if "traces" in groups:
            for name, value in traces(model, state).items():
                columns[name][i] = value
        if "potential" in groups:
            phi = state.phi.values
            barrier = max(barrier, barrier_term(model, omega, t))
            columns["phi_sup"][i] = phi.max()
            columns["phi_inf"][i] = phi.min()
            columns["phi_barrier"][i] = barrier
            columns["dtphi_sup"][i] = state.rhs.max()
            columns["dtphi_inf"][i] = state.rhs.min()
            columns["dtphi_sup_abs"][i] = np.abs(state.rhs).max()
            columns["u_sup_abs"][i] = np.abs(u).max()
            columns["avg_dev"][i] = fibre_average(model, phi)[1]
        if "limits" in groups:
            phi = state.phi.values
            columns["phi_sub_mid"][i], columns["phi_sub_osc"][i] = _mid_osc(phi - sub_target)
            columns["phi_base_mid"][i], columns["phi_base_osc"][i] = _mid_osc(phi - base_target)
            columns["u_sub_mid"][i], columns["u_sub_osc"][i] = _mid_osc(u - sub_target)
        if "heat" in groups and previous is not None:
            columns["heat_residual_u"][i] = heat_residual_u((previous[0], state), cls, (previous[1], u))
            columns["heat_residual_dtphi"][i] = heat_residual_dtphi(model, (previous[0], state))
        previous = (state, u)

    meta = {
        "kind": model.kind,
        "T": cls.T,
        "lambda": cls.lam,
        "eps_stop": series.schedule.eps_stop,
        "limit_volume": cohomology.limit_volume(cls),
        "completed": series.completed,
        "failure": series.failure,
    }
    if model.spec.psi0.profile == "Zero" or model.spec.psi0.amplitude == 0.0:
        meta["exact_limit_type_i"] = float(cls.n - cls.m)

    try:
        window = verdicts.fit_window(columns["t"], columns["E"], cls.T, series.schedule.eps_stop, tol)
    except InsufficientWindow as error:
        utils.logger.warning(f"{__name__}: {error}; additive constants taken from the last snapshot")
        window = None

    if "limits" in groups:
        meta["mode"] = potentials.mode
        widths = potentials.bracket_widths(model)
        if "rho_B" in widths:
            meta["bracket_width"] = widths["rho_B"]
        meta["bracket_widths"] = widths
        for prefix, column in (("phi_sub", "dist_submersion"), ("phi_base", "dist_base"), ("u_sub", "u_dist")):
            c_star = _additive_constant(columns, prefix, window)
            meta[f"c_star_{prefix}"] = c_star
            columns[column] = 0.5 * columns[f"{prefix}_osc"] + np.abs(columns[f"{prefix}_mid"] - c_star)

    if "liyau" in groups:
        try:
            vcfg = fit_vconfig(columns["E"], columns["u_dist"], potentials.rho_b_prime,
                               offset=meta["c_star_u_sub"], **vconfig_options)
            meta["A"] = vcfg.A
            for i, state in enumerate(series.states()):
                values = v_and_liyau(model, state, vcfg, u_fields[i])
                for name in COLUMN_GROUPS["liyau"]:
                    columns[name][i] = values[name]
        except VPositivityFailure as error:
            utils.logger.warning(f"{__name__}: Li-Yau estimators dropped: {error}")
            meta["liyau_failure"] = str(error)
            for name in COLUMN_GROUPS["liyau"]:
                del columns[name]

    utils.logger.info(f"{__name__}: collected {len(columns) - 2} observables over {n} snapshots")
    return ObservableSeries(columns=columns, meta=meta)
