"""
Power-law fits of observable series against the collapse factor `E(t)` and the registry of checks
turning the bounds and rates of the flow into pass/fail verdicts with measured constants.

A series bundle is anything with a `meta` dict (`T`, `eps_stop`, ...) and a `column(name)` method
returning a numpy array or raising `MissingSeries`; `estimators.ObservableSeries` is the one built
from a run.
"""
from dataclasses import dataclass, field, asdict
import numpy as np
import kahlerflow.utils as utils
from kahlerflow.utils.errors import InsufficientWindow, KahlerFlowError, MissingSeries
from kahlerflow.utils.solverwrapper import quantile_regression

REGISTRY = (
    "VFC_BAND",
    "VOLUME",
    "DIAM_FIBRE",
    "DIAM_REGION",
    "SCHWARZ",
    "TRACE",
    "METRIC_EQUIV",
    "DTPHI",
    "PHI_BOUNDS",
    "U_BOUND",
    "AVG",
    "C0_BRACKET",
    "SUBMERSION_RATE",
    "LIPSCHITZ_H",
    "U_CONV",
    "LIYAU_GRAD",
    "LIYAU_LAP",
    "TYPE_I",
    "ZHANG_CEILING",
)

REFERENCES = ("E", "T-t", "sqrtE")


@dataclass
class VerdictTolerances:
    """
    Thresholds of the registry. Boundedness of a positive series means `|slope| <= slope_tol` of its
    log-log fit against `E` and `max/min < ratio_tol` over the asymptotic window. Upper bounds compare
    the window maximum with the level of the early half of the window instead of the minimum.
    """
    slope_tol: float = 0.1
    ratio_tol: float = 10.0
    rate_min_exponent: float = 0.95
    diameter_exponent: float = 0.5
    diameter_exponent_tol: float = 0.05
    volume_rel_tol: float = 0.01
    bracket_tol: float = 0.1
    zhang_factor: float = 0.1
    lipschitz_quantile: float = 0.9
    lipschitz_slope_tol: float = 0.05
    type_i_limit_tol: float = 0.02
    barrier_tol: float = 1e-3
    upper_floor_fraction: float = 0.1
    zero_floor: float = 1e-12
    asymptotic_decades: float = 2.0
    min_decades: float = 1.5
    min_samples: int = 20
    transient_fraction: float = 0.2
    tail_factor: float = 2.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "VerdictTolerances":
        return cls(**data)


@dataclass
class RateFit:
    """
    Least-squares fit `log value = log_constant + exponent * log reference (+ correction * reference)`;
    `window` is `(E_max, E_min)`.
    """
    exponent: float
    log_constant: float
    r_squared: float
    window: tuple
    n_samples: int
    correction: float = 0.0

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "log_constant": self.log_constant, "r_squared": self.r_squared,
                "window": list(self.window), "n_samples": self.n_samples, "correction": self.correction}


@dataclass
class TheoremVerdict:
    """
    Outcome of one registry check. `status` is `"passed"`, `"failed"` or `"skipped"`;
    `measured` holds the constants and exponents the decision was based on.
    """
    theorem_id: str
    status: str
    measured: dict = field(default_factory=dict)
    tolerance: dict = field(default_factory=dict)
    notes: str = ""
    window: tuple = None

    @property
    def passed(self) -> bool:
        return self.status == "passed"

    def to_dict(self) -> dict:
        return {
            "theorem_id": self.theorem_id,
            "passed": self.passed,
            "status": self.status,
            "measured": {k: _plain(v) for k, v in self.measured.items()},
            "tolerances": {k: _plain(v) for k, v in self.tolerance.items()},
            "window": None if self.window is None else [float(w) for w in self.window],
            "notes": self.notes,
        }


def _plain(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value


# --- fitting ----------------------------------------------------------------------

def fit_power_law(reference: np.ndarray, values: np.ndarray, min_samples: int = 20, min_decades: float = 1.5,
                  correction: bool = False) -> RateFit:
    """
    Fits `values ≈ C * reference^exponent` by least squares on the logarithms.
    With `correction`, fits `C * reference^exponent * exp(b * reference)` instead, so that analytic
    `1 + O(reference)` factors of an asymptotic law do not bias the exponent.

    Raises `InsufficientWindow` if there are fewer than `min_samples` points, if the reference spans
    less than `min_decades` decades, or if a value is not positive.
    """
    x = np.asarray(reference, dtype=float)
    y = np.asarray(values, dtype=float)
    if len(x) < min_samples:
        utils.logger.error(f"{__name__}: {len(x)} samples in the fit window, need {min_samples}")
        raise InsufficientWindow(f"{len(x)} samples in the fit window, need {min_samples}")
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(y)):
        utils.logger.error(f"{__name__}: power-law fit needs positive finite data")
        raise InsufficientWindow("power-law fit needs positive finite data")
    span = np.log10(x.max() / x.min())
    if span < min_decades - 1e-9:
        utils.logger.error(f"{__name__}: fit window spans {span:.2f} decades, need {min_decades}")
        raise InsufficientWindow(f"fit window spans {span:.2f} decades, need {min_decades}")

    log_x, log_y = np.log(x), np.log(y)
    if correction:
        design = np.column_stack([np.ones_like(log_x), log_x, x])
        (log_constant, exponent, b), *_ = np.linalg.lstsq(design, log_y, rcond=None)
        predicted = design @ np.array([log_constant, exponent, b])
    else:
        exponent, log_constant = np.polyfit(log_x, log_y, 1)
        b = 0.0
        predicted = log_constant + exponent * log_x
    ss_res = float(np.sum((log_y - predicted) ** 2))
    ss_tot = float(np.sum((log_y - log_y.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(exponent=float(exponent), log_constant=float(log_constant), r_squared=r_squared,
                   window=(float(x.max()), float(x.min())), n_samples=len(x), correction=float(b))


def reference_values(bundle, reference: str = "E") -> np.ndarray:
    E = bundle.column("E")
    if reference == "E":
        return E
    if reference == "T-t":
        return bundle.meta["T"] - bundle.column("t")
    if reference == "sqrtE":
        return np.sqrt(E)
    utils.logger.error(f"{__name__}: unknown reference `{reference}`")
    raise ValueError(f"unknown reference `{reference}`, expected one of {REFERENCES}")


def fit_window(t: np.ndarray, E: np.ndarray, T: float, eps_stop: float, tolerances: VerdictTolerances = None) -> np.ndarray:
    """
    Boolean mask of the asymptotic fit window: drops the transient `t < transient_fraction * t_end` and
    the tail `T - t < tail_factor * eps_stop`, then keeps the final `asymptotic_decades` decades of `E`.

    Raises `InsufficientWindow` if fewer than `min_samples` samples or `min_decades` decades remain.
    """
    tol = tolerances or VerdictTolerances()
    t = np.asarray(t, dtype=float)
    E = np.asarray(E, dtype=float)
    if len(t) == 0:
        utils.logger.error(f"{__name__}: empty series")
        raise InsufficientWindow("empty series")
    keep = (t >= tol.transient_fraction * t[-1]) & (T - t >= tol.tail_factor * eps_stop - 1e-15) & (E > 0)
    if np.count_nonzero(keep) < tol.min_samples:
        utils.logger.error(f"{__name__}: {np.count_nonzero(keep)} samples after removing transient and tail")
        raise InsufficientWindow(f"{np.count_nonzero(keep)} samples after removing transient and tail, need {tol.min_samples}")
    E_min = E[keep].min()
    E_max = E[keep].max()
    span = np.log10(E_max / E_min)
    if span < tol.min_decades - 1e-9:
        utils.logger.error(f"{__name__}: window spans {span:.2f} decades of E, need {tol.min_decades}")
        raise InsufficientWindow(f"window spans {span:.2f} decades of E, need {tol.min_decades}")
    keep &= E <= E_min * 10.0 ** min(tol.asymptotic_decades, span) * (1.0 + 1e-12)
    if np.count_nonzero(keep) < tol.min_samples:
        utils.logger.error(f"{__name__}: {np.count_nonzero(keep)} samples in the asymptotic window")
        raise InsufficientWindow(f"{np.count_nonzero(keep)} samples in the asymptotic window, need {tol.min_samples}")
    return keep


def bundle_window(bundle, tolerances: VerdictTolerances = None) -> np.ndarray:
    return fit_window(bundle.column("t"), bundle.column("E"), bundle.meta["T"], bundle.meta["eps_stop"], tolerances)


def fit_additive_constant(E: np.ndarray, midrange: np.ndarray, window: np.ndarray) -> float:
    """
    Limit constant `c*` of a deviation series: intercept at `E = 0` of the quadratic least-squares fit
    of the per-snapshot mid-range of `(field - target)` against `E`, over the final decade of the window.
    """
    E = np.asarray(E, dtype=float)
    midrange = np.asarray(midrange, dtype=float)
    selected = window & (E <= E[window].min() * 10.0 * (1.0 + 1e-12))
    if np.count_nonzero(selected) < 3:
        utils.logger.warning(f"{__name__}: too few samples for the additive constant, using the last value")
        return float(midrange[window][-1])
    coefficients = np.polyfit(E[selected], midrange[selected], 2)
    return float(coefficients[-1])


def running_sup_forward(values: np.ndarray) -> np.ndarray:
    """`h(t_i) = max_{j >= i} values_j`."""
    return np.maximum.accumulate(np.asarray(values, dtype=float)[::-1])[::-1]


def deviation_distance(bundle, prefix: str, c_star: float) -> np.ndarray:
    """`sup |field - target - c*|` per snapshot from the stored mid-range and oscillation."""
    return 0.5 * bundle.column(f"{prefix}_osc") + np.abs(bundle.column(f"{prefix}_mid") - c_star)


# --- boundedness primitives -----------------------------------------------------

def _log_slope(E, values) -> float:
    """Log-log slope over the final decade of `E` (the whole range if that decade has fewer than 3 samples)."""
    E = np.asarray(E, dtype=float)
    values = np.asarray(values, dtype=float)
    tail = E <= E.min() * 10.0 * (1.0 + 1e-12)
    if np.count_nonzero(tail) < 3:
        tail = np.ones_like(E, dtype=bool)
    return float(np.polyfit(np.log(E[tail]), np.log(values[tail]), 1)[0])


def _window_slope(E, values) -> float:
    """Log-log slope over the whole window with the `b * E` correction term of `fit_power_law`."""
    E = np.asarray(E, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(E) < 4:
        return float(np.polyfit(np.log(E), np.log(values), 1)[0])
    design = np.column_stack([np.ones_like(E), np.log(E), E])
    (_, slope, _), *_ = np.linalg.lstsq(design, np.log(values), rcond=None)
    return float(slope)


def two_sided_bounded(E: np.ndarray, values: np.ndarray, tol: VerdictTolerances) -> tuple:
    """
    `(passed, measured)` for a positive series that should stay in a band with no `E`-trend:
    `|slope| <= slope_tol` over the whole window and `max/min < ratio_tol`.
    """
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        return False, {"min": float(np.nanmin(values)), "max": float(np.nanmax(values)), "positive": False}
    slope = _window_slope(E, values)
    ratio = float(values.max() / values.min())
    measured = {"slope": slope, "max_over_min": ratio, "min": float(values.min()), "max": float(values.max())}
    return bool(abs(slope) <= tol.slope_tol and ratio < tol.ratio_tol), measured


def upper_bounded(E: np.ndarray, values: np.ndarray, tol: VerdictTolerances, positive_part: bool = False) -> tuple:
    """
    `(passed, measured)` for a series that should stay bounded above. Two conditions:

    * the slope of `log(|s| + floor)` against `log E` over the final decade is `>= -slope_tol`;
    * `max |s|` over the window is below `ratio_tol` times the level of the early half of the
      window (the samples with `E >= sqrt(E_max E_min)`).

    `floor` is `upper_floor_fraction` of the series scale; the early level is floored at `zero_floor`.
    A series identically below `zero_floor` passes trivially.
    """
    E = np.asarray(E, dtype=float)
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        return False, {"finite": False}
    s = np.maximum(values, 0.0) if positive_part else np.abs(values)
    scale = float(s.max())
    if scale <= tol.zero_floor:
        return True, {"max": scale, "trivial": True}
    floor = max(tol.zero_floor, tol.upper_floor_fraction * scale)
    slope = _log_slope(E, s + floor)
    early = E >= np.sqrt(E.max() * E.min())
    level = max(float(s[early].max()), tol.zero_floor)
    growth = scale / level
    measured = {"slope": slope, "max_over_early": growth, "max": float(values.max()), "min": float(values.min())}
    return bool(slope >= -tol.slope_tol and growth < tol.ratio_tol), measured


def _rate(E, distance, tol: VerdictTolerances) -> tuple:
    """`(passed, measured)` for `distance <= C E^a` with `a >= rate_min_exponent`."""
    if float(np.max(distance)) <= tol.zero_floor:
        return True, {"max": float(np.max(distance)), "trivial": True}
    fit = fit_power_law(E, np.maximum(distance, tol.zero_floor), min_samples=tol.min_samples,
                        min_decades=tol.min_decades, correction=True)
    measured = {"exponent": fit.exponent, "log_constant": fit.log_constant, "r_squared": fit.r_squared,
                "correction": fit.correction,
                "max_over_E": float(np.max(distance / E))}
    return bool(fit.exponent >= tol.rate_min_exponent), measured


# --- registry ---------------------------------------------------------------------

def _check_vfc_band(bundle, tol, window):
    E = bundle.column("E")[window]
    ok_max, m_max = two_sided_bounded(E, bundle.column("vol_ratio_max")[window], tol)
    ok_min, m_min = two_sided_bounded(E, bundle.column("vol_ratio_min")[window], tol)
    measured = {"C_K": max(float(np.max(bundle.column("vol_ratio_max"))), 1.0 / float(np.min(bundle.column("vol_ratio_min")))),
                "U_X": float(np.max(bundle.column("vol_ratio_max"))),
                "slope_max": m_max.get("slope"), "slope_min": m_min.get("slope"),
                "band_ratio": float(np.max(bundle.column("vol_ratio_max")[window]) / np.min(bundle.column("vol_ratio_min")[window]))}
    return ok_max and ok_min, measured, ""


def _check_volume(bundle, tol, window):
    ratio = bundle.column("volume_over_E")
    limit = bundle.meta["limit_volume"]
    error = abs(ratio[-1] - limit) / limit
    return error <= tol.volume_rel_tol, {"relative_error": error, "volume_over_E": float(ratio[-1]), "limit": limit}, \
        "final sample"


def _check_diam_fibre(bundle, tol, window):
    E = bundle.column("E")[window]
    measured = {}
    passed = True
    for name in ("diam_fibre_max", "diam_fibre_min"):
        fit = fit_power_law(E, bundle.column(name)[window], tol.min_samples, tol.min_decades)
        ok_band, band = two_sided_bounded(E, bundle.column(name)[window] / np.sqrt(E), tol)
        measured[f"{name}_exponent"] = fit.exponent
        measured[f"{name}_constant"] = float(np.exp(fit.log_constant))
        measured[f"{name}_band_ratio"] = band.get("max_over_min")
        passed &= abs(fit.exponent - tol.diameter_exponent) <= tol.diameter_exponent_tol and ok_band
    return passed, measured, "meridian/circle diameter surrogate"


def _bounded_column(name, kind="two_sided", positive_part=False, note=""):
    def check(bundle, tol, window):
        E = bundle.column("E")[window]
        values = bundle.column(name)[window]
        if kind == "two_sided":
            ok, measured = two_sided_bounded(E, values, tol)
        else:
            ok, measured = upper_bounded(E, values, tol, positive_part=positive_part)
        measured["run_max"] = float(np.max(bundle.column(name)))
        return ok, measured, note
    return check


def _check_schwarz(bundle, tol, window):
    ok, measured, _ = _bounded_column("tr_eta_sup", "upper")(bundle, tol, window)
    inf = float(np.min(bundle.column("tr_eta_inf")))
    measured["inf"] = inf
    return ok and inf >= -1e-10, measured, ""


def _check_metric_equiv(bundle, tol, window):
    E = bundle.column("E")[window]
    ok_hi, hi = two_sided_bounded(E, bundle.column("eig_ratio_max")[window], tol)
    ok_lo, lo = two_sided_bounded(E, bundle.column("eig_ratio_min")[window], tol)
    C = max(float(np.max(bundle.column("eig_ratio_max"))), 1.0 / float(np.min(bundle.column("eig_ratio_min"))))
    return ok_hi and ok_lo, {"C": C, "slope_max": hi.get("slope"), "slope_min": lo.get("slope")}, ""


def _check_phi_bounds(bundle, tol, window):
    E = bundle.column("E")[window]
    magnitude = np.maximum(np.abs(bundle.column("phi_sup")), np.abs(bundle.column("phi_inf")))
    ok, measured = upper_bounded(E, magnitude[window], tol)
    margin = float(np.max(bundle.column("phi_sup") - bundle.column("phi_barrier")))
    measured["barrier_excess"] = margin
    measured["phi_sup"] = float(np.max(bundle.column("phi_sup")))
    measured["phi_inf"] = float(np.min(bundle.column("phi_inf")))
    return ok and margin <= tol.barrier_tol, measured, "upper barrier from the maximum principle"


def _check_avg(bundle, tol, window):
    ok, measured = _rate(bundle.column("E")[window], bundle.column("avg_dev")[window], tol)
    return ok, measured, ""


def _c_star(bundle, prefix, window):
    return fit_additive_constant(bundle.column("E"), bundle.column(f"{prefix}_mid"), window)


def _check_c0_bracket(bundle, tol, window):
    if "bracket_width" not in bundle.meta:
        raise MissingSeries("bracket_width")
    w0 = bundle.meta["bracket_width"]
    excess = np.maximum(0.0, 0.5 * (bundle.column("phi_base_osc") - w0))
    envelope = running_sup_forward(excess)[window]
    start, final = float(envelope[0]), float(envelope[-1])
    c_star = _c_star(bundle, "phi_base", window)
    measured = {"h_start": start, "h_final": final, "w0": w0, "c_star": c_star}
    passed = start <= tol.zero_floor or final <= tol.bracket_tol * start
    return passed, measured, f"oscillation form of the bracket; additive constant fitted, c* = {c_star:.6g}"


def _check_rate_to_target(prefix):
    def check(bundle, tol, window):
        c_star = _c_star(bundle, prefix, window)
        distance = deviation_distance(bundle, prefix, c_star)[window]
        ok, measured = _rate(bundle.column("E")[window], distance, tol)
        measured["c_star"] = c_star
        return ok, measured, f"additive constant fitted, c* = {c_star:.6g}; mode = {bundle.meta.get('mode', 'spr')}"
    return check


def _check_lipschitz_h(bundle, tol, window):
    c_star = _c_star(bundle, "phi_sub", window)
    E_all = bundle.column("E")
    h = running_sup_forward(deviation_distance(bundle, "phi_sub", c_star))[window]
    E = E_all[window]
    if float(np.max(h)) <= tol.zero_floor:
        return True, {"max_h_over_E": float(np.max(h / E)), "trivial": True, "c_star": c_star}, "envelope vanishes"
    # log h <= c + a log E + b E, the same corrected law as the rate fits
    coefficients, intercept = quantile_regression(np.column_stack([np.log(E), E]), np.log(np.maximum(h, tol.zero_floor)),
                                                  quantile=tol.lipschitz_quantile)
    slope = float(coefficients[0])
    measured = {"quantile_slope": slope, "quantile_correction": float(coefficients[1]), "quantile_intercept": intercept,
                "max_h_over_E": float(np.max(h / E)),
                "c_star": c_star}
    return slope >= 1.0 - tol.lipschitz_slope_tol, measured, f"h(t) = running sup of dist(phi, target + c*), c* = {c_star:.6g}"


def _check_type_i(bundle, tol, window):
    ok, measured, _ = _bounded_column("typeI_sup", "upper")(bundle, tol, window)
    final = float(bundle.column("typeI_sup")[-1])
    measured["final"] = final
    notes = ""
    if bundle.meta.get("exact_limit_type_i") is not None:
        limit = bundle.meta["exact_limit_type_i"]
        measured["limit_error"] = abs(final - limit) / limit
        ok = ok and measured["limit_error"] <= tol.type_i_limit_tol
        notes = f"converges to n - m = {limit:g} on the product model"
    return ok, measured, notes


def _check_zhang(bundle, tol, window):
    values = bundle.column("zhang")[window]
    peak = float(np.max(values))
    final = float(values[-1])
    passed = peak <= tol.zero_floor or final <= tol.zhang_factor * peak
    return passed, {"final": final, "window_max": peak, "ratio": final / peak if peak > 0 else 0.0}, ""


_CHECKS = {
    "VFC_BAND": _check_vfc_band,
    "VOLUME": _check_volume,
    "DIAM_FIBRE": _check_diam_fibre,
    "DIAM_REGION": _bounded_column("diam_region", "two_sided", note="total-space diameter surrogate"),
    "SCHWARZ": _check_schwarz,
    "TRACE": _bounded_column("E_tr_omega0_sup", "upper"),
    "METRIC_EQUIV": _check_metric_equiv,
    "DTPHI": _bounded_column("dtphi_sup_abs", "upper"),
    "PHI_BOUNDS": _check_phi_bounds,
    "U_BOUND": _bounded_column("u_sup_abs", "upper"),
    "AVG": _check_avg,
    "C0_BRACKET": _check_c0_bracket,
    "SUBMERSION_RATE": _check_rate_to_target("phi_sub"),
    "LIPSCHITZ_H": _check_lipschitz_h,
    "U_CONV": _check_rate_to_target("u_sub"),
    "LIYAU_GRAD": _bounded_column("liyau_grad_sup", "upper"),
    "LIYAU_LAP": _bounded_column("liyau_lap_sup", "upper", positive_part=True),
    "TYPE_I": _check_type_i,
    "ZHANG_CEILING": _check_zhang,
}


def check_theorem(theorem_id: str, bundle, tolerances: VerdictTolerances = None) -> TheoremVerdict:
    """
    Evaluates one registry entry on a series bundle.

    Raises `MissingSeries` if a needed column is absent and `InsufficientWindow` if the run is too
    short for the asymptotic window.
    """
    if theorem_id not in _CHECKS:
        utils.logger.error(f"{__name__}: unknown theorem id `{theorem_id}`")
        raise ValueError(f"unknown theorem id `{theorem_id}`, expected one of {REGISTRY}")
    tol = tolerances or VerdictTolerances()
    window = bundle_window(bundle, tol)
    passed, measured, notes = _CHECKS[theorem_id](bundle, tol, window)
    E = bundle.column("E")[window]
    verdict = TheoremVerdict(theorem_id=theorem_id, status="passed" if passed else "failed",
                             measured=measured, tolerance=tol.to_dict(), notes=notes,
                             window=(float(E.max()), float(E.min())))
    utils.logger.debug(f"{__name__}: {theorem_id} {verdict.status} {measured}")
    return verdict


def run_registry(bundle, tolerances: VerdictTolerances = None, registry=None) -> list:
    """
    Evaluates every entry of `registry` (default: all of `REGISTRY`, in that order). Missing inputs
    give `skipped` verdicts and other per-entry errors give `failed` verdicts with the reason in `notes`.
    """
    tol = tolerances or VerdictTolerances()
    selected = list(REGISTRY) if registry is None else [r for r in REGISTRY if r in set(registry)]
    unknown = set(registry or []) - set(REGISTRY)
    if unknown:
        utils.logger.error(f"{__name__}: unknown theorem ids {sorted(unknown)}")
        raise ValueError(f"unknown theorem ids {sorted(unknown)}")

    verdicts = []
    for theorem_id in selected:
        try:
            verdicts.append(check_theorem(theorem_id, bundle, tol))
        except MissingSeries as error:
            utils.logger.warning(f"{__name__}: {theorem_id} skipped, missing {error}")
            verdicts.append(TheoremVerdict(theorem_id, "skipped", measured={"missing": str(error)},
                                           tolerance=tol.to_dict(), notes=f"skipped: missing {error}"))
        except (KahlerFlowError, ValueError, RuntimeError) as error:
            utils.logger.warning(f"{__name__}: {theorem_id} failed with {type(error).__name__}: {error}")
            verdicts.append(TheoremVerdict(theorem_id, "failed", measured={"error": type(error).__name__},
                                           tolerance=tol.to_dict(), notes=f"{type(error).__name__}: {error}"))

    counts = {status: sum(v.status == status for v in verdicts) for status in ("passed", "failed", "skipped")}
    utils.logger.info(f"{__name__}: verdicts {counts}")
    return verdicts
