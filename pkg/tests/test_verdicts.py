import pytest
import itertools
import numpy as np
import kahlerflow as kf
import kahlerflow.verdicts as verdicts
from kahlerflow.utils.errors import InsufficientWindow
from kahlerflow.utils.solverwrapper import quantile_regression

T = np.log(2.0)


def synthetic_bundle(n: int = 200, E_last: float = 1e-4, **columns) -> kf.ObservableSeries:
    """Series on a geometric E grid of the ProductFlat class (a0 = 2); `columns` map names to functions of E."""
    E = np.geomspace(1.0, E_last, n)
    t = -np.log((1.0 + E) / 2.0)
    t[0] = 0.0
    data = {"t": t, "E": E}
    for name, law in columns.items():
        data[name] = law(E)
    return kf.ObservableSeries(columns=data, meta={"T": T, "eps_stop": T - t[-1]})


def s_of(E):
    return 1.0 / (1.0 + E)


exponents = [0.25, 0.5, 1.0, 2.0]
constants = [0.3, 3.0]


@pytest.mark.parametrize("exponent, constant", itertools.product(exponents, constants))
def test_fit_power_law(exponent, constant):
    E = np.geomspace(1.0, 1e-3, 50)
    fit = kf.fit_power_law(E, constant * E**exponent)
    assert abs(fit.exponent - exponent) < 1e-10
    assert abs(np.exp(fit.log_constant) - constant) < 1e-9
    assert fit.r_squared > 1.0 - 1e-12
    assert fit.window == (1.0, pytest.approx(1e-3))


def test_fit_power_law_with_correction():
    E = np.geomspace(0.5, 1e-4, 60)
    fit = kf.fit_power_law(E, 0.15 * E * np.exp(-3.26 * E), correction=True)
    assert abs(fit.exponent - 1.0) < 1e-8
    assert abs(fit.correction + 3.26) < 1e-6
    plain = kf.fit_power_law(E, 0.15 * E * np.exp(-3.26 * E))
    assert plain.exponent < 1.0


def test_fit_power_law_rejects_short_windows():
    with pytest.raises(InsufficientWindow):
        kf.fit_power_law(np.geomspace(1.0, 1e-3, 10), np.ones(10))
    with pytest.raises(InsufficientWindow):
        kf.fit_power_law(np.geomspace(1.0, 0.5, 30), np.ones(30))
    with pytest.raises(InsufficientWindow):
        kf.fit_power_law(np.geomspace(1.0, 1e-3, 30), -np.ones(30))


def test_fit_window():
    bundle = synthetic_bundle()
    window = verdicts.bundle_window(bundle)
    E = bundle.column("E")[window]
    assert np.log10(E.max() / E.min()) == pytest.approx(2.0, abs=0.05)
    t = bundle.column("t")[window]
    assert np.all(T - t >= 2.0 * bundle.meta["eps_stop"] - 1e-15)
    with pytest.raises(InsufficientWindow):
        verdicts.bundle_window(synthetic_bundle(n=15))
    with pytest.raises(InsufficientWindow):
        verdicts.bundle_window(synthetic_bundle(E_last=0.1))


def test_additive_constant():
    E = np.geomspace(1.0, 1e-4, 200)
    window = np.ones_like(E, dtype=bool)
    c_star = verdicts.fit_additive_constant(E, 0.1534 + 0.2 * E - 0.5 * E**2, window)
    assert abs(c_star - 0.1534) < 1e-10


def test_running_sup_forward():
    values = np.array([1.0, 3.0, 2.0, 0.5, 1.0])
    assert np.array_equal(verdicts.running_sup_forward(values), [3.0, 3.0, 2.0, 1.0, 1.0])


def test_boundedness_primitives():
    E = np.geomspace(0.1, 1e-3, 40)
    tol = kf.VerdictTolerances()
    assert verdicts.two_sided_bounded(E, 2.0 + E, tol)[0]
    assert not verdicts.two_sided_bounded(E, E**-0.5, tol)[0]
    assert not verdicts.two_sided_bounded(E, -np.ones_like(E), tol)[0]
    assert verdicts.upper_bounded(E, np.zeros_like(E), tol) == (True, {"max": 0.0, "trivial": True})
    assert verdicts.upper_bounded(E, 1.0 + E, tol)[0]
    assert not verdicts.upper_bounded(E, 1.0 / E, tol)[0]


def test_boundedness_primitives_reject_late_overshoot():
    E = np.geomspace(0.1, 1e-3, 40)
    tol = kf.VerdictTolerances()
    for factor in (10.0, 100.0):
        s = np.where(E < 1.01e-2, factor, 1.0)
        ok, measured = verdicts.upper_bounded(E, s, tol)
        assert not ok
        assert measured["max_over_early"] == pytest.approx(factor)
        assert not verdicts.two_sided_bounded(E, s, tol)[0]
    assert verdicts.upper_bounded(E, np.where(E < 1.01e-2, 5.0, 1.0), tol)[0]


upper_checks = [("SCHWARZ", "tr_eta_sup"), ("LIYAU_GRAD", "liyau_grad_sup"), ("DTPHI", "dtphi_sup_abs"),
                ("TRACE", "E_tr_omega0_sup"), ("U_BOUND", "u_sup_abs")]
overshoots = [10.0, 100.0]


@pytest.mark.parametrize("check, overshoot", itertools.product(upper_checks, overshoots))
def test_upper_verdicts_reject_late_overshoot(check, overshoot):
    theorem_id, column = check
    flat = synthetic_bundle(**{column: lambda E: 1.0 + E, "tr_eta_inf": lambda E: 0.5 + 0.0 * E})
    assert verdicts.check_theorem(theorem_id, flat).passed

    # the step sits inside the last decade of the window
    bundle = synthetic_bundle(**{column: lambda E: np.where(E < 1e-3, overshoot, 1.0),
                                 "tr_eta_inf": lambda E: 0.5 + 0.0 * E})
    verdict = verdicts.check_theorem(theorem_id, bundle)
    assert verdict.status == "failed"
    assert verdict.measured["max_over_early"] == pytest.approx(overshoot)


def test_diameter_verdict():
    bundle = synthetic_bundle(diam_fibre_max=lambda E: np.pi * np.sqrt(E), diam_fibre_min=lambda E: 2.0 * np.sqrt(E))
    verdict = verdicts.check_theorem("DIAM_FIBRE", bundle)
    assert verdict.passed
    assert verdict.measured["diam_fibre_max_exponent"] == pytest.approx(0.5, abs=1e-10)
    assert verdict.measured["diam_fibre_max_constant"] == pytest.approx(np.pi)


def test_diameter_verdict_negative_control():
    bundle = synthetic_bundle(diam_fibre_max=lambda E: E**0.25, diam_fibre_min=lambda E: E**0.25)
    verdict = verdicts.check_theorem("DIAM_FIBRE", bundle)
    assert verdict.status == "failed"


def test_type_i_verdict():
    bundle = synthetic_bundle(typeI_sup=s_of)
    bundle.meta["exact_limit_type_i"] = 1.0
    assert verdicts.check_theorem("TYPE_I", bundle).passed


def test_type_i_negative_control():
    # R ~ (1 - s)^{-3/2} blows up faster than type I
    bundle = synthetic_bundle(typeI_sup=lambda E: (1.0 - s_of(E)) ** -0.5)
    assert verdicts.check_theorem("TYPE_I", bundle).status == "failed"


def test_zhang_verdict():
    def zhang(R):
        return lambda E: (T + np.log((1.0 + E) / 2.0)) ** 2 * R(E)

    assert verdicts.check_theorem("ZHANG_CEILING", synthetic_bundle(zhang=zhang(lambda E: 1.0 / E))).passed
    failing = synthetic_bundle(zhang=zhang(lambda E: E**-2))
    assert verdicts.check_theorem("ZHANG_CEILING", failing).status == "failed"


def test_volume_verdict():
    bundle = synthetic_bundle(volume_over_E=lambda E: 8.0 * (1.0 + E))
    bundle.meta["limit_volume"] = 8.0
    verdict = verdicts.check_theorem("VOLUME", bundle)
    assert verdict.passed
    assert verdict.measured["relative_error"] == pytest.approx(1e-4)


def test_rate_verdicts():
    bundle = synthetic_bundle(phi_sub_mid=lambda E: 0.1534 + 0.1534 * E * np.exp(-3.26 * E),
                              phi_sub_osc=lambda E: 0.0 * E)
    rate = verdicts.check_theorem("SUBMERSION_RATE", bundle)
    assert rate.passed
    assert rate.measured["exponent"] == pytest.approx(1.0, abs=0.02)
    assert rate.measured["c_star"] == pytest.approx(0.1534, abs=1e-6)
    lipschitz = verdicts.check_theorem("LIPSCHITZ_H", bundle)
    assert lipschitz.passed
    assert lipschitz.measured["max_h_over_E"] <= 0.1534 + 1e-4


def test_quantile_regression():
    x = np.linspace(0.0, 1.0, 41)
    noise = np.where(np.arange(41) % 4 == 0, 0.5, 0.0)
    slope, intercept = quantile_regression(x, 1.0 + 2.0 * x - noise, quantile=0.9)
    assert slope == pytest.approx(2.0, abs=1e-6)
    assert intercept == pytest.approx(1.0, abs=1e-6)
    slopes, _ = quantile_regression(np.column_stack([x, x**2]), 1.0 + 2.0 * x + 3.0 * x**2, quantile=0.5)
    assert np.allclose(slopes, [2.0, 3.0], atol=1e-6)
    with pytest.raises(ValueError):
        quantile_regression(x, x, quantile=1.0)


def test_registry_skips_missing_inputs():
    bundle = synthetic_bundle(typeI_sup=s_of)
    results = kf.run_registry(bundle)
    assert [v.theorem_id for v in results] == list(kf.REGISTRY)
    status = {v.theorem_id: v.status for v in results}
    assert status["TYPE_I"] == "passed"
    assert status["VFC_BAND"] == "skipped"
    assert status["C0_BRACKET"] == "skipped"
    assert sum(v.status == "skipped" for v in results) == len(kf.REGISTRY) - 1


def test_registry_selection():
    bundle = synthetic_bundle(typeI_sup=s_of)
    results = kf.run_registry(bundle, registry=["ZHANG_CEILING", "TYPE_I"])
    assert [v.theorem_id for v in results] == ["TYPE_I", "ZHANG_CEILING"]
    with pytest.raises(ValueError):
        kf.run_registry(bundle, registry=["NOT_A_CHECK"])


def test_short_run_fails_verdicts():
    bundle = synthetic_bundle(E_last=0.2, typeI_sup=s_of)
    verdict = kf.run_registry(bundle, registry=["TYPE_I"])[0]
    assert verdict.status == "failed"
    assert "InsufficientWindow" in verdict.notes
