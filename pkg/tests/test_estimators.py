import pytest
import itertools
import numpy as np
import kahlerflow as kf
import kahlerflow.estimators as estimators
import kahlerflow.cmaflow as cmaflow
from kahlerflow.fibrationmodel import gradient_norm_sq
from kahlerflow.utils.errors import MissingSeries, VPositivityFailure


def build(kind="ProductFlat", profile="Zero", amplitude=0.05, a0=2.0, b0=1.0):
    spec = kf.ModelSpec(kind=kind, a0=a0, b0=b0,
                        psi0=kf.InitialPerturbation(profile=profile, amplitude=0.0 if profile == "Zero" else amplitude),
                        grid=kf.GridSpec(n_fibre=17, n_base=17, stencil_order=2))
    return kf.build_model(spec)


@pytest.fixture(scope="module")
def product_run():
    model = build()
    series = kf.run(model, kf.StepSchedule())
    potentials = kf.solve_limit_potentials(model, series.omega)
    bundle = kf.collect_series(series, potentials)
    return model, series, bundle


def test_volume_closed_forms(product_run):
    _, _, bundle = product_run
    E = bundle.column("E")
    # omega^2 / (E Omega) = e^{T - t} = 1 + E
    assert np.max(np.abs(bundle.column("vol_ratio_max") - (1.0 + E))) < 1e-10
    assert np.max(np.abs(bundle.column("vol_ratio_min") - (1.0 + E))) < 1e-10
    relative = bundle.column("volume_over_E") / bundle.meta["limit_volume"] - 1.0
    assert np.max(np.abs(relative - E)) < 1e-10
    assert np.max(np.abs(bundle.column("positivity_margin") - 1.0)) < 1e-10


def test_trace_closed_forms(product_run):
    _, _, bundle = product_run
    E = bundle.column("E")
    s = 1.0 / (1.0 + E)
    assert np.max(np.abs(bundle.column("tr_eta_sup") - s)) < 1e-10
    assert np.max(np.abs(bundle.column("tr_eta_inf") - s)) < 1e-10
    assert np.max(np.abs(bundle.column("E_tr_omega0_sup") - (1.0 + 2.0 * (1.0 - s)))) < 1e-10
    assert np.max(np.abs(bundle.column("eig_ratio_min") - 1.0)) < 1e-10
    assert np.max(np.abs(bundle.column("eig_ratio_max") - 1.0)) < 1e-10


def test_curvature_closed_forms(product_run):
    _, _, bundle = product_run
    E = bundle.column("E")
    R = bundle.column("R_sup")
    assert np.max(np.abs(R * E - 1.0)) < 1e-9, "R = s / (1 - s) = 1 / E on the product"
    assert np.max(np.abs(bundle.column("typeI_sup") - 1.0 / (1.0 + E))) < 1e-9
    assert np.all(bundle.column("R_discrepancy") <= 1e-8 * R)
    assert abs(bundle.column("typeI_sup")[-1] - bundle.meta["exact_limit_type_i"]) < 0.01


def test_fibre_diameter_closed_form(product_run):
    _, _, bundle = product_run
    E = bundle.column("E")
    expected = np.pi * np.sqrt(E)
    assert np.max(np.abs(bundle.column("diam_fibre_max") - expected) / expected) < 1e-12
    assert np.max(np.abs(bundle.column("diam_fibre_min") - expected) / expected) < 1e-12
    # the flat base keeps its size, so the region diameter is bounded below
    assert np.min(bundle.column("diam_region")) > 0.5


def test_potential_closed_forms(product_run):
    model, _, bundle = product_run
    T = model.class_data.T
    t = bundle.column("t")
    phi = T - t + 1.0 - (T + 1.0) * np.exp(-t)
    assert np.max(np.abs(bundle.column("phi_sup") - phi)) < 1e-5
    assert np.max(np.abs(bundle.column("phi_inf") - phi)) < 1e-5
    assert np.all(bundle.column("phi_sup") <= bundle.column("phi_barrier") + 1e-3)
    assert np.max(bundle.column("avg_dev")) < 1e-12
    s = np.exp(t - T)
    u = (1.0 - s) * (-1.0 + (T + 1.0) * np.exp(-t)) + phi
    assert np.max(np.abs(bundle.column("u_sup_abs") - np.abs(u))) < 1e-5


def test_heat_residuals(product_run):
    _, _, bundle = product_run
    assert np.isnan(bundle.column("heat_residual_u")[0])
    # phi_t + phi = T - t exactly, so only round-off remains
    assert np.nanmax(bundle.column("heat_residual_dtphi")) < 1e-8
    assert np.nanmax(bundle.column("heat_residual_u")) < 1e-2


def test_limit_distances(product_run):
    model, series, bundle = product_run
    window = kf.verdicts.bundle_window(bundle)
    E = bundle.column("E")[window]
    ratio = bundle.column("dist_submersion")[window] / E
    # phi - phi(T) = 0.1534 E (1 - 3.26 E + O(E^2))
    small = E < 0.02
    assert np.count_nonzero(small) > 5
    assert np.all((ratio[small] > 0.13) & (ratio[small] < 0.17))
    assert np.all(ratio < 0.17)
    assert np.max(bundle.column("u_dist")[window] / E) < 0.1
    assert abs(bundle.meta["c_star_phi_sub"] - 0.1534) < 1e-3
    assert bundle.meta["bracket_width"] < 1e-10


def test_liyau_band(product_run):
    _, _, bundle = product_run
    A = bundle.meta["A"]
    assert np.all(bundle.column("v_over_E_min") >= A * (1.0 - 1e-9))
    assert np.all(bundle.column("v_over_E_max") <= 3.0 * A * (1.0 + 1e-9))
    assert np.max(bundle.column("liyau_grad_sup")) < 1e-10


def test_csv_round_trip(product_run, tmp_path):
    _, _, bundle = product_run
    path = tmp_path / "series.csv"
    bundle.to_csv(path)
    again = estimators.ObservableSeries.from_csv(path, bundle.meta)
    assert list(again.columns) == list(bundle.columns)
    for name in bundle.columns:
        assert np.array_equal(again.column(name), bundle.column(name), equal_nan=True), name


def test_groups_without_potentials():
    model = build("SphereBase", "CoupledBump", b0=4.0)
    series = kf.run(model, kf.StepSchedule(eps_stop=0.1))
    bundle = kf.collect_series(series)
    assert not bundle.has("dist_submersion")
    assert not bundle.has("v_min")
    assert bundle.has("R_sup")
    assert np.all(bundle.column("positivity_margin") > 0)
    with pytest.raises(MissingSeries):
        bundle.column("u_dist")


def test_group_selection():
    model = build()
    series = kf.run(model, kf.StepSchedule(eps_stop=0.2))
    bundle = kf.collect_series(series, estimators=["volume"])
    assert set(bundle.columns) == {"t", "E"} | set(estimators.COLUMN_GROUPS["volume"])
    with pytest.raises(ValueError):
        kf.collect_series(series, estimators=["volume", "entropy"])


def test_vconfig_limit():
    E = np.array([1.0, 0.1, 0.01])
    with pytest.raises(VPositivityFailure):
        estimators.fit_vconfig(E, np.array([1.0, 1.0, 1.0]), None, A_max=10.0)
    vcfg = estimators.fit_vconfig(E, np.zeros(3), None, A_min=0.25)
    assert vcfg.A == 0.25


def initial(model):
    omega = kf.reference_volume_form(model, model.class_data)
    return cmaflow.initial_state(model, omega), omega


def test_initial_state_observables():
    model = build()
    cls = model.class_data
    state, omega = initial(model)
    # at t = 0: omega = omega_0, s = e^{-T} = 1/2 and d phi/dt = T
    assert np.max(np.abs(estimators.ricci_potential(state, cls) - 0.5 * cls.T)) < 1e-12
    tr = estimators.traces(model, state)
    assert abs(tr["tr_eta_sup"] - 0.5) < 1e-12 and abs(tr["tr_eta_inf"] - 0.5) < 1e-12
    assert abs(tr["E_tr_omega0_sup"] - 2.0) < 1e-12
    assert abs(tr["eig_ratio_min"] - 1.0) < 1e-12 and abs(tr["eig_ratio_max"] - 1.0) < 1e-12
    R = estimators.scalar_curvature(state, cls)
    assert abs(R.sup - 1.0) < 1e-12 and abs(R.inf - 1.0) < 1e-12
    assert R.discrepancy < 1e-10
    low, high = estimators.volume_ratio(state, omega, cls)
    assert abs(low - 2.0) < 1e-12 and abs(high - 2.0) < 1e-12


def test_fibre_average():
    model = build(profile="FibreBump", amplitude=0.05)
    # fibre-only fields have the same average over every base node
    average, deviation = estimators.fibre_average(model, model.psi0)
    assert np.ptp(average) < 1e-14
    assert deviation > 0.0
    # base-only fields are their own fibre average
    base_field = np.broadcast_to(np.cos(model.base.nodes)[None, :], model.shape)
    average, deviation = estimators.fibre_average(model, base_field)
    assert np.max(np.abs(average - np.cos(model.base.nodes))) < 1e-14
    assert deviation < 1e-14


def test_gradient_norm_of_base_field():
    model = build()
    metric = model.initial_metric
    y = model.base.nodes
    f = np.broadcast_to(np.cos(y)[None, :], model.shape)
    h = model.base.h
    # second-order central difference of cos y is -sin y * sin(h) / h; b0 = 1 and r = sqrt(2 pi)
    expected = 2.0 * np.pi * (np.sin(y) * np.sin(h) / h) ** 2
    got = gradient_norm_sq(metric, f)
    assert np.max(np.abs(got - expected[None, :])) < 1e-12


def refinement_orders(values):
    values = np.asarray(values, dtype=float)
    return np.log2(values[:-1] / values[1:])


def test_heat_residual_refinement():
    residuals = []
    for n in (17, 33, 65):
        spec = kf.ModelSpec(kind="SphereBase", a0=2.0, b0=4.0,
                            psi0=kf.InitialPerturbation(profile="CoupledBump", amplitude=0.05),
                            grid=kf.GridSpec(n_fibre=n, n_base=n, stencil_order=2))
        series = kf.run(kf.build_model(spec), kf.StepSchedule(eps_stop=0.3))
        bundle = kf.collect_series(series, estimators=["heat"])
        residuals.append(np.nanmax(bundle.column("heat_residual_u")))
    assert np.all(refinement_orders(residuals) >= 1.8), residuals


def test_scalar_curvature_methods_agree_under_refinement():
    gaps = []
    for n in (17, 33, 65):
        model = kf.build_model(kf.ModelSpec(kind="SphereBase", a0=2.0, b0=4.0,
                                            psi0=kf.InitialPerturbation(profile="CoupledBump", amplitude=0.05),
                                            grid=kf.GridSpec(n_fibre=n, n_base=n, stencil_order=2)))
        state, _ = initial(model)
        R = estimators.scalar_curvature(state, model.class_data)
        gaps.append(R.discrepancy / max(abs(R.sup), abs(R.inf)))
    gaps = np.maximum(gaps, 1e-12)
    # either exact to round-off or converging at the stencil order
    assert np.all(gaps <= 1e-10) or np.all(refinement_orders(gaps) >= 1.8), gaps


pairings = ["spr", "ske"]
profiles = ["FibreBump", "CoupledBump"]
registry_on_perturbed = ["VOLUME", "VFC_BAND", "DIAM_FIBRE", "TYPE_I", "AVG", "SUBMERSION_RATE", "U_CONV",
                         "LIYAU_GRAD", "LIYAU_LAP"]


@pytest.mark.parametrize("mode, profile", itertools.product(pairings, profiles))
def test_registry_on_perturbed_sphere_base(mode, profile):
    model = build("SphereBase", profile, b0=4.0)
    series = kf.run(model, kf.StepSchedule())
    assert series.completed, series.failure
    potentials = kf.solve_limit_potentials(model, series.omega, mode=mode)
    assert potentials.failures == {}
    bundle = kf.collect_series(series, potentials)
    results = kf.run_registry(bundle, registry=registry_on_perturbed)
    failed = {v.theorem_id: v.measured for v in results if not v.passed}
    assert failed == {}, failed
