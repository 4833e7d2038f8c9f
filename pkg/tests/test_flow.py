import pytest
import itertools
import numpy as np
import kahlerflow as kf
from kahlerflow.cmaflow import FlowState, PotentialField, cma_rhs, initial_state, stable_dt, positivity_margin
from kahlerflow.utils.errors import MaxStepsExceeded, OutOfRange

kinds = {"ProductFlat": (2.0, 1.0), "SphereBase": (2.0, 4.0)}
methods = {"rk2": 1e-5, "rk4": 1e-6}


def build(kind="ProductFlat", profile="Zero", amplitude=0.05, n=17):
    a0, b0 = kinds[kind]
    spec = kf.ModelSpec(kind=kind, a0=a0, b0=b0,
                        psi0=kf.InitialPerturbation(profile=profile, amplitude=0.0 if profile == "Zero" else amplitude),
                        grid=kf.GridSpec(n_fibre=n, n_base=n, stencil_order=2))
    return kf.build_model(spec)


def closed_form(t, T):
    return T - t + 1.0 - (T + 1.0) * np.exp(-t)


@pytest.mark.parametrize("method", methods)
def test_product_flow_matches_closed_form(method):
    model = build()
    series = kf.run(model, kf.StepSchedule(method=method))
    assert series.completed
    T = model.class_data.T
    assert abs(series.times[-1] - (T - 1e-3 * T)) < 1e-14
    for snapshot in series.snapshots:
        exact = closed_form(snapshot.t, T)
        assert np.max(np.abs(snapshot.phi - exact)) < methods[method], f"phi off at t = {snapshot.t}"
        assert np.ptp(snapshot.phi) < 1e-12, "constant potentials have vanishing discrete Hessians"
        # analytic derivative of the closed form
        assert np.max(np.abs(snapshot.dphi_dt - (-1.0 + (T + 1.0) * np.exp(-snapshot.t)))) < 10 * methods[method]


def test_oracle_closed_form():
    model = build()
    T = model.class_data.T
    times = np.linspace(0.0, T * (1 - 1e-3), 25)
    assert np.max(np.abs(kf.exact_spatially_constant_flow(model, times) - closed_form(times, T))) < 1e-9
    assert abs(closed_form(T, T) - 0.1534) < 1e-4


def test_sphere_base_tracks_oracle():
    model = build("SphereBase")
    series = kf.run(model, kf.StepSchedule(method="rk4"))
    assert series.completed
    oracle = kf.exact_spatially_constant_flow(model, series.times)
    for snapshot, expected in zip(series.snapshots, oracle):
        assert np.max(np.abs(snapshot.phi - expected)) < 1e-6


def test_oracle_rejects_perturbed_models():
    model = build(profile="CoupledBump")
    with pytest.raises(ValueError):
        kf.exact_spatially_constant_flow(model, [0.0, 0.1])


def test_fibre_bump_is_base_independent():
    model = build("ProductFlat", "FibreBump", amplitude=0.1)
    series = kf.run(model, kf.StepSchedule(eps_stop=0.05))
    assert series.completed
    for snapshot in series.snapshots:
        assert np.max(np.abs(snapshot.phi - snapshot.phi[:, :1])) < 1e-12


@pytest.mark.parametrize("kind, profile", itertools.product(kinds, ["FibreBump", "CoupledBump"]))
def test_perturbed_runs_stay_positive(kind, profile):
    model = build(kind, profile)
    series = kf.run(model, kf.StepSchedule(eps_stop=0.02))
    assert series.completed, series.failure
    margins = series.diagnostics["positivity_margin"]
    assert len(margins) == len(series)
    assert min(margins) > 0.0
    assert np.all(np.diff(series.times) > 0)


def test_runs_are_deterministic():
    model = build("SphereBase", "CoupledBump")
    schedule = kf.StepSchedule(eps_stop=0.1)
    first = kf.run(model, schedule)
    second = kf.run(model, schedule)
    assert np.array_equal(first.times, second.times)
    for a, b in zip(first.snapshots, second.snapshots):
        assert np.array_equal(a.phi, b.phi)


def test_max_steps_returns_partial_series():
    model = build()
    series = kf.run(model, kf.StepSchedule(max_steps=5, snapshot_stride=2))
    assert not series.completed
    assert series.failure["error"] == "MaxStepsExceeded"
    assert series.failure["step"] == 5
    assert series.snapshots[-1].step == 5
    assert [s.step for s in series.snapshots] == [0, 2, 4, 5]
    with pytest.raises(MaxStepsExceeded):
        series.raise_for_failure()


def test_resume_continues_the_same_trajectory():
    model = build("ProductFlat", "CoupledBump")
    full = kf.run(model, kf.StepSchedule(eps_stop=0.1))
    partial = kf.run(model, kf.StepSchedule(eps_stop=0.1, max_steps=50))
    assert not partial.completed
    resumed = kf.run(model, kf.StepSchedule(eps_stop=0.1), resume=partial)
    assert resumed.completed
    assert np.array_equal(resumed.times, full.times)
    assert np.array_equal(resumed.snapshots[-1].phi, full.snapshots[-1].phi)


def test_cma_rhs_out_of_range():
    model = build()
    cls = model.class_data
    omega = kf.reference_volume_form(model, cls)
    state = initial_state(model, omega)
    late = FlowState(phi=PotentialField(values=np.zeros(model.shape), t=cls.T), metric=state.metric, rhs=None)
    with pytest.raises(OutOfRange):
        cma_rhs(model, cls, omega, late)


def test_initial_rhs_of_product():
    model = build()
    omega = kf.reference_volume_form(model, model.class_data)
    state = initial_state(model, omega)
    # log(omega_0^2 / Omega) = log(b0 / c_B) = T
    assert np.max(np.abs(state.rhs - model.class_data.T)) < 1e-14
    assert positivity_margin(model, state) == pytest.approx(1.0)


def test_stable_dt_shrinks_with_the_fibre():
    model = build()
    schedule = kf.StepSchedule().resolve(model.class_data.T)
    early = stable_dt(model, model.reference_metric(0.0), schedule)
    late = stable_dt(model, model.reference_metric(0.5 * model.class_data.T), schedule)
    assert late < early
    rk4 = kf.StepSchedule(method="rk4").resolve(model.class_data.T)
    assert stable_dt(model, model.reference_metric(0.0), rk4) > early


@pytest.mark.parametrize("options", [{"cfl_safety": 1.5}, {"eps_stop": 5.0}, {"method": "euler"},
                                     {"snapshot_stride": 0}, {"max_dt": -1.0}])
def test_schedule_validation(options):
    with pytest.raises(ValueError):
        kf.StepSchedule(**options).resolve(np.log(2.0))


def test_potential_is_even_through_the_poles():
    # phi(theta) = phi(0) + c theta^2 near a pole, so the first gap shrinks like h^2
    gaps = []
    for n in (17, 33):
        model = build("SphereBase", "CoupledBump", amplitude=0.1, n=n)
        series = kf.run(model, kf.StepSchedule(eps_stop=0.3))
        assert series.completed, series.failure
        phi = series.snapshots[-1].phi
        gaps.append([np.max(np.abs(phi[1] - phi[0])), np.max(np.abs(phi[-2] - phi[-1])),
                     np.max(np.abs(phi[:, 1] - phi[:, 0])), np.max(np.abs(phi[:, -2] - phi[:, -1]))])
    ratio = np.array(gaps[0]) / np.array(gaps[1])
    assert np.all((ratio > 3.0) & (ratio < 5.0)), ratio
