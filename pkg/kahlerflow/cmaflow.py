"""
Time integration of the complex Monge-Ampère flow

    d phi / dt = log( omega(t)^2 / (E(t) Omega) ) - phi,   omega(t) = omega_REF(t) + i ddbar phi,   phi(0) = 0,

on a model, by adaptive explicit Runge-Kutta steps, up to `T - eps_stop`.
"""
import time
from dataclasses import dataclass, field, asdict
import numpy as np
from scipy.integrate import solve_ivp
import kahlerflow.utils as utils
import kahlerflow.cohomology as cohomology
from kahlerflow.fibrationmodel import Model, MetricField, assemble_metric
from kahlerflow.utils.errors import (
    KahlerFlowError,
    MaxStepsExceeded,
    OutOfRange,
    StepSizeUnderflow,
)

METHODS = ("rk2", "rk4")
# real-axis stability limits of Heun's method and classical RK4
_STABILITY = {"rk2": 2.0, "rk4": 2.78}
MIN_DT = 1e-14


@dataclass
class PotentialField:
    values: np.ndarray
    t: float


@dataclass
class FlowState:
    """
    A coherent state of the flow: `metric == assemble_metric(model, phi, t)` and `rhs == cma_rhs(...)`.
    `rhs` is the analytic time derivative of `phi`.
    """
    phi: PotentialField
    metric: MetricField
    rhs: np.ndarray
    dt_last: float = 0.0

    @property
    def t(self) -> float:
        return self.phi.t


@dataclass
class StepSchedule:
    """
    Time-stepping policy.

    - `cfl_safety`: fraction of the stability limit used for `dt`, in (0, 0.9]
    - `eps_stop`: final gap `T - t_end`; `None` means `1e-3 * T`
    - `snapshot_stride`: accepted steps between stored snapshots
    - `max_steps`: resource guard
    - `method`: `"rk2"` (Heun) or `"rk4"`
    - `max_dt`: optional cap on the step
    """
    cfl_safety: float = 0.5
    eps_stop: float = None
    snapshot_stride: int = 10
    max_steps: int = 1_000_000
    method: str = "rk2"
    max_dt: float = None

    def resolve(self, T: float) -> "StepSchedule":
        """Returns a copy with `eps_stop` filled in, after validation against the singular time."""
        eps_stop = 1e-3 * T if self.eps_stop is None else float(self.eps_stop)
        if not 0.0 < self.cfl_safety <= 0.9:
            utils.logger.error(f"{__name__}: cfl_safety must be in (0, 0.9], got {self.cfl_safety}")
            raise ValueError(f"cfl_safety must be in (0, 0.9], got {self.cfl_safety}")
        if not 0.0 < eps_stop < T:
            utils.logger.error(f"{__name__}: eps_stop must be in (0, T={T}), got {eps_stop}")
            raise ValueError(f"eps_stop must be in (0, T={T}), got {eps_stop}")
        if int(self.snapshot_stride) < 1 or int(self.max_steps) < 1:
            utils.logger.error(f"{__name__}: snapshot_stride and max_steps must be positive")
            raise ValueError("snapshot_stride and max_steps must be positive")
        if self.method not in METHODS:
            utils.logger.error(f"{__name__}: unknown method `{self.method}`")
            raise ValueError(f"unknown method `{self.method}`, expected one of {METHODS}")
        if self.max_dt is not None and not self.max_dt > 0:
            utils.logger.error(f"{__name__}: max_dt must be positive, got {self.max_dt}")
            raise ValueError(f"max_dt must be positive, got {self.max_dt}")
        return StepSchedule(cfl_safety=float(self.cfl_safety), eps_stop=eps_stop,
                            snapshot_stride=int(self.snapshot_stride), max_steps=int(self.max_steps),
                            method=self.method, max_dt=self.max_dt)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Snapshot:
    """Stored sample of the flow: time, step index, `phi`, its analytic time derivative, last step size."""
    t: float
    step: int
    phi: np.ndarray
    dphi_dt: np.ndarray
    dt_last: float


@dataclass
class SnapshotSeries:
    """
    Time-ordered snapshots of one run, starting at `t = 0` with `phi = 0`.

    `failure` is `None` for a completed run, otherwise a dict with the error class, message, time and
    step of the failure; the snapshots then end at the last good state.
    """
    model: Model
    omega: cohomology.ReferenceVolume
    schedule: StepSchedule
    snapshots: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=lambda: {"dt_history": [], "positivity_margin": []})
    failure: dict = None
    error: Exception = None

    @property
    def class_data(self) -> cohomology.ClassData:
        return self.model.class_data

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def completed(self) -> bool:
        return self.failure is None

    def __len__(self):
        return len(self.snapshots)

    def state(self, i: int) -> FlowState:
        """Rebuilds the full flow state of snapshot `i` (metric assembled, rhs from storage)."""
        s = self.snapshots[i]
        phi = PotentialField(values=s.phi, t=s.t)
        return FlowState(phi=phi, metric=assemble_metric(self.model, phi, s.t), rhs=s.dphi_dt, dt_last=s.dt_last)

    def states(self):
        for i in range(len(self.snapshots)):
            yield self.state(i)

    def raise_for_failure(self):
        if self.error is not None:
            raise self.error


def _log_det_ratio(model: Model, omega, metric: MetricField, t: float) -> np.ndarray:
    # log(omega^2 / (E Omega)) with omega^2 = 2 det w_f w_b and Omega = 2 e^l w_f w_b
    E = cohomology.e_factor(t, model.class_data.T)
    return np.log(metric.det) - np.log(E) - omega.log_density


def cma_rhs(model: Model, cls: cohomology.ClassData, omega, state) -> np.ndarray:
    """
    Right-hand side `log(2 det(metric) / (E(t) D_Omega)) - phi` nodewise.

    `state` is a `FlowState` or a `PotentialField` (the metric is then assembled, raising
    `PositivityLoss` if it is not positive).
    """
    if isinstance(state, FlowState):
        phi, metric = state.phi, state.metric
    else:
        phi = state
        metric = assemble_metric(model, phi, phi.t)
    if not phi.t < cls.T:
        utils.logger.error(f"{__name__}: cma_rhs needs t < T, got t = {phi.t}")
        raise OutOfRange(f"cma_rhs needs t < T = {cls.T}, got t = {phi.t}")
    return _log_det_ratio(model, omega, metric, phi.t) - phi.values


def initial_state(model: Model, omega) -> FlowState:
    phi = PotentialField(values=np.zeros(model.shape), t=0.0)
    metric = assemble_metric(model, phi, 0.0)
    state = FlowState(phi=phi, metric=metric, rhs=None)
    state.rhs = cma_rhs(model, model.class_data, omega, state)
    return state


def stable_dt(model: Model, metric: MetricField, schedule: StepSchedule) -> float:
    """
    `cfl_safety * s / (max_nodes sum_ij |G^{ij}| S_ij + 1)`, with `S_ij` the row-sum norms of the Hessian
    stencils and `s` the real-axis stability limit of the method. This bounds the spectral radius of the
    linearized right-hand side `Delta_omega - 1`.
    """
    fibre, base = model.fibre, model.base
    s_ff = fibre.operator_norm
    s_bb = base.operator_norm
    s_fb = fibre.gradient_scale * fibre.d1_norm * base.gradient_scale * base.d1_norm
    inv_ff, inv_fb, inv_bb = metric.inverse()
    rate = np.max(np.abs(inv_ff) * s_ff + 2.0 * np.abs(inv_fb) * s_fb + np.abs(inv_bb) * s_bb) + 1.0
    return schedule.cfl_safety * _STABILITY[schedule.method] / float(rate)


def _stage(model, omega, values, t) -> tuple:
    phi = PotentialField(values=values, t=t)
    metric = assemble_metric(model, phi, t)
    return metric, _log_det_ratio(model, omega, metric, t) - values


def step(model: Model, cls: cohomology.ClassData, omega, state: FlowState, schedule: StepSchedule,
         t_stop: float = None) -> FlowState:
    """
    Advances `state` by one explicit Runge-Kutta step of size `stable_dt` (clipped to `max_dt` and to
    `t_stop`, default `T - eps_stop`). Every stage metric is checked for positivity.

    Raises `StepSizeUnderflow` if the stability step falls below `1e-14`, `PositivityLoss` if a stage
    leaves the Kähler cone.
    """
    if schedule.eps_stop is None:
        schedule = schedule.resolve(cls.T)
    if t_stop is None:
        t_stop = cls.T - schedule.eps_stop
    t = state.t
    dt = stable_dt(model, state.metric, schedule)
    if dt < MIN_DT:
        utils.logger.error(f"{__name__}: step size {dt:.3e} underflow at t = {t}")
        raise StepSizeUnderflow(f"step size {dt:.3e} underflow at t = {t}")
    if schedule.max_dt is not None:
        dt = min(dt, schedule.max_dt)
    # land exactly on t_stop, without leaving a sliver
    if t + 1.5 * dt >= t_stop:
        dt = min(dt, t_stop - t) if t + dt >= t_stop else 0.5 * (t_stop - t)
    phi = state.phi.values
    k1 = state.rhs

    if schedule.method == "rk2":
        _, k2 = _stage(model, omega, phi + dt * k1, t + dt)
        values = phi + 0.5 * dt * (k1 + k2)
    else:
        _, k2 = _stage(model, omega, phi + 0.5 * dt * k1, t + 0.5 * dt)
        _, k3 = _stage(model, omega, phi + 0.5 * dt * k2, t + 0.5 * dt)
        _, k4 = _stage(model, omega, phi + dt * k3, t + dt)
        values = phi + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    t_new = t_stop if abs(t + dt - t_stop) <= 1e-15 * max(1.0, t_stop) else t + dt
    metric, rhs = _stage(model, omega, values, t_new)
    return FlowState(phi=PotentialField(values=values, t=t_new), metric=metric, rhs=rhs, dt_last=dt)


def positivity_margin(model: Model, state: FlowState) -> float:
    """`min_nodes det(omega) / det(omega_REF)`: how far the flow stays inside the Kähler cone."""
    ref = model.reference_metric(state.t)
    return float(np.min(state.metric.det / ref.det))


class CMAFlow:
    """
    Integrator of the Monge-Ampère flow on a model.

    Parameters
    ----------
    - `model: Model`
    - `schedule: StepSchedule`
    - `omega: ReferenceVolume`, optional

        Reference volume form. Built with `reference_volume_form` if not given.
    """

    def __init__(self, model: Model, schedule: StepSchedule = None, omega=None):
        self.model = model
        self.cls = model.class_data
        self.schedule = (schedule or StepSchedule()).resolve(self.cls.T)
        self.omega = omega if omega is not None else cohomology.reference_volume_form(model, self.cls)
        self.t_stop = self.cls.T - self.schedule.eps_stop
        self.solve_statistics = {}
        self.series = None

    def _snapshot(self, state: FlowState, k: int):
        self.series.snapshots.append(Snapshot(t=state.t, step=k, phi=state.phi.values, dphi_dt=state.rhs,
                                              dt_last=state.dt_last))
        self.series.diagnostics["positivity_margin"].append(positivity_margin(self.model, state))

    def solve(self, resume: SnapshotSeries = None) -> bool:
        """
        Integrates up to `T - eps_stop`. Returns `True` when the stopping time was reached and `False` if
        the run stopped on an error; the series is available from `get_solution()` in both cases.
        With `resume`, the run continues from the last snapshot of that series.
        """
        start_time = time.perf_counter()
        self.series = SnapshotSeries(model=self.model, omega=self.omega, schedule=self.schedule)
        if resume is not None and len(resume.snapshots) > 0:
            self.series.snapshots = list(resume.snapshots)
            self.series.diagnostics = {key: list(value) for key, value in resume.diagnostics.items()
                                       if isinstance(value, list)}
            last = resume.snapshots[-1]
            k = last.step
            state = resume.state(len(resume.snapshots) - 1)
            utils.logger.info(f"{__name__}: resuming at t = {state.t:.6g}, step {k}")
        else:
            k = 0
            state = initial_state(self.model, self.omega)
            self._snapshot(state, k)

        dt_history = self.series.diagnostics["dt_history"]
        stride = self.schedule.snapshot_stride
        try:
            while state.t < self.t_stop:
                if k >= self.schedule.max_steps:
                    utils.logger.error(f"{__name__}: max_steps = {self.schedule.max_steps} reached at t = {state.t:.6g}")
                    raise MaxStepsExceeded(f"max_steps = {self.schedule.max_steps} reached at t = {state.t:.6g}")
                state = step(self.model, self.cls, self.omega, state, self.schedule, t_stop=self.t_stop)
                k += 1
                dt_history.append(state.dt_last)
                if k % stride == 0 or state.t >= self.t_stop:
                    self._snapshot(state, k)
                    utils.logger.debug(f"{__name__}: step {k}, t = {state.t:.8f}, dt = {state.dt_last:.3e}")
        except KahlerFlowError as error:
            if self.series.snapshots[-1].step != k:
                self._snapshot(state, k)
            self.series.error = error
            self.series.failure = {"error": type(error).__name__, "message": str(error),
                                   "t": float(state.t), "step": int(k)}
            utils.logger.warning(f"{__name__}: run stopped at t = {state.t:.6g} after {k} steps: {type(error).__name__}")

        self.solve_statistics = {
            "steps": k,
            "snapshots": len(self.series.snapshots),
            "t_end": float(state.t),
            "dt_min": float(np.min(dt_history)) if dt_history else None,
            "dt_max": float(np.max(dt_history)) if dt_history else None,
            "solve_time": time.perf_counter() - start_time,
        }
        self.series.diagnostics["solve_statistics"] = self.solve_statistics
        if self.series.completed:
            utils.logger.info(f"{__name__}: reached t = {state.t:.8f} (T - t = {self.cls.T - state.t:.3e}) in {k} steps")
        return self.series.completed

    def is_solved(self) -> bool:
        return self.series is not None

    def check_is_solved(self):
        if not self.is_solved():
            utils.logger.error(f"{__name__}: Flow not integrated. Call solve() first.")
            raise Exception("Flow not integrated. Call solve() first.")

    def get_solution(self) -> SnapshotSeries:
        self.check_is_solved()
        return self.series


def run(model: Model, schedule: StepSchedule = None, omega=None, resume: SnapshotSeries = None) -> SnapshotSeries:
    """
    Integrates the flow from `t = 0` (or from the end of `resume`) to `T - eps_stop` and returns the
    snapshot series. Step errors do not propagate: the partial series is returned with `failure` set
    (see `SnapshotSeries.raise_for_failure`).
    """
    flow = CMAFlow(model, schedule, omega)
    flow.solve(resume=resume)
    return flow.get_solution()


def exact_spatially_constant_flow(model: Model, times, omega=None, rtol: float = 1e-12, atol: float = 1e-14) -> np.ndarray:
    """
    Oracle for models whose flow stays spatially constant (`psi0 = 0`): integrates the scalar reduction
    `phi' = log(det omega_REF(t) / (E(t) e^l)) - phi` with DOP853 and returns `phi(times)`.

    On ProductFlat the driving term is `T - t` and the solution is `T - t + 1 - (T + 1) e^{-t}`.
    Raises `ValueError` if the driving term is not spatially constant.
    """
    cls = model.class_data
    if omega is None:
        omega = cohomology.reference_volume_form(model, cls)
    times = np.asarray(times, dtype=float)
    ell = omega.log_density
    if np.ptp(ell) > 1e-12:
        utils.logger.error(f"{__name__}: the flow of {model} is not spatially constant")
        raise ValueError(f"the flow of {model} is not spatially constant")
    ell = float(ell.flat[0])
    fibre0, _, base0 = (cls.a0, 0.0, cls.b0)

    def forcing(t):
        E = cohomology.e_factor(min(t, cls.T), cls.T)
        # det of omega_REF relative to the background, divided by E
        return np.log(fibre0 * (E * base0 + (1.0 - E) * cls.c_B)) - ell

    solution = solve_ivp(lambda t, y: forcing(t) - y, (0.0, float(times.max())), [0.0],
                         method="DOP853", t_eval=times, rtol=rtol, atol=atol)
    if not solution.success:
        utils.logger.error(f"{__name__}: scalar oracle failed: {solution.message}")
        raise RuntimeError(f"scalar oracle failed: {solution.message}")
    return solution.y[0]
