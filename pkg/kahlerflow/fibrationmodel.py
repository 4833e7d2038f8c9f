"""
Symmetry-reduced model fibrations `f: X = P^1 x B -> B` and the invariant-chart kernels
(normalized metric coefficients, Hessians, Laplacians, gradients) for torus-invariant fields.

Fields are numpy arrays of shape `(n_fibre, n_base)`. Metric coefficients are stored
normalized by the background weights, `G_ij = g_ij / sqrt(w_i w_j)`, so that the round
fibre metric `a0 omega_rnd` has `G_ff = a0` and `omega^2 = 2 det(G) w_f w_b (chart volume)`.
"""
from dataclasses import dataclass, field, asdict
import numpy as np
import kahlerflow.utils as utils
import kahlerflow.cohomology as cohomology
from kahlerflow.utils.stencils import LatitudeAxis, PeriodicAxis, Axis
from kahlerflow.utils.errors import InvalidClass, NonPositiveInitialMetric, PositivityLoss

MODEL_KINDS = ("ProductFlat", "SphereBase")
PROFILES = ("Zero", "FibreBump", "CoupledBump")


def hessian(fibre: Axis, base: Axis, f: np.ndarray) -> tuple:
    """Normalized coefficients `(H_ff, H_fb, H_bb)` of `i ddbar f`."""
    f = np.asarray(f, dtype=float)
    h_ff = fibre.operator(f, axis=0)
    h_bb = base.operator(f, axis=1)
    h_fb = fibre.gradient(base.gradient(f, axis=1), axis=0)
    return h_ff, h_fb, h_bb


@dataclass
class GridSpec:
    n_fibre: int = 64
    n_base: int = 64
    stencil_order: int = 2

    def validate(self):
        for name in ("n_fibre", "n_base"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 16:
                utils.logger.error(f"{__name__}: grid.{name} must be an integer >= 16, got {value}")
                raise ValueError(f"grid.{name} must be an integer >= 16, got {value}")
        if self.stencil_order not in (2, 4):
            utils.logger.error(f"{__name__}: grid.stencil_order must be 2 or 4, got {self.stencil_order}")
            raise ValueError(f"grid.stencil_order must be 2 or 4, got {self.stencil_order}")


@dataclass
class InitialPerturbation:
    """
    Torus-invariant perturbation `psi0` of the initial potential.

    - `Zero`: `psi0 = 0`, the exactly solvable product model.
    - `FibreBump`: `amplitude * bump(cos theta_f)`, the same on every fibre.
    - `CoupledBump`: `amplitude * bump(cos theta_f) * modulation(base)`, so that fibres differ.

    `bump(x) = exp(-((x - center) / width)^2)`. The base modulation is
    `exp(-((cos theta_b - base_center) / base_width)^2)` on a sphere base and
    `exp((cos(y - base_center) - 1) / base_width^2)` on the flat base.
    Functions of `cos theta` are smooth and even at both poles.
    """
    profile: str = "Zero"
    amplitude: float = 0.0
    center: float = 0.3
    width: float = 0.5
    base_center: float = 0.0
    base_width: float = 0.7

    def fibre_profile(self, theta_f: np.ndarray) -> np.ndarray:
        return np.exp(-(((np.cos(theta_f) - self.center) / self.width) ** 2))

    def base_profile(self, base_nodes: np.ndarray, kind: str) -> np.ndarray:
        if kind == "SphereBase":
            return np.exp(-(((np.cos(base_nodes) - self.base_center) / self.base_width) ** 2))
        return np.exp((np.cos(base_nodes - self.base_center) - 1.0) / self.base_width**2)

    def evaluate(self, theta_f: np.ndarray, base_nodes: np.ndarray, kind: str) -> np.ndarray:
        shape = (len(theta_f), len(base_nodes))
        if self.profile == "Zero" or self.amplitude == 0.0:
            return np.zeros(shape)
        fibre = self.fibre_profile(theta_f)[:, None]
        if self.profile == "FibreBump":
            return self.amplitude * np.broadcast_to(fibre, shape).copy()
        if self.profile == "CoupledBump":
            return self.amplitude * fibre * self.base_profile(base_nodes, kind)[None, :]
        utils.logger.error(f"{__name__}: unknown perturbation profile `{self.profile}`")
        raise ValueError(f"unknown perturbation profile `{self.profile}`, expected one of {PROFILES}")


@dataclass
class ModelSpec:
    """
    Declarative description of a model: `kind` in {ProductFlat, SphereBase}, class coefficients
    `a0` (fibre) and `b0` (base), the perturbation `psi0` and the grid. `n = 2` and `m = 1` always.
    """
    kind: str = "ProductFlat"
    a0: float = 2.0
    b0: float = 1.0
    psi0: InitialPerturbation = field(default_factory=InitialPerturbation)
    grid: GridSpec = field(default_factory=GridSpec)
    n: int = 2
    m: int = 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        data = dict(data)
        psi0 = InitialPerturbation(**data.pop("psi0", {}))
        grid = GridSpec(**data.pop("grid", {}))
        return cls(psi0=psi0, grid=grid, **data)


@dataclass
class MetricField:
    """
    Normalized 2x2 symmetric metric coefficients per node (`ff`, `fb`, `bb`) with cached determinant.
    Carries the two axes so that Laplacians and gradients can be taken against it.
    """
    ff: np.ndarray
    fb: np.ndarray
    bb: np.ndarray
    fibre: Axis
    base: Axis
    det: np.ndarray = None

    def __post_init__(self):
        if self.det is None:
            self.det = self.ff * self.bb - self.fb**2

    @property
    def coeff(self) -> np.ndarray:
        """Coefficients as an array of shape `(n_fibre, n_base, 2, 2)`."""
        return np.stack([np.stack([self.ff, self.fb], axis=-1),
                         np.stack([self.fb, self.bb], axis=-1)], axis=-2)

    def inverse(self) -> tuple:
        return (self.bb / self.det, -self.fb / self.det, self.ff / self.det)

    def trace(self, h_ff, h_fb, h_bb) -> np.ndarray:
        """`tr(G^{-1} H)` for a symmetric normalized coefficient field `H`."""
        return (self.bb * h_ff - 2.0 * self.fb * h_fb + self.ff * h_bb) / self.det

    def is_positive(self) -> bool:
        return bool(np.all(self.ff > 0) and np.all(self.bb > 0) and np.all(self.det > 0))

    def check_positive(self, t: float = None) -> None:
        bad = (self.ff <= 0) | (self.bb <= 0) | (self.det <= 0) | ~np.isfinite(self.det)
        if np.any(bad):
            node = tuple(int(i) for i in np.argwhere(bad)[0])
            utils.logger.error(f"{__name__}: metric not positive at node {node}, t = {t}")
            raise PositivityLoss(f"metric not positive at node {node}, t = {t}", node=node, t=t)

    def scaled(self, c: float) -> "MetricField":
        return MetricField(c * self.ff, c * self.fb, c * self.bb, self.fibre, self.base)


class Model:
    """
    A built model: axes, perturbation field `psi0`, validated initial metric and class data.
    Use `build_model` to create one.
    """

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.kind = spec.kind
        self.n = spec.n
        self.m = spec.m
        order = spec.grid.stencil_order
        self.fibre = LatitudeAxis(spec.grid.n_fibre, order)
        if spec.kind == "SphereBase":
            self.base = LatitudeAxis(spec.grid.n_base, order)
        else:
            self.base = PeriodicAxis(spec.grid.n_base, order)
        self.shape = (self.fibre.n, self.base.n)
        self.class_data = cohomology.class_data(spec)
        self.psi0 = spec.psi0.evaluate(self.fibre.nodes, self.base.nodes, spec.kind)

        h_ff, h_fb, h_bb = self.hessian(self.psi0)
        self.initial_metric = MetricField(spec.a0 + h_ff, h_fb, spec.b0 + h_bb, self.fibre, self.base)

    # --- invariant-chart kernels ------------------------------------------------

    def hessian(self, f: np.ndarray) -> tuple:
        return hessian(self.fibre, self.base, f)

    def gradient(self, f: np.ndarray) -> tuple:
        return self.fibre.gradient(f, axis=0), self.base.gradient(f, axis=1)

    def integrate(self, f: np.ndarray) -> float:
        """Quadrature of `f` against `w_f w_b dtheta_f dtheta_b`, normalized so that constants integrate to themselves."""
        return float(self.fibre.quadrature @ np.asarray(f, dtype=float) @ self.base.quadrature)

    def fibre_integrate(self, f: np.ndarray) -> np.ndarray:
        """Per-base-node fibre quadrature (normalized fibre background area 1)."""
        return self.fibre.integrate(f, axis=0)

    def reference_metric(self, t: float) -> MetricField:
        """`omega_REF(t) = E(t) omega_0 + (1 - E(t)) f^* eta` in normalized coefficients."""
        cls = self.class_data
        E = cohomology.e_factor(t, cls.T)
        g0 = self.initial_metric
        return MetricField(E * g0.ff, E * g0.fb, E * g0.bb + (1.0 - E) * cls.c_B, self.fibre, self.base)

    def limit_form(self) -> MetricField:
        """`f^* eta` as a (degenerate) coefficient field."""
        zeros = np.zeros(self.shape)
        return MetricField(zeros, zeros, np.full(self.shape, self.class_data.c_B), self.fibre, self.base,
                           det=zeros.copy())

    def volume(self, metric: MetricField) -> float:
        """`int omega^2` for a metric field."""
        return 2.0 * cohomology.AREA**2 * self.integrate(metric.det)

    def __repr__(self):
        return f"Model({self.kind}, a0={self.spec.a0}, b0={self.spec.b0}, psi0={self.spec.psi0.profile}, grid={self.shape})"


def build_model(spec: ModelSpec) -> Model:
    """
    Validates a spec and builds the model.

    Raises
    ------
    - `InvalidClass` for an unknown kind, `a0 <= 0`, or `b0 <= a0` on SphereBase
    - `NonPositiveInitialMetric` if `psi0` breaks positivity of `omega_0` on the grid
    - `ValueError` for invalid grids or profiles
    """
    if spec.kind not in MODEL_KINDS:
        utils.logger.error(f"{__name__}: unknown model kind `{spec.kind}`")
        raise InvalidClass(f"unknown model kind `{spec.kind}`, expected one of {MODEL_KINDS}")
    if spec.n != 2 or spec.m != 1:
        utils.logger.error(f"{__name__}: only n = 2, m = 1 models are available")
        raise ValueError("only n = 2, m = 1 models are available")
    if not spec.a0 > 0 or not spec.b0 > 0:
        utils.logger.error(f"{__name__}: class coefficients must be positive, got a0={spec.a0}, b0={spec.b0}")
        raise InvalidClass(f"class coefficients must be positive, got a0={spec.a0}, b0={spec.b0}")
    if spec.kind == "SphereBase" and not spec.b0 > spec.a0:
        utils.logger.error(f"{__name__}: SphereBase needs b0 > a0, got a0={spec.a0}, b0={spec.b0}")
        raise InvalidClass(f"SphereBase needs b0 > a0 so that the fibre class vanishes first, got a0={spec.a0}, b0={spec.b0}")
    if spec.psi0.profile not in PROFILES:
        utils.logger.error(f"{__name__}: unknown perturbation profile `{spec.psi0.profile}`")
        raise ValueError(f"unknown perturbation profile `{spec.psi0.profile}`, expected one of {PROFILES}")
    spec.grid.validate()

    model = Model(spec)
    g0 = model.initial_metric
    if not g0.is_positive():
        bad = np.argwhere((g0.ff <= 0) | (g0.bb <= 0) | (g0.det <= 0))[0]
        utils.logger.error(f"{__name__}: psi0 breaks positivity of omega_0 at node {tuple(bad)}")
        raise NonPositiveInitialMetric(f"psi0 breaks positivity of omega_0 at node {tuple(int(i) for i in bad)}")

    utils.logger.info(f"{__name__}: built {model}, T = {model.class_data.T:.6f}, lambda = {model.class_data.lam:.6f}")
    return model


def assemble_metric(model: Model, phi, t: float) -> MetricField:
    """
    `omega(t) = omega_REF(t) + i ddbar phi` in normalized coefficients, with positivity verified.

    `phi` is an array of shape `model.shape` or any object with such an array in `.values`.
    Raises `PositivityLoss` if a diagonal entry or the determinant is not positive.
    """
    values = np.asarray(getattr(phi, "values", phi), dtype=float)
    ref = model.reference_metric(t)
    h_ff, h_fb, h_bb = model.hessian(values)
    metric = MetricField(ref.ff + h_ff, ref.fb + h_fb, ref.bb + h_bb, model.fibre, model.base)
    metric.check_positive(t)
    return metric


def laplacian(metric: MetricField, f: np.ndarray) -> np.ndarray:
    """`Delta_omega f = tr_omega(i ddbar f)`."""
    return metric.trace(*hessian(metric.fibre, metric.base, f))


def gradient_norm_sq(metric: MetricField, f: np.ndarray) -> np.ndarray:
    """`|grad f|^2_omega = g^{i jbar} f_i f_jbar`."""
    f = np.asarray(f, dtype=float)
    d_f = metric.fibre.gradient(f, axis=0)
    d_b = metric.base.gradient(f, axis=1)
    return (metric.bb * d_f**2 - 2.0 * metric.fb * d_f * d_b + metric.ff * d_b**2) / metric.det
