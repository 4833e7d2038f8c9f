"""
The auxiliary elliptic problems on the model geometries: fibre-wise prescribed-Ricci and
Kähler-Einstein potentials, the pushforward density `G'`, and the base twisted Kähler-Einstein
potentials `rho_B`, `rho'_B`.
"""
from dataclasses import dataclass, field, replace
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp
import kahlerflow.utils as utils
import kahlerflow.cohomology as cohomology
from kahlerflow.abstractellipticproblem import AbstractNewtonProblem, EllipticSolution
from kahlerflow.utils.errors import KahlerFlowError, NonZeroMass, NormalizationFailure, PositivityLoss

BASE_VARIANTS = ("rho_B", "rho_B_prime")
NORMALIZATIONS = ("flow", "mean_zero")


@dataclass
class PushforwardDensity:
    """
    `G' = f_* Omega_ref / (V eta^m)` on the base grid, with `V = C(2,1) int_{X_b} omega_{0,b}`.

    - `values`: `G'` per base node
    - `fibre_volume_V`: `V = 2 * 2pi * a0`
    - `mass`: `int_B G' V eta`
    - `target_mass`: `int_X` of the pushed-forward volume (`Omega`, or `e^{-lam rho_SKE} Omega`)
    - `reference`: `"spr"` or `"ske"`
    - `normalization`: `"MeanZero"` (fibre potentials with zero fibre mean) or `"FlowSelected"`
    - `fibre_constant`: per-fibre constant `c(b)` added to the mean-zero fibre potential; `G'` carries
      the factor `e^{-lam c(b)}`
    """
    values: np.ndarray
    fibre_volume_V: float
    mass: float
    target_mass: float
    reference: str
    normalization: str = "MeanZero"
    fibre_constant: np.ndarray = None

    @property
    def mass_error(self) -> float:
        return abs(self.mass - self.target_mass) / abs(self.target_mass)


def _bordered_poisson(axis) -> spla.SuperLU:
    # [L 1; q^T 0]: nonsingular since 1 is not in range(L) = {v : q^T v = 0}
    n = axis.n
    ones = sp.csr_matrix(np.ones((n, 1)))
    q = sp.csr_matrix(axis.quadrature.reshape(1, n))
    system = sp.bmat([[axis.operator_matrix, ones], [q, None]], format="csc")
    return spla.splu(system)


def poisson_fibre(model, rhs: np.ndarray, mass_tolerance: float = 1e-10) -> EllipticSolution:
    """
    Mean-zero solution `rho` of `L_f rho = rhs` on every fibre, where `rhs` holds the normalized
    fibre coefficient of a two-form (shape `(n_fibre,)` or `(n_fibre, n_base)`).

    Raises `NonZeroMass` if some fibre has `|q^T rhs| > mass_tolerance * max(1, sup|rhs|)`.
    """
    rhs = np.asarray(rhs, dtype=float)
    flat = rhs.ndim == 1
    columns = rhs.reshape(model.fibre.n, -1)
    q = model.fibre.quadrature

    mass = q @ columns
    scale = np.maximum(1.0, np.max(np.abs(columns), axis=0))
    if np.any(np.abs(mass) > mass_tolerance * scale):
        worst = int(np.argmax(np.abs(mass) / scale))
        utils.logger.error(f"{__name__}: right-hand side has fibre mass {mass[worst]:.3e} on fibre {worst}")
        raise NonZeroMass(f"right-hand side has fibre mass {mass[worst]:.3e} on fibre {worst}")

    lu = _bordered_poisson(model.fibre)
    padded = np.vstack([columns, np.zeros((1, columns.shape[1]))])
    solution = lu.solve(padded)[:-1]
    residual = float(np.max(np.abs(model.fibre.operator(solution, axis=0) - columns)))
    potential = solution[:, 0] if flat else solution
    return EllipticSolution(name="poisson_fibre", potential=potential, residual_sup=residual,
                           iterations=0, normalization="MeanZero")


def fibre_ricci_residual(model, g_ff: np.ndarray, target_ff: np.ndarray) -> np.ndarray:
    """Normalized fibre coefficient of `Ric(omega|_{X_b}) - target` for fibre metrics `g_ff`."""
    ricci = model.fibre.background_ricci - model.fibre.operator(np.log(g_ff), axis=0)
    return ricci - target_ff


def solve_spr(model, cls, omega) -> EllipticSolution:
    """
    Fibre-wise prescribed-Ricci potential: `omega_SPR,b = omega_{0,b} + i ddbar rho_SPR` with
    `Ric omega_SPR,b = lam omega_{0,b}`.

    On each fibre the answer is the restriction of `Omega` rescaled to the fibre area,
    `c_b exp(log_density) omega_rnd`; `rho_SPR` then comes from `poisson_fibre`.
    """
    g0_ff = model.initial_metric.ff
    density = np.exp(omega.log_density - np.max(omega.log_density, axis=0, keepdims=True))
    c_b = cls.a0 / model.fibre_integrate(density)
    target = c_b[None, :] * density

    solution = poisson_fibre(model, target - g0_ff)
    g_spr = g0_ff + model.fibre.operator(solution.potential, axis=0)
    residual = float(np.max(np.abs(fibre_ricci_residual(model, g_spr, cls.lam * g0_ff))))
    area_error = float(np.max(np.abs(model.fibre_integrate(g_spr) - cls.a0)))

    utils.logger.info(f"{__name__}: rho_SPR solved, Ricci residual {residual:.3e}")
    return EllipticSolution(name="rho_SPR", potential=solution.potential, residual_sup=residual, iterations=0,
                           normalization="MeanZero",
                           extras={"poisson_residual": solution.residual_sup, "area_error": area_error})


class FibreKahlerEinstein(AbstractNewtonProblem):
    """
    Kähler-Einstein metric in the class of `omega_{0,b}` on one fibre, in Monge-Ampère form

        log(g0 + L rho) + lam (psi0 + rho) - c - tau cos(theta) = 0,
        q^T rho = 0,
        q^T (cos(theta) (g0 + L rho)) / a0 = 0.

    `cos(theta)` spans the kernel of the linearization (automorphisms of P^1); the centering
    condition fixes that gauge, and `tau` vanishes at the solution.
    """

    def __init__(self, model, cls, b: int, solver_options: dict = {}):
        super().__init__(solver_options)
        self.model = model
        self.cls = cls
        self.b = b
        axis = model.fibre
        self.n = axis.n
        self.L = axis.operator_matrix
        self.q = axis.quadrature
        self.cos = np.cos(axis.nodes)
        self.g0 = model.initial_metric.ff[:, b]
        self.psi0 = model.psi0[:, b]

    def _split(self, x):
        return x[:self.n], x[self.n], x[self.n + 1]

    def initial_guess(self) -> np.ndarray:
        c = self.q @ (np.log(self.g0) + self.cls.lam * self.psi0)
        return np.concatenate([np.zeros(self.n), [c, 0.0]])

    def metric(self, x) -> np.ndarray:
        rho, _, _ = self._split(x)
        return self.g0 + self.L @ rho

    def is_admissible(self, x) -> bool:
        return bool(np.all(self.metric(x) > 0))

    def residual(self, x) -> np.ndarray:
        rho, c, tau = self._split(x)
        g = self.metric(x)
        return np.concatenate([
            np.log(g) + self.cls.lam * (self.psi0 + rho) - c - tau * self.cos,
            [self.q @ rho],
            [self.q @ (self.cos * g) / self.cls.a0],
        ])

    def jacobian(self, x):
        g = self.metric(x)
        top = sp.diags(1.0 / g) @ self.L + self.cls.lam * sp.identity(self.n)
        return sp.bmat([
            [top, sp.csr_matrix(-np.ones((self.n, 1))), sp.csr_matrix(-self.cos.reshape(-1, 1))],
            [sp.csr_matrix(self.q.reshape(1, -1)), None, None],
            [sp.csr_matrix((self.q * self.cos).reshape(1, -1)) @ self.L / self.cls.a0, None, None],
        ], format="csc")

    def get_solution(self) -> EllipticSolution:
        self.check_is_solved()
        rho, c, tau = self._split(self.x)
        return EllipticSolution(name="rho_SKE", potential=rho, residual_sup=self.solve_statistics["residual_sup"],
                               iterations=self.solve_statistics["iterations"], normalization="MeanZero",
                               residual_history=list(self.residual_history), extras={"c": c, "tau": tau})


def solve_ske(model, cls, solver_options: dict = {}) -> EllipticSolution:
    """
    Fibre-wise Kähler-Einstein potential `rho_SKE`, `Ric omega_SKE,b = lam omega_SKE,b`, by Newton
    on every fibre. Mean-zero per fibre. Raises `NewtonDivergence` with the residual trace on failure.
    """
    potential = np.zeros(model.shape)
    residual = 0.0
    iterations = 0
    history = []
    taus = []
    for b in range(model.base.n):
        problem = FibreKahlerEinstein(model, cls, b, solver_options=solver_options)
        problem.solve()
        fibre = problem.get_solution()
        potential[:, b] = fibre.potential
        iterations += fibre.iterations
        taus.append(fibre.extras["tau"])
        if fibre.residual_sup >= residual:
            residual = fibre.residual_sup
            history = fibre.residual_history

    g_ske = model.initial_metric.ff + model.fibre.operator(potential, axis=0)
    ke_residual = float(np.max(np.abs(fibre_ricci_residual(model, g_ske, cls.lam * g_ske))))
    utils.logger.info(f"{__name__}: rho_SKE solved on {model.base.n} fibres, {iterations} Newton steps, residual {residual:.3e}")
    return EllipticSolution(name="rho_SKE", potential=potential, residual_sup=residual, iterations=iterations,
                           normalization="MeanZero", residual_history=history,
                           extras={"ke_residual": ke_residual, "max_abs_tau": float(np.max(np.abs(taus)))})


def fibre_constant_limit(model, datum: np.ndarray, rtol: float = 1e-10, atol: float = 1e-12) -> np.ndarray:
    """
    Limit of the flow restricted to fibre-constant potentials. For `psi0 = f^* datum` the combination
    `y = E psi0 + phi` solves

        y' = log((beta(t) + L_b y) / beta(t)) - y,    y(0) = datum,

    where `beta(t) = E b0 + (1 - E) c_B` is the base coefficient of `omega_REF(t)`, and `phi(T) = y(T)`
    up to an additive constant. Integrated to `t = T` with BDF; the base stays non-degenerate
    because `beta(T) = c_B > 0`.

    Raises `PositivityLoss` if `beta + L_b y` is not positive along the solution and
    `NormalizationFailure` if the integrator fails.
    """
    cls = model.class_data
    L = model.base.operator_matrix
    identity = sp.identity(model.base.n, format="csc")
    datum = np.asarray(datum, dtype=float)

    def beta(t):
        E = cohomology.e_factor(min(max(t, 0.0), cls.T), cls.T)
        return E * cls.b0 + (1.0 - E) * cls.c_B

    def rhs(t, y):
        b = beta(t)
        # trial stages may step outside the cone; the accepted solution is checked below
        return np.log(np.maximum(b + L @ y, 1e-300) / b) - y

    def jacobian(t, y):
        return (sp.diags(1.0 / np.maximum(beta(t) + L @ y, 1e-300)) @ L - identity).tocsc()

    solution = solve_ivp(rhs, (0.0, cls.T), datum, method="BDF", jac=jacobian, rtol=rtol, atol=atol)
    if not solution.success:
        utils.logger.error(f"{__name__}: fibre-constant reduction failed: {solution.message}")
        raise NormalizationFailure(f"fibre-constant reduction failed: {solution.message}")
    for t, y in zip(solution.t, solution.y.T):
        g = beta(t) + L @ y
        if np.any(g <= 0):
            node = int(np.argmin(g))
            utils.logger.error(f"{__name__}: base metric of the fibre-constant reduction degenerates at node {node}, t = {t}")
            raise PositivityLoss(f"base metric of the fibre-constant reduction degenerates at node {node}, t = {t}",
                                 node=(node,), t=float(t))
    return solution.y[:, -1]


def pushforward_G(model, omega, reference: str = "spr", rho_ske: EllipticSolution = None,
                  normalization: str = "flow") -> PushforwardDensity:
    """
    `G' = f_* Omega / (V eta^m)` (`reference="spr"`) or `f_*(e^{-lam rho_SKE} Omega) / (V eta^m)`
    (`reference="ske"`, needs `rho_ske`), evaluated with the fibre quadrature.

    The per-fibre constant of `rho_SPR`/`rho_SKE` is not fixed by the fibre equations, and `G'` scales
    by `e^{-lam c(b)}` under `rho -> rho + f^* c`.

    - `normalization="mean_zero"`: fibre potentials with zero fibre mean, `c = 0`.
    - `normalization="flow"` (default): the constant the flow selects. The mean-zero `G'` defines the
      base datum `-log(G') / lam`; its limit `y_T` under `fibre_constant_limit` is the limit of the
      fibre-constant part of `phi`, and `c(b)` is chosen so that the `rho'_B` equation returns
      `y_T / (1 - e^{-T})` up to a constant: `G' = (1 + L_b y_T / c_B) e^{-y_T / (1 - e^{-T})}`,
      rescaled to the target mass.
    """
    cls = model.class_data
    if normalization not in NORMALIZATIONS:
        utils.logger.error(f"{__name__}: unknown normalization `{normalization}`")
        raise ValueError(f"unknown normalization `{normalization}`, expected one of {NORMALIZATIONS}")
    if reference == "spr":
        log_weight = omega.log_density
    elif reference == "ske":
        if rho_ske is None:
            utils.logger.error(f"{__name__}: the ske pushforward needs rho_SKE")
            raise ValueError("the ske pushforward needs rho_SKE")
        log_weight = omega.log_density - cls.lam * rho_ske.potential
    else:
        utils.logger.error(f"{__name__}: unknown pushforward reference `{reference}`")
        raise ValueError(f"unknown pushforward reference `{reference}`, expected `spr` or `ske`")

    # (f_* Omega) / (V eta) with Omega = 2 e^l w_f w_b, eta = c_B w_b, V = 2 * 2pi a0
    fibre_mass = model.fibre_integrate(np.exp(log_weight))
    values = fibre_mass / (cls.a0 * cls.c_B)
    V = 2.0 * cohomology.AREA * cls.a0
    target_mass = 2.0 * cohomology.AREA**2 * model.integrate(np.exp(log_weight))

    def base_mass(density):
        return V * cls.c_B * cohomology.AREA * float(model.base.quadrature @ density)

    if np.any(values <= 0):
        utils.logger.warning(f"{__name__}: non-positive pushforward density")
    fibre_constant = np.zeros_like(values)
    label = "MeanZero"
    if normalization == "flow":
        y_T = fibre_constant_limit(model, -np.log(values) / cls.lam)
        selected = (1.0 + (model.base.operator_matrix @ y_T) / cls.c_B) * np.exp(-y_T / -np.expm1(-cls.T))
        selected *= target_mass / base_mass(selected)
        fibre_constant = -np.log(selected / values) / cls.lam
        values = selected
        label = "FlowSelected"

    result = PushforwardDensity(values=values, fibre_volume_V=V, mass=base_mass(values), target_mass=target_mass,
                                reference=reference, normalization=label, fibre_constant=fibre_constant)
    utils.logger.debug(f"{__name__}: G' in [{values.min():.6g}, {values.max():.6g}], mass error {result.mass_error:.3e}, "
                       f"fibre constant spread {np.ptp(fibre_constant):.3e}")
    return result


class BaseTwistedKahlerEinstein(AbstractNewtonProblem):
    """
    `(c eta + i ddbar rho)^m = G' e^rho (c eta)^m` on the base, in normalized form

        1 + L_b rho / (c c_B) - G' e^rho = 0,

    with `c = 1` for `rho_B` and `c = 1/(1 - e^{-T})` for `rho'_B`. Admissibility is positivity of
    `c c_B + L_b rho`. The `e^rho` term pins the additive constant.
    """

    def __init__(self, model, G: PushforwardDensity, variant: str = "rho_B", solver_options: dict = {}):
        super().__init__(solver_options)
        if variant not in BASE_VARIANTS:
            utils.logger.error(f"{__name__}: unknown variant `{variant}`")
            raise ValueError(f"unknown variant `{variant}`, expected one of {BASE_VARIANTS}")
        if np.any(G.values <= 0):
            utils.logger.error(f"{__name__}: G' must be positive")
            raise ValueError("G' must be positive")
        self.model = model
        self.variant = variant
        self.G = np.asarray(G.values, dtype=float)
        cls = model.class_data
        self.coefficient = 1.0 if variant == "rho_B" else 1.0 / -np.expm1(-cls.T)
        self.scale = self.coefficient * cls.c_B
        self.L = model.base.operator_matrix

    def initial_guess(self) -> np.ndarray:
        return -np.log(self.G)

    def is_admissible(self, x) -> bool:
        return bool(np.all(self.scale + self.L @ x > 0))

    def residual(self, x) -> np.ndarray:
        return 1.0 + (self.L @ x) / self.scale - self.G * np.exp(x)

    def jacobian(self, x):
        return self.L / self.scale - sp.diags(self.G * np.exp(x))

    def get_solution(self) -> EllipticSolution:
        self.check_is_solved()
        return EllipticSolution(name=self.variant, potential=self.x, residual_sup=self.solve_statistics["residual_sup"],
                               iterations=self.solve_statistics["iterations"], normalization="EquationPinned",
                               residual_history=list(self.residual_history),
                               extras={"coefficient": self.coefficient})


def solve_base_tke(model, G: PushforwardDensity, variant: str = "rho_B", solver_options: dict = {},
                   initial_guess: np.ndarray = None) -> EllipticSolution:
    """
    Base twisted Kähler-Einstein potential `rho_B` (`variant="rho_B"`) or `rho'_B` (`variant="rho_B_prime"`).
    Newton from `-log G'` unless `initial_guess` is given; damped to keep the base metric positive.
    """
    problem = BaseTwistedKahlerEinstein(model, G, variant=variant, solver_options=solver_options)
    problem.solve(initial_guess)
    solution = problem.get_solution()
    utils.logger.info(f"{__name__}: {variant} solved in {solution.iterations} Newton steps, residual {solution.residual_sup:.3e}")
    return solution


def bracket_width(model, rho_fibre: EllipticSolution, rho_base: EllipticSolution, scale: float = 1.0) -> float:
    """`lam * (sup - inf)(rho_fibre - f^* rho_base) * scale`: width of the C0 bracket for the potential."""
    diff = rho_fibre.potential - scale * rho_base.potential[None, :]
    return float(model.class_data.lam * (np.max(diff) - np.min(diff)))


@dataclass
class LimitPotentials:
    """
    Everything the flow is compared against: `rho_SPR`, `rho_SKE`, `G'` and the base potentials `rho_B`,
    `rho'_B` computed from `G'` of the configured `mode` (`"spr"` or `"ske"`).
    A potential whose solve failed is `None` and its failure message is kept in `failures`.
    """
    mode: str
    rho_spr: EllipticSolution = None
    rho_ske: EllipticSolution = None
    G: PushforwardDensity = None
    rho_b: EllipticSolution = None
    rho_b_prime: EllipticSolution = None
    failures: dict = field(default_factory=dict)

    def bracket_widths(self, model) -> dict:
        widths = {}
        if self.rho_spr is not None and self.rho_b is not None:
            widths["rho_B"] = bracket_width(model, self.rho_spr, self.rho_b)
        if self.rho_spr is not None and self.rho_b_prime is not None:
            widths["rho_B_prime"] = bracket_width(model, self.rho_spr, self.rho_b_prime,
                                                  scale=-np.expm1(-model.class_data.T))
        return widths

    def residuals(self) -> dict:
        return {name: solution.residual_sup for name, solution in
                [("rho_SPR", self.rho_spr), ("rho_SKE", self.rho_ske), ("rho_B", self.rho_b),
                 ("rho_B_prime", self.rho_b_prime)] if solution is not None}


def with_fibre_constant(solution: EllipticSolution, fibre_constant: np.ndarray) -> EllipticSolution:
    """`rho + f^* c` for a mean-zero fibre-wise potential, labelled `"FlowSelected"`."""
    return replace(solution, potential=solution.potential + fibre_constant[None, :], normalization="FlowSelected")


def solve_limit_potentials(model, omega=None, mode: str = "spr", solver_options: dict = {},
                           normalization: str = "flow") -> LimitPotentials:
    """
    Runs `solve_spr`, `solve_ske`, `pushforward_G` (reference chosen by `mode`) and both base twisted
    Kähler-Einstein solves. With the flow-selected normalization the fibre constant of `G'` is added to
    `rho_SPR` and `rho_SKE` as well. Solver errors are logged and recorded, not raised, so that the flow
    can run and the dependent checks are reported as skipped.
    """
    if mode not in ("spr", "ske"):
        utils.logger.error(f"{__name__}: unknown mode `{mode}`")
        raise ValueError(f"unknown mode `{mode}`, expected `spr` or `ske`")
    if normalization not in NORMALIZATIONS:
        utils.logger.error(f"{__name__}: unknown normalization `{normalization}`")
        raise ValueError(f"unknown normalization `{normalization}`, expected one of {NORMALIZATIONS}")
    cls = model.class_data
    if omega is None:
        omega = cohomology.reference_volume_form(model, cls)
    result = LimitPotentials(mode=mode)

    try:
        result.rho_spr = solve_spr(model, cls, omega)
    except KahlerFlowError as error:
        utils.logger.warning(f"{__name__}: rho_SPR failed: {error}")
        result.failures["rho_SPR"] = f"{type(error).__name__}: {error}"
    try:
        result.rho_ske = solve_ske(model, cls, solver_options)
    except KahlerFlowError as error:
        utils.logger.warning(f"{__name__}: rho_SKE failed: {error}")
        result.failures["rho_SKE"] = f"{type(error).__name__}: {error}"

    if mode == "ske" and result.rho_ske is None:
        result.failures["G"] = "the ske pushforward needs rho_SKE"
        return result
    try:
        result.G = pushforward_G(model, omega, reference=mode, rho_ske=result.rho_ske, normalization=normalization)
    except KahlerFlowError as error:
        utils.logger.warning(f"{__name__}: G' failed: {error}")
        result.failures["G"] = f"{type(error).__name__}: {error}"
        return result
    if result.G.normalization == "FlowSelected":
        if result.rho_spr is not None:
            result.rho_spr = with_fibre_constant(result.rho_spr, result.G.fibre_constant)
        if result.rho_ske is not None:
            result.rho_ske = with_fibre_constant(result.rho_ske, result.G.fibre_constant)

    for variant, attribute in (("rho_B", "rho_b"), ("rho_B_prime", "rho_b_prime")):
        try:
            setattr(result, attribute, solve_base_tke(model, result.G, variant=variant, solver_options=solver_options))
        except (KahlerFlowError, ValueError) as error:
            utils.logger.warning(f"{__name__}: {variant} failed: {error}")
            result.failures[variant] = f"{type(error).__name__}: {error}"
    return result
