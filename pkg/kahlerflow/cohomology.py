"""
Class-level bookkeeping of the flow: singular time, collapse factor `E(t)`, reference-form
coefficients, predicted volume and the normalized reference volume form `Omega`.

The round fibre metric `omega_rnd` has area 2pi and `Ric omega_rnd = 2 omega_rnd`, so that
`2 pi c_1(P^1) = [2 omega_rnd]`; the base area form (round or flat) also has area 2pi.
"""
from dataclasses import dataclass, asdict
import numpy as np
import kahlerflow.utils as utils
from kahlerflow.utils.errors import InvalidClass, OutOfRange, NormalizationFailure

AREA = 2.0 * np.pi


@dataclass(frozen=True)
class ClassData:
    """
    Closed-form data of the class evolution `[omega(t)] = e^{-t}[omega_0] - (1 - e^{-t}) 2 pi c_1(X)`.

    - `T`: singular time, `e^{-T} a0 = 2 (1 - e^{-T})`
    - `lam`: `e^{-T} / (1 - e^{-T})`, so that `lam * a0 = 2`
    - `fibre_limit_coeff`: always 0, the fibre class dies at `T`
    - `base_limit_coeff`: `c_B`, coefficient of `f^* eta = [omega(T)]` on the base area form
    """
    kind: str
    a0: float
    b0: float
    T: float
    lam: float
    base_limit_coeff: float
    fibre_limit_coeff: float = 0.0
    n: int = 2
    m: int = 1

    @property
    def c_B(self) -> float:
        return self.base_limit_coeff

    def e(self, t):
        return e_factor(t, self.T)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["lambda"] = data.pop("lam")
        return data


def class_data(spec) -> ClassData:
    """
    Singular time and limit class for a model spec (anything with `kind`, `a0`, `b0`).

    Raises `InvalidClass` when the limit base coefficient `c_B` is not positive.
    """
    a0 = float(spec.a0)
    b0 = float(spec.b0)
    if not a0 > 0:
        utils.logger.error(f"{__name__}: a0 must be positive, got {a0}")
        raise InvalidClass(f"a0 must be positive, got {a0}")
    T = float(np.log1p(a0 / 2.0))
    eT = np.exp(-T)
    lam = float(eT / -np.expm1(-T))
    if spec.kind == "ProductFlat":
        c_B = eT * b0
    elif spec.kind == "SphereBase":
        c_B = eT * b0 - 2.0 * (1.0 - eT)
    else:
        utils.logger.error(f"{__name__}: unknown model kind `{spec.kind}`")
        raise InvalidClass(f"unknown model kind `{spec.kind}`")
    if not c_B > 0:
        utils.logger.error(f"{__name__}: limit base coefficient c_B = {c_B} <= 0 for {spec.kind} (a0={a0}, b0={b0})")
        raise InvalidClass(f"limit base coefficient c_B = {c_B} <= 0 for {spec.kind} (a0={a0}, b0={b0})")
    return ClassData(kind=spec.kind, a0=a0, b0=b0, T=T, lam=lam, base_limit_coeff=float(c_B))


def e_factor(t, T: float):
    """
    Collapse factor `E(t) = (e^{-t} - e^{-T}) / (1 - e^{-T})` for `0 <= t <= T` (scalar or array).
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0.0) or np.any(t_arr > T) or not np.all(np.isfinite(t_arr)):
        utils.logger.error(f"{__name__}: time {t} outside [0, T={T}]")
        raise OutOfRange(f"time {t} outside [0, T={T}]")
    # e^{-t} - e^{-T} = e^{-T} (e^{T-t} - 1), accurate close to T
    value = np.exp(-T) * np.expm1(T - t_arr) / -np.expm1(-T)
    return float(value) if np.ndim(value) == 0 else value


def reference_coefficients(cls: ClassData, t) -> tuple:
    """
    Coefficients `(fibre, cross, base)` of `omega_REF(t) = E(t) omega_0 + (1 - E(t)) f^* eta` on the
    class generators. The cross coefficient is always 0.
    """
    E = e_factor(t, cls.T)
    return (E * cls.a0, 0.0, E * cls.b0 + (1.0 - E) * cls.c_B)


def class_coefficients(cls: ClassData, t) -> tuple:
    """Coefficients of `e^{-t}[omega_0] - (1 - e^{-t}) 2 pi c_1(X)`; equal to `reference_coefficients`."""
    decay = np.exp(-np.asarray(t, dtype=float))
    fibre = decay * cls.a0 - 2.0 * (1.0 - decay)
    if cls.kind == "SphereBase":
        base = decay * cls.b0 - 2.0 * (1.0 - decay)
    else:
        base = decay * cls.b0
    return (fibre, 0.0, base)


def predicted_volume(cls: ClassData, t) -> float:
    """`Vol(X, omega(t)) = int omega(t)^2 = 2 * fibre * base * AREA^2` from the class coefficients."""
    fibre, _, base = reference_coefficients(cls, t)
    return 2.0 * fibre * base * AREA**2


def limit_volume(cls: ClassData) -> float:
    """`int Omega_{omega_0, eta} = C(2,1) int omega_0 ^ f^* eta`, the limit of `Vol(t) / E(t)`."""
    return 2.0 * cls.a0 * cls.c_B * AREA**2


@dataclass
class ReferenceVolume:
    """
    Normalized reference volume form. The density is stored relative to the background volume
    `2 w_f w_b` of the chart, so `Omega = 2 exp(log_density) w_f w_b (chart volume)`.

    - `kappa`: normalization constant
    - `log_density`: `log kappa - lam * psi0` on the grid
    - `ric_residual`: sup-norm of `Ric Omega - (lam omega_0 - f^* eta / (1 - e^{-T}))` in normalized coefficients
    - `total_mass`: `int Omega`
    """
    kappa: float
    log_density: np.ndarray
    ric_residual: float
    total_mass: float

    @property
    def density(self) -> np.ndarray:
        return np.exp(self.log_density)


def ricci_form(model, log_density: np.ndarray) -> tuple:
    """Normalized coefficients of `-i ddbar log(volume)` for a volume `2 exp(log_density) w_f w_b`."""
    h_ff, h_fb, h_bb = model.hessian(log_density)
    return (model.fibre.background_ricci - h_ff, -h_fb, model.base.background_ricci - h_bb)


def reference_volume_form(model, cls: ClassData) -> ReferenceVolume:
    """
    Builds `Omega` with `Ric Omega = lam omega_0 - f^* eta / (1 - e^{-T})` and
    `int Omega = int Omega_{omega_0, eta}`.
    """
    weight = np.exp(-cls.lam * model.psi0)
    total = model.integrate(weight)
    if not np.isfinite(total) or total <= 0:
        utils.logger.error(f"{__name__}: reference volume normalization integral is {total}")
        raise NormalizationFailure(f"reference volume normalization integral is {total}")
    kappa = cls.a0 * cls.c_B / total
    log_density = np.log(kappa) - cls.lam * model.psi0

    ric = ricci_form(model, log_density)
    g0 = model.initial_metric
    target = (cls.lam * g0.ff,
              cls.lam * g0.fb,
              cls.lam * g0.bb - cls.c_B / -np.expm1(-cls.T))
    residual = max(float(np.max(np.abs(r - s))) for r, s in zip(ric, target))
    total_mass = 2.0 * AREA**2 * model.integrate(np.exp(log_density))

    utils.logger.debug(f"{__name__}: kappa = {kappa}, Ric identity residual = {residual:.3e}")
    return ReferenceVolume(kappa=float(kappa), log_density=log_density, ric_residual=residual,
                           total_mass=float(total_mass))
