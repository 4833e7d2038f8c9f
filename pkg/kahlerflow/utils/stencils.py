import functools
import numpy as np
import scipy.sparse as sp
import scipy.linalg
import kahlerflow.utils as utils

# Central difference coefficients at offsets -p..p, divided by h (first) or h^2 (second).
_D1 = {
    2: np.array([-1.0, 0.0, 1.0]) / 2.0,
    4: np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0,
}
_D2 = {
    2: np.array([1.0, -2.0, 1.0]),
    4: np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0,
}


class Axis:
    """
    One invariant direction of a model, discretized on a uniform grid.

    Fields living on the 2D grid are numpy arrays whose axis 0 is the fibre direction and
    axis 1 is the base direction; every method takes the array axis it should act along.
    Ghost nodes are produced with `np.pad`, so that every output node performs exactly the
    same floating point operations as its neighbours.

    Subclasses set:

    - `nodes`: grid coordinates,
    - `weight`: background weight `w` of the chart coordinate (the normalized metric is `g / w`),
    - `gradient_scale`: `r = sigma / sqrt(w)` converting grid derivatives into normalized gradients,
    - `background_ricci`: normalized Ricci coefficient of the background weight,
    - `pad_mode`: `"reflect"` (even extension through the poles) or `"wrap"` (periodic).
    """

    kind = None
    pad_mode = None
    background_ricci = 0.0

    def __init__(self, n: int, order: int = 2):
        if order not in _D1:
            utils.logger.error(f"{__name__}: stencil order must be 2 or 4, got {order}")
            raise ValueError(f"stencil order must be 2 or 4, got {order}")
        self.n = int(n)
        self.order = int(order)
        self.p = self.order // 2

    # --- stencils --------------------------------------------------------------

    def _pad(self, f: np.ndarray, axis: int) -> np.ndarray:
        width = [(0, 0)] * f.ndim
        width[axis] = (self.p, self.p)
        return np.pad(f, width, mode=self.pad_mode)

    def _combine(self, f: np.ndarray, coeffs: np.ndarray, axis: int) -> np.ndarray:
        g = self._pad(np.asarray(f, dtype=float), axis)
        out = np.zeros(np.shape(f), dtype=float)
        for k, c in enumerate(coeffs):
            if c == 0.0:
                continue
            index = [slice(None)] * g.ndim
            index[axis] = slice(k, k + self.n)
            out += c * g[tuple(index)]
        return out

    def d1(self, f: np.ndarray, axis: int = 0) -> np.ndarray:
        return self._combine(f, _D1[self.order], axis) / self.h

    def d2(self, f: np.ndarray, axis: int = 0) -> np.ndarray:
        return self._combine(f, _D2[self.order], axis) / self.h**2

    def _along(self, values: np.ndarray, ndim: int, axis: int) -> np.ndarray:
        shape = [1] * ndim
        shape[axis] = self.n
        return np.reshape(values, shape)

    def operator(self, f: np.ndarray, axis: int = 0) -> np.ndarray:
        """Normalized invariant second-derivative operator `L` (the `(i,i)` entry of the normalized Hessian)."""
        raise NotImplementedError

    def gradient(self, f: np.ndarray, axis: int = 0) -> np.ndarray:
        """Normalized gradient component `r * df`."""
        return self.gradient_scale * self.d1(f, axis)

    # --- matrices and quadrature ----------------------------------------------

    @functools.cached_property
    def operator_matrix(self) -> sp.csr_matrix:
        # L @ I column by column; keeps the matrix identical to the array stencil
        return sp.csr_matrix(self.operator(np.eye(self.n), axis=0))

    @functools.cached_property
    def d1_matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.d1(np.eye(self.n), axis=0))

    @functools.cached_property
    def operator_norm(self) -> float:
        """Max absolute row sum of `L`."""
        return float(abs(self.operator_matrix).sum(axis=1).max())

    @functools.cached_property
    def d1_norm(self) -> float:
        return float(abs(self.d1_matrix).sum(axis=1).max())

    @functools.cached_property
    def quadrature(self) -> np.ndarray:
        """
        Weights `q` with `sum(q) = 1` and `q @ L = 0`. They integrate against the background area
        form normalized to 1, and make every discrete `i ddbar`-exact form integrate to zero.
        """
        raise NotImplementedError

    def integrate(self, f: np.ndarray, axis: int = 0) -> np.ndarray:
        # row-by-row reduction: equal columns give bitwise equal integrals
        f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
        return np.sum(self._along(self.quadrature, f.ndim, 0) * f, axis=0)

    # --- lengths ------------------------------------------------------------------

    def meridian_length(self, coeff: np.ndarray, axis: int = 0) -> np.ndarray:
        raise NotImplementedError

    def circumference(self, coeff: np.ndarray, axis: int = 0) -> np.ndarray:
        """Length of the invariant circle through each node for the normalized diagonal coefficient `coeff`."""
        w = self._along(np.broadcast_to(self.weight, (self.n,)), np.ndim(coeff), axis)
        return 2.0 * np.pi * np.sqrt(2.0 * np.clip(coeff, 0.0, None) * w)

    def diameter_surrogate(self, coeff: np.ndarray, axis: int = 0) -> np.ndarray:
        """
        max(meridian length, half of the largest invariant circle). For an invariant metric this lies
        within a factor 2 of the diameter of the one-dimensional factor and has its exact scaling.
        """
        half_circle = 0.5 * np.max(self.circumference(coeff, axis), axis=axis)
        return np.maximum(self.meridian_length(coeff, axis), half_circle)


class LatitudeAxis(Axis):
    """
    Latitude `theta = 2 arctan(exp(rho / 2))` on P^1, nodes `theta_i = i pi / (n-1)` with both poles on the grid.

    With `d/drho = (sin(theta)/2) d/dtheta` and background weight `w = sin(theta)^2 / 4` (the round metric of
    area 2pi), the normalized operator is `L f = f'' + cot(theta) f'`, and `2 f''` at the poles.
    """

    kind = "latitude"
    pad_mode = "reflect"
    background_ricci = 2.0
    gradient_scale = 1.0

    def __init__(self, n: int, order: int = 2):
        super().__init__(n, order)
        self.nodes = np.linspace(0.0, np.pi, self.n)
        self.h = np.pi / (self.n - 1)
        self.weight = np.sin(self.nodes) ** 2 / 4.0
        self.cot = np.zeros(self.n)
        self.cot[1:-1] = np.cos(self.nodes[1:-1]) / np.sin(self.nodes[1:-1])
        self.pole = np.zeros(self.n, dtype=bool)
        self.pole[[0, -1]] = True

    def operator(self, f: np.ndarray, axis: int = 0) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        second = self.d2(f, axis)
        out = second + self._along(self.cot, f.ndim, axis) * self.d1(f, axis)
        return np.where(self._along(self.pole, f.ndim, axis), 2.0 * second, out)

    @functools.cached_property
    def quadrature(self) -> np.ndarray:
        kernel = scipy.linalg.null_space(self.operator_matrix.toarray().T)
        if kernel.shape[1] != 1:
            utils.logger.error(f"{__name__}: latitude operator has a {kernel.shape[1]}-dimensional cokernel")
            raise ValueError(f"latitude operator has a {kernel.shape[1]}-dimensional cokernel")
        q = kernel[:, 0]
        q = q / q.sum()
        if np.any(q < 0):
            utils.logger.warning(f"{__name__}: {int(np.sum(q < 0))} negative quadrature weights (n={self.n}, order={self.order})")
        return q

    def meridian_length(self, coeff: np.ndarray, axis: int = 0) -> np.ndarray:
        return np.trapezoid(np.sqrt(np.clip(coeff, 0.0, None) / 2.0), self.nodes, axis=axis)


class PeriodicAxis(Axis):
    """
    Flat circle factor: the chart coordinate `y = rho_b` on `[0, 2pi)` with background weight `1/(2pi)`,
    so the base area is 2pi as for the round sphere. `L f = 2pi f''`.
    """

    kind = "periodic"
    pad_mode = "wrap"
    background_ricci = 0.0

    def __init__(self, n: int, order: int = 2):
        super().__init__(n, order)
        self.nodes = 2.0 * np.pi * np.arange(self.n) / self.n
        self.h = 2.0 * np.pi / self.n
        self.weight = 1.0 / (2.0 * np.pi)
        self.gradient_scale = np.sqrt(2.0 * np.pi)

    def operator(self, f: np.ndarray, axis: int = 0) -> np.ndarray:
        return 2.0 * np.pi * self.d2(f, axis)

    @functools.cached_property
    def quadrature(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)

    def meridian_length(self, coeff: np.ndarray, axis: int = 0) -> np.ndarray:
        # half of the closed loop
        element = np.sqrt(np.clip(coeff, 0.0, None) * self.weight / 2.0)
        return 0.5 * self.h * np.sum(element, axis=axis)


def make_axis(kind: str, n: int, order: int = 2) -> Axis:
    if kind == "latitude":
        return LatitudeAxis(n, order)
    if kind == "periodic":
        return PeriodicAxis(n, order)
    utils.logger.error(f"{__name__}: unknown axis kind `{kind}`")
    raise ValueError(f"unknown axis kind `{kind}`")
