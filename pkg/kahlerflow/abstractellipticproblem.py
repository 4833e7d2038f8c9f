import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
import numpy as np
import scipy.sparse.linalg as spla
import kahlerflow.utils as utils
from kahlerflow.utils.errors import NewtonDivergence, PositivityLoss


@dataclass
class EllipticSolution:
    """
    Solution of one of the elliptic problems.

    - `potential`: the solution field (fibre x base for fibre-wise problems, base grid otherwise)
    - `residual_sup`: sup-norm of the defining equation's residual at the returned potential
    - `iterations`: Newton steps (summed over fibres for fibre-wise problems; 0 for linear solves)
    - `normalization`: `"MeanZero"` (integral 0 against the fibre quadrature) or `"EquationPinned"`
    - `residual_history`: residual sup-norm per Newton iteration (worst fibre for fibre-wise problems)
    - `extras`: problem-specific scalars (Lagrange multipliers, constants)
    """
    name: str
    potential: np.ndarray
    residual_sup: float
    iterations: int
    normalization: str
    residual_history: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "residual_sup": float(self.residual_sup),
            "iterations": int(self.iterations),
            "normalization": self.normalization,
            "residual_history": [float(r) for r in self.residual_history],
            "extras": {k: float(v) if np.ndim(v) == 0 else np.asarray(v).tolist() for k, v in self.extras.items()},
        }


class AbstractNewtonProblem(ABC):
    """
    A nonlinear system `F(x) = 0` solved by Newton's method with backtracking.

    Subclasses provide the unknown vector layout through `initial_guess`, the residual `F`, its sparse
    Jacobian, and optionally an admissibility test (metric positivity) used to damp steps. A step is
    halved until the trial point is admissible and the residual sup-norm decreases; if no step down to
    `min_step` qualifies, the solve fails.

    Parameters
    ----------
    - `solver_options: dict`, optional

        - `"tolerance"`: residual sup-norm at which the iteration stops. Default `1e-12`.
        - `"max_iterations"`: Newton step limit. Default `50`.
        - `"min_step"`: smallest damping factor tried before giving up. Default `2**-30`.
    """
    # storing some defaults
    tolerance = 1e-12
    max_iterations = 50
    min_step = 2.0**-30

    def __init__(self, solver_options: dict = {}):
        if solver_options is None:
            solver_options = {}
        self.tolerance = solver_options.get("tolerance", AbstractNewtonProblem.tolerance)
        self.max_iterations = solver_options.get("max_iterations", AbstractNewtonProblem.max_iterations)
        self.min_step = solver_options.get("min_step", AbstractNewtonProblem.min_step)
        if self.tolerance <= 0:
            utils.logger.error(f"{__name__}: tolerance must be positive, got {self.tolerance}")
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")

        self.solve_statistics = {}
        self.residual_history = []
        self.x = None
        self._is_solved = False

    @abstractmethod
    def initial_guess(self) -> np.ndarray:
        pass

    @abstractmethod
    def residual(self, x: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def jacobian(self, x: np.ndarray):
        pass

    def is_admissible(self, x: np.ndarray) -> bool:
        return True

    @abstractmethod
    def get_solution(self) -> EllipticSolution:
        pass

    def solve(self, x0: np.ndarray = None) -> bool:
        """
        Runs the Newton iteration from `x0` (or `initial_guess()`).
        Returns `True` on convergence; raises `NewtonDivergence` (or `PositivityLoss`
        when damping cannot restore positivity) otherwise.
        """
        start_time = time.perf_counter()
        x = self.initial_guess() if x0 is None else np.array(x0, dtype=float)
        if not self.is_admissible(x):
            utils.logger.error(f"{__name__}: initial guess is not admissible")
            raise PositivityLoss("initial guess of the Newton iteration is not admissible")
        r = self.residual(x)
        norm = float(np.max(np.abs(r)))
        self.residual_history = [norm]

        iterations = 0
        while norm > self.tolerance:
            if iterations >= self.max_iterations:
                utils.logger.error(f"{__name__}: no convergence after {iterations} Newton steps, residual {norm:.3e}")
                raise NewtonDivergence(f"no convergence after {iterations} Newton steps, residual {norm:.3e}",
                                       self.residual_history)
            dx = spla.spsolve(self.jacobian(x).tocsc(), -r)
            if not np.all(np.isfinite(dx)):
                utils.logger.error(f"{__name__}: singular Newton system at iteration {iterations}")
                raise NewtonDivergence(f"singular Newton system at iteration {iterations}", self.residual_history)

            step = 1.0
            positivity_rejected = False
            while True:
                trial = x + step * dx
                if self.is_admissible(trial):
                    r_trial = self.residual(trial)
                    norm_trial = float(np.max(np.abs(r_trial)))
                    if np.isfinite(norm_trial) and norm_trial < norm:
                        break
                else:
                    positivity_rejected = True
                step *= 0.5
                if step < self.min_step:
                    if positivity_rejected:
                        utils.logger.error(f"{__name__}: damping could not keep the metric positive at iteration {iterations}")
                        raise PositivityLoss(f"damping could not keep the metric positive at iteration {iterations}")
                    if norm <= 1e2 * self.tolerance:
                        # stagnated at round-off level, close enough to the target
                        trial, r_trial, norm_trial = x, r, norm
                        break
                    utils.logger.error(f"{__name__}: line search failed at iteration {iterations}, residual {norm:.3e}")
                    raise NewtonDivergence(f"line search failed at iteration {iterations}, residual {norm:.3e}",
                                           self.residual_history)
            if trial is x:
                break
            x, r, norm = trial, r_trial, norm_trial
            iterations += 1
            self.residual_history.append(norm)
            utils.logger.debug(f"{__name__}: Newton iteration {iterations}, step {step:g}, residual {norm:.3e}")

        self.x = x
        self._is_solved = True
        self.solve_statistics["iterations"] = iterations
        self.solve_statistics["residual_sup"] = norm
        self.solve_statistics["solve_time"] = time.perf_counter() - start_time
        return True

    def is_solved(self) -> bool:
        return self._is_solved

    def check_is_solved(self):
        if not self.is_solved():
            utils.logger.error(f"{__name__}: Model not solved. Call solve() first.")
            raise Exception("Model not solved. Call solve() first.")
