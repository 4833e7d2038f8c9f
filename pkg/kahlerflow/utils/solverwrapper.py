import highspy
import numpy as np
import kahlerflow.utils as utils


class SolverWrapper:
    """Small LP modelling layer over HiGHS (``highspy``).

    kahlerflow only needs continuous linear programs: the upper-quantile regressions that
    turn an empirical envelope into a "≤ C·E(t)" statement. This wrapper keeps the
    model-building calls short at those call sites and maps solver status onto plain strings.

    Parameters
    ----------
    **kwargs :
        Recognised keys (all optional):
        - ``threads`` (int): thread limit (default ``1``; runs inside sweep workers).
        - ``time_limit`` (float): solver time limit in seconds (default ``inf``).
        - ``presolve`` (str): HiGHS presolve strategy (default ``"choose"``).
        - ``log_to_console`` (bool): HiGHS console output (default ``False``).
        - ``tolerance`` (float): primal/dual feasibility tolerance (default ``1e-9``, must be >= 1e-10).

    Raises
    ------
    ValueError
        If the tolerance is below 1e-10.
    """
    # storing some defaults
    threads = 1
    time_limit = float("inf")
    presolve = "choose"
    log_to_console = False
    tolerance = 1e-9
    optimal_status = "kOptimal"

    def __init__(self, **kwargs):

        self.time_limit = kwargs.get("time_limit", SolverWrapper.time_limit)
        self.tolerance = kwargs.get("tolerance", SolverWrapper.tolerance)
        if self.tolerance < 1e-10:
            utils.logger.error(f"{__name__}: The tolerance value must be >=1e-10.")
            raise ValueError("The tolerance value must be >=1e-10.")

        self.solver = HighsCustom()
        self.solver.setOptionValue("threads", kwargs.get("threads", SolverWrapper.threads))
        self.solver.setOptionValue("time_limit", self.time_limit)
        self.solver.setOptionValue("presolve", kwargs.get("presolve", SolverWrapper.presolve))
        self.solver.setOptionValue("log_to_console", bool(kwargs.get("log_to_console", SolverWrapper.log_to_console)))
        self.solver.setOptionValue("output_flag", bool(kwargs.get("log_to_console", SolverWrapper.log_to_console)))
        self.solver.setOptionValue("primal_feasibility_tolerance", self.tolerance)
        self.solver.setOptionValue("dual_feasibility_tolerance", self.tolerance)

        utils.logger.debug(f"{__name__}: solver_options (kwargs) = {kwargs}")

    def add_variables(self, indexes, name_prefix: str, lb=0.0, ub=float("inf")):
        """Create continuous variables, one per index, named ``name_prefix`` + index.

        ``lb`` and ``ub`` are scalars applied to every variable; use ``-inf``/``inf`` for free variables.
        Returns a mapping index -> variable.
        """
        indexes = list(indexes)
        lbs = [float(lb)] * len(indexes)
        ubs = [float(ub)] * len(indexes)
        return self.solver.addVariables(
            indexes,
            lb=lbs,
            ub=ubs,
            type=highspy.HighsVarType.kContinuous,
            name_prefix=name_prefix)

    def add_constraint(self, expr, name=""):
        self.solver.addConstr(expr, name=name)

    def quicksum(self, expr):
        return self.solver.qsum(expr)

    def set_objective(self, expr, sense="minimize"):
        if sense not in ["minimize", "min", "maximize", "max"]:
            utils.logger.error(f"{__name__}: The objective sense must be either `minimize` or `maximize`.")
            raise ValueError(f"Objective sense {sense} is not supported.")
        self.solver.set_objective_without_solving(expr, sense=sense)

    def optimize(self):
        self.solver.optimize()

    def get_model_status(self) -> str:
        return self.solver.getModelStatus().name

    def is_optimal(self) -> bool:
        return self.get_model_status() == SolverWrapper.optimal_status

    def get_objective_value(self) -> float:
        return self.solver.getObjectiveValue()

    def get_values(self, variables) -> dict:
        """Return ``{index: value}`` for a mapping index -> variable produced by `add_variables`."""
        all_vals = self.solver.allVariableValues()
        return {key: all_vals[var.index] for key, var in variables.items()}


class HighsCustom(highspy.Highs):
    """``highspy.Highs`` with an objective setter that does not trigger a solve."""

    def set_objective_without_solving(self, obj, sense: str = "minimize") -> None:
        if obj is not None:
            expr = obj
            if expr.bounds is not None:
                raise Exception("Objective cannot be an inequality")

            super().changeColsCost(
                self.numVariables,
                np.arange(self.numVariables, dtype=np.int32),
                np.full(self.numVariables, 0, dtype=np.float64),
            )
            idxs, vals = expr.unique_elements()
            super().changeColsCost(len(idxs), idxs, vals)
            super().changeObjectiveOffset(expr.constant or 0.0)

        if sense in ["minimize", "min"]:
            super().changeObjectiveSense(highspy.ObjSense.kMinimize)
        else:
            super().changeObjectiveSense(highspy.ObjSense.kMaximize)


def quantile_regression(x: np.ndarray, y: np.ndarray, quantile: float = 0.9, solver_options: dict = {}) -> tuple:
    """
    Linear quantile regression `y ≈ intercept + x @ slope` as the linear program

    min  sum_i quantile * above_i + (1 - quantile) * below_i
    s.t. intercept + x_i @ slope + above_i - below_i = y_i,  above, below >= 0.

    A quantile close to 1 puts the fit on the upper envelope of the points. `x` holds one regressor
    (shape `(n,)`) or several (shape `(n, k)`).
    Returns `(slope, intercept)`, with `slope` a float for one regressor and an array of `k` otherwise.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    single = x.ndim == 1
    X = x.reshape(len(y), -1)
    if not 0.0 < quantile < 1.0:
        utils.logger.error(f"{__name__}: quantile must be in (0, 1), got {quantile}")
        raise ValueError(f"quantile must be in (0, 1), got {quantile}")

    lp = SolverWrapper(**solver_options)
    k = X.shape[1]
    line = lp.add_variables(["intercept"] + list(range(k)), name_prefix="line_", lb=-highspy.kHighsInf, ub=highspy.kHighsInf)
    above = lp.add_variables(range(len(y)), name_prefix="above_")
    below = lp.add_variables(range(len(y)), name_prefix="below_")
    for i in range(len(y)):
        lp.add_constraint(
            line["intercept"] + lp.quicksum(float(X[i, j]) * line[j] for j in range(k)) + above[i] - below[i] == float(y[i]),
            name=f"point_{i}")
    lp.set_objective(
        lp.quicksum(quantile * above[i] + (1.0 - quantile) * below[i] for i in range(len(y))),
        sense="minimize")
    lp.optimize()

    if not lp.is_optimal():
        utils.logger.error(f"{__name__}: quantile regression LP ended with status {lp.get_model_status()}")
        raise RuntimeError(f"quantile regression LP ended with status {lp.get_model_status()}")
    values = lp.get_values(line)
    slope = np.array([values[j] for j in range(k)])
    return (float(slope[0]) if single else slope), float(values["intercept"])
