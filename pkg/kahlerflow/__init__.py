from .fibrationmodel import GridSpec
from .fibrationmodel import InitialPerturbation
from .fibrationmodel import ModelSpec
from .fibrationmodel import MetricField
from .fibrationmodel import Model
from .fibrationmodel import build_model
from .cohomology import ClassData
from .cohomology import class_data
from .cohomology import e_factor
from .cohomology import predicted_volume
from .cohomology import reference_volume_form
from .abstractellipticproblem import EllipticSolution
from .ellipticsolvers import solve_spr
from .ellipticsolvers import solve_ske
from .ellipticsolvers import pushforward_G
from .ellipticsolvers import solve_base_tke
from .ellipticsolvers import solve_limit_potentials
from .ellipticsolvers import LimitPotentials
from .cmaflow import StepSchedule
from .cmaflow import SnapshotSeries
from .cmaflow import CMAFlow
from .cmaflow import run
from .cmaflow import exact_spatially_constant_flow
from .estimators import ObservableSeries
from .estimators import collect_series
from .verdicts import REGISTRY
from .verdicts import VerdictTolerances
from .verdicts import TheoremVerdict
from .verdicts import fit_power_law
from .verdicts import run_registry
from .utils import errors as errors

__all__ = [
    "GridSpec",
    "InitialPerturbation",
    "ModelSpec",
    "MetricField",
    "Model",
    "build_model",
    "ClassData",
    "class_data",
    "e_factor",
    "predicted_volume",
    "reference_volume_form",
    "EllipticSolution",
    "solve_spr",
    "solve_ske",
    "pushforward_G",
    "solve_base_tke",
    "solve_limit_potentials",
    "LimitPotentials",
    "StepSchedule",
    "SnapshotSeries",
    "CMAFlow",
    "run",
    "exact_spatially_constant_flow",
    "ObservableSeries",
    "collect_series",
    "REGISTRY",
    "VerdictTolerances",
    "TheoremVerdict",
    "fit_power_law",
    "run_registry",
    "errors",
]
