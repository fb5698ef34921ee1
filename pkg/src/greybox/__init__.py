"""Grey-box correction toolkit for linear time-invariant models.

Learns a linear uncertainty model from input-output data with a
certified stability guarantee for the extended model, designs the
robust filter that produces the uncertainty/state estimates the learner
consumes, and numerically verifies every certificate involved.
"""

from ._kernels import KERNEL_BACKEND
from .dataset import DataMatrix, Sample, build_data_matrix, cost_J
from .errors import (ConfigError, DimensionMismatch, GreyboxError,
                     SimulationError, SolverFailure, SolverUnavailable)
from .estimator import FilterDesign, FilterState, design_filter, step_filter
from .learner import (LearnReport, learn_constraint_modified,
                      learn_cost_modified, learn_least_squares)
from .model import (AugmentedSystem, LtiSystem, TrueUncertainty,
                    UncertaintyModel, augment, extended_model)
from .sdp import BlockLmi, SdpProblem, SdpSolution
from .signals import SignalSpec
from .sim import Trajectory, cosimulate, evaluate_rmse, extract_dataset, simulate_plant

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "AugmentedSystem", "LtiSystem", "TrueUncertainty", "UncertaintyModel",
    "augment", "extended_model",
    "DataMatrix", "Sample", "build_data_matrix", "cost_J",
    "SdpProblem", "SdpSolution", "BlockLmi",
    "LearnReport", "learn_cost_modified", "learn_constraint_modified",
    "learn_least_squares",
    "FilterDesign", "FilterState", "design_filter", "step_filter",
    "SignalSpec", "Trajectory", "simulate_plant", "cosimulate",
    "extract_dataset", "evaluate_rmse",
    "GreyboxError", "DimensionMismatch", "SolverFailure", "SolverUnavailable",
    "SimulationError", "ConfigError",
]
