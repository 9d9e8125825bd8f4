"""Bell scenarios, quantum and almost-quantum correlations, and symmetry checks."""

from .bell import Behavior, BellFunctional, Scenario, classical_bound, evaluate_functional
from .moments import MomentMatrix, gns_reconstruct, maximize_over_aqc, membership_test
from .quantum import QuantumModel, behavior_from_model, seesaw_maximize
from .symmetry import SymmetryAction, SymmetryGenerator, invariance_check, transform_model
from .theorems import GeneralizedModel

__version__ = "0.1.0"

__all__ = [
    "Behavior", "BellFunctional", "Scenario", "classical_bound", "evaluate_functional",
    "MomentMatrix", "gns_reconstruct", "maximize_over_aqc", "membership_test",
    "QuantumModel", "behavior_from_model", "seesaw_maximize",
    "SymmetryAction", "SymmetryGenerator", "invariance_check", "transform_model",
    "GeneralizedModel",
]
