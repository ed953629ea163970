"""Tsetlin Machine personalized federated learning simulator."""
from .dataset import Booleanizer, load_dataset
from .federation import Federation, FederationConfig, run_federation
from .partition import ExperimentSpec, build_experiment_plan
from .tm import TMModel, TsetlinMachineClassifier

__all__ = [
    "Booleanizer",
    "ExperimentSpec",
    "Federation",
    "FederationConfig",
    "TMModel",
    "TsetlinMachineClassifier",
    "build_experiment_plan",
    "load_dataset",
    "run_federation",
]
__version__ = "0.1.0"
