"""Ensembles of variational quantum neural networks on a statevector simulator."""
from .data import Dataset, load_builtin, load_csv, prepare
from .ensemble import EnsembleConfig, EnsembleModel, combine, fit, jury_probability
from .errors import (ConfigurationError, ContractViolation, IngestionError, TrainingError,
                     UnsupportedBackendError)
from .optim import TrainConfig, train
from .qnn import Backend, QnnConfig, QnnModel
from .simcore import Gate, GateKind, NoiseModel, StateVector

__version__ = "0.1.0"

__all__ = [
    "Dataset", "load_builtin", "load_csv", "prepare", "EnsembleConfig", "EnsembleModel", "combine",
    "fit", "jury_probability", "ConfigurationError", "ContractViolation", "IngestionError",
    "TrainingError", "UnsupportedBackendError", "TrainConfig", "train", "Backend", "QnnConfig",
    "QnnModel", "Gate", "GateKind", "NoiseModel", "StateVector",
]
