"""Adaptive per-sample epsilon scheduling for adversarial training (ADES)."""
from .autodiff import SeededRng, Tensor
from .errors import ConfigError, ContractError, DatasetError, DimensionError

__version__ = "0.1.0"

__all__ = ["SeededRng", "Tensor", "ConfigError", "ContractError", "DatasetError", "DimensionError"]
