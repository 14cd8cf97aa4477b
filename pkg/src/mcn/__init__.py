"""Maximum-and-concatenation networks: layers, certified constructions, bounds and training."""

__version__ = "0.1.0"

from .core import BINARY_STEP, EXP, IDENTITY, RELU, Activation, LinearMap, ShapeError
from .network import (
    MCNLayer,
    MCNNetwork,
    NetworkError,
    deserialize,
    max_pattern,
    mcn_forward,
    random_network,
    serialize,
    zero_network,
)

__all__ = [
    "Activation",
    "BINARY_STEP",
    "EXP",
    "IDENTITY",
    "LinearMap",
    "MCNLayer",
    "MCNNetwork",
    "NetworkError",
    "RELU",
    "ShapeError",
    "deserialize",
    "max_pattern",
    "mcn_forward",
    "random_network",
    "serialize",
    "zero_network",
]
