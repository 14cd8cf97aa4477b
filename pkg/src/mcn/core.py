"""Dense linear maps and element-wise activations.

Everything is float64. Inputs may be a single vector of shape ``(cols,)``
or a batch of row vectors of shape ``(n, cols)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

EXP_CLAMP = 30.0

ACTIVATION_KINDS = ("identity", "relu", "exp", "exp-unclamped", "binary-step", "custom")


class ShapeError(ValueError):
    """Raised when array dimensions do not line up."""


@dataclass(frozen=True, eq=False)
class LinearMap:
    """Affine map ``x -> weights @ x + bias``.

    ``weights`` has shape ``(rows, cols)``; either dimension may be zero.
    """

    weights: np.ndarray
    bias: np.ndarray = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64, copy=True)
        if w.ndim != 2:
            raise ShapeError(f"weights must be 2-D, got shape {w.shape}")
        b = np.zeros(w.shape[0]) if self.bias is None else np.array(self.bias, dtype=np.float64, copy=True)
        if b.shape != (w.shape[0],):
            raise ShapeError(f"bias has length {b.size}, expected rows={w.shape[0]}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("LinearMap entries must be finite")
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def rows(self) -> int:
        return self.weights.shape[0]

    @property
    def cols(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "LinearMap":
        return cls(np.zeros((rows, cols)))

    @classmethod
    def identity(cls, n: int) -> "LinearMap":
        return cls(np.eye(n))

    def __call__(self, x):
        return affine_apply(self, x)

    def norm1(self) -> float:
        """Operator norm induced by the vector l1 norm (max column abs sum)."""
        if self.rows == 0 or self.cols == 0:
            return 0.0
        return float(np.abs(self.weights).sum(axis=0).max())

    def nnz(self) -> int:
        return int(np.count_nonzero(self.weights) + np.count_nonzero(self.bias))

    def __eq__(self, other):
        if not isinstance(other, LinearMap):
            return NotImplemented
        return (
            self.weights.shape == other.weights.shape
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.bias, other.bias)
        )

    __hash__ = None


def affine_apply(m: LinearMap, x) -> np.ndarray:
    """Apply ``m`` to a vector or to each row of a batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != m.cols:
        raise ShapeError(f"input has dimension {x.shape[-1]} but map expects cols={m.cols}")
    return x @ m.weights.T + m.bias


@dataclass(frozen=True)
class Activation:
    """Element-wise activation.

    ``kind="exp"`` clamps its argument to ``[-EXP_CLAMP, EXP_CLAMP]`` and so has
    a finite Lipschitz constant ``exp(EXP_CLAMP)``; ``"exp-unclamped"`` does
    not and reports ``inf``. ``binary-step`` is discontinuous and only meant
    for constructed networks.
    """

    kind: str = "relu"
    rho: float | None = field(default=None)
    fn: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in ACTIVATION_KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if self.kind == "custom":
            if self.rho is None or self.rho < 0:
                raise ValueError("custom activation needs a nonnegative Lipschitz constant rho")
            if not callable(self.fn):
                raise ValueError("custom activation needs a callable fn")

    @property
    def lipschitz(self) -> float:
        if self.kind in ("identity", "relu"):
            return 1.0
        if self.kind == "exp":
            return math.exp(EXP_CLAMP)
        if self.kind == "custom":
            return float(self.rho)
        return math.inf

    @property
    def differentiable(self) -> bool:
        return self.kind in ("identity", "relu", "exp")

    def __call__(self, x):
        return activation_eval(self, x)

    def to_json(self) -> str:
        if self.kind == "custom":
            raise ValueError("custom activations hold a Python callable and cannot be serialized")
        return self.kind

    @classmethod
    def from_json(cls, s: str) -> "Activation":
        return cls(s)


IDENTITY = Activation("identity")
RELU = Activation("relu")
EXP = Activation("exp")
BINARY_STEP = Activation("binary-step")


def activation_eval(act: Activation, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    kind = act.kind
    if kind == "identity":
        return x.copy()
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "exp":
        return np.exp(np.clip(x, -EXP_CLAMP, EXP_CLAMP))
    if kind == "exp-unclamped":
        with np.errstate(over="ignore"):
            return np.minimum(np.exp(x), np.finfo(np.float64).max)
    if kind == "binary-step":
        return (x >= 0).astype(np.float64)
    return np.asarray(act.fn(x), dtype=np.float64)
