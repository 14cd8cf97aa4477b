"""Certified networks: a constructed MCN, its target and its error bound."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..network import NetworkError, mcn_forward, network_from_dict, network_to_dict
from ..network import MCNNetwork

MAX_GRID_DIM = 3
MAX_GRID_POINTS = 10**9


# ---------------------------------------------------------------- targets


def phi_1d(n: int, i: int, x):
    """Univariate orthonormal basis on [-1, 1]: 1/sqrt2, cos(n pi x), sin((n-1/2) pi x)."""
    x = np.asarray(x, dtype=np.float64)
    if n == 0:
        if i != 0:
            raise ValueError("the n=0 basis function has no sine variant")
        return np.full_like(x, 1.0 / math.sqrt(2.0))
    if i == 0:
        return np.cos(n * math.pi * x)
    return np.sin((n - 0.5) * math.pi * x)


def phi(n, i, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    out = np.ones(X.shape[0])
    for j, (nj, ij) in enumerate(zip(n, i)):
        out = out * phi_1d(int(nj), int(ij), X[:, j])
    return out


def _eval_target(name: str, params: dict, X: np.ndarray) -> np.ndarray:
    x = X[:, 0]
    if name == "zero":
        return np.zeros(X.shape[0])
    if name == "square":
        return x * x
    if name == "product":
        return np.prod(X, axis=1)
    if name == "polynomial":
        out = np.zeros_like(x)
        for j, a in enumerate(params["coeffs"], start=1):
            if a:
                out = out + a * x**j
        return out + params.get("constant", 0.0)
    if name == "floor":
        return np.floor(x)
    if name == "floor-odd":
        return np.where(x >= 0, np.floor(x), -np.floor(-x))
    if name == "cos":
        return np.cos(params["n"] * math.pi * x)
    if name == "sin":
        return np.sin((params["n"] - 0.5) * math.pi * x)
    if name == "phi":
        return phi(params["n"], params["i"], X)
    if name == "fourier-series":
        out = np.zeros(X.shape[0])
        for n, i, c in params["terms"]:
            out = out + c * phi(n, i, X)
        return out
    raise ValueError(f"unknown target {name!r}")


@dataclass
class Target:
    """Named target function; ``fn`` overrides evaluation for ad hoc callables."""

    name: str
    params: dict = field(default_factory=dict)
    fn: object = field(default=None, compare=False, repr=False)

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.fn is not None:
            return np.asarray(self.fn(X), dtype=np.float64).reshape(-1)
        return _eval_target(self.name, self.params, X)

    def to_dict(self) -> dict:
        if self.fn is not None and self.name == "custom":
            raise ValueError("a custom target holds a Python callable and cannot be serialized")
        return {"name": self.name, "params": self.params}


# ---------------------------------------------------------------- certified net


@dataclass
class CertifiedNet:
    net: MCNNetwork
    target: Target
    domain: list
    bound: float
    bound_formula: str
    stage_params: dict = field(default_factory=dict)
    deviations: list = field(default_factory=list)
    components: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.bound >= 0:
            raise ValueError(f"bound must be nonnegative, got {self.bound}")
        self.domain = [(float(a), float(b)) for a, b in self.domain]
        if len(self.domain) != self.net.input_dim:
            raise ValueError("domain dimension does not match the network input")

    @property
    def dim(self) -> int:
        return len(self.domain)

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, self.dim)
        return mcn_forward(self.net, X).output[:, 0]

    def to_dict(self) -> dict:
        doc = network_to_dict(self.net)
        doc["certificate"] = {
            "target": self.target.to_dict(),
            "domain": [list(b) for b in self.domain],
            "bound": self.bound,
            "bound_formula": self.bound_formula,
            "stage_params": self.stage_params,
            "deviations": list(self.deviations),
            "components": self.components,
            "stats": self.stats,
        }
        return doc

    def serialize(self) -> bytes:
        return json.dumps(self.to_dict(), indent=1).encode("utf-8")

    @classmethod
    def from_dict(cls, doc) -> "CertifiedNet":
        net = network_from_dict(doc)
        cert = doc.get("certificate")
        if not isinstance(cert, dict):
            raise NetworkError("certificate", "missing or not an object")
        for key in ("target", "domain", "bound", "bound_formula"):
            if key not in cert:
                raise NetworkError(f"certificate.{key}", "missing field")
        t = cert["target"]
        if not isinstance(t, dict) or "name" not in t:
            raise NetworkError("certificate.target.name", "missing field")
        return cls(
            net=net,
            target=Target(t["name"], t.get("params", {})),
            domain=cert["domain"],
            bound=float(cert["bound"]),
            bound_formula=cert["bound_formula"],
            stage_params=cert.get("stage_params", {}),
            deviations=cert.get("deviations", []),
            components=cert.get("components", {}),
            stats=cert.get("stats", {}),
        )

    @classmethod
    def deserialize(cls, data) -> "CertifiedNet":
        try:
            doc = json.loads(data)
        except json.JSONDecodeError as e:
            raise NetworkError("$", f"invalid JSON: {e}") from None
        return cls.from_dict(doc)


# ---------------------------------------------------------------- sup error


@dataclass
class SupError:
    value: float
    argmax: np.ndarray
    points: int


def grid_axes(domain, per_axis: int) -> list[np.ndarray]:
    return [np.linspace(lo, hi, per_axis) for lo, hi in domain]


def sup_error(cnet: CertifiedNet, grid_per_axis: int, target=None, chunk: int = 1 << 16) -> SupError:
    """Max of |net - target| over a tensor grid of the certificate's domain.

    The grid is scanned in chunks; the reported argmax is the first maximizer
    in lexicographic grid order, so the result does not depend on ``chunk``.
    """
    d = cnet.dim
    if d > MAX_GRID_DIM:
        raise ValueError(f"grid scans are limited to d <= {MAX_GRID_DIM}, got d={d}")
    if grid_per_axis < 1:
        raise ValueError("grid_per_axis must be positive")
    total = grid_per_axis**d
    if total > MAX_GRID_POINTS:
        raise ValueError(f"grid of {total} points exceeds the limit {MAX_GRID_POINTS}")
    target = cnet.target if target is None else target
    axes = grid_axes(cnet.domain, grid_per_axis)
    shape = (grid_per_axis,) * d
    best, best_idx = -1.0, 0
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        idx = np.unravel_index(flat, shape)
        X = np.stack([axes[j][idx[j]] for j in range(d)], axis=1)
        err = np.abs(cnet(X) - target(X))
        err = np.where(np.isnan(err), np.inf, err)
        k = int(np.argmax(err))
        if err[k] > best:
            best, best_idx = float(err[k]), int(flat[k])
    idx = np.unravel_index(best_idx, shape)
    point = np.array([axes[j][idx[j]] for j in range(d)])
    return SupError(best, point, total)
