"""Lipschitz constants, covering and generalization bounds, stationarity checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import LinearMap
from .network import MCNLayer, MCNNetwork, mcn_forward


@dataclass
class LayerKappa:
    kappa: float
    theta_norm: float
    rho: float
    norms: dict
    kappa_blockwise: float

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class LipschitzReport:
    layers: list
    product: float

    @property
    def kappas(self) -> list[float]:
        return [r.kappa for r in self.layers]

    def to_dict(self):
        return {"layers": [r.to_dict() for r in self.layers], "product": self.product}


def _stack(*maps: LinearMap) -> np.ndarray:
    cols = maps[0].cols
    return np.vstack([m.weights for m in maps]) if maps else np.zeros((0, cols))


def _norm1(w: np.ndarray) -> float:
    return float(np.abs(w).sum(axis=0).max()) if w.size else 0.0


def lipschitz_kappa(layer: MCNLayer, layer_index: int | None = None) -> LayerKappa:
    """kappa = 1 + max(rho, 2) * max(||Atilde||_1, ||A||_1, ||[L; W]||_1).

    Norms are induced l1 norms (max column absolute sum). ``kappa_blockwise``
    instead groups the maps by the state block they read (x_0, x_khat, x_k
    with k = ``layer_index``), which stays a valid constant when blocks
    coincide; it needs the layer position and is nan without it.
    """
    rho = layer.sigma.lipschitz
    norms = {
        "Atilde": layer.Atilde.norm1(),
        "A": layer.A.norm1(),
        "LW": _norm1(_stack(layer.L, layer.W)),
    }
    theta = max(norms.values())
    if math.isinf(rho):
        return LayerKappa(math.inf, theta, rho, norms, math.inf)
    factor = max(rho, 2.0)
    kappa = 1.0 + factor * theta
    blockwise = math.nan
    if layer_index is not None:
        readers: dict[int, list[np.ndarray]] = {}
        readers.setdefault(0, []).append(layer.Atilde.weights)
        readers.setdefault(layer.skip_index, []).append(layer.A.weights)
        readers.setdefault(layer_index, []).append(_stack(layer.L, layer.W))
        blockwise = 1.0 + factor * max(_norm1(np.vstack(ws)) for ws in readers.values())
    return LayerKappa(kappa, theta, rho, norms, blockwise)


def lipschitz_report(net: MCNNetwork) -> LipschitzReport:
    rows = [lipschitz_kappa(layer, k) for k, layer in enumerate(net.layers)]
    return LipschitzReport(rows, float(math.prod(r.kappa for r in rows)))


def block_map(net: MCNNetwork, k: int, y: np.ndarray) -> np.ndarray:
    """G_k(y) = [y; x_{k+1}] where y stacks x_0..x_k (rows are samples).

    The blocks of ``y`` are treated as free variables, so ``G_k`` can be
    probed away from states a forward pass would produce.
    """
    dims = net.dims
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    offsets = np.cumsum([0] + dims[: k + 1])
    if y.shape[1] != offsets[-1]:
        raise ValueError(f"y must have {offsets[-1]} columns for block {k}")
    xs = [y[:, offsets[j] : offsets[j + 1]] for j in range(k + 1)]
    layer = net.layers[k]
    wb = layer.W(xs[k])
    ab = layer.sigma(layer.A(xs[layer.skip_index]))
    new = np.concatenate([layer.L(xs[k]), net.gamma(layer.Atilde(xs[0])) + np.maximum(wb, ab)], axis=1)
    return np.concatenate([y, new], axis=1)


def block_ratios(net: MCNNetwork, k: int, pairs: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """||G_k(y) - G_k(y')||_1 / ||y - y'||_1 for random pairs."""
    width = sum(net.dims[: k + 1])
    y = rng.standard_normal((pairs, width)) * scale
    y2 = y + rng.standard_normal((pairs, width)) * scale * rng.uniform(1e-3, 1.0, (pairs, 1))
    num = np.abs(block_map(net, k, y) - block_map(net, k, y2)).sum(axis=1)
    return num / np.abs(y - y2).sum(axis=1)


def _positive(name, v):
    if not v > 0:
        raise ValueError(f"{name} must be positive, got {v}")


def covering_bound(s, l, w, rho, input_norm, kappas, delta) -> float:
    """s*l*ln(w+1) + s*ln(rho*l*||x||*prod(kappa)/delta), constants taken as 1."""
    if not delta > 0:
        raise ValueError(f"covering radius delta must be positive, got {delta}")
    for name, v in (("s", s), ("l", l), ("rho", rho), ("input_norm", input_norm)):
        _positive(name, v)
    if w < 0:
        raise ValueError("width w must be nonnegative")
    prod = math.prod(kappas)
    if math.isinf(prod):
        return math.inf
    scale = rho * l * input_norm * prod
    if not delta < scale:
        raise ValueError(f"delta = {delta} must be below rho*l*||x||*prod(kappa) = {scale}")
    return s * l * math.log(w + 1) + s * (math.log(scale) - math.log(delta))


def generalization_bound(delta_n, approx_err, s, l, w, n) -> dict:
    """Delta_n + approx_err + s*l^2*ln(w*n)/n with its three terms."""
    if delta_n < 0 or approx_err < 0 or s < 0 or l < 0:
        raise ValueError("terms must be nonnegative")
    if n < 2:
        raise ValueError("need n >= 2")
    if w < 1:
        raise ValueError("need w >= 1")
    complexity = s * l * l * math.log(w * n) / n
    return {
        "delta_n": float(delta_n),
        "approx": float(approx_err),
        "complexity": complexity,
        "total": delta_n + approx_err + complexity,
    }


@dataclass
class BoundReport:
    s: int
    l: int
    w: int
    delta: float
    covering_log: float
    generalization: dict = field(default_factory=dict)
    lipschitz: dict = field(default_factory=dict)

    def to_dict(self):
        return dict(self.__dict__)


def bound_report(net: MCNNetwork, input_norm: float, delta: float, n: int, delta_n: float = 0.0, approx_err: float = 0.0) -> BoundReport:
    """All bound quantities for a concrete network."""
    lip = lipschitz_report(net)
    s = net.nnz()
    l = max(net.depth, 1)
    w = max(net.dims)
    rho = max([layer.sigma.lipschitz for layer in net.layers] + [1.0])
    cov = covering_bound(s, l, w, rho, input_norm, lip.kappas or [1.0], delta)
    gen = generalization_bound(delta_n, approx_err, s, l, w, n)
    return BoundReport(s, l, w, delta, cov, gen, lip.to_dict())


# ---------------------------------------------------------------- stationarity


@dataclass
class ResidualReport:
    scores: list
    loss: float
    ls_residual: float
    relative_gap: float
    grad_norm: float | None = None

    @property
    def last_score(self) -> float:
        return self.scores[-1]

    def to_dict(self):
        return dict(self.__dict__)


def residual_orthogonality(net: MCNNetwork, X, Y, loss: str = "square", grad_norm: float | None = None) -> ResidualReport:
    """Orthogonality of the residual to each layer's features, and the LS residual.

    ``scores[k] = ||R^T X_k||_F / (||R||_F ||X_k||_F)`` with ``R = Y_theta - Y``.
    ``ls_residual`` is the mean squared residual of regressing ``Y`` (minus the
    readout bias, which is not trained) on the last-layer features; at a
    stationary point of the readout it equals the square loss.
    """
    if loss != "square":
        raise ValueError("residual orthogonality is defined for the square loss only")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.asarray(Y, dtype=np.float64).reshape(X.shape[0], -1)
    res = mcn_forward(net, X)
    R = res.output - Y
    n = X.shape[0]
    rn = np.linalg.norm(R)
    scores = []
    for Xk in res.states:
        denom = rn * np.linalg.norm(Xk)
        scores.append(float(np.linalg.norm(R.T @ Xk) / denom) if denom > 0 else 0.0)
    value = float((R * R).sum() / n)
    target = Y - net.readout.bias
    Xl = res.states[-1]
    coef, *_ = np.linalg.lstsq(Xl, target, rcond=None)
    resid = target - Xl @ coef
    ls = float((resid * resid).sum() / n)
    gap = abs(value - ls) / value if value > 0 else abs(value - ls)
    return ResidualReport(scores, value, ls, gap, grad_norm)
