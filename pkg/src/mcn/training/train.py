"""Full-batch training of MCNs."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, fields

import numpy as np
import scipy.optimize

from ..network import MCNNetwork
from .model import Model, check_differentiable, loss_and_grad

LOSSES = ("square", "cross-entropy")
OPTIMIZERS = ("sgd", "adam", "lbfgs")


class TrainingError(RuntimeError):
    def __init__(self, epoch: int, msg: str):
        super().__init__(f"epoch {epoch}: {msg}")
        self.epoch = epoch


@dataclass
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    f0: object = field(default=None, repr=False)
    noise: float = 0.0

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        Y = np.asarray(self.Y, dtype=np.float64)
        self.Y = Y.reshape(self.X.shape[0], -1) if Y.ndim < 2 else Y
        n = self.X.shape[0]
        if n < 1:
            raise ValueError("dataset needs at least one sample")
        if self.Y.shape[0] != n:
            raise ValueError(f"{n} inputs but {self.Y.shape[0]} targets")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Y))):
            raise ValueError("dataset entries must be finite")
        if np.unique(self.X, axis=0).shape[0] != n:
            raise ValueError("inputs must be distinct")

    @property
    def n(self) -> int:
        return self.X.shape[0]


@dataclass
class TrainConfig:
    loss: str = "square"
    optimizer: str = "adam"
    lr: float = 1e-2
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 2000
    seed: int = 0
    restarts: int = 20
    grad_tol: float = 1e-6
    lbfgs_restarts: int = 20

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown training options {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class TrainTrace:
    losses: list
    grad_norm: float
    model: Model
    wall_ms: float
    stop: str  # "grad-norm", "epochs" or "optimizer"

    @property
    def final_loss(self) -> float:
        return self.losses[-1]

    @property
    def net(self) -> MCNNetwork:
        return self.model.net

    @property
    def epochs_run(self) -> int:
        return len(self.losses)


def _norm(grads) -> float:
    return math.sqrt(sum(float((g * g).sum()) for g in grads))


def _flatten(arrays):
    return np.concatenate([a.ravel() for a in arrays]) if arrays else np.zeros(0)


def _unflatten(vec, like):
    out, k = [], 0
    for a in like:
        out.append(vec[k : k + a.size].reshape(a.shape))
        k += a.size
    return out


def train(model, data: Dataset, cfg: TrainConfig) -> TrainTrace:
    """Minimize the loss over ``model.params()`` from their current values.

    Stops when the gradient norm reaches ``cfg.grad_tol`` or after
    ``cfg.epochs`` iterations. The procedure uses no randomness.
    """
    if isinstance(model, MCNNetwork):
        model = Model(model)
    check_differentiable(model.net)
    X, Y = data.X, data.Y
    if cfg.loss == "cross-entropy":
        Y = Y.reshape(-1).astype(int)
    params = [np.array(a, dtype=np.float64) for a in model.params()]
    t0 = time.perf_counter()
    losses = []

    def evaluate(ps, epoch):
        val, grads = loss_and_grad(model, ps, X, Y, cfg.loss)
        if not math.isfinite(val):
            raise TrainingError(epoch, f"loss became {val}")
        if not all(np.all(np.isfinite(g)) for g in grads):
            raise TrainingError(epoch, "gradient is not finite")
        return val, grads

    if cfg.optimizer == "lbfgs":
        params, gnorm, stop = _lbfgs(params, evaluate, cfg, losses)
    else:
        params, gnorm, stop = _first_order(params, evaluate, cfg, losses)
    wall = (time.perf_counter() - t0) * 1e3
    return TrainTrace(losses, gnorm, model.with_params(params), wall, stop)


def _first_order(params, evaluate, cfg, losses):
    vel = [np.zeros_like(p) for p in params]
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    gnorm = math.inf
    for epoch in range(cfg.epochs):
        val, grads = evaluate(params, epoch)
        losses.append(val)
        gnorm = _norm(grads)
        if gnorm <= cfg.grad_tol:
            return params, gnorm, "grad-norm"
        if epoch == cfg.epochs - 1:
            break
        if cfg.optimizer == "sgd":
            for j, g in enumerate(grads):
                vel[j] = cfg.momentum * vel[j] - cfg.lr * g
                params[j] = params[j] + vel[j]
        else:
            step = epoch + 1
            for j, g in enumerate(grads):
                m1[j] = cfg.beta1 * m1[j] + (1 - cfg.beta1) * g
                m2[j] = cfg.beta2 * m2[j] + (1 - cfg.beta2) * g * g
                mh = m1[j] / (1 - cfg.beta1**step)
                vh = m2[j] / (1 - cfg.beta2**step)
                params[j] = params[j] - cfg.lr * mh / (np.sqrt(vh) + cfg.eps)
    return params, gnorm, "epochs"


def _lbfgs(params, evaluate, cfg, losses):
    like = params
    calls = [0]
    best = {}

    def fun(vec):
        ps = _unflatten(vec, like)
        val, grads = evaluate(ps, len(losses))
        calls[0] += 1
        g = _flatten(grads)
        gn = float(np.linalg.norm(g))
        if not best or val < best["val"]:
            best.update(val=val, vec=vec.copy(), gnorm=gn)
        if gn <= cfg.grad_tol:
            raise _Converged(vec.copy(), val, gn)
        return val, g

    def callback(xk):
        losses.append(best["val"])

    vec, stop = _flatten(like), "epochs"
    try:
        # a failed line search (typically at a kink) restarts with fresh curvature memory
        for _ in range(cfg.lbfgs_restarts + 1):
            budget = cfg.epochs - len(losses)
            if budget <= 0:
                break
            res = scipy.optimize.minimize(
                fun,
                vec,
                jac=True,
                method="L-BFGS-B",
                callback=callback,
                options={"maxiter": budget, "maxfun": 4 * budget, "ftol": 0.0, "gtol": 0.0, "maxcor": 50},
            )
            # restart from the lowest point seen, which may be a line-search trial
            improved = best["val"] < best.get("restart_val", np.inf)
            best["restart_val"] = best["val"]
            vec, stop = best["vec"].copy(), "optimizer"
            if not improved or res.success:
                break
        if len(losses) >= cfg.epochs:
            stop = "epochs"
    except _Converged as c:
        vec, stop = c.vec, "grad-norm"
        losses.append(c.val)
    val, grads = evaluate(_unflatten(vec, like), len(losses))
    if not losses:
        losses.append(val)
    losses[-1] = val
    return [a.copy() for a in _unflatten(vec, like)], _norm(grads), stop


class _Converged(Exception):
    def __init__(self, vec, val, gnorm):
        self.vec, self.val, self.gnorm = vec, val, gnorm


def least_squares_loss(features: np.ndarray, Y: np.ndarray, intercept: bool = False) -> float:
    """Mean squared residual of the least-squares fit of ``Y`` on ``features``."""
    F = np.asarray(features, dtype=np.float64)
    if intercept:
        F = np.hstack([F, np.ones((F.shape[0], 1))])
    Y = np.asarray(Y, dtype=np.float64).reshape(F.shape[0], -1)
    coef, *_ = np.linalg.lstsq(F, Y, rcond=None)
    r = Y - F @ coef
    return float((r * r).sum() / F.shape[0])
