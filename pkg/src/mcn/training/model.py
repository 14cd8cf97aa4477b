"""Differentiable views of MCNs and fixed feature extractors."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .. import autodiff as ad
from ..core import RELU, Activation
from ..network import MCNNetwork, parameter_arrays, with_parameter_arrays


def check_differentiable(net: MCNNetwork):
    acts = [net.gamma] + [layer.sigma for layer in net.layers]
    for act in acts:
        if not act.differentiable:
            raise ad.NotDifferentiableError(f"activation {act.kind!r} cannot be trained")


def tape_mcn(net: MCNNetwork, params, x0, include_readout: bool):
    """MCN forward on a tape; ``params`` follows ``parameter_arrays`` order."""
    it = iter(params)
    states = [x0]
    for layer in net.layers:
        Lw, Lb, Ww, Wb, Aw, Ab, Tw, Tb = (next(it) for _ in range(8))
        xk = states[-1]
        lin = ad.affine(xk, Lw, Lb)
        wb = ad.affine(xk, Ww, Wb)
        ab = ad.apply_activation(layer.sigma, ad.affine(states[layer.skip_index], Aw, Ab))
        g = ad.apply_activation(net.gamma, ad.affine(x0, Tw, Tb))
        states.append(ad.concat([lin, g + ad.maximum(wb, ab)], axis=1))
    tape = x0.tape
    psi = next(it) if include_readout else tape.var(net.readout.weights)
    return ad.affine(states[-1], psi, tape.var(net.readout.bias))


@dataclass(frozen=True)
class Extractor:
    """Fixed-architecture feature map: relu(W_j h + b_j) per layer, or the identity."""

    name: str
    weights: tuple = ()
    biases: tuple = ()
    activation: Activation = RELU

    def output_dim(self, input_dim: int) -> int:
        return self.weights[-1].shape[0] if self.weights else input_dim

    def __call__(self, X):
        h = np.asarray(X, dtype=np.float64)
        for W, b in zip(self.weights, self.biases):
            h = self.activation(h @ W.T + b)
        return h

    def arrays(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [np.array(W), np.array(b)]
        return out

    def with_arrays(self, arrays) -> "Extractor":
        arrays = list(arrays)
        return replace(self, weights=tuple(arrays[0::2]), biases=tuple(arrays[1::2]))

    def tape(self, params, x):
        it = iter(params)
        h = x
        for _ in self.weights:
            W, b = next(it), next(it)
            h = ad.apply_activation(self.activation, ad.affine(h, W, b))
        return h


def make_extractor(name: str, input_dim: int, rng: np.random.Generator, width: int = 8) -> Extractor:
    if name == "identity":
        return Extractor("identity")
    if name == "relu1":
        W = rng.standard_normal((width, input_dim))
        b = rng.uniform(0.5, 1.5, width)
        return Extractor(name, (W,), (b,))
    if name == "relu2":
        W1 = rng.standard_normal((width, input_dim))
        b1 = rng.uniform(0.5, 1.5, width)
        W2 = rng.standard_normal((width, width)) / np.sqrt(width)
        b2 = rng.uniform(0.5, 1.5, width)
        return Extractor(name, (W1, W2), (b1, b2))
    raise ValueError(f"unknown extractor {name!r}")


class InjectivityError(ValueError):
    def __init__(self, i, j, dist):
        super().__init__(f"extractor maps samples {i} and {j} to outputs {dist:.3g} apart")
        self.pair = (i, j)


def check_injective(extractor: Extractor, X, tol: float = 1e-9):
    H = extractor(X)
    sq = (H * H).sum(axis=1)
    D = sq[:, None] + sq[None, :] - 2 * H @ H.T
    np.fill_diagonal(D, np.inf)
    i, j = np.unravel_index(np.argmin(D), D.shape)
    # recompute the closest pair exactly
    dist = float(np.abs(H[i] - H[j]).max())
    if dist <= tol:
        raise InjectivityError(int(min(i, j)), int(max(i, j)), dist)
    return dist


@dataclass(frozen=True)
class Model:
    """Parameter bookkeeping for training.

    ``net_params``: ``"all"`` trains every layer map (and the readout when
    learnable), ``"readout"`` trains only the readout weights. The extractor
    is trained only when ``train_extractor`` is set.
    """

    net: MCNNetwork
    extractor: Extractor | None = None
    net_params: str = "all"
    train_extractor: bool = False

    def __post_init__(self):
        if self.net_params not in ("all", "readout"):
            raise ValueError(f"unknown net_params {self.net_params!r}")
        if self.net_params == "readout" and self.net.readout_mode != "learnable":
            raise ValueError("readout-only training needs a learnable readout")

    @property
    def _learn_readout(self):
        return self.net.readout_mode == "learnable"

    def _net_arrays(self):
        return parameter_arrays(self.net, self._learn_readout)

    def params(self) -> list[np.ndarray]:
        out = []
        if self.extractor is not None and self.train_extractor:
            out += self.extractor.arrays()
        if self.net_params == "all":
            out += self._net_arrays()
        else:
            out.append(np.array(self.net.readout.weights))
        return out

    def with_params(self, arrays) -> "Model":
        arrays = list(arrays)
        ext = self.extractor
        if ext is not None and self.train_extractor:
            k = len(ext.arrays())
            ext, arrays = ext.with_arrays(arrays[:k]), arrays[k:]
        if self.net_params == "all":
            net = with_parameter_arrays(self.net, arrays, self._learn_readout)
        else:
            full = self._net_arrays()
            full[-1] = arrays[0]
            net = with_parameter_arrays(self.net, full, True)
        return replace(self, net=net, extractor=ext)

    def features(self, X):
        return self.extractor(X) if self.extractor is not None else np.asarray(X, dtype=np.float64)

    def predict(self, X) -> np.ndarray:
        from ..network import mcn_forward

        return mcn_forward(self.net, self.features(X)).output

    def tape_forward(self, tape: ad.Tape, pvars, X):
        pvars = list(pvars)
        x = tape.var(X)
        if self.extractor is not None:
            if self.train_extractor:
                k = len(self.extractor.arrays())
                x, pvars = self.extractor.tape(pvars[:k], x), pvars[k:]
            else:
                x = tape.var(self.extractor(X))
        if self.net_params == "all":
            netp = pvars
        else:
            netp = [tape.var(a) for a in self._net_arrays()[:-1]] + pvars
        return tape_mcn(self.net, netp, x, self._learn_readout)


def loss_and_grad(model: Model, arrays, X, Y, loss: str = "square"):
    """Loss value and gradient list at ``arrays`` (in ``model.params`` order)."""
    tape = ad.Tape()
    pvars = [tape.var(a) for a in arrays]
    out = model.tape_forward(tape, pvars, X)
    if loss == "square":
        val = ad.square_loss(out, Y)
    elif loss == "cross-entropy":
        val = ad.cross_entropy(out, Y)
    else:
        raise ValueError(f"unknown loss {loss!r}")
    grads = tape.backward(val)
    return float(val.value), [np.zeros_like(v.value) if grads[v.index] is None else grads[v.index] for v in pvars]
