"""Independent reference computations shared by the unit and acceptance tests."""

import itertools
import math

import numpy as np

from mcn.core import EXP, IDENTITY, RELU
from mcn.network import mcn_forward, parameter_arrays, random_network, with_parameter_arrays
from mcn.training.model import Model, loss_and_grad


def central_difference(f, arrays, h=1e-6):
    grads = []
    for j, a in enumerate(arrays):
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            plus = [x.copy() for x in arrays]
            minus = [x.copy() for x in arrays]
            plus[j][idx] += h
            minus[j][idx] -= h
            g[idx] = (f(plus) - f(minus)) / (2 * h)
        grads.append(g)
    return grads


def tie_margin(net, X):
    """Smallest distance of any max or relu argument from its kink over the batch."""
    res = mcn_forward(net, X)
    margin = np.inf
    for layer, wb, ab in zip(net.layers, res.w_branch, res.a_branch):
        if wb.size:
            margin = min(margin, float(np.abs(wb - ab).min()))
        if layer.sigma == RELU:
            pre = layer.A(res.states[layer.skip_index])
            if pre.size:
                margin = min(margin, float(np.abs(pre).min()))
    return margin


def random_program(seed):
    """A random small MCN with square loss on random data."""
    rng = np.random.default_rng([seed, 7])
    d_x = int(rng.integers(1, 4))
    depth = int(rng.integers(1, 4))
    shapes = [(int(rng.integers(0, 3)), int(rng.integers(1, 4))) for _ in range(depth)]
    gamma = [IDENTITY, EXP][int(rng.integers(0, 2))]
    sigma = [IDENTITY, RELU][int(rng.integers(0, 2))]
    skip = ["zero", "prev", "random"][int(rng.integers(0, 3))]
    d_y = int(rng.integers(1, 3))
    net = random_network(rng, d_x, shapes, d_y, gamma=gamma, sigma=sigma, skip=skip, scale=0.7, atilde_scale=0.3)
    X = rng.uniform(-1, 1, (6, d_x))
    Y = rng.standard_normal((6, d_y))
    return net, X, Y


def gradient_check(seed, h=1e-6):
    """Relative gap between tape gradients and central differences, or None near a tie."""
    net, X, Y = random_program(seed)
    if tie_margin(net, X) < 1e-4:
        return None
    model = Model(net)
    arrays = parameter_arrays(net, True)

    def loss(arrs):
        out = mcn_forward(with_parameter_arrays(net, arrs, True), X).output
        return float(((out - Y) ** 2).sum() / X.shape[0])

    _, ad = loss_and_grad(model, arrays, X, Y)
    fd = central_difference(loss, arrays, h)
    a = np.concatenate([g.ravel() for g in ad])
    b = np.concatenate([g.ravel() for g in fd])
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


def brute_force_cross(d, r):
    """Hyperbolic cross by scanning the full box [0, 2^r)^d with a log2 level rule."""
    size = 1 << r
    level = np.array([0] + [1 + int(math.floor(math.log2(v))) for v in range(1, size)], dtype=np.int16)
    total = np.zeros((size,) * d, dtype=np.int16)
    for j in range(d):
        shape = [1] * d
        shape[j] = size
        total = total + level.reshape(shape)
    out = set()
    for n in map(tuple, np.argwhere(total <= r).tolist()):
        choices = [(0,) if v == 0 else (0, 1) for v in n]
        for i in itertools.product(*choices):
            out.add((n, i))
    return out
