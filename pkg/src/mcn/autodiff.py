"""A small reverse-mode differentiation tape over numpy arrays.

Nodes are appended in evaluation order, so the node list is already
topologically sorted and the backward sweep is a single reversed pass.
Only the primitives needed to train MCNs are provided.

>>> g = gradient(lambda w: (w * w).sum(), np.array(3.0))
>>> float(g)
6.0
"""

from __future__ import annotations

import numpy as np

from .core import EXP_CLAMP, Activation


class NotDifferentiableError(ValueError):
    pass


class Tape:
    def __init__(self):
        self.values: list[np.ndarray] = []
        self.parents: list[tuple[int, ...]] = []
        self.vjps: list = []

    def __len__(self):
        return len(self.values)

    def _push(self, value, parents=(), vjp=None) -> "Var":
        self.values.append(value)
        self.parents.append(tuple(p.index for p in parents))
        self.vjps.append(vjp)
        return Var(self, len(self.values) - 1)

    def var(self, value) -> "Var":
        return self._push(np.array(value, dtype=np.float64))

    def backward(self, out: "Var") -> list[np.ndarray | None]:
        if out.tape is not self:
            raise ValueError("output does not belong to this tape")
        if np.ndim(self.values[out.index]) != 0:
            raise ValueError("backward needs a scalar output")
        grads: list[np.ndarray | None] = [None] * len(self.values)
        grads[out.index] = np.ones(())
        # each node is visited exactly once
        for i in range(out.index, -1, -1):
            g = grads[i]
            if g is None or self.vjps[i] is None:
                continue
            for p, gp in zip(self.parents[i], self.vjps[i](g)):
                if gp is None:
                    continue
                grads[p] = gp if grads[p] is None else grads[p] + gp
        return grads


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Var:
    __slots__ = ("tape", "index")
    __array_priority__ = 100

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.index]

    @property
    def shape(self):
        return self.value.shape

    def _lift(self, other) -> "Var":
        return other if isinstance(other, Var) else self.tape.var(other)

    def __add__(self, other):
        other = self._lift(other)
        a, b = self.value, other.value
        return self.tape._push(
            a + b, (self, other), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))
        )

    __radd__ = __add__

    def __neg__(self):
        return self.tape._push(-self.value, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        other = self._lift(other)
        a, b = self.value, other.value
        return self.tape._push(
            a * b,
            (self, other),
            lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)),
        )

    __rmul__ = __mul__

    def __matmul__(self, other):
        other = self._lift(other)
        a, b = self.value, other.value
        return self.tape._push(a @ b, (self, other), lambda g: (g @ b.T, a.T @ g))

    @property
    def T(self):
        return self.tape._push(self.value.T, (self,), lambda g: (g.T,))

    def sum(self):
        shape = self.value.shape
        return self.tape._push(self.value.sum(), (self,), lambda g: (np.broadcast_to(g, shape).copy(),))

    def mean(self):
        return self.sum() * (1.0 / self.value.size)

    def __getitem__(self, idx):
        a = self.value

        def vjp(g):
            out = np.zeros_like(a)
            np.add.at(out, idx, g)
            return (out,)

        return self.tape._push(a[idx], (self,), vjp)


def affine(x: Var, weights: Var, bias: Var) -> Var:
    """Batched affine map ``x @ weights.T + bias`` for ``x`` of shape (n, cols)."""
    xv, wv = x.value, weights.value
    out = xv @ wv.T + bias.value
    return x.tape._push(
        out, (x, weights, bias), lambda g: (g @ wv, g.T @ xv, g.sum(axis=0))
    )


def relu(x: Var) -> Var:
    v = x.value
    mask = v > 0
    return x.tape._push(np.where(mask, v, 0.0), (x,), lambda g: (g * mask,))


def exp(x: Var) -> Var:
    """Clamped exponential; the derivative is zero where the clamp is active."""
    v = x.value
    inside = (v >= -EXP_CLAMP) & (v <= EXP_CLAMP)
    out = np.exp(np.clip(v, -EXP_CLAMP, EXP_CLAMP))
    return x.tape._push(out, (x,), lambda g: (g * out * inside,))


def maximum(a: Var, b: Var) -> Var:
    """Element-wise max; on ties the first argument is selected."""
    if not isinstance(a, Var):
        a = b.tape.var(a)
    b = a._lift(b)
    av, bv = a.value, b.value
    first = av >= bv
    return a.tape._push(
        np.where(first, av, bv),
        (a, b),
        lambda g: (_unbroadcast(g * first, av.shape), _unbroadcast(g * ~first, bv.shape)),
    )


def concat(parts: list[Var], axis: int = -1) -> Var:
    parts = list(parts)
    tape = parts[0].tape
    vals = [p.value for p in parts]
    sizes = np.cumsum([v.shape[axis] for v in vals])[:-1]
    return tape._push(
        np.concatenate(vals, axis=axis), parts, lambda g: tuple(np.split(g, sizes, axis=axis))
    )


def apply_activation(act: Activation, x: Var) -> Var:
    if act.kind == "identity":
        return x
    if act.kind == "relu":
        return relu(x)
    if act.kind == "exp":
        return exp(x)
    raise NotDifferentiableError(
        f"activation {act.kind!r} is not supported inside a differentiated program"
    )


def square_loss(pred: Var, target) -> Var:
    """Mean over samples of the squared Euclidean error."""
    diff = pred - target
    return (diff * diff).sum() * (1.0 / pred.value.shape[0])


def cross_entropy(logits: Var, labels) -> Var:
    """Mean softmax cross-entropy; ``labels`` are integer class indices."""
    z = logits.value
    labels = np.asarray(labels, dtype=int).reshape(-1)
    n = z.shape[0]
    shifted = z - z.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), labels].mean()

    def vjp(g):
        p = np.exp(logp)
        p[np.arange(n), labels] -= 1.0
        return (g * p / n,)

    return logits.tape._push(np.array(loss), (logits,), vjp)


def gradient(fn, params):
    """Gradient of a scalar program ``fn`` with respect to ``params``.

    ``params`` is a single array or a list of arrays; ``fn`` receives the
    corresponding tape variables and must return a scalar ``Var``. The
    result mirrors the structure of ``params``.
    """
    single = not isinstance(params, (list, tuple))
    plist = [params] if single else list(params)
    tape = Tape()
    xs = [tape.var(p) for p in plist]
    out = fn(*xs)
    grads = tape.backward(out)
    res = [np.zeros_like(x.value) if grads[x.index] is None else grads[x.index] for x in xs]
    return res[0] if single else res
