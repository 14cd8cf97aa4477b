"""Hyperbolic-cross index sets, quadrature coefficients and Fourier nets."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .approximants import (
    SAWTOOTH_NOTE,
    TRIG_NOTES,
    _check_trig,
    _finish,
    _stages,
    product_tree_expr,
    trig_expr,
)
from .certificate import Target, phi_1d
from .graph import Graph, Lin

MAX_INDEX_ENTRIES = 10**7
MAX_FOURIER_DIM = 3
DEFAULT_QUAD_ORDER = 64


def dyadic_block(alpha) -> list[range]:
    """Per-axis ranges floor(2^(a-1)) <= n < 2^a of the block rho(alpha)."""
    return [range(1 << a >> 1, 1 << a) for a in alpha]


def level_of(n: int) -> int:
    """The unique a with n in [floor(2^(a-1)), 2^a)."""
    return int(n).bit_length()


def _compositions(d: int, r: int):
    """All alpha in N^d with |alpha|_1 <= r."""
    if d == 1:
        for a in range(r + 1):
            yield (a,)
        return
    for a in range(r + 1):
        for rest in _compositions(d - 1, r - a):
            yield (a,) + rest


def parity_vectors(n) -> list[tuple]:
    """Parity flags i with i_j = 0 forced wherever n_j = 0 (only cos exists there)."""
    choices = [(0,) if nj == 0 else (0, 1) for nj in n]
    return list(itertools.product(*choices))


@dataclass
class FourierIndexSet:
    d: int
    r: int
    n_indices: list
    entries: list
    coefficients: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return 1 << self.r

    @property
    def count(self) -> int:
        return len(self.n_indices)

    @property
    def max_frequency(self) -> int:
        return max((max(n) for n in self.n_indices), default=0)

    def check(self):
        seen = set()
        for n, i in self.entries:
            if (n, i) in seen:
                raise AssertionError(f"duplicate entry {(n, i)}")
            seen.add((n, i))
            if sum(level_of(v) for v in n) > self.r:
                raise AssertionError(f"{n} outside the cross of level {self.r}")

    def series(self, X) -> np.ndarray:
        from .certificate import phi

        if self.coefficients is None:
            raise ValueError("coefficients not computed")
        out = np.zeros(np.atleast_2d(X).shape[0])
        for (n, i), c in zip(self.entries, self.coefficients):
            if c:
                out = out + c * phi(n, i, X)
        return out


def hyperbolic_cross(d: int, r: int) -> FourierIndexSet:
    """I_N = union of the dyadic blocks rho(alpha) over |alpha|_1 <= r, with parity flags."""
    if d < 1:
        raise ValueError("dimension d must be at least 1")
    if r < 0:
        raise ValueError("level r must be nonnegative")
    blocks = list(_compositions(d, r))
    count = sum(math.prod(len(rg) for rg in dyadic_block(a)) for a in blocks)
    # each n carries at most 2^d parity vectors
    if count * (1 << d) > MAX_INDEX_ENTRIES:
        raise ValueError(f"|I_N| * 2^d = {count << d} exceeds {MAX_INDEX_ENTRIES}")
    ns = []
    for alpha in blocks:
        ns.extend(itertools.product(*dyadic_block(alpha)))
    ns.sort()
    entries = [(n, i) for n in ns for i in parity_vectors(n)]
    return FourierIndexSet(d, r, ns, entries)


def cross_growth_ratio(d: int, r: int) -> float:
    """|I_N| / (N (ln N)^(d-1) / (d-1)!)."""
    N = 1 << r
    return hyperbolic_cross(d, r).count / (N * math.log(N) ** (d - 1) / math.factorial(d - 1))


def _basis_table(nodes, maxfreq):
    """Rows indexed by (n, i) for n <= maxfreq, evaluated at the quadrature nodes."""
    keys = [(0, 0)] + [(n, i) for n in range(1, maxfreq + 1) for i in (0, 1)]
    table = np.array([phi_1d(n, i, nodes) for n, i in keys])
    return {k: j for j, k in enumerate(keys)}, table


def _check_order(order, maxfreq):
    if order < 2 * maxfreq + 8:
        raise ValueError(f"quadrature order {order} < 2*max frequency + 8 = {2 * maxfreq + 8}")


def fourier_coeffs(f, idx: FourierIndexSet, quad_order: int = DEFAULT_QUAD_ORDER) -> FourierIndexSet:
    """Fill f_hat = integral of f * phi over (-1, 1)^d by tensor Gauss-Legendre quadrature.

    ``f`` maps an ``(m, d)`` array of points to ``m`` values.
    """
    d = idx.d
    if d > MAX_FOURIER_DIM:
        raise ValueError(f"quadrature pipeline supports d <= {MAX_FOURIER_DIM}")
    maxfreq = idx.max_frequency
    _check_order(quad_order, maxfreq)
    nodes, weights = np.polynomial.legendre.leggauss(quad_order)
    grid = np.stack(np.meshgrid(*([nodes] * d), indexing="ij"), axis=-1).reshape(-1, d)
    F = np.asarray(f(grid), dtype=np.float64).reshape((quad_order,) * d)
    pos, table = _basis_table(nodes, maxfreq)
    weighted = table * weights
    # contract each axis with the weighted 1-D basis
    C = F
    for _ in range(d):
        C = np.tensordot(C, weighted, axes=([0], [1]))
    coeffs = np.array([C[tuple(pos[(nj, ij)] for nj, ij in zip(n, i))] for n, i in idx.entries])
    return FourierIndexSet(idx.d, idx.r, idx.n_indices, idx.entries, coeffs, {"quad_order": quad_order})


def gram_matrix(idx: FourierIndexSet, quad_order: int = DEFAULT_QUAD_ORDER) -> np.ndarray:
    """Quadrature inner products between all basis functions of ``idx``."""
    _check_order(quad_order, idx.max_frequency)
    nodes, weights = np.polynomial.legendre.leggauss(quad_order)
    pos, table = _basis_table(nodes, idx.max_frequency)
    G1 = (table * weights) @ table.T
    m = len(idx.entries)
    G = np.ones((m, m))
    for j in range(idx.d):
        rows = np.array([pos[(n[j], i[j])] for n, i in idx.entries])
        G *= G1[np.ix_(rows, rows)]
    return G


# ---------------------------------------------------------------- nets


class _TrigCache:
    """One trig sub-net per (axis, frequency, kind), shared by all basis terms."""

    def __init__(self, g, p, t):
        self.g, self.p, self.t = g, p, t
        self.cache = {}

    def get(self, axis, n, i):
        key = (axis, n, i)
        if key not in self.cache:
            kind = "cos" if i == 0 else "sin"
            expr, taylor, poly = trig_expr(self.g, self.g.input(axis), kind, n, self.p, self.t)
            self.cache[key] = (expr, taylor + poly)
        return self.cache[key]


def basis_expr(g: Graph, trig: _TrigCache, n, i):
    """Expression and error bound for phi_n^[i]; constant 1/sqrt2 factors are folded in."""
    scale = 1.0
    leaves = []
    for axis, (nj, ij) in enumerate(zip(n, i)):
        if nj == 0:
            scale /= math.sqrt(2.0)
        else:
            leaves.append(trig.get(axis, nj, ij))
    if len(leaves) == 1:
        expr, err = leaves[0]
    else:
        expr, err, _ = product_tree_expr(g, leaves, trig.t)
    return scale * expr, scale * err


def build_basis(n, i, p: int, m: int, l: int = 1):
    """A single tensor basis function phi_n^[i] on [-1, 1]^d."""
    n, i = tuple(int(v) for v in n), tuple(int(v) for v in i)
    if len(n) != len(i) or not n:
        raise ValueError("n and i must be nonempty and of equal length")
    for nj, ij in zip(n, i):
        if nj < 0 or ij not in (0, 1) or (nj == 0 and ij == 1):
            raise ValueError(f"invalid basis index n={n}, i={i}")
        if nj:
            _check_trig("cos", nj, p)
    t = _stages(m, l)
    g = Graph(len(n))
    expr, err = basis_expr(g, _TrigCache(g, p, t), n, i)
    return _finish(
        g,
        expr,
        Target("phi", {"n": list(n), "i": list(i)}),
        [(-1.0, 1.0)] * len(n),
        err,
        f"product tree over trig factors, each Taylor + polynomial, p={p}, t={t}",
        {"m": m, "l": l, "t": t, "p": p},
        TRIG_NOTES + [SAWTOOTH_NOTE],
    )


def build_fourier_approx(
    f,
    d: int,
    r: int,
    p: int = 16,
    m: int = 20,
    l: int = 1,
    quad_order: int = DEFAULT_QUAD_ORDER,
    tol: float = 1e-12,
    beta: float | None = None,
):
    """Net for the truncated series F_N[f] over the hyperbolic cross of level r.

    The certified bound covers |net - F_N[f]|: sum |f_hat| * (basis bound)
    plus the mass of coefficients below ``tol`` that were left out. The
    truncation |F_N[f] - f| is only reported when ``beta`` is given, as an
    order-level number.
    """
    if d < 1 or d > MAX_FOURIER_DIM:
        raise ValueError(f"Fourier nets support 1 <= d <= {MAX_FOURIER_DIM}")
    t = _stages(m, l)
    idx = fourier_coeffs(f, hyperbolic_cross(d, r), quad_order)
    for n in idx.n_indices:
        for nj in n:
            if nj:
                try:
                    _check_trig("cos", nj, p)
                except ValueError as e:
                    raise ValueError(f"index n={n}: {e}") from None
    g = Graph(d)
    trig = _TrigCache(g, p, t)
    out = Lin()
    construction = dropped = 0.0
    kept = 0
    for (n, i), c in zip(idx.entries, idx.coefficients):
        c = float(c)
        if abs(c) < tol:
            dropped += abs(c)
            continue
        expr, err = basis_expr(g, trig, n, i)
        out = out + c * expr
        construction += abs(c) * err
        kept += 1
    # |phi| <= 1, so every omitted term moves the series by at most |f_hat|
    bound = float(construction + dropped)
    N = 1 << r
    if beta is None:
        truncation = "not certified"
    else:
        truncation = float(N ** (-2 * beta - 2) * max(math.log(N), 1.0) ** (d - 1))
    terms = [[list(n), list(i), float(c)] for (n, i), c in zip(idx.entries, idx.coefficients)]
    cnet = _finish(
        g,
        out,
        Target("fourier-series", {"terms": terms}),
        [(-1.0, 1.0)] * d,
        bound,
        "sum |f_hat| * basis_bound + sum of dropped |f_hat|",
        {"m": m, "l": l, "t": t, "p": p, "r": r, "N": N},
        TRIG_NOTES
        + [SAWTOOTH_NOTE, "trig sub-nets are shared across basis terms with the same axis, frequency and kind"],
        {
            "construction": float(construction),
            "dropped": float(dropped),
            "truncation": truncation,
            "kept_terms": kept,
            "index_count": idx.count,
            "shared_trig_nets": len(trig.cache),
        },
    )
    return cnet, idx
