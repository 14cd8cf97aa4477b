"""Explicit MCN constructions for x^2, products, polynomials, floor and cos/sin.

Each ``*_expr`` function adds units to a ``Graph`` and returns the output
expression together with a sup-norm error bound. The ``build_*`` functions
compile a standalone network and wrap it in a ``CertifiedNet``.

Error propagation relies on clipping every product argument to [-1, 1]:
clipping is 1-Lipschitz and leaves exact values in [-1, 1] unchanged, so for
exact factors ``a, b`` and approximations ``c, d``

    |prod2(c, d) - a b| <= eps2 + |c - a| + |d - b|.
"""

from __future__ import annotations

import math

import numpy as np

from ..core import BINARY_STEP
from .certificate import CertifiedNet, Target
from .graph import Graph, Lin

MAX_STAGES = 50
MAX_ARITY = 32
MAX_FLOOR_RANGE = 10**6
MAX_FREQUENCY = 64


def _stages(m: int, l: int) -> int:
    if m < 1 or l < 1:
        raise ValueError(f"need m >= 1 and l >= 1, got m={m}, l={l}")
    t = m * l
    if t > MAX_STAGES:
        raise ValueError(f"t = m*l = {t} stages exceeds {MAX_STAGES}; beyond double precision")
    return t


def square_bound(t: int) -> float:
    return 2.0**-t


def product2_bound(t: int) -> float:
    # three squares of arguments halved into [-1, 1], recombined with factor 2
    return 6.0 * 2.0**-t


# ---------------------------------------------------------------- expressions


def square_expr(g: Graph, u: Lin, t: int, clip: bool = True) -> Lin:
    """Approximate ``min(u^2, 1)`` (or ``u^2`` for ``|u| <= 1`` when ``clip`` is off).

    With ``a = min(|u|, 1)``, ``r_0 = -a`` and
    ``r_k = max(r_{k-1}/2, -r_{k-1}/2 - 2^(1-2k))`` the output is
    ``a + sum_{k<=t} r_k``, which interpolates ``a^2`` at the knots ``j 2^-t``.
    """
    if u.is_constant():
        v = min(abs(u.const), 1.0) if clip else abs(u.const)
        return Lin.constant(v * v)
    a = g.abs(u)
    r = g.max(-a, Lin.constant(-1.0)) if clip else -a
    acc = -r
    for k in range(1, t + 1):
        r_new = g.max(0.5 * r, -0.5 * r - 2.0 ** (1 - 2 * k))
        if k < t:
            # running sum kept in one L unit per layer
            acc = g.lin(acc + r_new)
            r = r_new
        else:
            acc = acc + r_new
    return acc


def clip_expr(g: Graph, e: Lin) -> Lin:
    if e.is_constant():
        return Lin.constant(min(max(e.const, -1.0), 1.0))
    return g.clip(e)


def product2_expr(g: Graph, a: Lin, b: Lin, t: int) -> Lin:
    """``ab = 2((a+b)^2/4 - a^2/4 - b^2/4)`` on clipped arguments."""
    ca, cb = clip_expr(g, a), clip_expr(g, b)
    s1 = square_expr(g, 0.5 * ca + 0.5 * cb, t, clip=False)
    s2 = square_expr(g, 0.5 * ca, t, clip=False)
    s3 = square_expr(g, 0.5 * cb, t, clip=False)
    return 2.0 * (s1 - s2 - s3)


def product_tree_expr(g: Graph, leaves, t: int, pad: bool = True):
    """Balanced product of ``(expr, err)`` leaves whose exact values lie in [-1, 1].

    Returns ``(expr, err, internal_nodes)``. With ``pad`` the leaves are
    padded with exact ones to a power of two.
    """
    level = list(leaves)
    if not level:
        return Lin.constant(1.0), 0.0, 0
    if pad:
        size = 1 << (len(level) - 1).bit_length()
        level += [(Lin.constant(1.0), 0.0)] * (size - len(level))
    eps2 = product2_bound(t)
    nodes = 0
    while len(level) > 1:
        nxt = []
        for j in range(0, len(level) - 1, 2):
            (ea, da), (eb, db) = level[j], level[j + 1]
            nxt.append((product2_expr(g, ea, eb, t), eps2 + da + db))
            nodes += 1
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    expr, err = level[0]
    return expr, err, nodes


def polynomial_expr(g: Graph, x: Lin, coeffs, t: int):
    """``sum_j a_j x^j`` (j from 1) for ``|x| <= 1`` via a shared power ladder.

    Returns ``(expr, per_monomial)`` where ``per_monomial`` maps ``j`` to the
    error bound of the ``x^j`` sub-net. Ladder step ``k`` squares step
    ``k-1`` so its error obeys ``e_k <= eps_sq + 2 e_{k-1}``.
    """
    coeffs = [float(a) for a in coeffs]
    ladder = [(x, 0.0)]

    def power(k):
        while len(ladder) <= k:
            prev, err = ladder[-1]
            ladder.append((square_expr(g, prev, t, clip=True), square_bound(t) + 2.0 * err))
        return ladder[k]

    out = Lin()
    per_monomial = {}
    for j, a in enumerate(coeffs, start=1):
        if a == 0.0:
            continue
        leaves = [power(k) for k in range(j.bit_length()) if (j >> k) & 1]
        expr, err, _ = product_tree_expr(g, leaves, t)
        per_monomial[j] = err
        out = out + a * expr
    return out, per_monomial


def floor_expr(g: Graph, y: Lin, J: int) -> Lin:
    """``floor(y)`` for ``y`` in [0, J]: the count of ``j = 1..J`` with ``y >= j``."""
    out = Lin()
    for j in range(1, J + 1):
        out = out + g.max(Lin.constant(-1.0), y - float(j), sigma=BINARY_STEP)
    return out


def cos_taylor_coeffs(p: int) -> list[float]:
    """Coefficients of s^1..s^p in the Taylor polynomial of cos(pi s)."""
    out = [0.0] * p
    for k in range(1, p // 2 + 1):
        out[2 * k - 1] = (-1) ** k * math.pi ** (2 * k) / math.factorial(2 * k)
    return out


def taylor_remainder(p: int) -> float:
    """Bound on |cos(pi s) - T_p(s)| for |s| <= 1; terms alternate and shrink once p >= 2."""
    return math.pi ** (p + 2) / math.factorial(p + 2)


def trig_expr(g: Graph, x: Lin, kind: str, n: int, p: int, t: int):
    """cos(n pi x) or sin((n - 1/2) pi x) for x in [-1, 1].

    With ``y = w (x + 1)/2`` (``w = n`` or ``n - 1/2``), ``z = y - floor(y)``
    and ``s = 2z - 1``, both targets equal ``-(-1)^n cos(pi s)`` with
    ``s`` in [-1, 1). Returns ``(expr, taylor_bound, poly_bound)``.
    """
    omega = n if kind == "cos" else n - 0.5
    y = (x + 1.0) * (omega / 2.0)
    s = 2.0 * (y - floor_expr(g, y, n)) - 1.0
    coeffs = cos_taylor_coeffs(p)
    poly, per = polynomial_expr(g, s, coeffs, t)
    sign = -((-1.0) ** n)
    norm1 = sum(abs(a) for a in coeffs)
    poly_bound = norm1 * sum(per.values())
    return sign * (poly + 1.0), taylor_remainder(p), poly_bound


# ---------------------------------------------------------------- builders


def _finish(g, out, target, domain, bound, formula, stage_params, deviations=(), components=None):
    net, stats = g.compile([out])
    sp = dict(stage_params)
    sp["w"] = stats.width
    return CertifiedNet(
        net=net,
        target=target,
        domain=domain,
        bound=float(bound),
        bound_formula=formula,
        stage_params=sp,
        deviations=list(deviations),
        components=components or {},
        stats=stats.to_dict(),
    )


SAWTOOTH_NOTE = (
    "sawtooth stages are r_k = max(r_{k-1}/2, -r_{k-1}/2 - 2^(1-2k)) started from r_0 = -|x|; "
    "composing max{-x/2, x/2 - 2^(1-2k)} from r_0 = x yields r_k >= 0 and does not converge to x^2"
)


def build_sawtooth_square(m: int, l: int = 1) -> CertifiedNet:
    """x^2 on [-1, 1] with t = m*l sawtooth stages; reported bound 2^-t."""
    t = _stages(m, l)
    g = Graph(1)
    out = square_expr(g, g.input(0), t, clip=True)
    return _finish(
        g,
        out,
        Target("square"),
        [(-1.0, 1.0)],
        square_bound(t),
        f"2^-t with t=m*l={t}",
        {"m": m, "l": l, "t": t},
        [SAWTOOTH_NOTE],
        {"exact_sup_error": 2.0 ** (-2 * t - 2)},
    )


def build_product2(m: int, l: int = 1) -> CertifiedNet:
    """xy on [-1, 1]^2; bound 6 * 2^-t (three squares, factor 2)."""
    t = _stages(m, l)
    g = Graph(2)
    x, y = g.inputs()
    out = product2_expr(g, x, y, t)
    return _finish(
        g,
        out,
        Target("product"),
        [(-1.0, 1.0)] * 2,
        product2_bound(t),
        f"(3/2)*4*2^-t with t={t}",
        {"m": m, "l": l, "t": t, "p": 2},
        [SAWTOOTH_NOTE],
    )


def build_product(p: int, m: int, l: int = 1) -> CertifiedNet:
    """Product of p inputs on [-1, 1]^p through a padded binary tree."""
    if p < 2:
        raise ValueError("product arity must be at least 2")
    if p > MAX_ARITY:
        raise ValueError(f"product arity {p} exceeds {MAX_ARITY}")
    t = _stages(m, l)
    g = Graph(p)
    out, err, nodes = product_tree_expr(g, [(e, 0.0) for e in g.inputs()], t)
    height = (p - 1).bit_length()
    bound = (1 << height) * product2_bound(t)
    return _finish(
        g,
        out,
        Target("product"),
        [(-1.0, 1.0)] * p,
        bound,
        f"2^ceil(log2 p) * 6 * 2^-t with p={p}, t={t}",
        {"m": m, "l": l, "t": t, "p": p},
        [SAWTOOTH_NOTE],
        {"pairwise": product2_bound(t), "tree_nodes": nodes, "tree_bound": err},
    )


def build_polynomial(coeffs, m: int, l: int = 1) -> CertifiedNet:
    """sum_{j=1..p} a_j x^j on [-1, 1]; bound ||a||_1 * sum_j (per-monomial bound)."""
    coeffs = [float(a) for a in coeffs]
    p = len(coeffs)
    if p < 1:
        raise ValueError("need at least one coefficient")
    if p > MAX_ARITY:
        raise ValueError(f"polynomial degree {p} exceeds {MAX_ARITY}")
    if not all(math.isfinite(a) for a in coeffs):
        raise ValueError("coefficients must be finite")
    t = _stages(m, l)
    g = Graph(1)
    out, per = polynomial_expr(g, g.input(0), coeffs, t)
    norm1 = sum(abs(a) for a in coeffs)
    bound = norm1 * sum(per.values())
    return _finish(
        g,
        out,
        Target("polynomial", {"coeffs": coeffs}),
        [(-1.0, 1.0)],
        bound,
        f"||a||_1 * sum_j monomial_bound_j with t={t}",
        {"m": m, "l": l, "t": t, "p": p},
        [SAWTOOTH_NOTE],
        {"per_monomial": {str(j): b for j, b in per.items()}, "weighted": sum(abs(coeffs[j - 1]) * b for j, b in per.items())},
    )


def build_floor(J: int, negative: bool = False) -> CertifiedNet:
    """Exact floor on [0, J] with J binary-step units.

    With ``negative`` the domain is [-J, J] and the negative side is wired
    as ``-floor(-x)``, which equals ``floor(x)`` only at integers.
    """
    if J < 1:
        raise ValueError("J must be at least 1")
    if J > MAX_FLOOR_RANGE:
        raise ValueError(f"J = {J} exceeds {MAX_FLOOR_RANGE} units")
    g = Graph(1)
    x = g.input(0)
    out = floor_expr(g, x, J)
    deviations = []
    if negative:
        out = out - floor_expr(g, -x, J)
        deviations.append("negative side computes -floor(-x): equal to floor(x) only at integers")
    return _finish(
        g,
        out,
        Target("floor-odd" if negative else "floor"),
        [(-float(J) if negative else 0.0, float(J))],
        0.0,
        "exact (0)",
        {"J": J},
        deviations,
    )


TRIG_NOTES = [
    "one rescaled interval s in [-1, 1) replaces per-subinterval Taylor expansions",
    "range reduction uses y = w(x+1)/2 with w = n (cos) or n - 1/2 (sin), reduced by a floor net of n units",
    "sin((n-1/2) pi x) is built by the same reduction as cos, not through the Dirichlet kernel",
]


def _check_trig(kind, n, p):
    if kind not in ("cos", "sin"):
        raise ValueError(f"kind must be cos or sin, got {kind!r}")
    if n < 1:
        raise ValueError("frequency n must be at least 1")
    if n > MAX_FREQUENCY:
        raise ValueError(f"frequency n = {n} exceeds {MAX_FREQUENCY}")
    if p < 4 or p % 2:
        raise ValueError(f"Taylor degree p must be even and >= 4, got {p}")


def build_trig(kind: str, n: int, p: int, m: int, l: int = 1) -> CertifiedNet:
    """cos(n pi x) or sin((n - 1/2) pi x) on [-1, 1]; bound = Taylor term + polynomial term."""
    _check_trig(kind, n, p)
    t = _stages(m, l)
    g = Graph(1)
    out, taylor, poly = trig_expr(g, g.input(0), kind, n, p, t)
    return _finish(
        g,
        out,
        Target(kind, {"n": n}),
        [(-1.0, 1.0)],
        taylor + poly,
        f"pi^(p+2)/(p+2)! + ||a||_1 * sum_j monomial_bound_j with p={p}, t={t}",
        {"m": m, "l": l, "t": t, "p": p, "n": n},
        TRIG_NOTES + [SAWTOOTH_NOTE],
        {"taylor": taylor, "polynomial": poly},
    )


def measured_at(cnet: CertifiedNet, X) -> np.ndarray:
    return np.abs(cnet(X) - cnet.target(np.asarray(X, dtype=np.float64).reshape(-1, cnet.dim)))
