"""Symbolic unit graph compiled into an MCN.

Builders describe a computation as max units and linear (pass-through)
units over affine expressions. ``Graph.compile`` assigns every unit to the
earliest admissible layer, inserts identity carries through ``L`` for
values that skip layers, and emits dense layer maps. Every layer reads its
skip branch from the previous layer and uses ``gamma = identity`` with a
zero ``Atilde``; the ``Atilde`` bias adds a constant to each max unit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import IDENTITY, Activation, LinearMap
from ..network import MCNLayer, MCNNetwork


class Lin:
    """Affine expression ``sum coef * unit + const`` over graph units."""

    __slots__ = ("terms", "const")

    def __init__(self, terms=None, const=0.0):
        self.terms = {k: float(v) for k, v in (terms or {}).items() if v != 0.0}
        self.const = float(const)

    @classmethod
    def constant(cls, c) -> "Lin":
        return cls({}, c)

    @staticmethod
    def _coerce(other) -> "Lin":
        return other if isinstance(other, Lin) else Lin.constant(other)

    def __add__(self, other):
        other = self._coerce(other)
        terms = dict(self.terms)
        for k, v in other.terms.items():
            terms[k] = terms.get(k, 0.0) + v
        return Lin(terms, self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, c):
        c = float(c)
        return Lin({k: v * c for k, v in self.terms.items()}, self.const * c)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / c)

    def is_constant(self) -> bool:
        return not self.terms

    def __repr__(self):
        return f"Lin({self.terms}, {self.const})"


@dataclass
class _Unit:
    kind: str  # "input", "lin", "max"
    level: int
    exprs: tuple  # lin: (e,), max: (w, a)
    sigma: Activation = IDENTITY
    offset: float = 0.0


@dataclass
class CompileStats:
    depth: int
    width: int
    max_units: int
    carry_units: int
    nnz: int

    def to_dict(self):
        return dict(self.__dict__)


class Graph:
    def __init__(self, input_dim: int):
        self.input_dim = input_dim
        self.units: list[_Unit] = [_Unit("input", 0, ()) for _ in range(input_dim)]
        self.level_sigma: dict[int, Activation] = {}

    def input(self, i: int) -> Lin:
        if not 0 <= i < self.input_dim:
            raise IndexError(f"input {i} out of range for dimension {self.input_dim}")
        return Lin({i: 1.0})

    def inputs(self) -> list[Lin]:
        return [self.input(i) for i in range(self.input_dim)]

    def _base_level(self, exprs) -> int:
        lv = 0
        for e in exprs:
            for k in e.terms:
                lv = max(lv, self.units[k].level)
        return lv + 1

    def _add(self, unit) -> Lin:
        self.units.append(unit)
        return Lin({len(self.units) - 1: 1.0})

    def lin(self, e: Lin) -> Lin:
        """Materialize ``e`` as a linear unit one layer after its inputs."""
        return self._add(_Unit("lin", self._base_level([e]), (e,)))

    def max(self, w: Lin, a: Lin, sigma: Activation = IDENTITY, offset: float = 0.0) -> Lin:
        """Unit ``offset + max(w, sigma(a))``; ``w`` wins ties."""
        w, a = Lin._coerce(w), Lin._coerce(a)
        lv = self._base_level([w, a])
        # one activation per layer: postpone past layers that use another one
        while self.level_sigma.get(lv, sigma) != sigma:
            lv += 1
        self.level_sigma[lv] = sigma
        return self._add(_Unit("max", lv, (w, a), sigma, float(offset)))

    def relu(self, e: Lin) -> Lin:
        return self.max(e, Lin.constant(0.0))

    def abs(self, e: Lin) -> Lin:
        return self.max(e, -e)

    def clip(self, e: Lin, bound: float = 1.0) -> Lin:
        """``min(max(e, -bound), bound)`` in two max layers."""
        neg_min = self.max(-e, Lin.constant(-bound))  # -min(e, bound)
        return self.max(-neg_min, Lin.constant(-bound))

    # ------------------------------------------------------------ compile

    def _reachable(self, outputs) -> set:
        seen = set()
        stack = [k for e in outputs for k in e.terms]
        while stack:
            k = stack.pop()
            if k in seen:
                continue
            seen.add(k)
            for e in self.units[k].exprs:
                stack.extend(e.terms)
        return seen

    def compile(self, outputs: list[Lin]) -> tuple[MCNNetwork, CompileStats]:
        outputs = [Lin._coerce(e) for e in outputs]
        live = self._reachable(outputs)
        live.update(range(self.input_dim))
        units = {k: self.units[k] for k in live}
        depth = max([u.level for u in units.values()] + [1])
        next_id = [len(self.units)]
        carries: dict[tuple[int, int], int] = {}
        resolved: dict[int, tuple] = {}

        def carry(k: int, lvl: int) -> int:
            u = units[k]
            if u.level == lvl:
                return k
            if u.level > lvl:
                raise AssertionError("unit read before it is computed")
            key = (k, lvl)
            if key not in carries:
                prev = carry(k, lvl - 1)
                nid = next_id[0]
                next_id[0] += 1
                units[nid] = _Unit("lin", lvl, (Lin({prev: 1.0}),))
                resolved[nid] = units[nid].exprs
                carries[key] = nid
            return carries[key]

        def resolve(e: Lin, lvl: int) -> Lin:
            terms = {}
            for k, v in e.terms.items():
                c = carry(k, lvl)
                terms[c] = terms.get(c, 0.0) + v
            return Lin(terms, e.const)

        for k in sorted(live):
            u = units[k]
            if u.kind != "input":
                resolved[k] = tuple(resolve(e, u.level - 1) for e in u.exprs)
        out_exprs = [resolve(e, depth) for e in outputs]
        if all(not e.terms for e in out_exprs):
            # a constant map still needs a unit so the readout has full row rank;
            # max(0, sigma(-1)) is 0 for identity, relu and binary-step alike
            nid = next_id[0]
            zero = (Lin.constant(0.0), Lin.constant(-1.0))
            units[nid] = _Unit("max", depth, zero, self.level_sigma.get(depth, IDENTITY))
            resolved[nid] = zero
            out_exprs = [Lin({nid: 1.0}, e.const) for e in out_exprs]

        by_level: dict[int, list[int]] = {lv: [] for lv in range(depth + 1)}
        for k, u in units.items():
            by_level[u.level].append(k)
        pos: list[dict[int, int]] = []
        order: list[tuple[list[int], list[int]]] = []
        for lv in range(depth + 1):
            ids = sorted(by_level[lv])
            lins = [k for k in ids if units[k].kind in ("lin", "input")]
            maxes = [k for k in ids if units[k].kind == "max"]
            if lv == 0:
                lins = list(range(self.input_dim))
            order.append((lins, maxes))
            pos.append({k: i for i, k in enumerate(lins + maxes)})

        def row(e: Lin, lvl: int, ncols: int):
            r = np.zeros(ncols)
            for k, v in e.terms.items():
                r[pos[lvl][k]] += v
            return r

        carry_ids = set(carries.values())
        layers = []
        n_max = n_carry = 0
        for lv in range(1, depth + 1):
            lins, maxes = order[lv]
            ncols = len(pos[lv - 1])
            Lw = np.array([row(resolved[k][0], lv - 1, ncols) for k in lins]).reshape(len(lins), ncols)
            Lb = np.array([resolved[k][0].const for k in lins])
            Ww = np.array([row(resolved[k][0], lv - 1, ncols) for k in maxes]).reshape(len(maxes), ncols)
            Wb = np.array([resolved[k][0].const for k in maxes])
            Aw = np.array([row(resolved[k][1], lv - 1, ncols) for k in maxes]).reshape(len(maxes), ncols)
            Ab = np.array([resolved[k][1].const for k in maxes])
            Tb = np.array([units[k].offset for k in maxes])
            layers.append(
                MCNLayer(
                    L=LinearMap(Lw, Lb),
                    W=LinearMap(Ww, Wb),
                    A=LinearMap(Aw, Ab),
                    Atilde=LinearMap(np.zeros((len(maxes), self.input_dim)), Tb),
                    sigma=self.level_sigma.get(lv, IDENTITY),
                    skip_index=lv - 1,
                )
            )
            n_max += len(maxes)
            n_carry += sum(1 for k in lins if k in carry_ids)
        ncols = len(pos[depth])
        psi = np.array([row(e, depth, ncols) for e in out_exprs]).reshape(len(out_exprs), ncols)
        readout = LinearMap(psi, [e.const for e in out_exprs])
        net = MCNNetwork(self.input_dim, tuple(layers), readout, IDENTITY, "fixed")
        stats = CompileStats(
            depth=depth,
            width=max(len(p) for p in pos[1:]) if depth else self.input_dim,
            max_units=n_max,
            carry_units=n_carry,
            nnz=net.nnz(),
        )
        return net, stats
