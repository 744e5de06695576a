"""Truncated multivariate Taylor arithmetic (jets).

A jet of order ``k`` in ``m`` variables stores the Taylor coefficients of a
smooth function at a point for every multi-index of total degree ``<= k``.
Coefficients live in a dense array indexed by a graded-lexicographic table,
so the jet of order ``k`` is exactly a prefix of the jet of order ``k + 1``
and truncation is slicing.

``Jet`` carries a leading "component" shape, so a whole tensor field of jets
is one object and products/contractions run as vectorised numpy calls.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

MAX_ORDER = 8

MultiIndex = tuple[int, ...]


class JetError(ArithmeticError):
    """Raised for invalid jet arithmetic (zero divisor, bad sqrt, mismatch)."""


def _graded_lex(nvars: int, order: int) -> list[MultiIndex]:
    out: list[MultiIndex] = []
    for deg in range(order + 1):
        level = []
        for combo in itertools.combinations_with_replacement(range(nvars), deg):
            e = [0] * nvars
            for v in combo:
                e[v] += 1
            level.append(tuple(e))
        # combinations_with_replacement already yields x1-heavy first, but be explicit
        level.sort(reverse=True)
        out.extend(level)
    return out


@dataclass(frozen=True, eq=False)
class _MulPlan:
    left: np.ndarray
    right: np.ndarray
    starts: np.ndarray


class MultiIndexTable:
    """Index bookkeeping shared by every jet with the same ``(nvars, order)``."""

    def __init__(self, nvars: int, order: int):
        if nvars < 1:
            raise ValueError("nvars must be positive")
        if not 0 <= order <= MAX_ORDER:
            raise ValueError(f"jet order must lie in [0, {MAX_ORDER}], got {order}")
        self.nvars = nvars
        self.order = order
        self.indices = _graded_lex(nvars, order)
        self.exponents = np.array(self.indices, dtype=np.int64).reshape(-1, nvars)
        self.degrees = self.exponents.sum(axis=1)
        self.position = {m: i for i, m in enumerate(self.indices)}
        self.sizes = [math.comb(nvars + k, k) for k in range(order + 1)]
        self.factorials = np.array(
            [math.prod(math.factorial(e) for e in m) for m in self.indices], dtype=float
        )
        self._mul: dict[int, _MulPlan] = {}
        self._deriv: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    def __len__(self) -> int:
        return len(self.indices)

    def size(self, order: int) -> int:
        return self.sizes[order]

    def mul_plan(self, order: int) -> _MulPlan:
        """Pairs (a, b) with deg(a) + deg(b) <= order, grouped by result index."""
        plan = self._mul.get(order)
        if plan is not None:
            return plan
        n = self.sizes[order]
        left, right, result = [], [], []
        for i in range(n):
            mi = self.indices[i]
            di = self.degrees[i]
            for j in range(self.sizes[order - di]):
                mj = self.indices[j]
                left.append(i)
                right.append(j)
                result.append(self.position[tuple(a + b for a, b in zip(mi, mj))])
        result = np.array(result)
        perm = np.argsort(result, kind="stable")
        starts = np.searchsorted(result[perm], np.arange(n))
        plan = _MulPlan(np.array(left)[perm], np.array(right)[perm], starts)
        self._mul[order] = plan
        return plan

    def deriv_plan(self, var: int, order: int) -> tuple[np.ndarray, np.ndarray]:
        """Source indices and factors mapping an order-``order`` jet to its
        ``var``-derivative of order ``order - 1``."""
        key = (var, order)
        plan = self._deriv.get(key)
        if plan is not None:
            return plan
        n = self.sizes[order - 1]
        src = np.empty(n, dtype=np.int64)
        fac = np.empty(n)
        for i in range(n):
            m = list(self.indices[i])
            fac[i] = m[var] + 1
            m[var] += 1
            src[i] = self.position[tuple(m)]
        self._deriv[key] = (src, fac)
        return src, fac


@functools.lru_cache(maxsize=None)
def get_table(nvars: int, order: int) -> MultiIndexTable:
    return MultiIndexTable(nvars, order)


def _rational_power_series(c0: float, alpha: Fraction | float, k: int) -> np.ndarray:
    """Taylor coefficients of t**alpha about t = c0, up to degree k."""
    coeffs = np.empty(k + 1)
    binom = 1.0
    for j in range(k + 1):
        coeffs[j] = binom * c0 ** (float(alpha) - j)
        binom *= (float(alpha) - j) / (j + 1)
    return coeffs


class Jet:
    """Array of truncated Taylor expansions sharing one multi-index table.

    ``coeffs`` has shape ``shape + (table.size(order),)``.  Arithmetic
    broadcasts over the leading shape like numpy and truncates to the lower
    of the two operand orders.
    """

    __array_priority__ = 100  # make ndarray * Jet defer to Jet.__rmul__

    def __init__(self, coeffs: np.ndarray, order: int, table: MultiIndexTable):
        coeffs = np.asarray(coeffs, dtype=float)
        if order < 0 or order > table.order:
            raise JetError(f"jet order {order} outside table order {table.order}")
        if coeffs.shape[-1] != table.size(order):
            raise JetError("coefficient count does not match the multi-index table")
        self.coeffs = coeffs
        self.order = order
        self.table = table

    # -- construction -------------------------------------------------
    @classmethod
    def constant(cls, value, table: MultiIndexTable, order: int | None = None) -> Jet:
        order = table.order if order is None else order
        value = np.asarray(value, dtype=float)
        c = np.zeros(value.shape + (table.size(order),))
        c[..., 0] = value
        return cls(c, order, table)

    @classmethod
    def variable(cls, var: int, value: float, table: MultiIndexTable, order: int | None = None) -> Jet:
        order = table.order if order is None else order
        j = cls.constant(value, table, order)
        if order >= 1:
            e = [0] * table.nvars
            e[var] = 1
            j.coeffs[table.position[tuple(e)]] = 1.0
        return j

    @staticmethod
    def stack(jets: Sequence[Jet], axis: int = 0) -> Jet:
        order = min(j.order for j in jets)
        table = jets[0].table
        for j in jets:
            if j.table is not table:
                raise JetError("cannot stack jets over different variable sets")
        if axis < 0:
            axis -= 1  # skip the coefficient axis
        coeffs = np.stack([j.truncate(order).coeffs for j in jets], axis=axis)
        return Jet(coeffs, order, table)

    # -- basic accessors ----------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[:-1]

    @property
    def value(self) -> np.ndarray | float:
        v = self.coeffs[..., 0]
        return float(v) if v.ndim == 0 else v.copy()

    def __repr__(self) -> str:
        return f"Jet(shape={self.shape}, order={self.order}, nvars={self.table.nvars})"

    def __getitem__(self, idx) -> Jet:
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.coeffs[idx + (Ellipsis, slice(None))], self.order, self.table)

    def truncate(self, order: int) -> Jet:
        if order > self.order:
            raise JetError(f"cannot raise jet order {self.order} to {order}")
        if order == self.order:
            return self
        return Jet(self.coeffs[..., : self.table.size(order)], order, self.table)

    def coeff(self, m: MultiIndex) -> np.ndarray | float:
        self._check_index(m)
        v = self.coeffs[..., self.table.position[tuple(m)]]
        return float(v) if np.ndim(v) == 0 else v

    def partial(self, m: MultiIndex) -> np.ndarray | float:
        """Mixed partial derivative d^|m| f / d xi^m at the expansion point."""
        self._check_index(m)
        pos = self.table.position[tuple(m)]
        v = self.coeffs[..., pos] * self.table.factorials[pos]
        return float(v) if np.ndim(v) == 0 else v

    def _check_index(self, m: MultiIndex) -> None:
        if len(m) != self.table.nvars:
            raise JetError(f"multi-index length {len(m)} != nvars {self.table.nvars}")
        if any(e < 0 for e in m):
            raise JetError("multi-index exponents must be non-negative")
        if sum(m) > self.order:
            raise JetError(f"degree {sum(m)} exceeds jet order {self.order}")

    # -- calculus ------------------------------------------------------
    def deriv(self, var: int) -> Jet:
        """Jet of the partial derivative along variable ``var`` (order drops by 1)."""
        if self.order < 1:
            raise JetError("insufficient jet order for differentiation")
        src, fac = self.table.deriv_plan(var, self.order)
        return Jet(self.coeffs[..., src] * fac, self.order - 1, self.table)

    def grad(self, variables: Sequence[int]) -> Jet:
        """Stack of derivatives; the new axis is appended after the component shape."""
        return Jet.stack([self.deriv(v) for v in variables], axis=-1)

    # -- arithmetic ----------------------------------------------------
    def _coerce(self, other) -> Jet | None:
        if isinstance(other, Jet):
            if other.table is not self.table:
                raise JetError("jet nvars/order mismatch")
            return other
        return None

    def _binary_add(self, other, sign: float) -> Jet:
        o = self._coerce(other)
        if o is None:
            other = np.asarray(other, dtype=float)
            shape = np.broadcast_shapes(self.shape, other.shape)
            c = np.broadcast_to(self.coeffs, shape + self.coeffs.shape[-1:]).copy()
            c[..., 0] += sign * other
            return Jet(c, self.order, self.table)
        k = min(self.order, o.order)
        a, b = self.truncate(k), o.truncate(k)
        return Jet(a.coeffs + sign * b.coeffs, k, self.table)

    def __add__(self, other) -> Jet:
        return self._binary_add(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other) -> Jet:
        return self._binary_add(other, -1.0)

    def __rsub__(self, other) -> Jet:
        return (-self) + other

    def __neg__(self) -> Jet:
        return Jet(-self.coeffs, self.order, self.table)

    def __pos__(self) -> Jet:
        return self

    def scale(self, factor) -> Jet:
        factor = np.asarray(factor, dtype=float)
        return Jet(self.coeffs * factor[..., None], self.order, self.table)

    def __mul__(self, other) -> Jet:
        o = self._coerce(other)
        if o is None:
            return self.scale(other)
        k = min(self.order, o.order)
        plan = self.table.mul_plan(k)
        a = self.truncate(k).coeffs
        b = o.truncate(k).coeffs
        prod = a[..., plan.left] * b[..., plan.right]
        return Jet(np.add.reduceat(prod, plan.starts, axis=-1), k, self.table)

    __rmul__ = __mul__

    def __truediv__(self, other) -> Jet:
        o = self._coerce(other)
        if o is None:
            other = np.asarray(other, dtype=float)
            if np.any(other == 0):
                raise JetError("division by zero")
            return self.scale(1.0 / other)
        return self * o.reciprocal()

    def __rtruediv__(self, other) -> Jet:
        return self.reciprocal() * other

    def __pow__(self, exponent) -> Jet:
        if isinstance(exponent, int) and exponent >= 0:
            result = Jet.constant(np.ones(self.shape), self.table, self.order)
            base = self
            e = exponent
            while e:
                if e & 1:
                    result = result * base
                e >>= 1
                if e:
                    base = base * base
            return result
        return self.pow_rational(exponent)

    def compose(self, series: np.ndarray) -> Jet:
        """Evaluate sum_j series[..., j] * (self - self.value)**j by Horner.

        ``series`` holds the univariate Taylor coefficients of the outer
        function about this jet's constant term, one row per component.
        """
        k = self.order
        u = Jet(self.coeffs.copy(), k, self.table)
        u.coeffs[..., 0] = 0.0
        series = np.asarray(series, dtype=float)
        result = Jet.constant(series[..., k], self.table, k)
        for j in range(k - 1, -1, -1):
            result = result * u
            result.coeffs[..., 0] += series[..., j]
        return result

    def pow_rational(self, exponent) -> Jet:
        alpha = Fraction(exponent).limit_denominator(10**6) if not isinstance(exponent, Fraction) else exponent
        c0 = np.asarray(self.coeffs[..., 0])
        if alpha.denominator != 1 and np.any(c0 <= 0):
            raise JetError("fractional power of a jet with non-positive value")
        if alpha < 0 and np.any(c0 == 0):
            raise JetError("negative power of a jet with zero value")
        series = np.vectorize(
            lambda c: _rational_power_series(float(c), alpha, self.order),
            signature="()->(k)",
        )(c0)
        return self.compose(series)

    def sqrt(self) -> Jet:
        if np.any(np.asarray(self.coeffs[..., 0]) <= 0):
            raise JetError("sqrt of a jet with non-positive value")
        return self.pow_rational(Fraction(1, 2))

    def reciprocal(self) -> Jet:
        c0 = np.asarray(self.coeffs[..., 0])
        if np.any(c0 == 0):
            raise JetError("division by a jet with zero value")
        k = self.order
        powers = np.arange(k + 1)
        # 1/(c0 + u) = sum_j (-1)^j u^j / c0^(j+1)
        series = (-1.0) ** powers / np.asarray(c0)[..., None] ** (powers + 1)
        return self.compose(series)

    # -- reductions ----------------------------------------------------
    def sum(self, axis=None) -> Jet:
        nd = len(self.shape)
        if axis is None:
            axis = tuple(range(nd))
        elif isinstance(axis, int):
            axis = (axis,)
        axis = tuple(a + nd if a < 0 else a for a in axis)
        return Jet(self.coeffs.sum(axis=axis), self.order, self.table)

    def transpose(self, *axes: int) -> Jet:
        nd = len(self.shape)
        axes = axes if axes else tuple(reversed(range(nd)))
        return Jet(np.transpose(self.coeffs, tuple(axes) + (nd,)), self.order, self.table)


def einsum(subscripts: str, a: Jet | np.ndarray, b: Jet | np.ndarray) -> Jet:
    """Tensor contraction of two jet arrays (or a jet array and a constant array).

    ``subscripts`` follows numpy's explicit form over the component axes only,
    e.g. ``"ij,jk->ik"``.
    """
    lhs, out = subscripts.split("->")
    sa, sb = lhs.split(",")
    if not isinstance(a, Jet) and not isinstance(b, Jet):
        raise JetError("einsum needs at least one jet operand")
    if not isinstance(a, Jet):
        return Jet(np.einsum(f"{sa},{sb}Z->{out}Z", a, b.coeffs), b.order, b.table)
    if not isinstance(b, Jet):
        return Jet(np.einsum(f"{sa}Z,{sb}->{out}Z", a.coeffs, b), a.order, a.table)
    if a.table is not b.table:
        raise JetError("jet nvars/order mismatch")
    k = min(a.order, b.order)
    plan = a.table.mul_plan(k)
    pa = a.truncate(k).coeffs[..., plan.left]
    pb = b.truncate(k).coeffs[..., plan.right]
    prod = np.einsum(f"{sa}Z,{sb}Z->{out}Z", pa, pb)
    return Jet(np.add.reduceat(prod, plan.starts, axis=-1), k, a.table)


def seed_variables(x: Sequence[float], y: Sequence[float], order: int) -> list[Jet]:
    """Jets of the coordinate functions x^1..x^n, y^1..y^n at the point (x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if y.size != n:
        raise JetError("x and y must have the same dimension")
    if n < 2:
        raise JetError("dimension must be at least 2")
    if order < 1 or order > MAX_ORDER:
        raise JetError(f"jet order must lie in [1, {MAX_ORDER}], got {order}")
    if not np.any(y):
        raise JetError("direction y must be nonzero")
    table = get_table(2 * n, order)
    values = np.concatenate([x, y])
    return [Jet.variable(v, values[v], table) for v in range(2 * n)]


def unit_index(nvars: int, *vars_: int) -> MultiIndex:
    """Multi-index with one unit per listed variable (repeats accumulate)."""
    e = [0] * nvars
    for v in vars_:
        e[v] += 1
    return tuple(e)
