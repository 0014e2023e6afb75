#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Truncated multivariate Taylor jets

A Jet carries the Taylor coefficients of order <= m of a function of d
variables at a base point. Arithmetic and the primitives exp, log, sin,
cos, pow and abs propagate jets exactly (no finite differences), so a
field written once against these functions evaluates on floats, on numpy
arrays and on jets alike.

Coefficients may carry a trailing batch shape: one Jet then holds the
jets at a whole grid of base points, which is how suprema over grids are
computed without Python loops over points.
"""

import logging
from dataclasses import dataclass, field as dataclass_field
from functools import lru_cache
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from constants import ABSOLUTE_ORDER_CAP, DEFAULT_M_MAX
from errors import DomainError, OrderError
from utils import multiindices, multi_factorial, unit_vector

logger = logging.getLogger(__name__)

Number = Union[float, int, np.ndarray]


class _Tables:
    """Index tables for truncated products of jets in d variables to order m"""

    def __init__(self, d: int, m: int):
        self.d = d
        self.m = m
        self.indices = multiindices(d, m)
        self.position = {alpha: i for i, alpha in enumerate(self.indices)}
        self.size = len(self.indices)
        self.degree = np.array([sum(alpha) for alpha in self.indices], dtype=float)
        self.factorial = np.array([multi_factorial(alpha) for alpha in self.indices], dtype=float)
        starts = [0]
        for k in range(1, m + 1):
            starts.append(starts[-1] + sum(1 for alpha in self.indices if sum(alpha) == k - 1))
        starts.append(self.size)
        self.blocks = [slice(starts[k], starts[k + 1]) for k in range(m + 1)]

        left, right, target = [], [], []
        for i, alpha in enumerate(self.indices):
            for j, beta in enumerate(self.indices):
                gamma = tuple(a + b for a, b in zip(alpha, beta))
                if sum(gamma) <= m:
                    left.append(i)
                    right.append(j)
                    target.append(self.position[gamma])
        self.left = np.array(left, dtype=int)
        self.right = np.array(right, dtype=int)
        self.target = np.array(target, dtype=int)

        self.block_triples = []
        for k in range(m + 1):
            block = self.blocks[k]
            mask = (self.target >= block.start) & (self.target < block.stop)
            self.block_triples.append((self.left[mask], self.right[mask], self.target[mask] - block.start))

        # shift tables for partial derivatives: coefficient of x^beta in d_i f
        self.partial_tables = []
        if m >= 1:
            lower = multiindices(d, m - 1)
            for i in range(d):
                src = [self.position[tuple(b + (1 if k == i else 0) for k, b in enumerate(beta))] for beta in lower]
                factor = [beta[i] + 1 for beta in lower]
                self.partial_tables.append((np.array(src, dtype=int), np.array(factor, dtype=float)))


@lru_cache(maxsize=None)
def _tables(d: int, m: int) -> _Tables:
    return _Tables(d, m)


def _expand(values: np.ndarray, batch_ndim: int) -> np.ndarray:
    """Reshape a per-coefficient vector so it broadcasts against batched coefficients"""
    return values.reshape(values.shape + (1,) * batch_ndim)


def _lift(taylor: np.ndarray, batch_ndim: int) -> np.ndarray:
    """Insert unit batch axes after the coefficient axis until taylor has batch_ndim batch axes"""
    missing = batch_ndim - (taylor.ndim - 1)
    if missing <= 0:
        return taylor
    return taylor.reshape((taylor.shape[0],) + (1,) * missing + taylor.shape[1:])


class Jet:
    """Truncated Taylor expansion of order <= m at a (possibly batched) base point"""

    # numpy operands defer to the Jet operators
    __array_ufunc__ = None

    def __init__(self, d: int, order: int, taylor: np.ndarray, base_point: Optional[np.ndarray] = None):
        """
        Initialize a jet from normalized Taylor coefficients

        Args:
            d: Number of variables
            order: Truncation order m
            taylor: Array of shape (n_multiindices,) + batch holding d^alpha f / alpha!
            base_point: Base point, shape (d,) + batch (informational)
        """
        if order < 0:
            raise OrderError(f"Jet order must be >= 0, got {order}")
        self.d = d
        self.order = order
        self._t = _tables(d, order)
        if taylor.shape[0] != self._t.size:
            raise ValueError(f"Expected {self._t.size} coefficients, got {taylor.shape[0]}")
        self.taylor = taylor
        self.base_point = base_point

    # construction

    @classmethod
    def variable(cls, i: int, base_point: Sequence[float], order: int) -> 'Jet':
        """Jet of the coordinate function x_i at base_point"""
        base = np.asarray(base_point, dtype=float)
        d = base.shape[0]
        tables = _tables(d, order)
        taylor = np.zeros((tables.size,) + base.shape[1:])
        taylor[0] = base[i]
        if order >= 1:
            taylor[tables.position[unit_vector(d, i)]] = 1.0
        return cls(d, order, taylor, base)

    @classmethod
    def variables(cls, base_point: Sequence[float], order: int) -> List['Jet']:
        """Jets of all coordinate functions at base_point"""
        base = np.asarray(base_point, dtype=float)
        return [cls.variable(i, base, order) for i in range(base.shape[0])]

    @classmethod
    def constant(cls, value: Number, d: int, order: int) -> 'Jet':
        """Jet of a constant function"""
        value = np.asarray(value, dtype=float)
        tables = _tables(d, order)
        taylor = np.zeros((tables.size,) + value.shape)
        taylor[0] = value
        return cls(d, order, taylor)

    def _like(self, taylor: np.ndarray, order: Optional[int] = None) -> 'Jet':
        return Jet(self.d, self.order if order is None else order, taylor, self.base_point)

    # accessors

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return self.taylor.shape[1:]

    @property
    def value(self) -> Number:
        return self.taylor[0]

    @property
    def coeffs(self) -> Dict[Tuple[int, ...], Number]:
        """Raw mixed partials d^alpha f (not divided by alpha!)"""
        return {alpha: self.derivative(alpha) for alpha in self._t.indices}

    def derivative(self, alpha: Sequence[int]) -> Number:
        """Raw mixed partial d^alpha f at the base point"""
        alpha = tuple(alpha)
        if sum(alpha) > self.order:
            raise OrderError(f"Multiindex {alpha} exceeds jet order {self.order}")
        i = self._t.position[alpha]
        return self.taylor[i] * self._t.factorial[i]

    def raw(self) -> np.ndarray:
        """All raw partials in graded order, shape (n_multiindices,) + batch"""
        return self.taylor * _expand(self._t.factorial, len(self.batch_shape))

    @property
    def gradient(self) -> np.ndarray:
        return np.array([self.derivative(unit_vector(self.d, i)) for i in range(self.d)])

    @property
    def hessian(self) -> np.ndarray:
        hess = np.empty((self.d, self.d) + self.batch_shape)
        for i in range(self.d):
            for j in range(self.d):
                alpha = [0] * self.d
                alpha[i] += 1
                alpha[j] += 1
                hess[i, j] = self.derivative(alpha)
        return hess

    def truncate(self, order: int) -> 'Jet':
        """Same jet to a lower order"""
        if order > self.order:
            raise OrderError(f"Cannot raise jet order from {self.order} to {order}")
        if order == self.order:
            return self
        size = _tables(self.d, order).size
        return self._like(self.taylor[:size].copy(), order)

    def partial(self, i: int) -> 'Jet':
        """Jet of d_i f, one order lower"""
        if self.order < 1:
            raise OrderError("Cannot differentiate a jet of order 0")
        src, factor = self._t.partial_tables[i]
        taylor = self.taylor[src] * _expand(factor, len(self.batch_shape))
        return Jet(self.d, self.order - 1, taylor, self.base_point)

    def taylor_polynomial(self, h: Sequence[float]) -> Number:
        """Evaluate sum_alpha d^alpha f / alpha! h^alpha"""
        h = np.asarray(h, dtype=float)
        total = np.zeros(self.batch_shape)
        for i, alpha in enumerate(self._t.indices):
            monomial = np.prod([h[k] ** alpha[k] for k in range(self.d)], axis=0)
            total = total + self.taylor[i] * monomial
        return total

    # arithmetic helpers

    def _coerce(self, other: 'Jet') -> Tuple['Jet', 'Jet']:
        if other.d != self.d:
            raise ValueError(f"Jet dimension mismatch: {self.d} vs {other.d}")
        order = min(self.order, other.order)
        a, b = self.truncate(order), other.truncate(order)
        ndim = max(len(a.batch_shape), len(b.batch_shape))
        return a._like(_lift(a.taylor, ndim)), b._like(_lift(b.taylor, ndim))

    def _scalar(self, other: Any) -> Tuple[np.ndarray, np.ndarray]:
        """Coefficients and a scalar operand lifted to a common batch rank"""
        other = np.asarray(other)
        return _lift(self.taylor, max(len(self.batch_shape), other.ndim)), other

    def _product(self, other: 'Jet') -> np.ndarray:
        t = self._t
        shape = np.broadcast_shapes(self.batch_shape, other.batch_shape)
        out = np.zeros((t.size,) + shape, dtype=np.result_type(self.taylor, other.taylor))
        np.add.at(out, t.target, self.taylor[t.left] * other.taylor[t.right])
        return out

    def _block_product(self, a: np.ndarray, b: np.ndarray, k: int) -> np.ndarray:
        """Degree-k block of the truncated product of coefficient arrays a and b"""
        t = self._t
        left, right, target = t.block_triples[k]
        block = t.blocks[k]
        shape = np.broadcast_shapes(a.shape[1:], b.shape[1:])
        out = np.zeros((block.stop - block.start,) + shape, dtype=np.result_type(a, b))
        np.add.at(out, target, a[left] * b[right])
        return out

    def _euler(self, taylor: np.ndarray) -> np.ndarray:
        """Euler operator sum x_i d_i on the displacement: scales the degree-k part by k"""
        return taylor * _expand(self._t.degree, taylor.ndim - 1)

    def _without_constant(self) -> np.ndarray:
        c = self.taylor.copy()
        c[0] = 0.0
        return c

    # operators

    def __neg__(self) -> 'Jet':
        return self._like(-self.taylor)

    def __pos__(self) -> 'Jet':
        return self

    def __add__(self, other: Any) -> 'Jet':
        if isinstance(other, Jet):
            a, b = self._coerce(other)
            return a._like(a.taylor + b.taylor)
        taylor, other = self._scalar(other)
        taylor = taylor + np.zeros(other.shape, dtype=np.result_type(taylor, other))
        taylor[0] = taylor[0] + other
        return self._like(taylor)

    __radd__ = __add__

    def __sub__(self, other: Any) -> 'Jet':
        return self + (-other)

    def __rsub__(self, other: Any) -> 'Jet':
        return (-self) + other

    def __mul__(self, other: Any) -> 'Jet':
        if isinstance(other, Jet):
            a, b = self._coerce(other)
            return a._like(a._product(b))
        taylor, other = self._scalar(other)
        return self._like(taylor * other)

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> 'Jet':
        if isinstance(other, Jet):
            return self * other.reciprocal()
        taylor, other = self._scalar(other)
        return self._like(taylor / other)

    def __rtruediv__(self, other: Any) -> 'Jet':
        return self.reciprocal() * other

    def __pow__(self, exponent: Any) -> 'Jet':
        return power(self, exponent)

    def __rpow__(self, base: Any) -> 'Jet':
        return power(base, self)

    def __abs__(self) -> 'Jet':
        return fabs(self)

    def __repr__(self) -> str:
        return f"Jet(d={self.d}, order={self.order}, value={self.value})"

    # primitives

    def exp(self) -> 'Jet':
        ec = self._euler(self.taylor)
        g = np.zeros_like(self.taylor)
        g[0] = np.exp(self.taylor[0])
        for k in range(1, self.order + 1):
            g[self._t.blocks[k]] = self._block_product(ec, g, k) / k
        return self._like(g)

    def log(self) -> 'Jet':
        c0 = self.taylor[0]
        if np.any(np.asarray(c0) <= 0):
            raise DomainError("log of a nonpositive value")
        ec = self._euler(self.taylor)
        tail = self._without_constant()
        g = np.zeros_like(self.taylor)
        g[0] = np.log(c0)
        eg = np.zeros_like(self.taylor)
        for k in range(1, self.order + 1):
            block = self._t.blocks[k]
            g[block] = (ec[block] - self._block_product(tail, eg, k)) / (k * c0)
            eg[block] = k * g[block]
        return self._like(g)

    def _power_series(self, r: float) -> 'Jet':
        """f**r by the recurrence c E(g) = r g E(c); requires f(x0) != 0"""
        c0 = self.taylor[0]
        ec = self._euler(self.taylor)
        tail = self._without_constant()
        g = np.zeros_like(self.taylor)
        g[0] = c0 ** r
        eg = np.zeros_like(self.taylor)
        for k in range(1, self.order + 1):
            block = self._t.blocks[k]
            g[block] = (r * self._block_product(ec, g, k) - self._block_product(tail, eg, k)) / (k * c0)
            eg[block] = k * g[block]
        return self._like(g)

    def reciprocal(self) -> 'Jet':
        if np.any(np.asarray(self.taylor[0]) == 0):
            raise DomainError("division by a jet with zero value")
        return self._power_series(-1.0)

    def _integer_power(self, n: int) -> 'Jet':
        result = Jet.constant(np.ones(self.batch_shape), self.d, self.order)
        base = self
        while n > 0:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    def pow(self, r: float) -> 'Jet':
        r = float(r)
        if r.is_integer() and r >= 0:
            return self._integer_power(int(r))
        c0 = np.asarray(self.taylor[0])
        if r.is_integer():
            if np.any(c0 == 0):
                raise DomainError(f"negative power {r} of a zero value")
            return self._power_series(r)
        if np.any(c0 <= 0):
            raise DomainError(f"non-integer power {r} of a nonpositive value")
        return self._power_series(r)

    def sin_cos(self) -> Tuple['Jet', 'Jet']:
        ec = self._euler(self.taylor)
        s = np.zeros_like(self.taylor)
        c = np.zeros_like(self.taylor)
        s[0] = np.sin(self.taylor[0])
        c[0] = np.cos(self.taylor[0])
        for k in range(1, self.order + 1):
            block = self._t.blocks[k]
            s[block] = self._block_product(ec, c, k) / k
            c[block] = -self._block_product(ec, s, k) / k
        return self._like(s), self._like(c)

    def abs(self) -> 'Jet':
        c0 = np.asarray(self.taylor[0])
        if np.any(c0 == 0):
            raise DomainError("abs is not differentiable at 0")
        return self * np.sign(c0)


# primitives acting on floats, arrays and jets alike

def exp(x: Any) -> Any:
    return x.exp() if isinstance(x, Jet) else np.exp(x)


def log(x: Any) -> Any:
    return x.log() if isinstance(x, Jet) else np.log(x)


def sin(x: Any) -> Any:
    return x.sin_cos()[0] if isinstance(x, Jet) else np.sin(x)


def cos(x: Any) -> Any:
    return x.sin_cos()[1] if isinstance(x, Jet) else np.cos(x)


def fabs(x: Any) -> Any:
    return x.abs() if isinstance(x, Jet) else np.abs(x)


def power(base: Any, exponent: Any) -> Any:
    if isinstance(exponent, Jet):
        if isinstance(base, Jet):
            return exp(exponent * base.log())
        return exp(exponent * np.log(base))
    if isinstance(base, Jet):
        exponent = np.asarray(exponent, dtype=float)
        if exponent.ndim:
            raise DomainError("jet powers need a scalar exponent")
        return base.pow(float(exponent))
    return np.power(np.asarray(base, dtype=float), exponent)


def sqrt(x: Any) -> Any:
    return power(x, 0.5)


# below this argument exp(-1/u) and all its derivatives vanish in double precision
_CUTOFF_FLOOR = 1.0 / 700.0


def smooth_cutoff(u: Any) -> Any:
    """
    exp(-1/u) for u > 0 and 0 otherwise: the C-infinity step behind every bump

    Args:
        u: Float, array or (batched) jet

    Returns:
        Same kind as u
    """
    if isinstance(u, Jet):
        inside = np.asarray(u.value) > _CUTOFF_FLOOR
        safe = u + np.where(inside, 0.0, 1.0 - np.asarray(u.value))
        return exp(-1.0 / safe) * inside.astype(float)
    u = np.asarray(u, dtype=float)
    inside = u > _CUTOFF_FLOOR
    with np.errstate(all='ignore'):
        return np.where(inside, np.exp(-1.0 / np.where(inside, u, 1.0)), 0.0)


@dataclass
class Domain:
    """
    Box or ball domain with optional excluded points

    A point is admissible when lower < x (or lower <= x when closed_lower),
    x < upper (or x <= upper when closed_upper), it lies strictly inside the
    ball when a radius is declared, and it is not an excluded point.
    """
    d: int = 1
    lower: Optional[Sequence[float]] = None
    upper: Optional[Sequence[float]] = None
    closed_lower: bool = True
    closed_upper: bool = True
    center: Optional[Sequence[float]] = None
    radius: Optional[float] = None
    excluded: List[Sequence[float]] = dataclass_field(default_factory=list)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Admissibility mask for points of shape (n, d) (or a single point)"""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.d:
            pts = pts.reshape(-1, self.d)
        mask = np.all(np.isfinite(pts), axis=1)
        if self.lower is not None:
            low = np.asarray(self.lower, dtype=float)
            mask &= np.all(pts >= low if self.closed_lower else pts > low, axis=1)
        if self.upper is not None:
            high = np.asarray(self.upper, dtype=float)
            mask &= np.all(pts <= high if self.closed_upper else pts < high, axis=1)
        if self.radius is not None:
            center = np.zeros(self.d) if self.center is None else np.asarray(self.center, dtype=float)
            mask &= np.linalg.norm(pts - center, axis=1) < self.radius
        for point in self.excluded:
            mask &= np.any(pts != np.asarray(point, dtype=float), axis=1)
        return mask

    def to_dict(self) -> Dict[str, Any]:
        return {
            'd': self.d, 'lower': None if self.lower is None else list(self.lower),
            'upper': None if self.upper is None else list(self.upper),
            'closed_lower': self.closed_lower, 'closed_upper': self.closed_upper,
            'center': None if self.center is None else list(self.center),
            'radius': self.radius, 'excluded': [list(p) for p in self.excluded],
        }


class ScalarField:
    """
    Jet-evaluable real function of d variables, optionally times a constant phase

    The rule takes a list of d coordinates (floats, arrays or jets) and
    returns the field built from the primitives of this module, so the same
    rule serves pointwise evaluation and exact differentiation.
    """

    def __init__(self, arity: int, rule: Callable[[List[Any]], Any], params: Optional[Dict[str, float]] = None,
                 domain: Optional[Domain] = None, m_max: int = DEFAULT_M_MAX, name: str = "",
                 phase: complex = 1.0, support: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
                 expr: Any = None, variables: Optional[Sequence[str]] = None):
        """
        Initialize a field

        Args:
            arity: Number of variables d
            rule: Generic evaluation rule
            params: Parameter bindings (informational; already bound in rule)
            domain: Declared domain (defaults to all of R^d)
            m_max: Declared maximum smoothness
            name: Label used in reports
            phase: Constant complex factor multiplying the real rule
            support: Bounding box (lower, upper) of a compact support, if known
            expr: Parsed expression the rule was compiled from, if any
            variables: Variable names
        """
        if arity < 1:
            raise ValueError(f"Field arity must be >= 1, got {arity}")
        if m_max > ABSOLUTE_ORDER_CAP:
            raise OrderError(f"m_max {m_max} exceeds the supported cap {ABSOLUTE_ORDER_CAP}")
        self.arity = arity
        self.rule = rule
        self.params = dict(params or {})
        self.domain = domain or Domain(d=arity)
        self.m_max = m_max
        self.name = name
        self.phase = phase
        self.support = support
        self.expr = expr
        self.variables = list(variables) if variables else (['t'] if arity == 1 else [f'x{i + 1}' for i in range(arity)])

    def real(self, points: np.ndarray) -> np.ndarray:
        """Evaluate the real rule at points of shape (n, d) (or a single point)"""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts).reshape(-1, self.arity)
        values = self.rule([pts[:, i] for i in range(self.arity)])
        values = np.broadcast_to(np.asarray(values, dtype=float), (pts.shape[0],)).copy()
        return values[0] if single else values

    def __call__(self, points: np.ndarray) -> np.ndarray:
        values = self.real(points)
        return values * self.phase if self.phase != 1.0 else values

    def with_phase(self, phase: complex) -> 'ScalarField':
        """Copy of this field multiplied by a constant phase"""
        return ScalarField(self.arity, self.rule, self.params, self.domain, self.m_max, self.name,
                           self.phase * phase, self.support, self.expr, self.variables)

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'arity': self.arity, 'params': self.params,
                'm_max': self.m_max, 'domain': self.domain.to_dict(),
                'phase': [float(np.real(self.phase)), float(np.imag(self.phase))]}

    def __repr__(self) -> str:
        return f"ScalarField({self.name or 'anonymous'}, d={self.arity})"


def _as_jet(value: Any, d: int, order: int) -> Jet:
    return value if isinstance(value, Jet) else Jet.constant(value, d, order)


def jet_eval(field: ScalarField, x: Sequence[float], order: int) -> Jet:
    """
    Jet of a field at x (or at every row of x for a batch of points)

    Args:
        field: Field to differentiate
        x: Point of shape (d,) or batch of points of shape (n, d)
        order: Jet order

    Returns:
        Jet whose coefficients are the exact mixed partials

    Raises:
        OrderError: If order exceeds field.m_max
        DomainError: If a point lies outside the field's domain or hits a non-smooth primitive
    """
    if order < 0 or order > field.m_max:
        raise OrderError(f"Order {order} outside [0, {field.m_max}] for field {field.name}")
    pts = np.asarray(x, dtype=float)
    batched = pts.ndim == 2
    if pts.shape[-1] != field.arity:
        raise ValueError(f"Point dimension {pts.shape[-1]} does not match field arity {field.arity}")
    inside = field.domain.contains(pts)
    if not np.all(inside):
        bad = pts[~inside][0] if batched else pts
        raise DomainError(f"Point {np.asarray(bad).tolist()} outside the domain of {field.name or 'field'}")
    base = pts.T if batched else pts
    with np.errstate(all='ignore'):
        result = field.rule(Jet.variables(base, order))
    jet = _as_jet(result, field.arity, order)
    if batched and jet.batch_shape != (pts.shape[0],):
        jet = Jet(jet.d, jet.order, np.broadcast_to(jet.taylor, (jet.taylor.shape[0], pts.shape[0])).copy(), base)
    if not np.all(np.isfinite(jet.taylor)):
        raise DomainError(f"Non-finite jet of {field.name or 'field'} (non-smooth point)")
    jet.base_point = base
    return jet


def pullback_jet(field: ScalarField, chart: Any, t: Sequence[float], order: int) -> Jet:
    """
    Jet of field o chart at local coordinates t

    Args:
        field: Field on the ambient space
        chart: Chart map with attributes dim, smoothness and a generic forward(coords)
        t: Local point of shape (d',) or batch (n, d'), inside the unit ball
        order: Jet order

    Returns:
        Jet in the d' local variables

    Raises:
        OrderError: If order exceeds the chart smoothness or field.m_max
        DomainError: If t is outside the unit ball or the image leaves the field domain
    """
    if order > getattr(chart, 'smoothness', ABSOLUTE_ORDER_CAP) or order > field.m_max:
        raise OrderError(f"Order {order} exceeds chart or field smoothness")
    local = np.asarray(t, dtype=float)
    if np.any(np.linalg.norm(np.atleast_2d(local), axis=-1) >= 1.0):
        raise DomainError("Local point outside the unit ball")
    base = local.T if local.ndim == 2 else local
    image = chart.forward(Jet.variables(base, order))
    values = np.broadcast_arrays(*[np.asarray(c.value if isinstance(c, Jet) else c, dtype=float) for c in image])
    image_points = np.stack(values, axis=0)
    image_points = image_points.T if image_points.ndim == 2 else image_points
    if not np.all(field.domain.contains(image_points)):
        raise DomainError(f"Chart image leaves the domain of {field.name or 'field'}")
    with np.errstate(all='ignore'):
        result = field.rule(image)
    jet = _as_jet(result, local.shape[-1], order)
    if not np.all(np.isfinite(jet.taylor)):
        raise DomainError(f"Non-finite pullback jet of {field.name or 'field'}")
    jet.base_point = base
    return jet


def compose(outer: Jet, inner: Sequence[Jet]) -> Jet:
    """
    Substitute inner jets into the Taylor polynomial of an outer jet

    outer is a jet in len(inner) variables taken at the point inner(0);
    the result is the jet of outer o inner to the inner order.

    Args:
        outer: Jet in the ambient variables
        inner: Jets of the ambient coordinates in local variables

    Returns:
        Jet in the local variables
    """
    if len(inner) != outer.d:
        raise ValueError(f"compose needs {outer.d} inner jets, got {len(inner)}")
    order = min(j.order for j in inner)
    if outer.order < order:
        raise OrderError(f"Outer jet order {outer.order} below inner order {order}")
    d_local = inner[0].d
    shifts = [j.truncate(order) - j.value for j in inner]
    powers = []
    for s in shifts:
        row = [Jet.constant(np.ones(s.batch_shape), d_local, order)]
        for _ in range(order):
            row.append(row[-1] * s)
        powers.append(row)
    result = None
    tables = _tables(outer.d, outer.order)
    for i, alpha in enumerate(tables.indices):
        if sum(alpha) > order:
            break
        term = powers[0][alpha[0]]
        for k in range(1, outer.d):
            term = term * powers[k][alpha[k]]
        term = term * outer.taylor[i]
        result = term if result is None else result + term
    result.base_point = inner[0].base_point
    return result


def dk_norm(jet: Jet, k: int) -> Number:
    """
    |d^k f| = sup over 1 <= |alpha| <= k of |d^alpha f|

    Args:
        jet: Jet (possibly batched)
        k: Highest derivative order

    Returns:
        Nonnegative float, or an array over the batch

    Raises:
        OrderError: If k is outside [1, jet.order]
    """
    if k < 1 or k > jet.order:
        raise OrderError(f"k={k} outside [1, {jet.order}]")
    stop = _tables(jet.d, jet.order).blocks[k].stop
    return np.max(np.abs(jet.raw()[1:stop]), axis=0)


def order_norms(jet: Jet) -> np.ndarray:
    """Per-order suprema sup_{|alpha| = k} |d^alpha f| for k = 0..order, shape (order+1,) + batch"""
    t = _tables(jet.d, jet.order)
    raw = np.abs(jet.raw())
    return np.stack([np.max(raw[t.blocks[k]], axis=0) for k in range(jet.order + 1)], axis=0)
