#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Mollifiers with moment conditions and unit-ball Littlewood-Paley operators

    P_j f(x, h) = 2^(dj) int f(x - z) sum_{k<=m} 2^(kj) ((h.grad)^k phi)(2^j z) / k! dz

For fixed x the h-dependence is the degree-m Taylor polynomial of
P_j f(x + h, 0), so the coefficient of h^alpha is the phi-average of
d^alpha f / alpha! over the ball of radius 2^-j around x. That transfer
form is the default; the kernel form differentiates phi instead.
"""

import math
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

import jets
from constants import (
    DEFAULT_ANGULAR_NODES, DEFAULT_GRID_POINTS, DEFAULT_TANH_SINH_LEVEL, GAUSS_LEGENDRE_ORDER,
    MIN_NODES_PER_AXIS, MOMENT_TOLERANCE, RICHARDSON_TOLERANCE,
)
from errors import DomainError, MomentSystemError, OrderError, ResolutionError
from jets import Jet, ScalarField, jet_eval
from tameness import EpsilonCertificate, ball_grid, order_sups
from utils import multiindices, multi_factorial, parallel_map, retry

logger = logging.getLogger(__name__)

TANH_SINH_SPAN = 3.2
GAUSS_PANELS = 4


@dataclass
class QuadratureRule:
    """Nodes and weights on the open unit ball with the gap 1 - |t|^2 computed without cancellation"""
    name: str
    nodes: np.ndarray
    weights: np.ndarray
    gap: np.ndarray
    nodes_per_axis: int

    @property
    def d(self) -> int:
        return self.nodes.shape[1]


def _tanh_sinh_1d(level: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Nodes x, weights, 1 - x and 1 + x of the tanh-sinh rule on (-1, 1)"""
    h = 4.0 * 2.0 ** (-level)
    count = int(math.ceil(TANH_SINH_SPAN / h))
    k = np.arange(-count, count + 1) * h
    u = 0.5 * np.pi * np.sinh(k)
    with np.errstate(over='ignore'):
        weights = h * 0.5 * np.pi * np.cosh(k) / np.cosh(u) ** 2
        lower = 2.0 / (1.0 + np.exp(2.0 * u))
        upper = 2.0 / (1.0 + np.exp(-2.0 * u))
    x = np.tanh(u)
    keep = (weights > 0) & (lower > 0) & (upper > 0)
    return x[keep], weights[keep], lower[keep], upper[keep]


@lru_cache(maxsize=None)
def tanh_sinh_rule(d: int, level: int = DEFAULT_TANH_SINH_LEVEL, angular: int = DEFAULT_ANGULAR_NODES) -> QuadratureRule:
    """
    Double-exponential rule on the unit ball

    d = 1: tanh-sinh on (-1, 1). d = 2: tanh-sinh in the radius times a
    trapezoid rule in the angle, so discrete mixed moments of a radial
    weight vanish exactly whenever the radial moments do.
    """
    x, w, lower, upper = _tanh_sinh_1d(level)
    if d == 1:
        return QuadratureRule('tanh-sinh', x.reshape(-1, 1), w, lower * upper, len(x))
    if d == 2:
        r = 0.5 * upper
        gap = 0.5 * lower * (1.0 + r)
        n_theta = 2 * angular
        theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
        rr, tt = np.meshgrid(r, theta, indexing='ij')
        nodes = np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=-1).reshape(-1, 2)
        weights = np.outer(0.5 * w * r, np.full(n_theta, 2.0 * np.pi / n_theta)).reshape(-1)
        gaps = np.repeat(gap, n_theta)
        return QuadratureRule('tanh-sinh-polar', nodes, weights, gaps, len(r))
    raise ValueError(f"Mollifier quadrature supports d <= 2, got {d}")


@lru_cache(maxsize=None)
def gauss_rule(d: int, order: int = GAUSS_LEGENDRE_ORDER, panels: int = GAUSS_PANELS) -> QuadratureRule:
    """Composite tensor Gauss-Legendre rule on the cube [-1, 1]^d restricted to the open ball"""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(-1.0, 1.0, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    axis = (mid[:, None] + half[:, None] * x[None, :]).reshape(-1)
    axis_w = (half[:, None] * w[None, :]).reshape(-1)
    mesh = np.stack(np.meshgrid(*([axis] * d), indexing='ij'), axis=-1).reshape(-1, d)
    weights = np.prod(np.stack(np.meshgrid(*([axis_w] * d), indexing='ij'), axis=-1).reshape(-1, d), axis=1)
    gap = 1.0 - np.sum(mesh * mesh, axis=1)
    keep = gap > 0
    return QuadratureRule('gauss-legendre', mesh[keep], weights[keep], gap[keep], len(axis))


def quadrature_rule(d: int, rule: str = 'tanh-sinh', level: int = DEFAULT_TANH_SINH_LEVEL) -> QuadratureRule:
    if rule == 'tanh-sinh':
        return tanh_sinh_rule(d, level)
    if rule == 'gauss':
        return gauss_rule(d, GAUSS_LEGENDRE_ORDER, GAUSS_PANELS * 2 ** max(0, level - DEFAULT_TANH_SINH_LEVEL))
    raise ValueError(f"Unknown quadrature rule: {rule}")


@dataclass
class Mollifier:
    """phi(t) = p(|t|^2) exp(-1 / (1 - |t|^2)), even, unit mass, vanishing moments up to moment_order"""
    d: int
    m: int
    moment_order: int
    coeffs: np.ndarray
    rule: QuadratureRule
    kind: str
    level: int
    moment_error: float = 0.0

    def __call__(self, coords: Sequence[Any]) -> Any:
        """Generic evaluation on local coordinates (floats, arrays or jets)"""
        s = 0.0
        for c in coords:
            s = s + c * c
        return _poly(self.coeffs, s) * jets.smooth_cutoff(1.0 - s)

    def values(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.d)
        s = np.sum(pts * pts, axis=1)
        return _poly(self.coeffs, s) * jets.smooth_cutoff(1.0 - s)

    def rule_values(self) -> np.ndarray:
        """phi at the rule nodes, using the stable gap"""
        return _poly(self.coeffs, 1.0 - self.rule.gap) * jets.smooth_cutoff(self.rule.gap)

    def moments(self) -> Dict[Tuple[int, ...], float]:
        """Discrete moments int t^alpha phi for |alpha| <= moment_order"""
        phi = self.rule.weights * self.rule_values()
        out = {}
        for alpha in multiindices(self.d, self.moment_order):
            monomial = np.prod(self.rule.nodes ** np.asarray(alpha), axis=1)
            out[alpha] = float(np.dot(phi, monomial))
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {'d': self.d, 'm': self.m, 'moment_order': self.moment_order, 'coeffs': self.coeffs.tolist(),
                'rule': self.rule.name, 'level': self.level, 'moment_error': self.moment_error}


def _poly(coeffs: np.ndarray, s: Any) -> Any:
    value = float(coeffs[-1])
    for c in coeffs[-2::-1]:
        value = value * s + float(c)
    return value


def _moment_error(moments: Dict[Tuple[int, ...], float]) -> float:
    return max(abs(v - (1.0 if sum(a) == 0 else 0.0)) for a, v in moments.items())


def _escalate(kwargs: Dict[str, Any], attempt: int):
    kwargs['level'] = kwargs.get('level', DEFAULT_TANH_SINH_LEVEL) + 1


@retry(max_attempts=2, exceptions=(MomentSystemError,), refine=_escalate)
def _solve_mollifier(d: int, m: int, moment_order: int, rule: str = 'tanh-sinh',
                     level: int = DEFAULT_TANH_SINH_LEVEL) -> Mollifier:
    quad = quadrature_rule(d, rule, level)
    s = 1.0 - quad.gap
    bump = jets.smooth_cutoff(quad.gap)
    q = moment_order // 2
    system = np.array([[np.dot(quad.weights, s ** (i + l) * bump) for l in range(q + 1)] for i in range(q + 1)])
    rhs = np.zeros(q + 1)
    rhs[0] = 1.0
    try:
        if np.linalg.cond(system) > 1e14:
            raise MomentSystemError(f"Moment system is ill-conditioned at level {level}")
        coeffs = scipy.linalg.solve(system, rhs)
    except scipy.linalg.LinAlgError as e:
        raise MomentSystemError(f"Singular moment system at level {level}: {e}")
    mollifier = Mollifier(d, m, moment_order, coeffs, quad, rule, level)
    mollifier.moment_error = _moment_error(mollifier.moments())
    if mollifier.moment_error > MOMENT_TOLERANCE:
        raise MomentSystemError(f"Moment conditions fail by {mollifier.moment_error:.2e} at level {level}")
    return mollifier


@lru_cache(maxsize=None)
def make_mollifier(d: int, m: int, moment_order: Optional[int] = None, rule: str = 'tanh-sinh',
                   level: int = DEFAULT_TANH_SINH_LEVEL) -> Mollifier:
    """
    Even mollifier supported in the unit ball with unit mass and vanishing
    moments of orders 1..moment_order (default m)

    Cancelling every order up to m makes P_j reproduce polynomials of
    degree <= m in both x and h; moment_order = m - 1 gives the smaller
    system.

    Odd moments vanish by symmetry; the even ones give a small linear
    system for the coefficients of p, solved on the quadrature rule itself.
    A singular or inaccurate system is retried once at a finer level.

    Args:
        d: Dimension (1 or 2)
        m: Order of the Littlewood-Paley operators (<= 6)
        moment_order: Highest vanishing moment order (default m)
        rule: 'tanh-sinh' (default) or 'gauss'
        level: Quadrature refinement level

    Returns:
        Mollifier

    Raises:
        MomentSystemError: If the system stays singular after the retry
    """
    if d not in (1, 2):
        raise ValueError(f"Mollifiers are built for d in (1, 2), got {d}")
    if not 1 <= m <= 6:
        raise OrderError(f"Mollifier order must lie in [1, 6], got {m}")
    moment_order = m if moment_order is None else moment_order
    mollifier = _solve_mollifier(d, m, moment_order, rule=rule, level=level)
    logger.debug(f"Mollifier d={d} m={m}: p coefficients {mollifier.coeffs.tolist()}, "
                 f"moment error {mollifier.moment_error:.2e}")
    return mollifier


@dataclass
class LPValue:
    """P_j f(x, .) as a degree-m polynomial in h"""
    j: int
    x: np.ndarray
    h: np.ndarray
    value: float
    coeffs: np.ndarray
    indices: Tuple[Tuple[int, ...], ...]
    method: str
    richardson: Optional[float] = None

    def evaluate(self, h: Any) -> Any:
        """Polynomial at h of shape (d,) or (n, d)"""
        h = np.asarray(h, dtype=float)
        hh = h.reshape(-1, len(self.x))
        total = np.zeros(len(hh))
        for c, alpha in zip(self.coeffs, self.indices):
            total = total + c * np.prod(hh ** np.asarray(alpha), axis=1)
        return total[0] if h.ndim == 1 else total

    def derivative(self, beta: Sequence[int], h: Any) -> Any:
        """d^beta_h of the polynomial at h"""
        beta = tuple(beta)
        h = np.asarray(h, dtype=float)
        hh = h.reshape(-1, len(self.x))
        total = np.zeros(len(hh))
        for c, alpha in zip(self.coeffs, self.indices):
            if any(a < b for a, b in zip(alpha, beta)):
                continue
            factor = math.prod(math.factorial(a) // math.factorial(a - b) for a, b in zip(alpha, beta))
            rest = np.asarray(alpha) - np.asarray(beta)
            total = total + c * factor * np.prod(hh ** rest, axis=1)
        return total[0] if h.ndim == 1 else total

    def partials_at_zero(self) -> Dict[Tuple[int, ...], float]:
        """alpha! times the h^alpha coefficient, the approximations of d^alpha f(x)"""
        return {alpha: float(c) * multi_factorial(alpha) for c, alpha in zip(self.coeffs, self.indices)}

    def to_dict(self) -> Dict[str, Any]:
        return {'j': self.j, 'x': self.x.tolist(), 'h': self.h.tolist(), 'value': self.value,
                'coeffs': {','.join(map(str, a)): float(c) for c, a in zip(self.coeffs, self.indices)},
                'method': self.method, 'richardson': self.richardson}


def _coefficients(field: ScalarField, j: int, x: np.ndarray, mollifier: Mollifier, method: str) -> np.ndarray:
    rule = mollifier.rule
    scale = 2.0 ** (-j)
    weights = rule.weights * mollifier.rule_values()
    keep = weights != 0
    if method == 'transfer':
        points = x[None, :] - scale * rule.nodes[keep]
        jet = jet_eval(field, points, mollifier.m)
        return jet.taylor @ weights[keep]
    if method == 'kernel':
        points = x[None, :] - scale * rule.nodes[keep]
        values = np.asarray(field.real(points), dtype=float)
        with np.errstate(all='ignore'):
            phi = mollifier(Jet.variables(rule.nodes[keep].T, mollifier.m))
        degree = np.array([sum(a) for a in multiindices(mollifier.d, mollifier.m)], dtype=float)
        return (phi.taylor @ (rule.weights[keep] * values)) * 2.0 ** (degree * j)
    raise ValueError(f"Unknown projection method: {method}")


def lp_project(field: ScalarField, j: int, x: Sequence[float], h: Optional[Sequence[float]] = None,
               mollifier: Optional[Mollifier] = None, m: int = 4, method: str = 'transfer',
               check: bool = True) -> LPValue:
    """
    Littlewood-Paley projection P_j f(x, h) with its full h-polynomial

    Args:
        field: Field on the unit ball
        j: Scale (>= 0)
        x: Point with |x| <= 1 - 2^-j
        h: Increment (defaults to 0)
        mollifier: Mollifier (defaults to make_mollifier(d, m))
        m: Operator order when no mollifier is given
        method: 'transfer' (phi-averages of the Taylor coefficients of f) or
            'kernel' (derivatives of phi against values of f)
        check: Compare with the next coarser rule (two-level Richardson check)

    Returns:
        LPValue

    Raises:
        DomainError: If x is too close to the boundary
        ResolutionError: If the two quadrature levels disagree by more than 1e-6
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    d = len(x)
    mollifier = mollifier or make_mollifier(d, m)
    if mollifier.d != d:
        raise ValueError(f"Mollifier dimension {mollifier.d} does not match x")
    if j < 0:
        raise ValueError(f"Scale j must be >= 0, got {j}")
    if np.linalg.norm(x) > 1.0 - 2.0 ** (-j) + 1e-15:
        raise DomainError(f"|x| = {np.linalg.norm(x):.6g} exceeds 1 - 2^-{j}")
    if mollifier.rule.nodes_per_axis < MIN_NODES_PER_AXIS:
        raise ResolutionError(f"Only {mollifier.rule.nodes_per_axis} nodes per axis in the kernel support")
    h = np.zeros(d) if h is None else np.asarray(h, dtype=float).reshape(-1)

    coeffs = _coefficients(field, j, x, mollifier, method)
    indices = multiindices(d, mollifier.m)
    result = LPValue(j, x, h, 0.0, coeffs, indices, method)
    result.value = float(result.evaluate(h))

    if check and mollifier.level > 1:
        coarse = make_mollifier(d, mollifier.m, mollifier.moment_order, mollifier.kind, mollifier.level - 1)
        other = LPValue(j, x, h, 0.0, _coefficients(field, j, x, coarse, method), indices, method)
        gap = abs(float(other.evaluate(h)) - result.value)
        result.richardson = gap
        if gap > RICHARDSON_TOLERANCE * max(1.0, abs(result.value)):
            raise ResolutionError(f"P_{j} f at {x.tolist()}: quadrature levels disagree by {gap:.2e}")
    return result


def _probe_points(d: int, j: int, grid: int) -> np.ndarray:
    """Grid points with |x| <= 1 - 2^-j"""
    nodes = ball_grid(d, grid)
    return nodes[np.linalg.norm(nodes, axis=1) <= 1.0 - 2.0 ** (-j)]


def bigfinish_constant(sups: Sequence[float], eps: float, ell: int, m: int) -> float:
    """Smallest K with A_k <= K eps^-k eps^ell A_ell for ell <= k <= m"""
    base = sups[ell]
    worst = max(eps ** (k - ell) * sups[k] for k in range(ell, m + 1))
    if base == 0:
        return 0.0 if worst == 0 else math.inf
    return float(worst / base)


def verify_finitetype(field: ScalarField, cert: EpsilonCertificate, grid: int = DEFAULT_GRID_POINTS,
                      j_range: Sequence[int] = (2, 3, 4), probe: int = 16, threads: Optional[int] = None,
                      mollifier: Optional[Mollifier] = None) -> Dict[str, Any]:
    """
    Empirical constants of the finite-type conclusion and of the projection error bound

    Measures K in sup|d^a f| <= K eps^-|a| sup_{|b|=ell} eps^ell |d^b f| for
    ell <= |a| <= m on the grid and on the doubled grid, and the constant in
    |P_j f(x, 0) - f(x)| <= K' 2^(-j ell) sup_{|b|=ell} |d^b f| over probe points
    for every resolved scale. Unresolved scales are excluded and listed.

    Returns:
        Report dictionary with 'passed' set when both constants are finite
        and the grid refinement changes K by at most a factor 2
    """
    m, ell, eps = cert.m, cert.ell, cert.epsilon
    d = field.arity
    sups = order_sups(field, m, grid)
    sups_fine = order_sups(field, m, 2 * grid)
    K = bigfinish_constant(sups, eps, ell, m)
    K_fine = bigfinish_constant(sups_fine, eps, ell, m)
    if K == 0 and K_fine == 0:
        stability = 1.0
    elif K == 0 or not math.isfinite(K) or not math.isfinite(K_fine):
        stability = math.inf
    else:
        stability = max(K, K_fine) / min(K, K_fine)

    mollifier = mollifier or make_mollifier(d, m)
    lp_constants, excluded = {}, []
    for j in j_range:
        points = _probe_points(d, j, probe)

        def error_at(x, j=j):
            try:
                value = lp_project(field, j, x, mollifier=mollifier).value
            except ResolutionError:
                return None
            return abs(value - float(field.real(x)))

        errors = parallel_map(error_at, points, threads)
        if any(e is None for e in errors):
            excluded.append(j)
            continue
        unit = 2.0 ** (-j * ell) * sups[ell]
        worst = max(errors) if errors else 0.0
        lp_constants[str(j)] = 0.0 if worst == 0 else (worst / unit if unit > 0 else math.inf)

    finite = math.isfinite(K) and all(math.isfinite(v) for v in lp_constants.values())
    report = {
        'epsilon': eps, 'm': m, 'ell': ell, 'order_sups': list(map(float, sups)),
        'bigfinish_constant': K, 'bigfinish_constant_refined': K_fine, 'refinement_ratio': stability,
        'lpest1_constants': lp_constants, 'excluded_scales': excluded,
        'passed': bool(finite and stability <= 2.0),
    }
    logger.info(f"verify_finitetype {field.name}: K={K:.4g} (refined {K_fine:.4g}), lp constants {lp_constants}")
    return report


def lp_uniform_bound(field: ScalarField, j: int, points: np.ndarray, increments: np.ndarray,
                     mollifier: Mollifier) -> Dict[str, Any]:
    """
    Largest |d^b_h P_j f(x,h)| / (2^(j|b|) (1 + (2^j |h|)^(m-|b|)) sup|f|) over probes and |b| <= m
    """
    d = mollifier.d
    sup_f = float(np.max(np.abs(field.real(ball_grid(d, 256)))))
    worst, witness = 0.0, None
    for x in np.atleast_2d(points):
        lp = lp_project(field, j, x, mollifier=mollifier, check=False)
        for h in np.atleast_2d(increments):
            for beta in multiindices(d, mollifier.m):
                k = sum(beta)
                scale = 2.0 ** (j * k) * (1.0 + (2.0 ** j * np.linalg.norm(h)) ** (mollifier.m - k)) * sup_f
                if scale == 0:
                    continue
                ratio = abs(float(lp.derivative(beta, h))) / scale
                if ratio > worst:
                    worst, witness = ratio, {'x': x.tolist(), 'h': np.asarray(h).tolist(), 'beta': list(beta)}
    return {'j': j, 'constant': worst, 'witness': witness}


def lp_convergence(field: ScalarField, x: Sequence[float], mollifier: Mollifier,
                   j_range: Sequence[int] = (2, 3, 4, 5)) -> Dict[str, Any]:
    """
    Errors of alpha! [h^alpha] P_j f(x, .) against d^alpha f(x) across scales

    The error for order |alpha| decays like 2^(-j (m - |alpha|)); the
    normalized constants err * 2^(j (m - |alpha|)) are reported per order.
    """
    x = np.asarray(x, dtype=float)
    exact = jet_eval(field, x, mollifier.m)
    rows = []
    for j in j_range:
        lp = lp_project(field, j, x, mollifier=mollifier, check=False)
        partials = lp.partials_at_zero()
        for alpha, approx in partials.items():
            error = abs(approx - float(exact.derivative(alpha)))
            k = sum(alpha)
            rows.append({'j': j, 'alpha': list(alpha), 'error': error,
                         'normalized': error * 2.0 ** (j * (mollifier.m - k))})
    constants: Dict[str, float] = {}
    for row in rows:
        key = str(sum(row['alpha']))
        constants[key] = max(constants.get(key, 0.0), row['normalized'])
    return {'x': x.tolist(), 'rows': rows, 'constants': constants}
