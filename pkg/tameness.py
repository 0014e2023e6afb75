#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Tameness constants of convex phases and the finite-type epsilon finder

A convex f with f(0) = 0 is tame on (0, T] to order m when
|f|^(k-1) |f^(k)| <= C |f'|^k for 2 <= k <= m. The constant is
invariant under f -> a f(t / b), so it is computed on grids laid out
relative to the interval.
"""

import math
import logging
from dataclasses import dataclass, field as dataclass_field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from constants import (
    CONVEXITY_TOLERANCE, DEFAULT_GRID_POINTS, EPSILON_LATTICE_STEP,
)
from errors import ConvexityError, DomainError, OrderError
from jets import Domain, Jet, ScalarField, jet_eval, order_norms
from utils import geometric_grid, interior_grid, parallel_map, sphere_directions

logger = logging.getLogger(__name__)

# per-axis cap for two-dimensional suprema
MAX_GRID_2D = 96
ORIGIN_TOLERANCE = 1e-12


@dataclass
class TamenessReport:
    """Grid tameness constant with its per-order breakdown"""
    m: int
    constant: float
    per_order: Dict[int, float]
    argmax: Dict[int, float]
    grid: Dict[str, Any]
    violations: List[Dict[str, Any]] = dataclass_field(default_factory=list)
    per_ray: List[Dict[str, Any]] = dataclass_field(default_factory=list)

    def rows(self) -> List[List[Any]]:
        """CSV rows (k, constant, t_argmax)"""
        return [[k, self.per_order[k], self.argmax[k]] for k in sorted(self.per_order)]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'm': self.m, 'C': self.constant,
            'per_order': {str(k): v for k, v in sorted(self.per_order.items())},
            'argmax': {str(k): v for k, v in sorted(self.argmax.items())},
            'grid': self.grid, 'violations': self.violations, 'per_ray': self.per_ray,
        }


def tameness_ratios(jet: Jet, m: int) -> Dict[int, np.ndarray]:
    """
    |f|^(k-1) |f^(k)| / |f'|^k along a batch of one-dimensional jets

    Products are formed in log space so tiny but nonzero values do not
    underflow. f' = 0 gives 0 where f = 0 and infinity elsewhere.
    """
    f = np.abs(np.asarray(jet.derivative((0,)), dtype=float))
    f1 = np.abs(np.asarray(jet.derivative((1,)), dtype=float))
    ratios = {}
    with np.errstate(divide='ignore', invalid='ignore'):
        log_f = np.log(f)
        log_f1 = np.log(f1)
        for k in range(2, m + 1):
            fk = np.abs(np.asarray(jet.derivative((k,)), dtype=float))
            value = np.exp((k - 1) * log_f + np.log(fk) - k * log_f1)
            value = np.where((f == 0) | (fk == 0), 0.0, value)
            value = np.where((f1 == 0) & (f != 0), np.inf, value)
            value = np.where((f1 == 0) & (f == 0), 0.0, value)
            ratios[k] = value
    return ratios


def check_convexity(second: np.ndarray, nodes: np.ndarray, direction: Optional[Sequence[float]] = None):
    """
    Raise ConvexityError unless f'' >= -tol on the grid

    The tolerance is relative to max(1, max |f''|).
    """
    second = np.asarray(second, dtype=float)
    tol = CONVEXITY_TOLERANCE * max(1.0, float(np.max(np.abs(second))) if second.size else 1.0)
    bad = np.nonzero(second < -tol)[0]
    if len(bad):
        i = int(bad[0])
        witness = {'t': float(nodes[i]), 'second_derivative': float(second[i])}
        if direction is not None:
            witness['direction'] = [float(v) for v in direction]
        raise ConvexityError(f"Phase is not convex: f''={second[i]:.3e} at t={nodes[i]:.6g}", witness)


def check_origin(field: ScalarField, direction: Optional[Sequence[float]] = None):
    """DomainError unless f(0) = 0 and f'(0) >= 0 (skipped when 0 is outside the declared domain)"""
    if field.domain is not None and not field.domain.contains(np.zeros((1, 1)))[0]:
        return
    with np.errstate(all='ignore'):
        jet = jet_eval(field, np.zeros(1), 1)
    value, slope = float(jet.value), float(np.ravel(jet.gradient)[0])
    if not (math.isfinite(value) and math.isfinite(slope)):
        return
    where = "" if direction is None else f" along {list(np.round(direction, 12))}"
    if abs(value) > ORIGIN_TOLERANCE:
        raise DomainError(f"Tameness needs f(0) = 0{where}, got {value:.6g}")
    if slope < -ORIGIN_TOLERANCE:
        raise DomainError(f"Tameness needs f'(0) >= 0{where}, got {slope:.6g}")


def tameness_constant(field: ScalarField, T: float = 1.0, m: int = 2, grid: int = DEFAULT_GRID_POINTS,
                      direction: Optional[Sequence[float]] = None) -> TamenessReport:
    """
    Grid tameness constant of a one-dimensional convex field on (0, T]

    Args:
        field: One-dimensional field
        T: Right endpoint of the interval
        m: Order (>= 2)
        grid: Number of grid nodes (half of them geometric towards 0)
        direction: Ray direction, recorded in witnesses for radial use

    Returns:
        TamenessReport

    Raises:
        OrderError: If m < 2 or m exceeds the field smoothness
        DomainError: If f(0) != 0 or f'(0) < 0
        ConvexityError: If f'' < 0 somewhere on the grid
    """
    if m < 2:
        raise OrderError(f"Tameness needs m >= 2, got {m}")
    if field.arity != 1:
        raise ValueError("tameness_constant needs a one-dimensional field")
    check_origin(field, direction)
    nodes = geometric_grid(T, grid)
    jet = jet_eval(field, nodes.reshape(-1, 1), m)
    check_convexity(jet.derivative((2,)), nodes, direction)

    ratios = tameness_ratios(jet, m)
    per_order, argmax, violations = {}, {}, []
    for k, values in ratios.items():
        i = int(np.argmax(values))
        per_order[k] = float(values[i])
        argmax[k] = float(nodes[i])
        if not math.isfinite(per_order[k]):
            violations.append({'k': k, 't': float(nodes[i]), 'reason': "f' = 0 with f != 0"})
    constant = max(per_order.values())
    grid_spec = {'T': T, 'points': grid, 'kind': 'geometric+linear', 'min_node': float(nodes[0])}
    logger.debug(f"Tameness of {field.name} to order {m}: C={constant:.6g}")
    return TamenessReport(m, constant, per_order, argmax, grid_spec, violations)


def tameness_stability(field: ScalarField, T: float = 1.0, m: int = 2, grid: int = DEFAULT_GRID_POINTS) -> Dict[str, float]:
    """Tameness constant on a grid and on the doubled grid, with their relative change"""
    coarse = tameness_constant(field, T, m, grid).constant
    fine = tameness_constant(field, T, m, 2 * grid).constant
    change = abs(fine - coarse) / max(abs(fine), 1e-300) if math.isfinite(fine) else math.inf
    return {'coarse': coarse, 'fine': fine, 'relative_change': change}


def ray_field(field: ScalarField, origin: Sequence[float], direction: Sequence[float], recenter: bool = True) -> ScalarField:
    """
    t -> f_x0(x0 + t w), with f_x0 = f - f(x0) - grad f(x0).(x - x0) when recentring

    Raises:
        DomainError: If the origin is outside the field's domain
    """
    x0 = np.asarray(origin, dtype=float)
    w = np.asarray(direction, dtype=float)
    if recenter:
        base = jet_eval(field, x0, 1)
        value = float(base.value)
        slope = float(np.dot(base.gradient, w))
    else:
        value = slope = 0.0

    def rule(c):
        t = c[0]
        return field.rule([x0[i] + t * w[i] for i in range(field.arity)]) - value - slope * t

    domain = Domain(d=1, lower=[0.0], closed_lower=False)
    return ScalarField(1, rule, field.params, domain, field.m_max, f"{field.name} along {w.round(6).tolist()}")


def radial_tameness(field: ScalarField, m: int = 2, rays: int = 64, origin: Optional[Sequence[float]] = None,
                    radius: float = 1.0, grid: int = DEFAULT_GRID_POINTS, threads: Optional[int] = None,
                    show_progress: bool = False) -> TamenessReport:
    """
    Uniform tameness over rays from an origin

    Args:
        field: Field of d variables, convex on its domain
        m: Order
        rays: Number of sampled directions (d = 1 always uses the two rays)
        origin: Ray origin x0 (defaults to 0); the field is recentred at x0
        radius: Ray length
        grid: Nodes per ray
        threads: Worker cap
        show_progress: Show a progress bar

    Returns:
        TamenessReport whose constant is the supremum over rays

    Raises:
        ConvexityError: With the offending direction
        DomainError: If the origin lies outside the domain
    """
    d = field.arity
    x0 = np.zeros(d) if origin is None else np.asarray(origin, dtype=float)
    if not field.domain.contains(x0)[0]:
        raise DomainError(f"Origin {x0.tolist()} is outside the domain of {field.name}")
    directions = sphere_directions(d, rays)

    def one_ray(w):
        report = tameness_constant(ray_field(field, x0, w), radius, m, grid, direction=w)
        return {'direction': [float(v) for v in w], 'C': report.constant, 'report': report}

    results = parallel_map(one_ray, directions, threads, show_progress, desc="Rays")
    worst = max(results, key=lambda r: r['C'])
    report = worst['report']
    per_ray = [{'direction': r['direction'], 'C': r['C']} for r in results]
    grid_spec = dict(report.grid, rays=len(directions), origin=x0.tolist())
    return TamenessReport(m, worst['C'], report.per_order, report.argmax, grid_spec,
                          [v for r in results for v in r['report'].violations], per_ray)


def contact_infimum(field: ScalarField, points: np.ndarray, directions: np.ndarray, k: int) -> Dict[str, Any]:
    """
    Empirical infimum of sum_{i=2..k} |(w . grad)^i f(x0)| over probe pairs (x0, w)

    A positive infimum means every tangent line has finite order of contact
    at most k on the probe set.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    best, witness = math.inf, None
    for x0 in points:
        for w in np.atleast_2d(directions):
            line = ScalarField(1, lambda c, x0=x0, w=w: field.rule([x0[i] + c[0] * w[i] for i in range(field.arity)]),
                               m_max=field.m_max)
            jet = jet_eval(line, np.zeros(1), k)
            total = sum(abs(float(jet.derivative((i,)))) for i in range(2, k + 1))
            if total < best:
                best, witness = total, {'x0': x0.tolist(), 'direction': np.asarray(w).tolist()}
    return {'infimum': best, 'k': k, 'witness': witness}


@dataclass
class EpsilonCertificate:
    """Scale epsilon at which order-m derivatives are controlled by orders ell..m-1"""
    epsilon: float
    m: int
    ell: int
    lhs: float
    rhs: float
    fallback: float
    degenerate: bool
    order_sups: List[float]
    grid: Dict[str, Any]

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1.0 + 1e-12)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'epsilon': self.epsilon, 'm': self.m, 'ell': self.ell, 'lhs': self.lhs, 'rhs': self.rhs,
            'fallback': self.fallback, 'degenerate': self.degenerate, 'holds': self.holds,
            'order_sups': self.order_sups, 'grid': self.grid,
        }


def ball_grid(d: int, grid: int) -> np.ndarray:
    """Interior grid of the unit ball used for suprema (per-axis count capped in two or more dimensions)"""
    if d == 1:
        return np.linspace(-1.0, 1.0, grid + 2)[1:-1].reshape(-1, 1)
    return interior_grid(min(grid, MAX_GRID_2D), d, 1.0)


def order_sups(field: ScalarField, m: int, grid: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    """sup over the ball grid of max_{|alpha|=k} |d^alpha f| for k = 0..m"""
    nodes = ball_grid(field.arity, grid)
    jet = jet_eval(field, nodes, m)
    return np.max(order_norms(jet), axis=1)


def _sharp_sides(sups: np.ndarray, eps: float, m: int, ell: int):
    lhs = eps ** m * sups[m]
    rhs = max(eps ** k * sups[k] for k in range(ell, m))
    return float(lhs), float(rhs)


def epsilon_for(field: ScalarField, m: int, ell: int = 0, grid: int = DEFAULT_GRID_POINTS) -> EpsilonCertificate:
    """
    Largest epsilon in (0, 1] on the lattice log(eps) = -i * 1e-3 with
    eps^m sup_{|a|=m}|d^a f| <= sup_{ell<=|a|<m} eps^|a| |d^a f| on the grid

    The two sides differ by a factor decreasing in epsilon, so the lattice is
    bisected. The result is never below the norm-ratio fallback
    min(1, max_k A_k / A_m), which always satisfies the inequality.

    Args:
        field: Field on the unit ball
        m: Top order
        ell: Base order (< m)
        grid: Grid resolution per axis

    Returns:
        EpsilonCertificate (degenerate when every order ell..m vanishes)
    """
    if not 0 <= ell < m:
        raise OrderError(f"Need 0 <= ell < m, got ell={ell}, m={m}")
    sups = order_sups(field, m, grid)
    grid_spec = {'points_per_axis': grid, 'd': field.arity}
    if np.all(sups[ell:m + 1] == 0):
        logger.warning(f"{field.name}: all derivatives of orders {ell}..{m} vanish; certificate is degenerate")
        return EpsilonCertificate(1.0, m, ell, 0.0, 0.0, 1.0, True, sups.tolist(), grid_spec)
    if sups[m] == 0:
        lhs, rhs = _sharp_sides(sups, 1.0, m, ell)
        return EpsilonCertificate(1.0, m, ell, lhs, rhs, 1.0, False, sups.tolist(), grid_spec)

    fallback = min(1.0, max(sups[k] / sups[m] for k in range(ell, m)))

    def ok(i: int) -> bool:
        lhs, rhs = _sharp_sides(sups, math.exp(-i * EPSILON_LATTICE_STEP), m, ell)
        return lhs <= rhs

    if ok(0):
        index = 0
    else:
        hi = 1
        while not ok(hi):
            hi *= 2
            if hi > 10 ** 7:
                break
        lo = hi // 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if ok(mid):
                hi = mid
            else:
                lo = mid
        index = hi
    eps = max(math.exp(-index * EPSILON_LATTICE_STEP), fallback)
    lhs, rhs = _sharp_sides(sups, eps, m, ell)
    degenerate = fallback == 0.0
    logger.debug(f"epsilon_for {field.name}: eps={eps:.6g} (fallback {fallback:.6g})")
    return EpsilonCertificate(eps, m, ell, lhs, rhs, fallback, degenerate, sups.tolist(), grid_spec)


def certificate_holds_pointwise(field: ScalarField, cert: EpsilonCertificate, grid: int = DEFAULT_GRID_POINTS) -> bool:
    """Re-evaluate the certificate inequality from fresh grid suprema"""
    sups = order_sups(field, cert.m, grid)
    lhs, rhs = _sharp_sides(sups, cert.epsilon, cert.m, cert.ell)
    return cert.degenerate or lhs <= rhs * (1.0 + 1e-12)
