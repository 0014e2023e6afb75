#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Oscillatory integral estimates end to end

Brute-force oracle quadrature for int e^(i lambda f) psi, the
scale-adapted amplitude reduction over a partition of unity, decay scans
of the sublevel-type bound for radially tame convex phases and the
comparison of the weighted integral with the measure of sublevel sets.
"""

import math
import logging
from dataclasses import dataclass, field as dataclass_field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.integrate
import scipy.optimize

import jets
from constants import (
    DEFAULT_K_FIRST, DEFAULT_K_HIGH, DEFAULT_ORACLE_TOLERANCE, LOW_FREQUENCY_THRESHOLD,
    ORACLE_NODE_CAP, ORACLE_PANEL_ORDER,
)
from errors import ConvexityError, DomainError, HypothesisViolation, ResolutionError
from homspace import (
    AffineChart, ChartAtlas, ChartMap, Partition, RayChart, build_partition, local_samples, unit_ball_rule,
)
from ibp import ReducedAmplitude, admissible_omega, derivatives, reduce_amplitude, support_points
from jets import Jet, ScalarField, dk_norm, jet_eval, pullback_jet
from scales import ScaleAssignment, validate_hypotheses
from tameness import check_convexity
from utils import parallel_map, sphere_directions

logger = logging.getLogger(__name__)

MIN_PANELS = 16
CHUNK_NODES = 1 << 20
SUBLEVEL_ANGLES = 64
SUBLEVEL_SHELLS = 12
BOUND_FLOOR = 1e-12
RAY_ANGLES = 16
RADIAL_SAMPLES = 801
RADIAL_FLOOR = 1e-4


# oracle quadrature

@dataclass
class OracleResult:
    """Oracle value with its two-level error estimate"""
    value: complex
    error: float
    nodes: int
    panels: int

    def to_dict(self) -> Dict[str, Any]:
        return {'real': float(np.real(self.value)), 'imag': float(np.imag(self.value)),
                'abs': float(abs(self.value)), 'error': self.error, 'nodes': self.nodes, 'panels': self.panels}


def _box(region: Any, psi: Any) -> Tuple[np.ndarray, np.ndarray]:
    if region is None:
        region = getattr(psi, 'support', None)
    if region is None:
        raise ValueError("Integration region is required when the amplitude has no declared support")
    lower, upper = (np.atleast_1d(np.asarray(b, dtype=float)) for b in region)
    if np.any(upper <= lower):
        raise ValueError(f"Empty integration box {lower.tolist()} .. {upper.tolist()}")
    return lower, upper


def _axis_rule(lower: float, upper: float, panels: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(ORACLE_PANEL_ORDER)
    edges = np.linspace(lower, upper, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + half[:, None] * x[None, :]).reshape(-1), (half[:, None] * w[None, :]).reshape(-1)


def box_integral(func: Callable[[np.ndarray], np.ndarray], lower: np.ndarray, upper: np.ndarray,
                 panels: int) -> complex:
    """Composite Gauss-Legendre rule with `panels` panels per axis, evaluated in fixed-order chunks"""
    d = len(lower)
    axes = [_axis_rule(lower[i], upper[i], panels) for i in range(d)]
    if d == 1:
        x, w = axes[0]
        total = 0.0
        for start in range(0, len(x), CHUNK_NODES):
            sl = slice(start, start + CHUNK_NODES)
            total = total + np.sum(func(x[sl].reshape(-1, 1)) * w[sl])
        return total
    if d == 2:
        (x, wx), (y, wy) = axes
        rows = max(1, CHUNK_NODES // len(y))
        total = 0.0
        for start in range(0, len(x), rows):
            xs, ws = x[start:start + rows], wx[start:start + rows]
            pts = np.stack(np.meshgrid(xs, y, indexing='ij'), axis=-1).reshape(-1, 2)
            total = total + np.sum(func(pts) * np.outer(ws, wy).reshape(-1))
        return total
    raise ValueError(f"Box quadrature supports d <= 2, got {d}")


def _frequency(f: ScalarField, lower: np.ndarray, upper: np.ndarray, lam: float) -> float:
    """max |lambda grad f| on a midpoint grid of the box"""
    if lam == 0:
        return 0.0
    d = len(lower)
    n = 4001 if d == 1 else 257
    axes = [lower[i] + (np.arange(n) + 0.5) * (upper[i] - lower[i]) / n for i in range(d)]
    pts = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, d)
    pts = pts[f.domain.contains(pts)]
    grad = jet_eval(f, pts, 1).gradient
    return abs(lam) * float(np.max(np.linalg.norm(grad, axis=0)))


def initial_panels(f: ScalarField, lower: np.ndarray, upper: np.ndarray, lam: float) -> int:
    """Panels per axis so that every panel spans at most one local wavelength"""
    freq = _frequency(f, lower, upper, lam)
    length = float(np.max(upper - lower))
    return max(MIN_PANELS, int(math.ceil(length * freq / (2.0 * np.pi))))


def adaptive_box(func: Callable[[np.ndarray], np.ndarray], lower: np.ndarray, upper: np.ndarray,
                 panels: int, tol: float = DEFAULT_ORACLE_TOLERANCE, max_nodes: int = ORACLE_NODE_CAP) -> OracleResult:
    """
    Composite Gauss-Legendre with panel doubling until two levels agree to tol (1 + |result|)

    Raises:
        ResolutionError: If the node budget is exhausted first
    """
    d = len(lower)
    previous = box_integral(func, lower, upper, panels)
    while True:
        nodes = (2 * panels * ORACLE_PANEL_ORDER) ** d
        if nodes > max_nodes:
            raise ResolutionError(f"Oracle needs more than {max_nodes} nodes ({2 * panels} panels per axis)")
        panels *= 2
        current = box_integral(func, lower, upper, panels)
        error = float(abs(current - previous))
        if error <= tol * (1.0 + abs(current)):
            return OracleResult(complex(current), error, nodes, panels)
        previous = current


def oracle_integral(f: ScalarField, psi: Any, lam: float, region: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
                    tol: float = DEFAULT_ORACLE_TOLERANCE, weight: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                    max_nodes: int = ORACLE_NODE_CAP) -> OracleResult:
    """
    int e^(i lambda f) psi (times an optional weight) over a box

    Panels are sized from max |lambda grad f| so that each one holds at least
    20 Gauss-Legendre nodes per local wavelength, then doubled until two
    levels agree to tol (1 + |result|).

    Args:
        f: Real phase
        psi: Amplitude: a field or any callable on (n, d) points with a support box
        lam: Frequency
        region: Box (lower, upper); defaults to psi.support
        tol: Two-level tolerance (>= 1e-10 is meaningful)
        weight: Extra real factor, e.g. f^ell
        max_nodes: Node budget

    Returns:
        OracleResult

    Raises:
        ResolutionError: If lambda is too large for the node budget
    """
    lower, upper = _box(region, psi)
    panels = initial_panels(f, lower, upper, lam)

    def integrand(pts):
        values = np.asarray(psi(pts), dtype=complex)
        if lam != 0:
            values = values * np.exp(1j * lam * f.real(pts))
        if weight is not None:
            values = values * weight(pts)
        return values

    result = adaptive_box(integrand, lower, upper, panels, tol, max_nodes)
    logger.debug(f"oracle lambda={lam:g}: |I|={abs(result.value):.6e} error {result.error:.2e} "
                 f"({result.panels} panels)")
    return result


# measure model

class MeasureModel:
    """
    Chart-wise densities: int_B g dmu = int_{unit ball} g(Phi(t)) |det dPhi(t)| dt

    For a full-dimensional chart |det dPhi| equals mu(B) times the
    normalized weight J of the atlas. Ray charts in d >= 2 are one leaf of
    the polar factorization int_{R^d} g = int_{S^(d-1)} int_0^inf g(r w) r^(d-1) dr dw,
    so their density is the radial one, d/dt |Phi| times |Phi|^(d-1), and the
    directions are integrated separately with `directions`.
    """

    def jacobian_rule(self, chart: ChartMap) -> Callable[[Sequence[Any]], Any]:
        """|det dPhi| (radial density for ray charts) as a generic function of local coordinates"""
        if isinstance(chart, AffineChart):
            volume = float(np.asarray(chart.rj)) ** chart.dim
            return lambda c: volume + 0.0 * c[0]
        if isinstance(chart, RayChart):
            rj = float(np.asarray(chart.rj))
            d = chart.ambient
            scale = rj * float(np.asarray(chart.norm2)) ** (0.5 * d)
            return lambda c: jets.exp(c[0] * (d * rj)) * scale
        if chart.dim == chart.ambient == 1:
            component = ScalarField(1, lambda c: chart.forward(c)[0], name='chart')
            return lambda c: jets.fabs(derivatives(component, c, 1)[(1,)])
        raise ValueError(f"No Jacobian rule for {type(chart).__name__} in dimension {chart.dim}")

    @staticmethod
    def directions(d: int, angles: int = SUBLEVEL_ANGLES) -> Tuple[np.ndarray, np.ndarray]:
        """Unit directions and weights of the angular rule (two signs in d = 1, periodic trapezoid in d = 2)"""
        if d == 1:
            return np.array([[1.0], [-1.0]]), np.ones(2)
        if d != 2:
            raise ValueError(f"Angular rule supports d in (1, 2), got {d}")
        theta = 2.0 * np.pi * np.arange(angles) / angles
        return np.stack([np.cos(theta), np.sin(theta)], axis=1), np.full(angles, 2.0 * np.pi / angles)

    def mass_error(self, atlas: ChartAtlas, j: int, x: Sequence[float]) -> Optional[float]:
        """|int J - 1| for the atlas weight of B_j(x) (None when the atlas has no weight)"""
        weight = atlas.measure_weight(j, x)
        if weight is None:
            return None
        nodes, w = unit_ball_rule(atlas.ball_dimension(x))
        values = np.asarray(weight([nodes[:, i] for i in range(nodes.shape[1])]), dtype=float)
        return float(abs(np.dot(np.broadcast_to(values, w.shape), w) - 1.0))


# amplitude reduction over a partition

@dataclass
class Cell:
    """One partition cell: eta_x psi moved to the chart, reduced there, and moved back"""
    index: int
    center: np.ndarray
    scale: int
    chart: ChartMap
    trivial: bool
    jacobian: Callable[[Sequence[Any]], Any]
    reduced: Optional[ReducedAmplitude] = None
    omega: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {'index': self.index, 'center': self.center.tolist(), 'scale': self.scale,
                'trivial': self.trivial, 'omega': self.omega}


class AssembledAmplitude:
    """psi_m = sum over cells of psi_x, evaluable on ambient points"""

    def __init__(self, atlas: ChartAtlas, psi: ScalarField, partition: Partition, cells: List[Cell]):
        self.atlas = atlas
        self.psi = psi
        self.partition = partition
        self.cells = cells
        self.arity = atlas.d
        lows, highs = [], []
        for cell in cells:
            ends = cell.chart(np.vstack([-np.eye(cell.chart.dim), np.eye(cell.chart.dim)]))
            lows.append(ends.min(axis=0))
            highs.append(ends.max(axis=0))
        if cells:
            self.support = (np.min(lows, axis=0).tolist(), np.max(highs, axis=0).tolist())
        else:
            self.support = psi.support

    def cell_values(self, cell: Cell, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.arity)
        out = np.zeros(len(pts), dtype=complex)
        inside = self.atlas.contains(cell.scale, cell.center, pts)
        if not np.any(inside):
            return out
        chosen = pts[inside]
        if cell.trivial:
            coords = [chosen[:, i] for i in range(self.arity)]
            with np.errstate(all='ignore'):
                eta = np.asarray(self.partition.on_coords(cell.index, coords), dtype=float)
            out[inside] = self.psi(chosen) * eta
            return out
        t = cell.chart.inverse(chosen)
        local = [t[:, i] for i in range(cell.chart.dim)]
        out[inside] = cell.reduced(t) / np.asarray(cell.jacobian(local), dtype=float)
        return out

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.arity)
        total = np.zeros(len(pts), dtype=complex)
        for cell in self.cells:
            total = total + self.cell_values(cell, pts)
        return total


def _local_fields(f: ScalarField, psi: ScalarField, partition: Partition, k: int, chart: ChartMap,
                  jacobian: Callable[[Sequence[Any]], Any]) -> Tuple[ScalarField, ScalarField]:
    dim = chart.dim
    box = ([-1.0] * dim, [1.0] * dim)

    def phase_rule(c):
        return f.rule(chart.forward(c))

    def amplitude_rule(c):
        image = chart.forward(c)
        return psi.rule(image) * partition.on_coords(k, image) * jacobian(c)

    local_f = ScalarField(dim, phase_rule, name=f"{f.name}@cell{k}", m_max=f.m_max)
    local_psi = ScalarField(dim, amplitude_rule, name=f"{psi.name}@cell{k}", m_max=psi.m_max,
                            phase=psi.phase, support=box)
    return local_f, local_psi


def reduce_cells(atlas: ChartAtlas, f: ScalarField, psi: ScalarField, partition: Partition, R: ScaleAssignment,
                 eps: float, m: int, low_frequency: float = LOW_FREQUENCY_THRESHOLD, samples: int = 16,
                 threads: Optional[int] = None, measure: Optional[MeasureModel] = None) -> List[Cell]:
    """
    Cells of the partition, each reduced by m - 1 integrations by parts unless it is low frequency

    A cell is low frequency when sup over its ball of eps |d_y f|_R(y) is at
    most the threshold; then psi_x = psi eta_x. Otherwise the pulled-back
    amplitude times the chart density is reduced with the constant weight
    omega = min(eps, largest admissible constant).
    """
    measure = measure or MeasureModel()

    def build(k: int) -> Cell:
        center = partition.centers[k]
        scale = int(partition.scales[k])
        chart = atlas.chart(scale, center)
        jacobian = measure.jacobian_rule(chart)
        images = chart(local_samples(chart.dim, samples))
        images = np.vstack([center[None, :], images])
        local_scales = R(images)
        first = dk_norm(pullback_jet(f, atlas.chart(local_scales, images), np.zeros((len(images), chart.dim)), 1), 1)
        if eps * float(np.max(first)) <= low_frequency:
            return Cell(k, center, scale, chart, True, jacobian)
        local_f, local_psi = _local_fields(f, psi, partition, k, chart, jacobian)
        if not len(support_points(local_psi)):
            return Cell(k, center, scale, chart, True, jacobian)
        omega = min(eps, admissible_omega(local_f, local_psi, m - 1))
        reduced = reduce_amplitude(local_f, local_psi, m - 1, omega)
        return Cell(k, center, scale, chart, False, jacobian, reduced, omega)

    cells = parallel_map(build, range(len(partition)), threads)
    logger.info(f"{len(cells)} cells, {sum(c.trivial for c in cells)} low frequency")
    return cells


def amplitude_bound(atlas: ChartAtlas, f: ScalarField, psi: ScalarField, R: ScaleAssignment, eps: float, m: int,
                    points: np.ndarray) -> np.ndarray:
    """sum_{k<m} eps^k |d^k_y psi|_R(y) / (1 + eps |d_y f|_R(y))^(m-1) at points"""
    scales = R(points)
    chart = atlas.chart(scales, points)
    t = np.zeros((len(points), chart.dim))
    numerator = np.abs(psi.real(points)) * abs(psi.phase)
    if m > 1:
        jet = pullback_jet(psi, chart, t, m - 1)
        for k in range(1, m):
            numerator = numerator + eps ** k * abs(psi.phase) * dk_norm(jet, k)
    first = dk_norm(pullback_jet(f, chart, t, 1), 1)
    return numerator / (1.0 + eps * first) ** (m - 1)


def _radial_range(lower: np.ndarray, upper: np.ndarray) -> Tuple[float, float]:
    corners = np.stack(np.meshgrid(*zip(lower, upper), indexing='ij'), axis=-1).reshape(-1, len(lower))
    outer = float(np.max(np.linalg.norm(corners, axis=1)))
    inner = float(np.linalg.norm(np.clip(0.0, lower, upper)))
    if inner == 0.0:
        inner = RADIAL_FLOOR * outer
        logger.warning(f"support box contains the origin; rays start at r = {inner:.3g}")
    return inner, outer


def _ray_phase(f: ScalarField, direction: np.ndarray) -> ScalarField:
    return ScalarField(1, lambda c: f.rule([c[0] * w for w in direction]), name=f"{f.name}@ray", m_max=f.m_max)


def _leafwise_verify(atlas: ChartAtlas, f: ScalarField, psi: ScalarField, R: ScaleAssignment, eps: float, m: int,
                     lower: np.ndarray, upper: np.ndarray, low_frequency: float, bound_points: int, tol: float,
                     angles: int, threads: Optional[int]) -> Dict[str, Any]:
    """Partition and reduce on each ray, then sum the radial integrals over the angular rule"""
    d = atlas.d
    inner, outer = _radial_range(lower, upper)
    radii = np.linspace(inner, outer, RADIAL_SAMPLES)
    directions, weights = MeasureModel.directions(d, angles)
    radial = lambda pts: pts[:, 0] ** (d - 1)

    original = reduced = mass = 0.0
    cells, partitions, masses, lhs, rhs, grid = [], [], [], [], [], []
    for index, (direction, weight) in enumerate(zip(directions, weights)):
        line = radii[:, None] * direction[None, :]
        if not np.any(psi.real(line)):
            continue
        partition = build_partition(atlas, R, line, R.N)
        ray_cells = reduce_cells(atlas, f, psi, partition, R, eps, m, low_frequency, threads=threads)
        assembled = AssembledAmplitude(atlas, psi, partition, ray_cells)
        ends = [np.linalg.norm(c.chart(np.array([[-1.0], [1.0]])), axis=1) for c in ray_cells]
        low = min([inner] + [float(np.min(e)) for e in ends])
        high = max([outer] + [float(np.max(e)) for e in ends])

        ray_f = _ray_phase(f, direction)
        on_ray = lambda pts, w=direction: pts[:, :1] * w[None, :]
        before = oracle_integral(ray_f, lambda pts: psi(on_ray(pts)), 1.0, ([inner], [outer]), tol, weight=radial)
        after = oracle_integral(ray_f, lambda pts: assembled(on_ray(pts)), 1.0, ([low], [high]), tol, weight=radial)
        total = adaptive_box(lambda pts: np.abs(psi(on_ray(pts))) * radial(pts), np.array([inner]),
                             np.array([outer]), MIN_PANELS, tol)
        original += weight * before.value
        reduced += weight * after.value
        mass += weight * abs(total.value)

        points = np.linspace(inner, outer, bound_points + 2)[1:-1, None] * direction[None, :]
        lhs.append(np.abs(assembled(points)))
        rhs.append(amplitude_bound(atlas, f, psi, R, eps, m, points))
        grid.append(points)
        partitions.append(dict(partition.to_dict(), direction=direction.tolist()))
        cells.extend(dict(c.to_dict(), direction=index) for c in ray_cells)
        masses.extend(MeasureModel().mass_error(atlas, c.scale, c.center) for c in ray_cells)
        logger.debug(f"ray {index}: {len(ray_cells)} cells, |I| {abs(before.value):.6e}")

    scale = max(abs(original), mass)
    discrepancy = abs(original - reduced) / scale if scale > 0 else abs(reduced)
    return {
        'identity': {'original': {'real': float(np.real(original)), 'imag': float(np.imag(original)),
                                  'abs': float(abs(original))},
                     'reduced': {'real': float(np.real(reduced)), 'imag': float(np.imag(reduced)),
                                 'abs': float(abs(reduced))},
                     'relative_discrepancy': float(discrepancy), 'scale': float(scale)},
        'rays': {'directions': len(partitions), 'angles': angles, 'inner': inner, 'outer': outer},
        'cells': cells,
        'partition': partitions,
        'mass_error': max((e for e in masses if e is not None), default=None),
        'lhs': np.concatenate(lhs) if lhs else np.zeros(0),
        'rhs': np.concatenate(rhs) if rhs else np.zeros(0),
        'grid': np.vstack(grid) if grid else np.zeros((0, d)),
    }


def theorem1_verify(atlas: ChartAtlas, f: ScalarField, psi: ScalarField, R: ScaleAssignment, eps: float, m: int,
                    probe: np.ndarray, region: Optional[np.ndarray] = None, K_high: float = DEFAULT_K_HIGH,
                    K_first: float = DEFAULT_K_FIRST, low_frequency: float = LOW_FREQUENCY_THRESHOLD,
                    bound_points: int = 400, tol: float = 1e-12, threads: Optional[int] = None,
                    angles: int = RAY_ANGLES) -> Dict[str, Any]:
    """
    Build psi_m over the scale partition and check the identity and the pointwise bound

    Atlases whose balls are lower-dimensional leaves (the radial atlas in
    d >= 2) are handled leaf by leaf: each ray of the angular rule gets its
    own partition, the identity is checked for the radial integrals with
    density r^(d-1) and the rays are summed with the angular weights.

    Args:
        atlas: Ball family
        f: Phase
        psi: Compactly supported amplitude
        R: Scale assignment
        eps: Finite-type epsilon
        m: Order (>= 2)
        probe: Probe points for the hypotheses
        region: Samples covering the support of psi (defaults to a grid of the support box)
        K_high, K_first: Implicit constants of the hypotheses
        low_frequency: Threshold C of the trivial cells
        bound_points: Grid points per axis (per ray for leafwise atlases) for the pointwise bound
        tol: Oracle tolerance
        angles: Angular nodes for leafwise atlases in d = 2

    Returns:
        Report dictionary with 'passed', the identity discrepancy and the bound constant

    Raises:
        HypothesisViolation: If the scale hypotheses fail
    """
    if m < 2:
        raise ValueError(f"m must be >= 2, got {m}")
    hypotheses = validate_hypotheses(atlas, f, R, eps, m, probe, K_high, K_first)
    if not hypotheses.all_passed:
        name = next(k for k, v in hypotheses.passed.items() if not v)
        raise HypothesisViolation(f"Hypothesis '{name}' fails", hypotheses.witnesses.get(name, [{}])[0])

    lower, upper = _box(None if psi.support is not None else (probe.min(axis=0), probe.max(axis=0)), psi)
    if atlas.ball_dimension(probe[0]) < atlas.d:
        report = _leafwise_verify(atlas, f, psi, R, eps, m, lower, upper, low_frequency, bound_points, tol,
                                  angles, threads)
        lhs, rhs, grid = report.pop('lhs'), report.pop('rhs'), report.pop('grid')
    else:
        if region is None:
            n = 801 if atlas.d == 1 else 41
            axes = [np.linspace(lower[i], upper[i], n) for i in range(atlas.d)]
            region = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, atlas.d)
        partition = build_partition(atlas, R, region, R.N)
        cells = reduce_cells(atlas, f, psi, partition, R, eps, m, low_frequency, threads=threads)
        assembled = AssembledAmplitude(atlas, psi, partition, cells)

        original = oracle_integral(f, psi, 1.0, (lower, upper), tol)
        reduced = oracle_integral(f, assembled, 1.0, assembled.support, tol)
        mass = adaptive_box(lambda pts: np.abs(psi(pts)), lower, upper, MIN_PANELS, tol)
        scale = max(abs(original.value), abs(mass.value))
        discrepancy = abs(original.value - reduced.value) / scale if scale > 0 else abs(reduced.value)

        axes = [np.linspace(lower[i], upper[i], bound_points + 2)[1:-1] for i in range(atlas.d)]
        grid = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, atlas.d)
        lhs = np.abs(assembled(grid))
        rhs = amplitude_bound(atlas, f, psi, R, eps, m, grid)
        masses = [e for e in (MeasureModel().mass_error(atlas, c.scale, c.center) for c in cells) if e is not None]
        report = {
            'identity': {'original': original.to_dict(), 'reduced': reduced.to_dict(),
                         'relative_discrepancy': discrepancy, 'scale': scale},
            'cells': [c.to_dict() for c in cells],
            'partition': partition.to_dict(),
            'mass_error': max(masses, default=None),
        }

    usable = rhs > BOUND_FLOOR * max(float(np.max(rhs, initial=0.0)), 1e-300)
    ratios = np.where(usable, lhs / np.where(usable, rhs, 1.0), 0.0)
    worst = int(np.argmax(ratios)) if len(ratios) else 0
    constant = float(ratios[worst]) if len(ratios) else 0.0
    discrepancy = report['identity']['relative_discrepancy']
    report.update({
        'bound': {'constant': constant, 'witness': grid[worst].tolist() if len(grid) else None,
                  'points': int(np.sum(usable))},
        'hypotheses': hypotheses.to_dict(),
        'epsilon': eps, 'm': m,
        'passed': bool(discrepancy <= 1e-6 and math.isfinite(constant)),
    })
    logger.info(f"theorem check: discrepancy {discrepancy:.2e}, bound constant {constant:.4g}")
    return report


# decay scans

def euler_norms(psi: ScalarField, points: np.ndarray, order: int) -> np.ndarray:
    """|(x . grad)^k psi(x)| for k = 0..order, shape (order + 1, n)"""
    pts = np.asarray(points, dtype=float).reshape(-1, psi.arity)
    s = Jet.variables(np.zeros((1, len(pts))), order)[0]
    stretch = jets.exp(s)
    with np.errstate(all='ignore'):
        value = psi.rule([stretch * pts[:, i] for i in range(psi.arity)])
    if not isinstance(value, Jet):
        value = Jet.constant(np.broadcast_to(value, (len(pts),)), 1, order)
    return np.abs(value.raw()) * abs(psi.phase)


@dataclass
class DecayRow:
    lam: float
    lhs_abs: float
    rhs_bound: float
    ratio: float
    resolved: bool
    error: float = 0.0

    def csv_row(self) -> List[Any]:
        return [self.lam, self.lhs_abs, self.rhs_bound, self.ratio, int(self.resolved)]


@dataclass
class DecayTable:
    """LHS/RHS of the decay bound over a lambda grid with fitted log-log slopes"""
    phase: str
    amplitude: str
    ell: int
    m: int
    rows: List[DecayRow]
    slope_lhs: Optional[float] = None
    residual_lhs: Optional[float] = None
    slope_rhs: Optional[float] = None
    residual_rhs: Optional[float] = None
    ratio_max: float = 0.0
    ratio_stability: float = 1.0
    decades: Dict[str, float] = dataclass_field(default_factory=dict)

    CSV_HEADER = ['lambda', 'lhs_abs', 'rhs_bound', 'ratio', 'resolved_flag']

    def csv_rows(self) -> List[List[Any]]:
        return [row.csv_row() for row in self.rows]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'phase': self.phase, 'amplitude': self.amplitude, 'ell': self.ell, 'm': self.m,
            'slope_lhs': self.slope_lhs, 'residual_lhs': self.residual_lhs,
            'slope_rhs': self.slope_rhs, 'residual_rhs': self.residual_rhs,
            'ratio_max': self.ratio_max, 'ratio_stability': self.ratio_stability, 'decades': self.decades,
            'rows': [dict(zip(self.CSV_HEADER, row.csv_row())) for row in self.rows],
        }


def _fit(lams: np.ndarray, values: np.ndarray) -> Tuple[Optional[float], Optional[float]]:
    keep = (lams > 0) & (values > 0)
    if np.sum(keep) < 2:
        return None, None
    x, y = np.log(lams[keep]), np.log(values[keep])
    coeffs, residuals, *_ = np.polyfit(x, y, 1, full=True)
    residual = float(np.sqrt(residuals[0] / np.sum(keep))) if len(residuals) else 0.0
    return float(coeffs[0]), residual


def decay_row(f: ScalarField, psi: ScalarField, lam: float, ell: int, m: int,
              tol: float = DEFAULT_ORACLE_TOLERANCE) -> DecayRow:
    """
    One row: |int e^(i lambda f) f^ell psi| against
    int |f|^ell sum_{k<m} |(x . grad)^k psi| / (1 + |lambda f|)^(m-1)
    """
    lower, upper = _box(None, psi)
    weight = (lambda pts: f.real(pts) ** ell) if ell else None
    try:
        lhs = oracle_integral(f, psi, lam, (lower, upper), tol, weight)
    except ResolutionError as e:
        logger.warning(f"lambda={lam:g} unresolved: {e}")
        return DecayRow(lam, math.nan, math.nan, math.nan, False)

    def density(pts):
        values = f.real(pts)
        numerator = np.abs(values) ** ell * np.sum(euler_norms(psi, pts, m - 1), axis=0)
        return numerator / (1.0 + abs(lam) * np.abs(values)) ** (m - 1)

    try:
        rhs = adaptive_box(density, lower, upper, initial_panels(f, lower, upper, lam), tol)
    except ResolutionError as e:
        logger.warning(f"lambda={lam:g}: bound integral unresolved: {e}")
        return DecayRow(lam, abs(lhs.value), math.nan, math.nan, False, lhs.error)
    bound = float(np.real(rhs.value))
    ratio = abs(lhs.value) / bound if bound > 0 else math.inf
    return DecayRow(lam, float(abs(lhs.value)), bound, ratio, True, lhs.error)


def decay_scan(f: ScalarField, psi: ScalarField, lambdas: Sequence[float], ell: int = 0, m: int = 4,
               d: Optional[int] = None, tol: float = DEFAULT_ORACLE_TOLERANCE, threads: Optional[int] = None,
               show_progress: bool = False) -> DecayTable:
    """
    Decay table over a strictly increasing lambda grid

    Slopes are least-squares fits of log |LHS| and log RHS against log lambda
    over resolved rows with lambda > 0; the ratio stability is the spread of
    the per-decade maximal ratios.

    Args:
        f: Radially tame phase
        psi: C^m amplitude with a support box
        lambdas: Frequencies
        ell: Power of f in the integrand
        m: Order of the bound
        d: Dimension (defaults to f.arity)
        tol: Oracle tolerance
        threads: Worker threads
        show_progress: Progress bar

    Returns:
        DecayTable
    """
    d = d or f.arity
    if d != f.arity or d != psi.arity:
        raise ValueError(f"Dimension mismatch: d={d}, phase {f.arity}, amplitude {psi.arity}")
    lambdas = [float(v) for v in lambdas]
    if any(b <= a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lambda grid must be strictly increasing")
    rows = parallel_map(lambda lam: decay_row(f, psi, lam, ell, m, tol), lambdas, threads,
                        show_progress=show_progress, desc="Decay scan")
    table = DecayTable(f.name, psi.name, ell, m, rows)

    resolved = [r for r in rows if r.resolved and math.isfinite(r.ratio)]
    lams = np.array([r.lam for r in resolved])
    table.slope_lhs, table.residual_lhs = _fit(lams, np.array([r.lhs_abs for r in resolved]))
    table.slope_rhs, table.residual_rhs = _fit(lams, np.array([r.rhs_bound for r in resolved]))
    if resolved:
        table.ratio_max = float(max(r.ratio for r in resolved))
        for r in resolved:
            if r.lam > 0:
                key = str(int(math.floor(math.log10(r.lam) + 1e-9)))
                table.decades[key] = max(table.decades.get(key, 0.0), r.ratio)
        per_decade = [v for v in table.decades.values() if v > 0]
        if per_decade:
            table.ratio_stability = max(per_decade) / min(per_decade)
    logger.info(f"decay {f.name}: slope lhs {table.slope_lhs}, rhs {table.slope_rhs}, "
                f"ratio max {table.ratio_max:.4g}")
    return table


# sublevel comparison

def _ray_root(f: ScalarField, direction: np.ndarray, level: float, limit: float) -> float:
    """Radius where f(r direction) reaches level (limit when it stays below up to limit)"""
    g = lambda r: float(f.real(r * direction)) - level
    hi = min(1.0, limit)
    while g(hi) < 0:
        if hi >= limit:
            return limit
        hi = min(2.0 * hi, limit)
    lo = 0.0
    return float(scipy.optimize.brentq(g, lo, hi, xtol=1e-14, rtol=1e-13))


def _check_convex(f: ScalarField, radius: float, d: int):
    if d == 1:
        nodes = np.linspace(-radius, radius, 2001)
        nodes = nodes[f.domain.contains(nodes.reshape(-1, 1))]
        jet = jet_eval(f, nodes.reshape(-1, 1), 2)
        check_convexity(jet.derivative((2,)), nodes)
        return
    for w in sphere_directions(d, 32):
        nodes = np.linspace(-radius, radius, 513)
        pts = nodes[:, None] * w[None, :]
        keep = f.domain.contains(pts)
        jet = jet_eval(f, pts[keep], 2)
        second = np.einsum('i,ij...,j->...', w, jet.hessian, w)
        check_convexity(second, nodes[keep], w)


def sublevel_compare(f: ScalarField, lam: float, ell: int = 0, d: Optional[int] = None,
                     limit: float = 1e6, angles: int = SUBLEVEL_ANGLES) -> Dict[str, Any]:
    """
    int |f|^ell / (1 + |lambda f|)^(ell+d+1) against lambda^-ell |{|f| < 1/lambda}|

    Integrals over all of R^d are taken along rays (polar coordinates in
    d = 2 with a periodic trapezoid rule in the angle). The shells
    F_k = {2^(k-1)/lambda <= |f| < 2^k/lambda} are accounted separately and
    checked against the containment F_k in 2^k F_0.

    Args:
        f: Convex phase with f(0) = 0 and grad f(0) = 0
        lam: Frequency > 0
        ell: Nonnegative integer power
        d: Dimension (defaults to f.arity)
        limit: Largest radius searched for sublevel boundaries
        angles: Angular nodes in d = 2

    Returns:
        Dictionary with lhs, measure, ratio, shells and the geometric-series constant

    Raises:
        ConvexityError: If f is not convex near the origin
    """
    d = d or f.arity
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if d not in (1, 2):
        raise ValueError(f"Sublevel comparison supports d in (1, 2), got {d}")
    origin = jet_eval(f, np.zeros(d), 1)
    if abs(float(origin.value)) > 1e-12 or np.max(np.abs(origin.gradient)) > 1e-12:
        raise DomainError("Sublevel comparison needs f(0) = 0 and grad f(0) = 0")
    directions, weights = MeasureModel.directions(d, angles)

    radii = np.array([_ray_root(f, w, 1.0 / lam, limit) for w in directions])
    _check_convex(f, float(np.max(radii)) * 4.0, d)

    def ray_integral(w: np.ndarray, r0: float) -> float:
        def g(r):
            value = abs(float(f.real(r * w)))
            return value ** ell / (1.0 + lam * value) ** (ell + d + 1) * r ** (d - 1)
        total = 0.0
        for a, b in [(0.0, r0), (r0, 16.0 * r0)]:
            total += scipy.integrate.quad(g, a, b, limit=200, epsabs=0.0, epsrel=1e-12)[0]
        total += scipy.integrate.quad(g, 16.0 * r0, np.inf, limit=200, epsabs=0.0, epsrel=1e-10)[0]
        return total

    lhs = float(sum(wt * ray_integral(w, r0) for wt, w, r0 in zip(weights, directions, radii)))
    measure = float(sum(wt * r0 ** d / d for wt, r0 in zip(weights, radii)))
    ratio = lhs / (lam ** (-ell) * measure)

    shells = []
    previous = radii
    for k in range(1, SUBLEVEL_SHELLS + 1):
        level = 2.0 ** k / lam
        outer = np.array([_ray_root(f, w, level, limit) for w in directions])
        shell = float(sum(wt * (ro ** d - ri ** d) / d for wt, ro, ri in zip(weights, outer, previous)))
        shells.append({'k': k, 'measure': shell, 'bound': 2.0 ** (k * d) * measure,
                       'contained': bool(np.all(outer <= 2.0 ** k * radii * (1 + 1e-9)))})
        previous = outer
    geometric = 1.0 + 2.0 ** (ell + d + 1)
    result = {
        'lambda': lam, 'ell': ell, 'd': d, 'lhs': lhs, 'measure': measure, 'ratio': ratio,
        'geometric_constant': geometric, 'shells': shells,
        'passed': bool(ratio <= geometric and all(s['contained'] for s in shells)),
    }
    logger.info(f"sublevel {f.name} lambda={lam:g}: lhs {lhs:.6g}, measure {measure:.6g}, ratio {ratio:.6g}")
    return result
