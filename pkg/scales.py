#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Scale functions R(x) and the hypotheses they have to satisfy

    lipschitz:   intersecting balls B_R(x)(x), B_R(y)(y) have |R(x) - R(y)| < N
    highderiv:   |d^m_x f|_R(x) <= K_h sum_{k<m} eps^(k-m) |d^k_x f|_R(x)
    firstderiv:  sup_y eps |d_y f|_R(y) <= K_f (1 + inf_y eps |d_y f|_R(y)) over y in B_R(x)(x)
"""

import math
import logging
from dataclasses import dataclass, field as dataclass_field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from constants import (
    DEFAULT_CANONICAL_SAMPLES, DEFAULT_K_FIRST, DEFAULT_K_HIGH, DEFAULT_LIPSCHITZ_N,
)
from errors import DomainError
from homspace import ChartAtlas, check_scale_lipschitz, local_samples
from jets import ScalarField, dk_norm, jet_eval, pullback_jet
from utils import parallel_map

logger = logging.getLogger(__name__)

# sub-ball levels below a candidate scale that are checked for membership
CANONICAL_DEPTH = 3
CANONICAL_FLOOR = -30


def _rows(points: Any, d: int) -> np.ndarray:
    return np.asarray(points, dtype=float).reshape(-1, d)


def bnw_scales(f: ScalarField, points: np.ndarray, C_tame: float, radix: float = 3.0) -> np.ndarray:
    """Vectorized bnw_scale over points of shape (n, d)"""
    if C_tame <= 0:
        raise ValueError(f"Tameness constant must be positive, got {C_tame}")
    pts = _rows(points, f.arity)
    jet = jet_eval(f, pts, 1)
    value = np.asarray(jet.value, dtype=float)
    radial = np.sum(pts.T * jet.gradient, axis=0)
    bad = np.nonzero((np.linalg.norm(pts, axis=1) == 0) | ~(radial > 0))[0]
    if len(bad):
        x = pts[bad[0]]
        raise DomainError(f"x . grad f(x) <= 0 at {x.tolist()}: point is outside the region of the scale function")
    threshold = value / radial / (4.0 * C_tame)
    scales = np.floor(np.log(threshold) / math.log(radix)).astype(int)
    # exact integer correction against rounding of the logarithm
    scales = np.where(np.power(float(radix), scales + 1.0) <= threshold, scales + 1, scales)
    scales = np.where(np.power(float(radix), scales.astype(float)) > threshold, scales - 1, scales)
    return scales


def bnw_scale(f: ScalarField, x: Sequence[float], C_tame: float, radix: float = 3.0) -> int:
    """
    Largest integer j with radix^j <= f(x) / (4 C_tame x . grad f(x))

    Args:
        f: Convex radially tame phase
        x: Point with x != 0 and x . grad f(x) > 0
        C_tame: Tameness constant
        radix: Atlas radix

    Returns:
        Integer scale, at most log_radix(1 / (4 C_tame)) for convex f

    Raises:
        DomainError: If x . grad f(x) <= 0
    """
    return int(bnw_scales(f, np.atleast_2d(np.asarray(x, dtype=float)), C_tame, radix)[0])


@dataclass
class ScaleAssignment:
    """Integer scale function on a region of the atlas"""
    evaluator: Callable[[np.ndarray], np.ndarray]
    N: int = DEFAULT_LIPSCHITZ_N
    name: str = "scale"
    region: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(self.evaluator(np.atleast_2d(points)), dtype=int).reshape(-1)

    def in_region(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        if self.region is None:
            return np.ones(len(pts), dtype=bool)
        return np.asarray(self.region(pts), dtype=bool)

    @classmethod
    def constant(cls, value: int, N: int = DEFAULT_LIPSCHITZ_N) -> 'ScaleAssignment':
        return cls(lambda pts: np.full(len(pts), int(value)), N, f"constant({value})")

    @classmethod
    def piecewise(cls, radii: Sequence[float], values: Sequence[int], N: int = DEFAULT_LIPSCHITZ_N) -> 'ScaleAssignment':
        """values[i] on radii[i-1] <= |x| < radii[i] (the last value beyond the last radius)"""
        if len(values) != len(radii) + 1:
            raise ValueError("piecewise scales need one more value than radii")
        edges = np.asarray(radii, dtype=float)
        table = np.asarray(values, dtype=int)
        return cls(lambda pts: table[np.searchsorted(edges, np.linalg.norm(pts, axis=1), side='right')], N,
                   f"piecewise({list(radii)}, {list(values)})")

    @classmethod
    def bnw(cls, f: ScalarField, C_tame: float, radix: float = 3.0) -> 'ScaleAssignment':
        def region(pts):
            jet = jet_eval(f, pts, 1)
            return np.sum(pts.T * jet.gradient, axis=0) > 0
        return cls(lambda pts: bnw_scales(f, pts, C_tame, radix), 2, f"bnw({f.name}, C={C_tame})", region)

    def perturbed(self, point: Sequence[float], delta: int) -> 'ScaleAssignment':
        """Same assignment with R + delta at a single point"""
        target = np.asarray(point, dtype=float)

        def evaluator(pts):
            values = np.array(self(pts))
            hit = np.all(np.isclose(pts, target[None, :], rtol=0.0, atol=1e-15), axis=1)
            values[hit] += delta
            return values
        return ScaleAssignment(evaluator, self.N, f"{self.name}+{delta}@{target.tolist()}", self.region)


def _order_norms_at(f: ScalarField, atlas: ChartAtlas, j: Any, x: np.ndarray, m: int) -> np.ndarray:
    """|d^k_x f|_j for k = 1..m at centers x (rows), shape (m, n)"""
    chart = atlas.chart(j, x)
    t = np.zeros((len(x), chart.dim))
    jet = pullback_jet(f, chart, t, m)
    return np.stack([np.atleast_1d(dk_norm(jet, k)) for k in range(1, m + 1)], axis=0)


def _ball_images(atlas: ChartAtlas, j: int, x: np.ndarray, samples: int) -> np.ndarray:
    chart = atlas.chart(j, x)
    return np.vstack([x[None, :], chart(local_samples(chart.dim, samples))])


def _highderiv_ratio(norms: np.ndarray, eps: float) -> np.ndarray:
    m = norms.shape[0]
    rhs = sum(eps ** (k - m) * norms[k - 1] for k in range(1, m))
    lhs = norms[m - 1]
    with np.errstate(all='ignore'):
        return np.where(lhs == 0, 0.0, np.where(rhs > 0, lhs / rhs, np.inf))


def in_collection(atlas: ChartAtlas, f: ScalarField, j: int, x: np.ndarray, eps: float, m: int,
                  K_high: float = DEFAULT_K_HIGH, K_first: float = DEFAULT_K_FIRST,
                  samples: int = DEFAULT_CANONICAL_SAMPLES) -> bool:
    """
    Membership of B_j(x) in the collection defining the canonical scale

    Both inequalities are tested on samples of the ball: the high-derivative
    bound at the center and the comparability sup |d_y f|_{j-1} <= K_f inf |d_y f|_{j-1}.
    """
    x = np.asarray(x, dtype=float)
    if not (atlas.exists(j, x) and atlas.exists(j - 1, x)):
        return False
    try:
        norms = _order_norms_at(f, atlas, j, x[None, :], m)
        if _highderiv_ratio(norms, eps)[0] > K_high:
            return False
        ys = _ball_images(atlas, j, x, samples)
        first = _order_norms_at(f, atlas, j - 1, ys, 1)[0]
    except DomainError:
        return False
    lo, hi = float(np.min(first)), float(np.max(first))
    return hi == 0.0 or (lo > 0 and hi <= K_first * lo)


def canonical_scale(atlas: ChartAtlas, f: ScalarField, eps: float, x: Sequence[float], m: int = 3,
                    K_high: float = DEFAULT_K_HIGH, K_first: float = DEFAULT_K_FIRST,
                    samples: int = DEFAULT_CANONICAL_SAMPLES, top: Optional[int] = None,
                    depth: int = CANONICAL_DEPTH, floor: int = CANONICAL_FLOOR) -> int:
    """
    Largest j such that B_{j+1}(x) exists and every sampled ball B_j'(x') inside it
    with j - depth < j' <= j belongs to the collection

    Args:
        atlas: Single-parameter atlas
        f: Phase
        eps: Finite-type epsilon in (0, 1]
        x: Point
        m: Derivative order of the high-derivative bound
        K_high, K_first: Implicit constants of the two defining inequalities
        samples: Samples per ball
        top: Highest candidate (defaults to scale_cap - 1, or 0 when uncapped)
        depth: Number of sub-ball levels checked below each candidate
        floor: Lowest candidate

    Returns:
        Integer scale

    Raises:
        DomainError: If no candidate scale is admissible
    """
    if atlas.d_scale != 1:
        raise ValueError("Canonical scales are defined for single-parameter atlases only")
    if not 0 < eps <= 1:
        raise ValueError(f"epsilon must lie in (0, 1], got {eps}")
    x = np.asarray(x, dtype=float)
    if top is None:
        top = (atlas.scale_cap if atlas.scale_cap is not None else 1) - 1
    membership: Dict[Tuple[int, Tuple[float, ...]], bool] = {}

    def member(jp: int, xp: np.ndarray) -> bool:
        key = (jp, tuple(np.round(xp, 14)))
        if key not in membership:
            membership[key] = in_collection(atlas, f, jp, xp, eps, m, K_high, K_first, samples)
        return membership[key]

    for j in range(top, floor - 1, -1):
        if not atlas.exists(j + 1, x):
            continue
        chart = atlas.chart(j + 1, x)
        centers = np.vstack([x[None, :], chart(local_samples(chart.dim, max(4, samples // 8)))])
        ok = True
        for jp in range(j, j - depth, -1):
            for xp in centers:
                inside, _ = atlas.ball_subset(jp, xp, j + 1, x)
                if inside and not member(jp, xp):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return j
    raise DomainError(f"No admissible canonical scale at {x.tolist()}")


def canonical_assignment(atlas: ChartAtlas, f: ScalarField, eps: float, m: int = 3,
                         threads: Optional[int] = None, **kwargs) -> ScaleAssignment:
    """Canonical scale as a ScaleAssignment (N = 3, from |R(x) - R(x')| <= 2)"""
    def evaluator(pts):
        return np.array(parallel_map(lambda p: canonical_scale(atlas, f, eps, p, m, **kwargs), list(pts), threads))
    return ScaleAssignment(evaluator, 3, f"canonical({f.name}, eps={eps})")


@dataclass
class HypothesisReport:
    """Pass flags, measured implicit constants and witnesses of the three hypotheses"""
    passed: Dict[str, bool]
    constants: Dict[str, Any]
    witnesses: Dict[str, List[Dict[str, Any]]] = dataclass_field(default_factory=dict)
    N: int = DEFAULT_LIPSCHITZ_N
    epsilon: float = 1.0
    m: int = 3
    probes: int = 0

    @property
    def all_passed(self) -> bool:
        return all(self.passed.values())

    def to_dict(self) -> Dict[str, Any]:
        return {'passed': self.passed, 'all_passed': self.all_passed, 'constants': self.constants,
                'witnesses': self.witnesses, 'N': self.N, 'epsilon': self.epsilon, 'm': self.m,
                'probes': self.probes}


def validate_hypotheses(atlas: ChartAtlas, f: ScalarField, R: ScaleAssignment, eps: float, m: int,
                        probe: np.ndarray, K_high: float = DEFAULT_K_HIGH, K_first: float = DEFAULT_K_FIRST,
                        samples: int = 16) -> HypothesisReport:
    """
    Evaluate the three scale hypotheses on probe points and their balls

    Failures are report content: each failed hypothesis carries a witness.

    Args:
        atlas: Atlas
        f: Phase
        R: Scale assignment (its N is the Lipschitz bound)
        eps: Finite-type epsilon
        m: Order of the high-derivative bound (>= 2)
        probe: Points in the region of R, shape (n, d)
        K_high, K_first: Implicit constants the measured values are compared with
        samples: Samples per ball for the first-derivative bound

    Returns:
        HypothesisReport
    """
    points = _rows(probe, atlas.d)
    scales = R(points)
    report = HypothesisReport({}, {}, N=R.N, epsilon=eps, m=m, probes=len(points))

    witness = check_scale_lipschitz(atlas, points, scales, R.N)
    meets = atlas.intersect_matrix(points, scales)
    gaps = np.abs(scales[:, None] - scales[None, :])
    report.constants['lipschitz'] = int(np.max(np.where(meets, gaps, 0))) if len(points) else 0
    report.passed['lipschitz'] = witness is None
    if witness is not None:
        report.witnesses['lipschitz'] = [witness]

    norms = _order_norms_at(f, atlas, scales, points, m)
    ratios = _highderiv_ratio(norms, eps)
    worst = int(np.argmax(ratios))
    report.constants['highderiv'] = float(ratios[worst])
    report.passed['highderiv'] = bool(ratios[worst] <= K_high)
    if not report.passed['highderiv']:
        report.witnesses['highderiv'] = [{'x': points[worst].tolist(), 'R_x': int(scales[worst]),
                                          'ratio': float(ratios[worst]), 'norms': norms[:, worst].tolist()}]

    def first_ratio(i: int) -> Tuple[float, Dict[str, Any]]:
        ys = _ball_images(atlas, int(scales[i]), points[i], samples)
        values = eps * _order_norms_at(f, atlas, R(ys), ys, 1)[0]
        ratio = float(np.max(values) / (1.0 + np.min(values)))
        return ratio, {'x': points[i].tolist(), 'R_x': int(scales[i]), 'sup': float(np.max(values)),
                       'inf': float(np.min(values))}

    results = parallel_map(first_ratio, range(len(points)))
    worst = int(np.argmax([r for r, _ in results]))
    report.constants['firstderiv'] = results[worst][0]
    report.passed['firstderiv'] = bool(results[worst][0] <= K_first)
    if not report.passed['firstderiv']:
        report.witnesses['firstderiv'] = [results[worst][1]]

    logger.info(f"Hypotheses for {R.name}: {report.passed} constants {report.constants}")
    return report


def derivative_bracket(atlas: ChartAtlas, f: ScalarField, R: ScaleAssignment, probe: np.ndarray,
                       m: int) -> Dict[str, Any]:
    """
    Range of |d^k_x f|_R(x) / f(x) over probes for k = 1..m

    For radially tame convex phases on the radial atlas each ratio stays in a
    fixed bracket [1/K, K]; K is reported per order.
    """
    points = _rows(probe, atlas.d)
    scales = R(points)
    norms = _order_norms_at(f, atlas, scales, points, m)
    values = np.abs(f.real(points))
    out = {}
    for k in range(1, m + 1):
        ratio = norms[k - 1] / values
        lo, hi = float(np.min(ratio)), float(np.max(ratio))
        out[str(k)] = {'min': lo, 'max': hi, 'K': max(hi, 1.0 / lo) if lo > 0 else math.inf}
    return out
