#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Ball families with smooth charts (atlases), axiom checks, bumps and the
covering-lemma partition of unity

An atlas assigns to a point x and an integer scale j a ball B_j(x) and a
chart map from the open Euclidean unit ball onto it. Chart maps are
vectorized: one chart object may hold a batch of centers (and scales), and
forward/inverse_generic accept floats, arrays or jets, so every derivative
through a chart is exact jet arithmetic.
"""

import math
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field as dataclass_field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import networkx as nx

import jets
from constants import (
    RADIX, DEFAULT_SCALE_CAP, ABSOLUTE_ORDER_CAP, GAUSS_LEGENDRE_ORDER,
)
from errors import ChartInversionError, DomainError, HypothesisViolation, OrderError
from jets import Jet, ScalarField, dk_norm, pullback_jet
from utils import interior_grid

logger = logging.getLogger(__name__)

LEAF_TOLERANCE = 1e-12
DEFAULT_MAX_PAIRS = 200
DEFAULT_LOCAL_SAMPLES = 16
DEFAULT_DOUBLING_CAP = 64
MASS_TOLERANCE = 1e-10


def _rows(points: Any, d: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    return pts.reshape(-1, d)


def _value(c: Any) -> np.ndarray:
    return np.asarray(c.value if isinstance(c, Jet) else c, dtype=float)


def local_samples(dim: int, n: int = DEFAULT_LOCAL_SAMPLES, radius: float = 0.999) -> np.ndarray:
    """Deterministic sample of the open unit ball in dimension dim, shape (N, dim)"""
    if dim == 1:
        return np.linspace(-radius, radius, n).reshape(-1, 1)
    return interior_grid(n if dim == 2 else max(4, int(round(n ** (2.0 / dim)))), dim, radius)


def unit_ball_rule(dim: int, n: int = 2 * GAUSS_LEGENDRE_ORDER) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gauss-Legendre product rule on the open unit ball

    dim 1 is plain Gauss-Legendre on (-1, 1); dim 2 uses polar coordinates
    (Gauss-Legendre in r with the r dr factor, trapezoid in angle); dim 3
    uses Gauss-Legendre in r, cos(theta) and a trapezoid in azimuth.

    Returns:
        Nodes of shape (N, dim) and weights of shape (N,)
    """
    x, w = np.polynomial.legendre.leggauss(n)
    if dim == 1:
        return x.reshape(-1, 1), w
    r = 0.5 * (x + 1.0)
    wr = 0.5 * w
    if dim == 2:
        theta = 2.0 * np.pi * np.arange(2 * n) / (2 * n)
        rr, tt = np.meshgrid(r, theta, indexing='ij')
        ww = np.outer(wr * r, np.full(2 * n, 2.0 * np.pi / (2 * n)))
        nodes = np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=-1).reshape(-1, 2)
        return nodes, ww.reshape(-1)
    if dim == 3:
        phi = 2.0 * np.pi * np.arange(2 * n) / (2 * n)
        rr, zz, pp = np.meshgrid(r, x, phi, indexing='ij')
        s = np.sqrt(1.0 - zz * zz)
        nodes = np.stack([rr * s * np.cos(pp), rr * s * np.sin(pp), rr * zz], axis=-1).reshape(-1, 3)
        ww = (wr * r * r)[:, None, None] * w[None, :, None] * np.full(2 * n, 2.0 * np.pi / (2 * n))[None, None, :]
        return nodes, ww.reshape(-1)
    raise ValueError(f"Unit ball rule supports dim <= 3, got {dim}")


class ChartMap(ABC):
    """Homeomorphism from the open unit ball of dimension dim onto a ball (possibly a batch of balls)"""

    dim: int = 1
    ambient: int = 1
    smoothness: int = ABSOLUTE_ORDER_CAP

    @abstractmethod
    def forward(self, coords: Sequence[Any]) -> List[Any]:
        """Ambient coordinates of the image of local coordinates (floats, arrays or jets)"""

    @abstractmethod
    def inverse_generic(self, coords: Sequence[Any]) -> List[Any]:
        """Local coordinates of ambient points assumed to lie on the ball's leaf"""

    @abstractmethod
    def contains(self, points: np.ndarray) -> np.ndarray:
        """Membership mask of ambient points of shape (n, ambient)"""

    def __call__(self, t: Any) -> np.ndarray:
        """Image of local points of shape (n, dim) or (dim,)"""
        local = np.asarray(t, dtype=float)
        single = local.ndim == 1
        local = local.reshape(-1, self.dim)
        image = self.forward([local[:, i] for i in range(self.dim)])
        out = np.stack(np.broadcast_arrays(*[_value(c) for c in image]), axis=-1)
        return out[0] if single else out

    def inverse(self, points: Any) -> np.ndarray:
        """
        Local coordinates of ambient points

        Raises:
            ChartInversionError: If a point is outside the ball
        """
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = pts.reshape(-1, self.ambient)
        inside = self.contains(pts)
        if not np.all(inside):
            raise ChartInversionError(f"Point {pts[~inside][0].tolist()} is outside the chart ball")
        local = self.inverse_generic([pts[:, i] for i in range(self.ambient)])
        out = np.stack(np.broadcast_arrays(*[_value(c) for c in local]), axis=-1)
        return out[0] if single else out


class RayChart(ChartMap):
    """t -> exp(radix^j t) x on the ray through x"""

    def __init__(self, x: np.ndarray, rj: Any):
        x = np.asarray(x, dtype=float)
        self.ambient = x.shape[-1]
        self.dim = 1
        # centers are stored coordinate-first so they broadcast against batched jets
        self.center = x.T if x.ndim == 2 else x
        self.rj = np.asarray(rj, dtype=float)
        norm2 = np.sum(self.center * self.center, axis=0)
        if np.any(norm2 == 0):
            raise DomainError("Ray charts need x != 0")
        self.norm2 = norm2

    def forward(self, coords):
        stretch = jets.exp(coords[0] * self.rj)
        return [stretch * self.center[i] for i in range(self.ambient)]

    def inverse_generic(self, coords):
        dot = 0.0
        for i in range(self.ambient):
            dot = dot + coords[i] * (self.center[i] / self.norm2)
        return [jets.log(dot) / self.rj]

    def contains(self, points):
        pts = _rows(points, self.ambient)
        center = np.atleast_2d(self.center.T) if self.center.ndim == 2 else self.center[None, :]
        return _ray_relation(pts, center, np.zeros(len(pts)), np.atleast_1d(self.rj))


class AffineChart(ChartMap):
    """t -> x + radix^j t"""

    def __init__(self, x: np.ndarray, rj: Any):
        x = np.asarray(x, dtype=float)
        self.ambient = self.dim = x.shape[-1]
        self.center = x.T if x.ndim == 2 else x
        self.rj = np.asarray(rj, dtype=float)

    def forward(self, coords):
        return [self.center[i] + coords[i] * self.rj for i in range(self.ambient)]

    def inverse_generic(self, coords):
        return [(coords[i] - self.center[i]) / self.rj for i in range(self.ambient)]

    def contains(self, points):
        pts = _rows(points, self.ambient)
        center = self.center.T if self.center.ndim == 2 else self.center[None, :]
        return np.linalg.norm(pts - center, axis=1) < np.atleast_1d(self.rj)


def _log_coords(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    norm = np.linalg.norm(points, axis=1)
    with np.errstate(all='ignore'):
        direction = points / norm[:, None]
        return np.log(norm), direction


def _ray_relation(points: np.ndarray, centers: np.ndarray, point_radius: np.ndarray, center_radius: np.ndarray) -> np.ndarray:
    """Same ray and log distance below the sum of radii (elementwise over rows)"""
    s, u = _log_coords(points)
    s0, u0 = _log_coords(centers)
    same = np.all(np.abs(u - u0) <= LEAF_TOLERANCE, axis=1)
    return same & (np.abs(s - s0) < point_radius + center_radius)


class ChartAtlas(ABC):
    """
    Family of balls B_j(x) with charts, existence predicate and measure weights

    Subclasses provide the geometry; set-theoretic relations default to
    sampling through charts and are overridden where closed forms exist.
    """

    name = "atlas"
    d_scale = 1
    closed_form = False

    def __init__(self, d: int, radix: float = RADIX, scale_cap: Optional[int] = DEFAULT_SCALE_CAP):
        if d < 1:
            raise ValueError(f"Atlas dimension must be >= 1, got {d}")
        self.d = d
        self.radix = radix
        self.scale_cap = scale_cap

    def radius(self, j: Any) -> Any:
        return np.power(float(self.radix), j)

    @property
    def nesting_constant(self) -> Optional[float]:
        """Closed-form smooth nesting constant, if known"""
        return None

    @abstractmethod
    def exists(self, j: int, x: Sequence[float]) -> bool:
        """Whether B_j(x) is defined"""

    @abstractmethod
    def chart(self, j: Any, x: np.ndarray) -> ChartMap:
        """Chart of B_j(x); j and x may be batched (j of shape (n,), x of shape (n, d))"""

    @abstractmethod
    def ball_dimension(self, x: Sequence[float]) -> int:
        """Dimension of the chart domain at x"""

    @abstractmethod
    def leaf_id(self, x: Sequence[float]) -> Any:
        """Hashable label of the leaf containing x"""

    def measure_weight(self, j: int, x: Sequence[float]) -> Optional[Callable[[Sequence[Any]], Any]]:
        """Normalized chart weight J_{j,x} as a generic function of local coordinates (None if unavailable)"""
        return None

    def contains(self, j: int, x: Sequence[float], points: np.ndarray) -> np.ndarray:
        return self.chart(j, np.asarray(x, dtype=float)).contains(points)

    def intersects(self, j: int, x: Sequence[float], jp: int, xp: Sequence[float]) -> bool:
        """Whether B_j(x) and B_jp(xp) meet (sampled through the chart of B_jp(xp))"""
        if self.contains(j, x, np.atleast_2d(xp))[0] or self.contains(jp, xp, np.atleast_2d(x))[0]:
            return True
        chart = self.chart(jp, np.asarray(xp, dtype=float))
        images = chart(local_samples(chart.dim, 2 * DEFAULT_LOCAL_SAMPLES))
        return bool(np.any(self.contains(j, x, images)))

    def ball_subset(self, jp: int, xp: Sequence[float], j: int, x: Sequence[float]) -> Tuple[bool, Optional[np.ndarray]]:
        """
        Whether B_jp(xp) is inside B_j(x)

        Returns:
            (flag, offending point or None)
        """
        chart = self.chart(jp, np.asarray(xp, dtype=float))
        images = chart(local_samples(chart.dim, 2 * DEFAULT_LOCAL_SAMPLES))
        inside = self.contains(j, x, images)
        if np.all(inside):
            return True, None
        return False, images[~inside][0]

    def intersect_matrix(self, points: np.ndarray, scales: Sequence[int],
                         others: Optional[np.ndarray] = None, other_scales: Optional[Sequence[int]] = None) -> np.ndarray:
        """Boolean matrix of pairwise intersections of B_{scales[a]}(points[a]) and B_{other_scales[b]}(others[b])"""
        points = _rows(points, self.d)
        others = points if others is None else _rows(others, self.d)
        other_scales = scales if other_scales is None else other_scales
        out = np.zeros((len(points), len(others)), dtype=bool)
        for a in range(len(points)):
            for b in range(len(others)):
                out[a, b] = self.intersects(int(scales[a]), points[a], int(other_scales[b]), others[b])
        return out

    def describe(self) -> Dict[str, Any]:
        return {'name': self.name, 'd': self.d, 'radix': self.radix, 'scale_cap': self.scale_cap}


class BNWAtlas(ChartAtlas):
    """
    Radial atlas on R^d minus the origin

    Leaves are the open rays from the origin; B_j(x) = {x e^s : |s| < radix^j}
    with chart t -> exp(radix^j t) x. Weights come from the polar
    coordinates formula r^(d-1) dr, renormalized to unit mass on (-1, 1).
    """

    name = "bnw"
    closed_form = True

    @property
    def nesting_constant(self) -> float:
        return 1.0 / self.radix

    def exists(self, j, x):
        x = np.asarray(x, dtype=float)
        return (self.scale_cap is None or j <= self.scale_cap) and bool(np.any(x != 0))

    def chart(self, j, x):
        return RayChart(x, self.radius(np.asarray(j, dtype=float)))

    def ball_dimension(self, x):
        return 1

    def leaf_id(self, x):
        x = np.asarray(x, dtype=float)
        return tuple(np.round(x / np.linalg.norm(x), 12).tolist())

    def measure_weight(self, j, x):
        a = self.d * float(self.radius(j))
        scale = a / (2.0 * math.sinh(a))
        return lambda t: jets.exp(t[0] * a) * scale

    def contains(self, j, x, points):
        pts = _rows(points, self.d)
        centers = np.broadcast_to(np.asarray(x, dtype=float), pts.shape)
        return _ray_relation(pts, centers, np.zeros(len(pts)), np.full(len(pts), float(self.radius(j))))

    def intersects(self, j, x, jp, xp):
        return bool(_ray_relation(np.atleast_2d(np.asarray(x, dtype=float)), np.atleast_2d(np.asarray(xp, dtype=float)),
                                  np.array([float(self.radius(j))]), np.array([float(self.radius(jp))]))[0])

    def ball_subset(self, jp, xp, j, x):
        s, u = _log_coords(np.atleast_2d(np.asarray(x, dtype=float)))
        sp, up = _log_coords(np.atleast_2d(np.asarray(xp, dtype=float)))
        same = bool(np.all(np.abs(u - up) <= LEAF_TOLERANCE))
        inside = same and abs(float(s[0] - sp[0])) + float(self.radius(jp)) <= float(self.radius(j)) * (1 + 1e-14)
        if inside:
            return True, None
        # the far endpoint of B_jp(xp) seen from x is the offending point
        direction = 1.0 if sp[0] >= s[0] else -1.0
        return False, np.asarray(xp, dtype=float) * math.exp(direction * 0.999 * float(self.radius(jp)))

    def intersect_matrix(self, points, scales, others=None, other_scales=None):
        points = _rows(points, self.d)
        others = points if others is None else _rows(others, self.d)
        other_scales = scales if other_scales is None else other_scales
        s, u = _log_coords(points)
        so, uo = _log_coords(others)
        same = np.all(np.abs(u[:, None, :] - uo[None, :, :]) <= LEAF_TOLERANCE, axis=2)
        r = self.radius(np.asarray(scales, dtype=float))
        ro = self.radius(np.asarray(other_scales, dtype=float))
        return same & (np.abs(s[:, None] - so[None, :]) < r[:, None] + ro[None, :])


class EuclideanAtlas(ChartAtlas):
    """Flat atlas B_j(x) = x + radix^j * (open unit ball), chart t -> x + radix^j t"""

    name = "euclidean"
    closed_form = True

    def __init__(self, d: int = 1, radix: float = RADIX, scale_cap: Optional[int] = None):
        super().__init__(d, radix, scale_cap)

    @property
    def nesting_constant(self) -> float:
        return 1.0 / self.radix

    def exists(self, j, x):
        return self.scale_cap is None or j <= self.scale_cap

    def chart(self, j, x):
        return AffineChart(x, self.radius(np.asarray(j, dtype=float)))

    def ball_dimension(self, x):
        return self.d

    def leaf_id(self, x):
        return 0

    def measure_weight(self, j, x):
        volume = math.pi ** (self.d / 2.0) / math.gamma(self.d / 2.0 + 1.0)
        return lambda t: 1.0 / volume + 0.0 * t[0]

    def contains(self, j, x, points):
        pts = _rows(points, self.d)
        return np.linalg.norm(pts - np.asarray(x, dtype=float), axis=1) < float(self.radius(j))

    def intersects(self, j, x, jp, xp):
        gap = float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(xp, dtype=float)))
        return gap < float(self.radius(j) + self.radius(jp))

    def ball_subset(self, jp, xp, j, x):
        x = np.asarray(x, dtype=float)
        xp = np.asarray(xp, dtype=float)
        gap = float(np.linalg.norm(x - xp))
        if gap + float(self.radius(jp)) <= float(self.radius(j)) * (1 + 1e-14):
            return True, None
        direction = (xp - x) / gap if gap > 0 else np.eye(self.d)[0]
        return False, xp + 0.999 * float(self.radius(jp)) * direction

    def intersect_matrix(self, points, scales, others=None, other_scales=None):
        points = _rows(points, self.d)
        others = points if others is None else _rows(others, self.d)
        other_scales = scales if other_scales is None else other_scales
        gap = np.linalg.norm(points[:, None, :] - others[None, :, :], axis=2)
        r = self.radius(np.asarray(scales, dtype=float))
        ro = self.radius(np.asarray(other_scales, dtype=float))
        return gap < r[:, None] + ro[None, :]


def bnw_atlas(d: int, scale_cap: int = DEFAULT_SCALE_CAP, radix: float = RADIX) -> BNWAtlas:
    """Radial atlas of R^d minus the origin with charts t -> exp(radix^j t) x"""
    return BNWAtlas(d, radix=radix, scale_cap=scale_cap)


def make_atlas(name: str, d: int, **kwargs) -> ChartAtlas:
    """Atlas by name ('bnw' or 'euclidean')"""
    if name == 'bnw':
        return BNWAtlas(d, **kwargs)
    if name == 'euclidean':
        return EuclideanAtlas(d, **kwargs)
    raise ValueError(f"Unknown atlas: {name}")


# derivative norms through charts

def ball_dk_norm(field: ScalarField, atlas: ChartAtlas, j: Any, x: np.ndarray, k: int,
                 x0: Optional[np.ndarray] = None, order: Optional[int] = None) -> Any:
    """
    |d^k_{x0} f|_{B_j(x)}: the supremum of the order 1..k partials of f o Phi_{j,x} at Phi_{j,x}^{-1}(x0)

    j and x may be batched (x of shape (n, d)); x0 defaults to the centers.

    Args:
        field: Field on the ambient space
        atlas: Atlas
        j: Scale (or array of scales)
        x: Ball center(s)
        k: Derivative order
        x0: Point(s) where the norm is taken
        order: Jet order (defaults to k)

    Returns:
        Nonnegative float, or an array over the batch
    """
    x = np.asarray(x, dtype=float)
    chart = atlas.chart(j, x)
    batched = x.ndim == 2
    n = x.shape[0] if batched else None
    if x0 is None:
        t = np.zeros((n, chart.dim)) if batched else np.zeros(chart.dim)
    else:
        t = chart.inverse(x0)
        if batched:
            t = np.asarray(t).reshape(n, chart.dim)
    jet = pullback_jet(field, chart, t, order or k)
    return dk_norm(jet, k)


# bumps

def bump_profile(s: Any, c: float) -> Any:
    """
    Smooth radial profile of s = |t|^2: 1 for |t| <= c, 0 for |t| >= (1 + c)/2, values in [0, 1]

    Args:
        s: Squared local radius (float, array or jet)
        c: Nesting constant

    Returns:
        Same kind as s
    """
    inner = c * c
    outer = (0.5 * (1.0 + c)) ** 2
    u = (outer - s) / (outer - inner)
    rise = jets.smooth_cutoff(u)
    fall = jets.smooth_cutoff(1.0 - u)
    return rise / (rise + fall)


class Bump:
    """
    eta_{j,x} = profile o Phi_{j,x}^{-1} on B_j(x), and 0 outside

    Identically one on the image of the ball of radius c, which contains
    B_{j-1}(x) by smooth nesting.
    """

    def __init__(self, atlas: ChartAtlas, j: int, x: Sequence[float], c: Optional[float] = None):
        x = np.asarray(x, dtype=float)
        if not atlas.exists(j, x):
            raise DomainError(f"Ball B_{j}({x.tolist()}) does not exist")
        self.atlas = atlas
        self.j = j
        self.x = x
        self.c = c if c is not None else (atlas.nesting_constant or 1.0 / atlas.radix)
        self.chart = atlas.chart(j, x)

    def _generic(self, coords: Sequence[Any], inside: np.ndarray) -> Any:
        # points off the ball are moved to the center so the inverse stays defined, then masked
        weight = inside.astype(float)
        safe = [c * weight + self.x[i] * (1.0 - weight) for i, c in enumerate(coords)]
        local = self.chart.inverse_generic(safe)
        s = 0.0
        for t in local:
            s = s + t * t
        return bump_profile(s, self.c) * weight

    def __call__(self, points: Any) -> np.ndarray:
        """Values at ambient points of shape (n, d) (or a single point)"""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = pts.reshape(-1, self.atlas.d)
        inside = self.atlas.contains(self.j, self.x, pts)
        with np.errstate(all='ignore'):
            values = self._generic([pts[:, i] for i in range(self.atlas.d)], inside)
        values = np.broadcast_to(np.asarray(values, dtype=float), (len(pts),)).copy()
        return values[0] if single else values

    def on_coords(self, coords: Sequence[Any]) -> Any:
        """Generic evaluation on ambient coordinates (e.g. the jets of a chart image)"""
        points = np.stack(np.broadcast_arrays(*[_value(c) for c in coords]), axis=-1).reshape(-1, self.atlas.d)
        inside = self.atlas.contains(self.j, self.x, points)
        shape = np.broadcast_shapes(*[_value(c).shape for c in coords])
        return self._generic(coords, inside.reshape(shape))

    def as_field(self) -> ScalarField:
        """The bump as a field (jet-evaluable away from the ball boundary)"""
        return ScalarField(self.atlas.d, self.on_coords, name=f"eta_{self.j}({self.x.tolist()})")

    def pullback(self, chart: ChartMap, t: Any, order: int) -> Jet:
        """Jet of eta o chart at local points t"""
        local = np.asarray(t, dtype=float)
        base = local.T if local.ndim == 2 else local
        with np.errstate(all='ignore'):
            result = self.on_coords(chart.forward(Jet.variables(base, order)))
        if not isinstance(result, Jet):
            result = Jet.constant(result, chart.dim, order)
        return result


def bump(atlas: ChartAtlas, j: int, x: Sequence[float]) -> Bump:
    """Bump eta_{j,x} subordinate to B_j(x), identically one on B_{j-1}(x)"""
    return Bump(atlas, j, x)


# axiom checks

@dataclass
class AxiomReport:
    """Outcome of the axiom checks with measured constants and witnesses"""
    atlas: Dict[str, Any]
    passed: Dict[str, bool] = dataclass_field(default_factory=dict)
    labels: Dict[str, str] = dataclass_field(default_factory=dict)
    constants: Dict[str, Any] = dataclass_field(default_factory=dict)
    witnesses: Dict[str, List[Dict[str, Any]]] = dataclass_field(default_factory=dict)
    infrastructure_failures: List[str] = dataclass_field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(self.passed.values()) and not self.infrastructure_failures

    def fail(self, axiom: str, witness: Dict[str, Any]):
        self.passed[axiom] = False
        self.witnesses.setdefault(axiom, []).append(witness)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'atlas': self.atlas, 'passed': self.passed, 'all_passed': self.all_passed,
            'labels': self.labels, 'constants': self.constants, 'witnesses': self.witnesses,
            'infrastructure_failures': self.infrastructure_failures,
        }


def greedy_packing(atlas: ChartAtlas, points: np.ndarray, j: int) -> List[int]:
    """
    Maximal set of indices whose balls B_j are pairwise disjoint

    Candidates are visited in lexicographic order of their coordinates so the
    result is deterministic.
    """
    points = _rows(points, atlas.d)
    order = np.lexsort(points.T[::-1])
    meets = atlas.intersect_matrix(points, [j] * len(points))
    chosen: List[int] = []
    for i in order:
        if not any(meets[i, k] for k in chosen):
            chosen.append(int(i))
    return chosen


def doubling_count(atlas: ChartAtlas, points: np.ndarray, j: int) -> Tuple[int, Dict[str, Any]]:
    """
    Weak doubling multiplicity at scale j over a probe set

    Packs points with disjoint B_j balls, then counts for every probe point how
    many packed balls meet it at scale j + 1.

    Returns:
        (maximal count, witness of the maximum)
    """
    points = _rows(points, atlas.d)
    packed = greedy_packing(atlas, points, j)
    meets = atlas.intersect_matrix(points, [j + 1] * len(points), points[packed], [j + 1] * len(packed))
    counts = meets.sum(axis=1)
    worst = int(np.argmax(counts))
    return int(counts[worst]), {'point': points[worst].tolist(), 'scale': j, 'count': int(counts[worst]),
                                'packed': len(packed)}


def _pair_sample(n: int, limit: int) -> np.ndarray:
    if n <= limit:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, limit).round().astype(int))


def _transition_jets(atlas: ChartAtlas, j: int, x: np.ndarray, jp: int, xp: np.ndarray,
                     m: int, samples: int) -> Optional[np.ndarray]:
    """Max |d^alpha| (|alpha| <= m) of Phi_{j,x}^{-1} o Phi_{jp,xp} over local points mapped into B_j(x)"""
    outer = atlas.chart(j, x)
    inner = atlas.chart(jp, xp)
    t = local_samples(inner.dim, samples)
    keep = atlas.contains(j, x, inner(t))
    if not np.any(keep):
        return None
    t = t[keep]
    with np.errstate(all='ignore'):
        local = outer.inverse_generic(inner.forward(Jet.variables(t.T, m)))
    worst = 0.0
    for component in local:
        raw = component.raw() if isinstance(component, Jet) else np.asarray(component)
        worst = max(worst, float(np.max(np.abs(raw))))
    return worst


def check_axioms(atlas: ChartAtlas, points: np.ndarray, scales: Sequence[int], m: int = 4,
                 max_pairs: int = DEFAULT_MAX_PAIRS, samples: int = DEFAULT_LOCAL_SAMPLES,
                 doubling_cap: int = DEFAULT_DOUBLING_CAP) -> AxiomReport:
    """
    Check compatibility, engulfing, weak doubling, smooth nesting, smooth
    engulfing and the measure normalisation on a probe set

    Set relations use closed forms where the atlas has them and sampling
    otherwise; labels record which. Chart failures are infrastructure
    failures, never axiom violations.

    Args:
        atlas: Atlas under test
        points: Probe points, shape (n, d)
        scales: Scale range
        m: Derivative order for smooth engulfing
        max_pairs: Cap on ball pairs examined per axiom
        samples: Local sample count per ball
        doubling_cap: Largest acceptable weak doubling multiplicity

    Returns:
        AxiomReport
    """
    points = _rows(points, atlas.d)
    scales = sorted(int(j) for j in scales)
    report = AxiomReport(atlas=atlas.describe())
    sampled = "closed form" if atlas.closed_form else "verified on probe"
    report.constants['probe'] = {'points': len(points), 'scales': scales, 'm': m}
    for axiom in ('compatibility', 'engulfing', 'weak_doubling', 'smooth_nesting', 'smooth_engulfing', 'measure'):
        report.passed[axiom] = True
    report.labels.update({'compatibility': sampled, 'engulfing': sampled, 'weak_doubling': 'verified on probe',
                          'smooth_nesting': 'closed form' if atlas.nesting_constant else 'verified on probe',
                          'smooth_engulfing': 'verified on probe', 'measure': 'verified on probe'})

    balls = [(j, i) for j in scales for i in range(len(points)) if atlas.exists(j, points[i])]
    ball_points = np.array([points[i] for _, i in balls]).reshape(-1, atlas.d)
    ball_scales = [j for j, _ in balls]
    try:
        meets = atlas.intersect_matrix(ball_points, ball_scales)
    except ChartInversionError as e:
        report.infrastructure_failures.append(f"intersections: {e}")
        return report
    pairs = np.argwhere(meets)
    logger.info(f"Checking axioms of {atlas.name} on {len(balls)} balls, {len(pairs)} intersecting pairs")

    # compatibility
    for a, b in pairs:
        (j, i), (jp, ip) = balls[a], balls[b]
        if not atlas.exists(j - 1, points[ip]):
            report.fail('compatibility', {'x': points[i].tolist(), 'j': j, 'xp': points[ip].tolist(), 'jp': jp})
            break

    # engulfing: B_{j-1}(x) meets B_jp(xp), jp <= j - 1  =>  B_jp(xp) inside B_j(x)
    lower = {}
    for a, (j, i) in enumerate(balls):
        if atlas.exists(j - 1, points[i]):
            lower[a] = j - 1
    engulf_pairs = 0
    worst_margin = 0
    for a, (j, i) in enumerate(balls):
        if a not in lower:
            continue
        candidates = [b for b, (jp, ip) in enumerate(balls) if jp <= j - 1]
        if not candidates:
            continue
        cand_points = ball_points[candidates]
        cand_scales = [ball_scales[b] for b in candidates]
        hits = atlas.intersect_matrix(points[i][None, :], [j - 1], cand_points, cand_scales)[0]
        for b in np.asarray(candidates)[hits]:
            jp, ip = balls[b]
            engulf_pairs += 1
            try:
                ok, offending = atlas.ball_subset(jp, points[ip], j, points[i])
            except ChartInversionError as e:
                report.infrastructure_failures.append(f"engulfing: {e}")
                continue
            if not ok:
                worst_margin += 1
                if len(report.witnesses.get('engulfing', [])) < 5:
                    report.fail('engulfing', {'x': points[i].tolist(), 'j': j, 'xp': points[ip].tolist(), 'jp': jp,
                                              'outside_point': np.asarray(offending).tolist()})
                else:
                    report.passed['engulfing'] = False
    report.constants['engulfing_pairs'] = engulf_pairs
    report.constants['engulfing_violations'] = worst_margin

    # weak doubling
    doubling = {}
    for j in scales:
        if not all(atlas.exists(j + 1, p) for p in points):
            continue
        count, witness = doubling_count(atlas, points, j)
        doubling[j] = count
        if count > doubling_cap:
            report.fail('weak_doubling', witness)
    report.constants['weak_doubling'] = max(doubling.values()) if doubling else 0
    report.constants['weak_doubling_by_scale'] = doubling

    # smooth nesting
    nest = 0.0
    for j in scales:
        for i in _pair_sample(len(points), max(1, max_pairs // max(1, len(scales)))):
            if not (atlas.exists(j, points[i]) and atlas.exists(j - 1, points[i])):
                continue
            try:
                outer = atlas.chart(j, points[i])
                inner = atlas.chart(j - 1, points[i])
                t = local_samples(inner.dim, samples)
                local = outer.inverse(inner(t))
            except ChartInversionError as e:
                report.infrastructure_failures.append(f"nesting: {e}")
                continue
            nest = max(nest, float(np.max(np.linalg.norm(np.atleast_2d(local), axis=-1))))
    c = atlas.nesting_constant
    report.constants['nesting_sampled'] = nest
    report.constants['nesting_c'] = c if c is not None else nest
    if (c is not None and nest > c + 1e-12) or nest >= 1.0:
        report.fail('smooth_nesting', {'measured': nest, 'declared': c})

    # smooth engulfing
    table: Dict[int, float] = {}
    for a, b in pairs[_pair_sample(len(pairs), max_pairs)]:
        (j, i), (jp, ip) = balls[a], balls[b]
        try:
            worst = _transition_jets(atlas, j, points[i], jp, points[ip], m, samples)
        except (ChartInversionError, DomainError) as e:
            report.infrastructure_failures.append(f"smooth engulfing: {e}")
            continue
        if worst is None:
            continue
        k = abs(j - jp)
        table[k] = max(table.get(k, 0.0), worst)
        if not math.isfinite(worst):
            report.fail('smooth_engulfing', {'x': points[i].tolist(), 'j': j, 'xp': points[ip].tolist(), 'jp': jp})
    report.constants['smooth_engulfing'] = {str(k): v for k, v in sorted(table.items())}

    # measure normalisation
    masses, infima, norms = [], [], []
    for j in scales:
        for i in _pair_sample(len(points), 8):
            weight = atlas.measure_weight(j, points[i])
            if weight is None or not atlas.exists(j, points[i]):
                continue
            dim = atlas.ball_dimension(points[i])
            nodes, w = unit_ball_rule(dim)
            values = np.broadcast_to(_value(weight([nodes[:, q] for q in range(dim)])), w.shape)
            masses.append(abs(float(np.dot(w, values)) - 1.0))
            grid = local_samples(dim, samples)
            jet = weight(Jet.variables(grid.T, min(m, ABSOLUTE_ORDER_CAP)))
            jet = jet if isinstance(jet, Jet) else Jet.constant(np.broadcast_to(jet, (len(grid),)), dim, m)
            infima.append(float(np.min(jet.value)))
            norms.append(float(np.max(np.abs(jet.raw()))))
    if masses:
        report.constants['measure_mass_error'] = max(masses)
        report.constants['measure_weight_inf'] = min(infima)
        report.constants['measure_weight_cm_norm'] = max(norms)
        if max(masses) > MASS_TOLERANCE or min(infima) <= 0:
            report.fail('measure', {'mass_error': max(masses), 'inf': min(infima)})
    else:
        report.labels['measure'] = 'not available'

    logger.info(f"Axiom check {atlas.name}: " + ", ".join(f"{k}={'pass' if v else 'FAIL'}" for k, v in report.passed.items()))
    return report


def comparability_ratio(field: ScalarField, atlas: ChartAtlas, x0: np.ndarray, j: int, x: np.ndarray,
                        jp: int, xp: np.ndarray, k: int) -> float:
    """|d^k_{x0} f|_{B_j(x)} / |d^k_{x0} f|_{B_jp(xp)} for two balls containing x0"""
    top = ball_dk_norm(field, atlas, j, x, k, x0=x0)
    bottom = ball_dk_norm(field, atlas, jp, xp, k, x0=x0)
    if bottom == 0:
        return 0.0 if top == 0 else math.inf
    return float(top / bottom)


# partition of unity

def _as_scale_function(R: Any) -> Callable[[np.ndarray], np.ndarray]:
    if callable(R):
        return lambda pts: np.asarray(R(pts)).astype(float).reshape(-1)
    return lambda pts: np.full(len(pts), float(R))


def _combine(raw: Dict[int, Any], k: int, higher: Sequence[int], same: Sequence[int]) -> Any:
    """
    eta_x = eta_{R(x),x} * prod over higher levels of (1 - eta) * E[1 / (1 + #same-level bumps)]

    The expectation treats the same-level bump values as independent success
    probabilities; it equals the sum over subsets of the lemma's formula.
    Generic over arrays and jets.
    """
    value = raw[k]
    for h in higher:
        value = value * (1.0 - raw[h])
    if same:
        dp = [1.0]
        for s in same:
            p = raw[s]
            nxt = [None] * (len(dp) + 1)
            for c, q in enumerate(dp):
                stay = q * (1.0 - p)
                move = q * p
                nxt[c] = stay if nxt[c] is None else nxt[c] + stay
                nxt[c + 1] = move
            dp = nxt
        expectation = 0.0
        for c, q in enumerate(dp):
            expectation = expectation + q / (c + 1.0)
        value = value * expectation
    return value


@dataclass
class Partition:
    """Centers, scales and bumps of the covering-lemma partition of unity"""
    atlas: ChartAtlas
    centers: np.ndarray
    scales: np.ndarray
    bumps: List[Bump]
    graph: nx.Graph
    N: int
    doubling_constant: int
    region_samples: int

    @property
    def packing_bound(self) -> int:
        """Overlap bound C(C+1) per level times the 2N - 1 admissible levels"""
        C = max(1, self.doubling_constant)
        return C * (C + 1) * (2 * self.N - 1)

    def __len__(self) -> int:
        return len(self.bumps)

    def neighbors(self, k: int) -> Tuple[List[int], List[int]]:
        """(higher-level, same-level) centers whose balls meet the ball of center k"""
        higher, same = [], []
        for n in sorted(self.graph.neighbors(k)):
            if self.scales[n] > self.scales[k]:
                higher.append(n)
            elif self.scales[n] == self.scales[k]:
                same.append(n)
        return higher, same

    def raw_values(self, points: np.ndarray) -> np.ndarray:
        """eta_{R(x),x}(y) for every center, shape (K, n)"""
        pts = _rows(points, self.atlas.d)
        return np.array([b(pts) for b in self.bumps]).reshape(len(self.bumps), len(pts))

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Partition functions at points, shape (K, n)"""
        raw_matrix = self.raw_values(points)
        raw = {k: raw_matrix[k] for k in range(len(self.bumps))}
        out = np.zeros_like(raw_matrix)
        for k in range(len(self.bumps)):
            higher, same = self.neighbors(k)
            out[k] = _combine(raw, k, higher, same)
        return out

    def total(self, points: np.ndarray) -> np.ndarray:
        """Sum of all partition functions at points"""
        return np.sum(self.evaluate(points), axis=0)

    def active(self, points: np.ndarray) -> List[List[int]]:
        """Centers whose partition function is nonzero at each point"""
        values = self.evaluate(points)
        return [list(np.nonzero(values[:, q] > 0)[0]) for q in range(values.shape[1])]

    def multiplicity(self, points: np.ndarray) -> int:
        """Largest number of balls B_{R(x)}(x) containing one of the points"""
        pts = _rows(points, self.atlas.d)
        inside = np.array([self.atlas.contains(int(self.scales[k]), self.centers[k], pts)
                           for k in range(len(self.bumps))]).reshape(len(self.bumps), len(pts))
        return int(np.max(np.sum(inside, axis=0))) if len(pts) else 0

    def on_coords(self, k: int, coords: Sequence[Any]) -> Any:
        """eta_{x_k} on ambient coordinates (arrays or jets)"""
        higher, same = self.neighbors(k)
        raw = {n: self.bumps[n].on_coords(coords) for n in [k] + higher + same}
        return _combine(raw, k, higher, same)

    def function_jet(self, k: int, chart: ChartMap, t: Any, order: int) -> Jet:
        """Jet of eta_{x_k} o chart at local points t"""
        higher, same = self.neighbors(k)
        raw = {n: self.bumps[n].pullback(chart, t, order) for n in [k] + higher + same}
        value = _combine(raw, k, higher, same)
        return value if isinstance(value, Jet) else Jet.constant(value, chart.dim, order)

    def smoothness(self, order: int, samples: int = DEFAULT_LOCAL_SAMPLES) -> float:
        """Largest jet norm of eta_x o Phi_{R(x),x} up to the given order over the unit ball samples"""
        worst = 0.0
        for k in range(len(self.bumps)):
            chart = self.atlas.chart(int(self.scales[k]), self.centers[k])
            jet = self.function_jet(k, chart, local_samples(chart.dim, samples), order)
            worst = max(worst, float(np.max(np.abs(jet.raw()))))
        return worst

    def to_dict(self) -> Dict[str, Any]:
        return {
            'atlas': self.atlas.describe(), 'size': len(self.bumps), 'N': self.N,
            'centers': self.centers.tolist(), 'scales': [int(s) for s in self.scales],
            'doubling_constant': self.doubling_constant, 'packing_bound': self.packing_bound,
            'edges': self.graph.number_of_edges(), 'region_samples': self.region_samples,
        }


def check_scale_lipschitz(atlas: ChartAtlas, points: np.ndarray, scales: np.ndarray, N: int) -> Optional[Dict[str, Any]]:
    """Witness of intersecting balls B_{R(x)}(x), B_{R(x')}(x') with |R(x) - R(x')| >= N, or None"""
    meets = atlas.intersect_matrix(points, scales)
    gap = np.abs(scales[:, None] - scales[None, :])
    bad = np.argwhere(meets & (gap >= N))
    if len(bad) == 0:
        return None
    a, b = bad[0]
    return {'x': points[a].tolist(), 'R_x': int(scales[a]), 'xp': points[b].tolist(), 'R_xp': int(scales[b]), 'N': N}


def build_partition(atlas: ChartAtlas, R: Any, region: np.ndarray, N: int = 2) -> Partition:
    """
    Partition of unity subordinate to the balls B_{R(x)}(x)

    For every level j a maximal set G_j of region samples with R = j and
    pairwise disjoint balls B_{j-2} is chosen greedily in lexicographic
    order; the balls B_{j-1}(x), x in G_j, then cover the samples of level j.

    Args:
        atlas: Atlas
        R: Scale assignment (callable on (n, d) arrays, or a constant)
        region: Region samples, shape (n, d)
        N: Scale-Lipschitz bound

    Returns:
        Partition

    Raises:
        HypothesisViolation: If R is unbounded or not integer-valued, B_{R(x)+1}(x) is undefined,
            or intersecting balls have scales N or more apart
    """
    points = _rows(region, atlas.d)
    values = _as_scale_function(R)(points)
    if not np.all(np.isfinite(values)):
        bad = int(np.argmin(np.isfinite(values)))
        raise HypothesisViolation("Scale assignment is unbounded", {'x': points[bad].tolist()})
    rounded = np.rint(values)
    off = np.abs(values - rounded) > 1e-9
    if np.any(off):
        bad = int(np.argmax(off))
        raise HypothesisViolation(f"Scale assignment is not integer-valued: R = {float(values[bad]):.6g}",
                                  {'x': points[bad].tolist(), 'R_x': float(values[bad])})
    scales = rounded.astype(int)
    for p, j in zip(points, scales):
        if not atlas.exists(int(j) + 1, p):
            raise HypothesisViolation(f"Ball B_{int(j) + 1} does not exist at {p.tolist()}",
                                      {'x': p.tolist(), 'R_x': int(j)})
    witness = check_scale_lipschitz(atlas, points, scales, N)
    if witness is not None:
        raise HypothesisViolation("Scale assignment violates the Lipschitz hypothesis", witness)

    centers, center_scales = [], []
    for j in sorted(set(scales.tolist())):
        level = points[scales == j]
        chosen = greedy_packing(atlas, level, j - 2)
        centers.extend(level[chosen])
        center_scales.extend([j] * len(chosen))
        logger.debug(f"Level {j}: {len(chosen)} centers from {len(level)} samples")
    centers = np.array(centers).reshape(-1, atlas.d)
    center_scales = np.array(center_scales, dtype=int)

    graph = nx.Graph()
    graph.add_nodes_from(range(len(centers)))
    meets = atlas.intersect_matrix(centers, center_scales)
    graph.add_edges_from((int(a), int(b)) for a, b in np.argwhere(np.triu(meets, 1)))

    doubling = 0
    for j in sorted(set(center_scales.tolist())):
        count, _ = doubling_count(atlas, points, j - 1)
        doubling = max(doubling, count)

    bumps = [Bump(atlas, int(j), x) for x, j in zip(centers, center_scales)]
    partition = Partition(atlas, centers, center_scales, bumps, graph, N, doubling, len(points))
    logger.info(f"Partition: {len(bumps)} centers, {graph.number_of_edges()} overlaps, "
                f"packing bound {partition.packing_bound}")
    return partition
