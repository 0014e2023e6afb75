#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Carnot-Caratheodory balls of weighted vector fields

B(x0, delta) is the set of endpoints of gamma' = sum delta^d_i a_i X_i(gamma),
gamma(0) = x0, over controls with |a| < 1. Balls are sampled with random
piecewise-constant controls, charts are exponential maps
u -> exp(sum u_i delta^d_i X_i) x0 integrated by RK4 (generic over jets, so
Jacobians come from forward-mode jets through the integrator), and CCAtlas
lets the generic axiom checker of homspace run on these balls.
"""

import math
import logging
import itertools
from dataclasses import dataclass, field as dataclass_field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import ConvexHull, Delaunay

from constants import (
    BRACKET_TOLERANCE, CONSTANT_CONTROL_SHARE, DEFAULT_CONTROL_PIECES, DEFAULT_PATHS, DEFAULT_RK4_STEPS,
    DEFAULT_VOLUME_CELLS, GAUSS_LEGENDRE_ORDER, NEWTON_MAX_ITERATIONS, NEWTON_TOLERANCE, PATH_CHUNK_SIZE,
)
from errors import ChartInversionError, DomainError
from homspace import AxiomReport, ChartAtlas, ChartMap, check_axioms, local_samples, unit_ball_rule
from jets import Jet, ScalarField, compose, fabs, jet_eval
from phase_dsl import default_variables, field_from_text
from utils import parallel_map, retry, unit_vector

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-10
INVERSE_TOLERANCE = 1e-9
ROUNDTRIP_TOLERANCE = 1e-6
CONTAINMENT_SHARE = 0.99


# vector fields and systems

@dataclass
class VectorField:
    """Vector field with jet-evaluable components"""
    name: str
    components: List[ScalarField]

    @property
    def dim(self) -> int:
        return len(self.components)

    def __call__(self, coords: Sequence[Any]) -> List[Any]:
        return [c.rule(coords) for c in self.components]

    def values(self, points: np.ndarray) -> np.ndarray:
        """Components at points of shape (n, dim), shape (n, dim)"""
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        return np.stack([c.real(pts) for c in self.components], axis=1)

    @classmethod
    def from_text(cls, texts: Sequence[str], name: str = "", variables: Optional[Sequence[str]] = None,
                  params: Optional[Dict[str, float]] = None) -> 'VectorField':
        variables = list(variables) if variables else default_variables(len(texts))
        components = [field_from_text(t, len(texts), params, variables) for t in texts]
        return cls(name or "(" + ", ".join(texts) + ")", components)


@dataclass
class CCSystem:
    """Vector fields X_1..X_q with formal degrees in [0, inf)^d_scale and the RK4 settings"""
    name: str
    fields: List[VectorField]
    degrees: np.ndarray
    steps: int = DEFAULT_RK4_STEPS
    pieces: int = DEFAULT_CONTROL_PIECES
    texts: List[List[str]] = dataclass_field(default_factory=list)

    def __post_init__(self):
        self.degrees = np.atleast_2d(np.asarray(self.degrees, dtype=float))
        if self.degrees.shape[0] != len(self.fields):
            self.degrees = self.degrees.T
        if self.degrees.shape[0] != len(self.fields):
            raise ValueError(f"{len(self.fields)} fields but degrees of shape {self.degrees.shape}")
        if np.any(self.degrees < 0) or np.any(np.all(self.degrees == 0, axis=1)):
            raise ValueError("Every vector field needs a nonzero formal degree in [0, inf)^d")
        if len({f.dim for f in self.fields}) != 1:
            raise ValueError("Vector fields of different dimensions")
        if self.steps < 1 or self.pieces < 1:
            raise ValueError("RK4 steps and control pieces must be positive")

    @property
    def dim(self) -> int:
        return self.fields[0].dim

    @property
    def q(self) -> int:
        return len(self.fields)

    @property
    def d_scale(self) -> int:
        return self.degrees.shape[1]

    def admissible(self, delta: Sequence[float]) -> bool:
        """delta in (0, 1]^d_scale (the admissible set is closed under contraction)"""
        delta = np.asarray(delta, dtype=float).reshape(-1)
        return len(delta) == self.d_scale and bool(np.all((delta > 0) & (delta <= 1)))

    def weights(self, delta: Any) -> np.ndarray:
        """delta^d_i for every field, shape (q,) + batch for delta of shape (d_scale,) + batch"""
        delta = np.asarray(delta, dtype=float)
        expand = (slice(None), slice(None)) + (None,) * (delta.ndim - 1)
        return np.prod(delta[None, ...] ** self.degrees[expand], axis=1)

    def velocity(self, state: Sequence[Any], coeffs: Sequence[Any]) -> List[Any]:
        """sum_i coeffs_i X_i(state), generic over arrays and jets"""
        out = [0.0] * self.dim
        for a, X in zip(coeffs, self.fields):
            for k, v in enumerate(X(state)):
                out[k] = out[k] + a * v
        return out

    def matrix(self, points: np.ndarray) -> np.ndarray:
        """X_i(x) as columns, shape (n, dim, q)"""
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        return np.stack([X.values(pts) for X in self.fields], axis=2)

    def scaled_matrix(self, x0: Sequence[float], delta: Sequence[float]) -> np.ndarray:
        """delta^d_i X_i(x0) as columns, shape (dim, q)"""
        return self.matrix(np.asarray(x0, dtype=float))[0] * self.weights(delta)[None, :]

    def rank(self, x: Sequence[float]) -> int:
        M = self.matrix(np.asarray(x, dtype=float))[0]
        scale = max(float(np.max(np.abs(M))), 1e-300)
        return int(np.linalg.matrix_rank(M, tol=RANK_TOLERANCE * scale))

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'dim': self.dim, 'fields': self.texts or [X.name for X in self.fields],
                'degrees': self.degrees.tolist(), 'steps': self.steps, 'pieces': self.pieces}

    @classmethod
    def from_dict(cls, spec: Dict[str, Any]) -> 'CCSystem':
        """System from {'name', 'fields': [[component text, ...], ...], 'degrees', 'variables', 'params', ...}"""
        texts = [list(f) for f in spec['fields']]
        variables = spec.get('variables')
        params = spec.get('params')
        fields = [VectorField.from_text(t, variables=variables, params=params) for t in texts]
        return cls(spec.get('name', 'system'), fields, spec['degrees'], int(spec.get('steps', DEFAULT_RK4_STEPS)),
                   int(spec.get('pieces', DEFAULT_CONTROL_PIECES)), texts)


CC_CATALOG = {
    'flat': {'fields': [['1', '0'], ['0', '1']], 'degrees': [[1, 0], [0, 1]]},
    'heisenberg': {'fields': [['1', '0', '-y/2'], ['0', '1', 'x/2'], ['0', '0', '1']],
                   'degrees': [[1], [1], [2]], 'variables': ['x', 'y', 't']},
    'grushin': {'fields': [['1', '0'], ['0', 'x']], 'degrees': [[1], [1]]},
    'grushin_full': {'fields': [['1', '0'], ['0', 'x'], ['0', '1']], 'degrees': [[1], [1], [2]]},
    'line_dilation': {'fields': [['1'], ['x']], 'degrees': [[1], [1]], 'variables': ['x']},
}


def cc_system(name: str, **overrides) -> CCSystem:
    """Catalog system by name (flat, heisenberg, grushin, grushin_full, line_dilation)"""
    if name not in CC_CATALOG:
        raise ValueError(f"Unknown vector field system '{name}'")
    spec = dict(CC_CATALOG[name], name=name)
    spec.update(overrides)
    return CCSystem.from_dict(spec)


# brackets and integrability

def lie_bracket(X: VectorField, Y: VectorField, points: np.ndarray) -> np.ndarray:
    """[X, Y]^k = sum_l X^l d_l Y^k - Y^l d_l X^k at points, shape (n, dim)"""
    pts = np.asarray(points, dtype=float).reshape(-1, X.dim)
    xj = [jet_eval(c, pts, 1) for c in X.components]
    yj = [jet_eval(c, pts, 1) for c in Y.components]
    xv = np.stack([np.asarray(j.value) for j in xj])
    yv = np.stack([np.asarray(j.value) for j in yj])
    out = np.zeros((len(pts), X.dim))
    for k in range(X.dim):
        out[:, k] = np.sum(xv * yj[k].gradient, axis=0) - np.sum(yv * xj[k].gradient, axis=0)
    return out


def integrability_check(system: CCSystem, points: np.ndarray, tol: float = BRACKET_TOLERANCE) -> Dict[str, Any]:
    """
    Every bracket [X_i, X_j] must be a combination of the X_k with d_k <= d_i + d_j

    Only those fields keep delta^(d_i + d_j - d_k) c_k bounded as delta
    shrinks. A bracket outside the span of all fields fails as 'span', one
    that needs a field of too high degree fails as 'degree'.

    Returns:
        Dictionary with 'passed', per-pair largest coefficients and witnesses
    """
    pts = np.asarray(points, dtype=float).reshape(-1, system.dim)
    M = system.matrix(pts)
    result = {'passed': True, 'pairs': {}, 'witnesses': [], 'points': len(pts)}
    for i, j in itertools.combinations(range(system.q), 2):
        B = lie_bracket(system.fields[i], system.fields[j], pts)
        allowed = [k for k in range(system.q) if np.all(system.degrees[k] <= system.degrees[i] + system.degrees[j] + 1e-12)]
        worst = 0.0
        for p in range(len(pts)):
            size = 1.0 + float(np.linalg.norm(B[p]))
            coeffs, *_ = np.linalg.lstsq(M[p][:, allowed], B[p], rcond=None)
            residual = float(np.linalg.norm(M[p][:, allowed] @ coeffs - B[p]))
            worst = max(worst, float(np.max(np.abs(coeffs))) if len(coeffs) else 0.0)
            if residual <= tol * size:
                continue
            full, *_ = np.linalg.lstsq(M[p], B[p], rcond=None)
            reason = 'degree' if np.linalg.norm(M[p] @ full - B[p]) <= tol * size else 'span'
            result['passed'] = False
            result['witnesses'].append({'x': pts[p].tolist(), 'pair': [i, j], 'bracket': B[p].tolist(),
                                        'residual': residual, 'reason': reason})
            break
        result['pairs'][f"{i},{j}"] = worst
    if not result['passed']:
        logger.warning(f"Integrability fails for {system.name}: {result['witnesses'][0]}")
    return result


# controlled paths

def rk4_step(rhs, state: List[Any], h: float) -> List[Any]:
    """One classical Runge-Kutta step on a list of coordinates (arrays or jets)"""
    k1 = rhs(state)
    k2 = rhs([s + 0.5 * h * k for s, k in zip(state, k1)])
    k3 = rhs([s + 0.5 * h * k for s, k in zip(state, k2)])
    k4 = rhs([s + h * k for s, k in zip(state, k3)])
    return [s + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d) for s, a, b, c, d in zip(state, k1, k2, k3, k4)]


def integrate_controls(system: CCSystem, x0: np.ndarray, delta: Sequence[float], controls: np.ndarray,
                       steps: Optional[int] = None) -> np.ndarray:
    """
    Endpoints at time 1 of paths driven by piecewise-constant controls

    Args:
        system: Vector fields
        x0: Start point, shape (dim,)
        delta: Scale
        controls: Shape (n, pieces, q)
        steps: Total RK4 steps (rounded up to a multiple of the piece count)

    Returns:
        Endpoints, shape (n, dim) (non-finite rows where the flow blew up)
    """
    n, pieces, _ = controls.shape
    per_piece = max(1, int(math.ceil((steps or system.steps) / pieces)))
    h = 1.0 / (pieces * per_piece)
    weights = system.weights(delta)
    state = [np.full(n, float(v)) for v in np.asarray(x0, dtype=float)]
    with np.errstate(all='ignore'):
        for p in range(pieces):
            coeffs = [weights[i] * controls[:, p, i] for i in range(system.q)]
            rhs = lambda s: system.velocity(s, coeffs)
            for _ in range(per_piece):
                state = rk4_step(rhs, state, h)
    return np.stack(state, axis=1)


def sample_controls(rng: np.random.Generator, n: int, pieces: int, q: int,
                    constant_share: float = CONSTANT_CONTROL_SHARE) -> np.ndarray:
    """
    Controls with |a| < 1 on every piece, uniform in the unit ball of R^q

    The first constant_share of the paths use one control for all pieces.
    """
    directions = rng.standard_normal((n, pieces, q))
    directions /= np.linalg.norm(directions, axis=2, keepdims=True)
    radius = rng.random((n, pieces, 1)) ** (1.0 / q) * (1.0 - 1e-12)
    controls = directions * radius
    n_constant = int(round(constant_share * n))
    controls[:n_constant] = controls[:n_constant, :1, :]
    return controls


@dataclass
class CCBallCloud:
    """Sampled endpoints of B(x0, delta)"""
    x0: np.ndarray
    delta: np.ndarray
    points: np.ndarray
    seed: int
    steps: int
    pieces: int
    discarded: int = 0

    def hull_volume(self) -> float:
        return hull_volume(self.points)

    def grid_volume(self, cells: int = DEFAULT_VOLUME_CELLS) -> float:
        return grid_volume(self.points, cells)

    def csv_rows(self) -> List[List[float]]:
        return self.points.tolist()

    def csv_header(self) -> List[str]:
        return [f"x{i}" for i in range(self.points.shape[1])]

    def to_dict(self) -> Dict[str, Any]:
        return {'x0': self.x0.tolist(), 'delta': self.delta.tolist(), 'paths': len(self.points),
                'discarded': self.discarded, 'seed': self.seed, 'steps': self.steps, 'pieces': self.pieces}


def cc_ball_sample(system: CCSystem, x0: Sequence[float], delta: Sequence[float], n_paths: int = DEFAULT_PATHS,
                   n_steps: Optional[int] = None, seed: int = 0, pieces: Optional[int] = None,
                   threads: Optional[int] = None) -> CCBallCloud:
    """
    Sample B(x0, delta) by endpoints of controlled paths

    Paths are split in chunks with independent child streams of one seed
    sequence, so the cloud is the same for any thread count.

    Raises:
        DomainError: If delta is not admissible
    """
    x0 = np.asarray(x0, dtype=float)
    delta = np.asarray(delta, dtype=float).reshape(-1)
    if not system.admissible(delta):
        raise DomainError(f"Scale {delta.tolist()} is not admissible: every coordinate must lie in (0, 1]")
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    pieces = pieces or system.pieces
    steps = n_steps or system.steps
    sizes = [min(PATH_CHUNK_SIZE, n_paths - start) for start in range(0, n_paths, PATH_CHUNK_SIZE)]
    streams = np.random.SeedSequence(seed).spawn(len(sizes))

    def chunk(index: int) -> np.ndarray:
        rng = np.random.default_rng(streams[index])
        controls = sample_controls(rng, sizes[index], pieces, system.q)
        return integrate_controls(system, x0, delta, controls, steps)

    endpoints = np.concatenate(parallel_map(chunk, range(len(sizes)), threads), axis=0)
    keep = np.all(np.isfinite(endpoints), axis=1)
    for X in system.fields:
        for c in X.components:
            keep &= c.domain.contains(np.where(np.isfinite(endpoints), endpoints, 0.0))
    discarded = int(np.sum(~keep))
    if discarded:
        logger.warning(f"{discarded} of {n_paths} paths left the domain and were discarded")
    return CCBallCloud(x0, delta, endpoints[keep], seed, steps, pieces, discarded)


def flow_refinement(system: CCSystem, x0: Sequence[float], delta: Sequence[float], n_paths: int = 256,
                    seed: int = 0, steps: Optional[int] = None) -> float:
    """Largest endpoint change when the RK4 step count is doubled on the same controls"""
    rng = np.random.default_rng(seed)
    controls = sample_controls(rng, n_paths, system.pieces, system.q)
    steps = steps or system.steps
    coarse = integrate_controls(system, np.asarray(x0, dtype=float), delta, controls, steps)
    fine = integrate_controls(system, np.asarray(x0, dtype=float), delta, controls, 2 * steps)
    return float(np.max(np.abs(coarse - fine)))


# volumes

def hull_volume(points: np.ndarray) -> float:
    """Volume of the convex hull (length in one dimension)"""
    pts = np.asarray(points, dtype=float)
    if pts.shape[1] == 1:
        return float(np.ptp(pts[:, 0]))
    return float(ConvexHull(pts).volume)


def grid_volume(points: np.ndarray, cells: int = DEFAULT_VOLUME_CELLS) -> float:
    """Occupied cells of a cells^d grid on the bounding box times the cell volume"""
    pts = np.asarray(points, dtype=float)
    lower, upper = pts.min(axis=0), pts.max(axis=0)
    size = np.where(upper > lower, upper - lower, 1.0)
    index = np.minimum((cells * (pts - lower) / size).astype(int), cells - 1)
    occupied = len(np.unique(index, axis=0))
    return float(occupied * np.prod(size / cells))


def cloud_volume(cloud: CCBallCloud, method: str = 'grid', cells: int = DEFAULT_VOLUME_CELLS) -> float:
    if method == 'hull':
        return cloud.hull_volume()
    if method == 'grid':
        return cloud.grid_volume(cells)
    raise ValueError(f"Unknown volume method '{method}'")


def doubling_ratio(system: CCSystem, x0: Sequence[float], delta: Sequence[float], n_paths: int = DEFAULT_PATHS,
                   seed: int = 0, method: str = 'grid', cells: int = DEFAULT_VOLUME_CELLS,
                   threads: Optional[int] = None) -> Dict[str, float]:
    """Vol B(x0, 2 delta) / Vol B(x0, delta) from two clouds on the same seed"""
    delta = np.asarray(delta, dtype=float).reshape(-1)
    small = cc_ball_sample(system, x0, delta, n_paths, seed=seed, threads=threads)
    large = cc_ball_sample(system, x0, 2.0 * delta, n_paths, seed=seed, threads=threads)
    v1, v2 = cloud_volume(small, method, cells), cloud_volume(large, method, cells)
    return {'delta': delta.tolist(), 'volume': v1, 'volume_doubled': v2, 'ratio': v2 / v1 if v1 > 0 else math.inf}


def cloud_containment(inner: CCBallCloud, outer: CCBallCloud) -> float:
    """Share of inner endpoints inside the convex hull of the outer cloud"""
    if outer.points.shape[1] == 1:
        lo, hi = outer.points.min(), outer.points.max()
        return float(np.mean((inner.points[:, 0] >= lo) & (inner.points[:, 0] <= hi)))
    return float(np.mean(Delaunay(outer.points).find_simplex(inner.points) >= 0))


# exponential charts

def max_minor(M: np.ndarray) -> float:
    """Largest |det| over the square k x k minors of an (n, k) matrix"""
    n, k = M.shape
    if k == 0:
        return 0.0
    return max(abs(float(np.linalg.det(M[list(rows), :]))) for rows in itertools.combinations(range(n), k))


def select_basis(system: CCSystem, x0: Sequence[float], delta: Sequence[float]) -> Tuple[int, ...]:
    """
    Greedy maximal-minor choice of n0 = rank fields at x0

    Each step adds the field that maximizes the largest minor of the chosen
    scaled columns. This stands in for the exact subcollection rule.

    Raises:
        DomainError: If the fields vanish at x0 (n0 = 0)
    """
    M = system.scaled_matrix(x0, delta)
    scale = max(float(np.max(np.abs(M))), 1e-300)
    n0 = int(np.linalg.matrix_rank(M, tol=RANK_TOLERANCE * scale))
    if n0 == 0:
        raise DomainError(f"Vector fields span nothing at {np.asarray(x0).tolist()}")
    chosen: List[int] = []
    for _ in range(n0):
        rest = [i for i in range(system.q) if i not in chosen]
        best = max(rest, key=lambda i: max_minor(M[:, chosen + [i]]))
        chosen.append(best)
    return tuple(sorted(chosen))


def _det(rows: List[List[Any]]) -> Any:
    n = len(rows)
    if n == 1:
        return rows[0][0]
    if n == 2:
        return rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
    if n == 3:
        return (rows[0][0] * (rows[1][1] * rows[2][2] - rows[1][2] * rows[2][1])
                - rows[0][1] * (rows[1][0] * rows[2][2] - rows[1][2] * rows[2][0])
                + rows[0][2] * (rows[1][0] * rows[2][1] - rows[1][1] * rows[2][0]))
    raise ValueError(f"Determinants supported up to 3 x 3, got {n}")


class CCChart(ChartMap):
    """
    t -> exp(sum_i r1 t_i delta^d_J(i) X_J(i)) x0 on the unit ball of dimension n0

    The flow is integrated with a fixed number of RK4 steps; the same code
    runs on arrays and jets. Inversion is Gauss-Newton on values followed,
    for jet input, by fixed-matrix Newton sweeps that settle one jet order each.
    """

    def __init__(self, system: CCSystem, x0: np.ndarray, delta: np.ndarray, basis: Sequence[int],
                 r1: float = 1.0, steps: Optional[int] = None):
        x0 = np.asarray(x0, dtype=float)
        self.system = system
        self.ambient = system.dim
        self.dim = len(basis)
        self.basis = tuple(basis)
        self.r1 = r1
        self.steps = steps or system.steps
        self.center = x0.T if x0.ndim == 2 else x0
        delta = np.asarray(delta, dtype=float)
        weights = system.weights(delta.T if delta.ndim == 2 else delta)
        self.weights = [weights[i] for i in self.basis]
        self.delta = delta

    def forward(self, coords):
        coeffs = [0.0] * self.system.q
        for i, b in enumerate(self.basis):
            coeffs[b] = coords[i] * (self.r1 * self.weights[i])
        state = [self.center[k] + 0.0 * coords[0] for k in range(self.ambient)]
        rhs = lambda s: self.system.velocity(s, coeffs)
        h = 1.0 / self.steps
        for _ in range(self.steps):
            state = rk4_step(rhs, state, h)
        return state

    def jacobian(self, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Values (n, ambient) and dPhi/dt (n, ambient, dim) at local points t (n, dim)"""
        local = np.asarray(t, dtype=float).reshape(-1, self.dim)
        with np.errstate(all='ignore'):
            image = self.forward(Jet.variables(local.T, 1))
        n = len(local)
        values = np.stack([np.broadcast_to(np.asarray(c.value, dtype=float), (n,)) for c in image], axis=1)
        jac = np.stack([np.stack([np.broadcast_to(c.derivative(unit_vector(self.dim, i)), (n,))
                                  for i in range(self.dim)], axis=1) for c in image], axis=1)
        return values, jac

    def _solve(self, targets: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Gauss-Newton from t = 0: (t, residual norms, pseudo-inverse at t)"""
        t = np.zeros((len(targets), self.dim))
        for _ in range(NEWTON_MAX_ITERATIONS):
            values, jac = self.jacobian(t)
            pinv = np.linalg.pinv(np.where(np.isfinite(jac), jac, 0.0))
            step = np.einsum('nij,nj->ni', pinv, targets - values)
            step = np.where(np.isfinite(step), step, 0.0)
            t = t + step
            if np.max(np.abs(step)) <= NEWTON_TOLERANCE:
                break
        values, jac = self.jacobian(t)
        residual = np.linalg.norm(targets - values, axis=1)
        return t, residual, np.linalg.pinv(np.where(np.isfinite(jac), jac, 0.0))

    def inverse_generic(self, coords):
        batch = np.broadcast_shapes(*[np.asarray(c.value if isinstance(c, Jet) else c).shape for c in coords])
        targets = np.stack([np.broadcast_to(np.asarray(c.value if isinstance(c, Jet) else c, dtype=float), batch)
                            .reshape(-1) for c in coords], axis=1)
        t, _, pinv = self._solve(targets)
        if not any(isinstance(c, Jet) for c in coords):
            return [t[:, i].reshape(batch) for i in range(self.dim)]
        order = max(c.order for c in coords if isinstance(c, Jet))
        A = pinv.reshape(batch + (self.dim, self.ambient))
        local = [t[:, i].reshape(batch) + 0.0 * coords[0] for i in range(self.dim)]
        for _ in range(order + 1):
            image = self.forward(local)
            local = [local[i] + sum(A[..., i, k] * (coords[k] - image[k]) for k in range(self.ambient))
                     for i in range(self.dim)]
        return local

    def contains(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1, self.ambient)
        t, residual, _ = self._solve(pts)
        scale = 1.0 + np.linalg.norm(pts, axis=1)
        return np.isfinite(residual) & (residual <= INVERSE_TOLERANCE * scale) & (np.linalg.norm(t, axis=1) < 1.0)

    def minors(self, t: np.ndarray) -> np.ndarray:
        """Largest n0 x n0 minor of dPhi/du (u = r1 t) at local points, shape (n,)"""
        _, jac = self.jacobian(t)
        return np.array([max_minor(J / self.r1) for J in jac])

    def comparability(self, samples: int = 16) -> Dict[str, Any]:
        """sup / inf of max minor(dPhi/du) / max minor(delta X_J(x0)) over the chart ball"""
        reference = max_minor(self.system.scaled_matrix(self.center, self.delta)[:, list(self.basis)])
        ratios = self.minors(local_samples(self.dim, samples)) / reference
        lo, hi = float(np.min(ratios)), float(np.max(ratios))
        return {'reference_minor': reference, 'min': lo, 'max': hi,
                'K': max(hi, 1.0 / lo) if lo > 0 else math.inf}


def cc_exp_chart(system: CCSystem, x0: Sequence[float], delta: Sequence[float],
                 basis: Optional[Sequence[int]] = None, r1: float = 1.0, steps: Optional[int] = None) -> CCChart:
    """
    Exponential chart of B(x0, delta) on the fields of the greedy basis

    Raises:
        DomainError: If delta is not admissible or the fields vanish at x0
    """
    x0 = np.asarray(x0, dtype=float)
    delta = np.asarray(delta, dtype=float).reshape(-1)
    if not system.admissible(delta):
        raise DomainError(f"Scale {delta.tolist()} is not admissible")
    basis = tuple(basis) if basis is not None else select_basis(system, x0, delta)
    return CCChart(system, x0, delta, basis, r1, steps)


# calibration

@dataclass
class CCCalibration:
    """Chart radius r1, nesting radius r2, engulfing radius rho, exponent p and radix M"""
    r1: float
    r2: float
    rho: float
    p: int
    M: int

    @property
    def c(self) -> float:
        return self.r2 / self.r1

    def to_dict(self) -> Dict[str, Any]:
        return {'r1': self.r1, 'r2': self.r2, 'rho': self.rho, 'p': self.p, 'M': self.M, 'c': self.c}


def _halve_radius(kwargs: Dict[str, Any], attempt: int):
    kwargs['r1'] = kwargs.get('r1', 1.0) / 2.0


@retry(max_attempts=6, exceptions=(ChartInversionError,), refine=_halve_radius)
def verified_radius(system: CCSystem, x0: np.ndarray, delta: np.ndarray, basis: Sequence[int],
                    samples: int = 16, r1: float = 1.0) -> float:
    """Largest tried r1 for which inversion recovers every sampled local point"""
    chart = CCChart(system, x0, delta, basis, r1)
    t = local_samples(chart.dim, samples)
    back = np.stack(chart.inverse_generic([chart(t)[:, k] for k in range(chart.ambient)]), axis=1)
    error = float(np.max(np.abs(back - t)))
    if not np.isfinite(error) or error > ROUNDTRIP_TOLERANCE:
        raise ChartInversionError(f"Exponential chart is not injective on ball({r1}) (round trip error {error:.2e})")
    return r1


def calibrate(system: CCSystem, x0: Sequence[float], delta: Sequence[float], samples: int = 16,
              n_paths: int = 2000, seed: int = 0) -> CCCalibration:
    """
    r1 by sampled injectivity, rho as the largest power of two with
    B(x0, rho delta) inside the chart image, p with p sum_k d_i^k >= 1 for
    every field, M as the smallest power of two with 1/M <= 2^-p rho, and r2
    from the image of the chart at delta / M
    """
    x0 = np.asarray(x0, dtype=float)
    delta = np.asarray(delta, dtype=float).reshape(-1)
    basis = select_basis(system, x0, delta)
    r1 = verified_radius(system, x0, delta, basis, samples=samples, r1=1.0)
    chart = CCChart(system, x0, delta, basis, r1)

    rho = 1.0
    for _ in range(12):
        cloud = cc_ball_sample(system, x0, rho * delta, n_paths, seed=seed)
        if np.mean(chart.contains(cloud.points)) >= CONTAINMENT_SHARE:
            break
        rho /= 2.0
    p = int(math.ceil(1.0 / float(np.min(np.sum(system.degrees, axis=1)))))
    M = 2
    while 1.0 / M > 2.0 ** (-p) * rho:
        M *= 2

    inner = CCChart(system, x0, delta / M, select_basis(system, x0, delta / M), r1)
    images = inner(local_samples(inner.dim, samples))
    t = np.stack(chart.inverse_generic([images[:, k] for k in range(chart.ambient)]), axis=1)
    r2 = min(r1, r1 * float(np.max(np.linalg.norm(t, axis=1))) * 1.01)
    calibration = CCCalibration(r1, r2, rho, p, M)
    logger.info(f"Calibrated {system.name} at {x0.tolist()}: {calibration.to_dict()}")
    return calibration


# atlas adapter

class CCAtlas(ChartAtlas):
    """
    B_j(x) = Phi_{x, M^j}(ball(r1)) with isotropic scales delta = (M^j, ..., M^j)

    Leaves are assumed to have constant dimension; set relations are sampled
    through the charts.
    """

    name = "cc"

    def __init__(self, system: CCSystem, M: float = 4, r1: float = 1.0, c: Optional[float] = None,
                 scale_cap: Optional[int] = 0, steps: Optional[int] = None):
        super().__init__(system.dim, radix=M, scale_cap=scale_cap)
        self.system = system
        self.r1 = r1
        self.c = c
        self.steps = steps
        self._volumes: Dict[Tuple[int, Tuple[float, ...]], float] = {}

    @property
    def nesting_constant(self) -> Optional[float]:
        return self.c

    def delta(self, j: Any) -> np.ndarray:
        """Scale vector(s) M^j, shape (d_scale,) + shape(j)"""
        r = np.asarray(self.radius(np.asarray(j, dtype=float)), dtype=float)
        return np.broadcast_to(r, (self.system.d_scale,) + r.shape).copy()

    def exists(self, j, x):
        x = np.asarray(x, dtype=float)
        if self.scale_cap is not None and j > self.scale_cap:
            return False
        return self.system.admissible(self.delta(j)) and self.system.rank(x) > 0

    def chart(self, j, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            delta = self.delta(j)
            return CCChart(self.system, x, delta, select_basis(self.system, x, delta), self.r1, self.steps)
        scales = np.broadcast_to(np.asarray(j), (len(x),))
        bases = {select_basis(self.system, p, self.delta(s)) for p, s in zip(x, scales)}
        if len(bases) != 1:
            raise DomainError("Balls of one batch need a common basis")
        return CCChart(self.system, x, self.delta(scales).T, bases.pop(), self.r1, self.steps)

    def ball_dimension(self, x):
        return self.system.rank(x)

    def leaf_id(self, x):
        return 0

    def _volume(self, j: int, x: np.ndarray, chart: CCChart) -> float:
        key = (int(j), tuple(np.round(x, 12).tolist()))
        if key not in self._volumes:
            nodes, w = unit_ball_rule(chart.dim, GAUSS_LEGENDRE_ORDER)
            _, jac = chart.jacobian(nodes)
            self._volumes[key] = float(np.dot(w, np.abs([_det(J.tolist()) for J in jac])))
        return self._volumes[key]

    def measure_weight(self, j, x):
        """|det dPhi(t)| / Vol(B_j(x)) for full-dimensional balls (None otherwise)"""
        x = np.asarray(x, dtype=float)
        chart = self.chart(j, x)
        if chart.dim != chart.ambient:
            return None
        volume = self._volume(j, x, chart)

        def weight(t):
            entries = _jacobian_entries(chart, t)
            return fabs(_det(entries)) * (1.0 / volume)
        return weight

    def describe(self) -> Dict[str, Any]:
        out = super().describe()
        out.update({'system': self.system.name, 'r1': self.r1, 'c': self.c})
        return out


def _jacobian_entries(chart: CCChart, coords: Sequence[Any]) -> List[List[Any]]:
    """dPhi_k / dt_i of the same kind as coords (arrays or jets)"""
    n0 = chart.dim
    if isinstance(coords[0], Jet):
        r = min(c.order for c in coords)
        base = np.stack(np.broadcast_arrays(*[np.asarray(c.value, dtype=float) for c in coords]), axis=0)
        with np.errstate(all='ignore'):
            image = chart.forward(Jet.variables(base, r + 1))
        return [[compose(comp.partial(i).truncate(r), list(coords)) for i in range(n0)] for comp in image]
    base = np.stack(np.broadcast_arrays(*[np.asarray(c, dtype=float) for c in coords]), axis=0)
    with np.errstate(all='ignore'):
        image = chart.forward(Jet.variables(base, 1))
    return [[comp.derivative(unit_vector(n0, i)) for i in range(n0)] for comp in image]


def cc_axiom_check(system: CCSystem, M: Optional[int], scales: Sequence[int], base_points: np.ndarray, m: int = 2,
                   n_paths: int = 20_000, seed: int = 0, samples: int = 8, max_pairs: int = 24,
                   volume_method: str = 'grid', doubling_cap: float = 64.0,
                   threads: Optional[int] = None) -> AxiomReport:
    """
    Axioms of the CC ball family plus volume doubling and Jacobian comparability

    The integrability condition is checked first; when it fails the report
    carries the witness and no ball is built.

    Args:
        system: Vector fields with degrees
        M: Radix (None calibrates it at the first base point)
        scales: Integer scales j, balls use delta = M^j
        base_points: Probe centers, shape (n, dim)
        m: Derivative order for the smooth-engulfing jets
        n_paths: Paths per Monte-Carlo volume
        seed: Control seed
        samples: Local samples per ball
        max_pairs: Cap on ball pairs for smooth engulfing
        volume_method: 'grid' occupancy or convex 'hull'
        doubling_cap: Largest acceptable volume doubling ratio
        threads: Worker threads for path sampling

    Returns:
        AxiomReport of homspace with the extra entries
    """
    points = np.asarray(base_points, dtype=float).reshape(-1, system.dim)
    scales = sorted(int(j) for j in scales)
    integrability = integrability_check(system, points)
    if not integrability['passed']:
        report = AxiomReport(atlas={'name': 'cc', 'system': system.name, 'd': system.dim})
        report.passed['integrability'] = False
        report.witnesses['integrability'] = integrability['witnesses']
        report.constants['integrability'] = integrability['pairs']
        return report

    top = float(M) ** max(scales) if M else 0.5
    calibration = calibrate(system, points[0], np.full(system.d_scale, top), samples=samples, seed=seed)
    M = M or calibration.M
    atlas = CCAtlas(system, M, calibration.r1, calibration.c, scale_cap=max(scales) + 1)
    report = check_axioms(atlas, points, scales, m=m, max_pairs=max_pairs, samples=samples)
    report.passed['integrability'] = True
    report.constants['integrability'] = integrability['pairs']
    report.constants['calibration'] = calibration.to_dict()
    report.labels['basis'] = 'greedy maximal-minor surrogate'

    ratios, comparability = {}, {}
    for j in scales:
        delta = atlas.delta(j)
        for i, x in enumerate(points):
            key = f"{j}:{i}"
            if system.admissible(2.0 * delta):
                ratios[key] = doubling_ratio(system, x, delta, n_paths, seed, volume_method, threads=threads)['ratio']
            comparability[key] = atlas.chart(j, x).comparability(samples)['K']
    report.constants['volume_doubling'] = ratios
    report.constants['jacobian_comparability'] = comparability
    report.passed['volume_doubling'] = all(math.isfinite(r) and r <= doubling_cap for r in ratios.values())
    report.passed['jacobian'] = all(math.isfinite(k) for k in comparability.values())
    if not report.passed['volume_doubling']:
        report.witnesses['volume_doubling'] = [{'ratios': ratios}]
    report.labels['volume_doubling'] = f"Monte-Carlo ({volume_method}, {n_paths} paths)"
    logger.info(f"CC axioms for {system.name}: {report.passed}")
    return report
