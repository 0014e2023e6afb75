#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Repeated integration by parts for scalar oscillatory integrals

With nonvanishing gradient, int e^(if) psi = int e^(if) psi_1 where
psi_1 = i sum_l d_l(psi u_l) and u_l(y) = y_l |y|^-2 at y = grad f.
Iterating k times gives psi_k = sum_{|beta|<=k} d^beta psi F_beta, each
F_beta being i^k times a rational combination of terms

    y^a |y|^(-2q) prod_j d^(gamma_j) f

generated symbolically here and evaluated through jets.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from constants import GRADIENT_THRESHOLD, MAX_IBP_DIM, MAX_IBP_ORDER
from errors import DomainError, OmegaViolation, OrderError
from jets import Jet, ScalarField, compose, jet_eval
from tameness import ball_grid
from utils import multiindices

logger = logging.getLogger(__name__)

SUPPORT_GRID = 401
SUPPORT_GRID_2D = 64

Multiindex = Tuple[int, ...]
TermKey = Tuple[Multiindex, Multiindex, int, Tuple[Multiindex, ...]]


@dataclass(frozen=True)
class IbpTerm:
    """coeff * y^monomial * |y|^(-2q) * prod d^gamma f, attached to d^beta psi"""
    coeff: Fraction
    beta: Multiindex
    monomial: Multiindex
    q: int
    gammas: Tuple[Multiindex, ...]

    @property
    def degree(self) -> int:
        """Homogeneity degree of the factor in grad f"""
        return sum(self.monomial) - 2 * self.q

    @property
    def n(self) -> int:
        return len(self.gammas)

    def bookkeeping(self, k: int) -> List[str]:
        """Names of the violated counting identities (empty when all hold)"""
        failed = []
        weight = sum(self.beta) + sum(sum(g) for g in self.gammas)
        if sum(self.beta) + self.degree + sum(sum(g) for g in self.gammas) != 0:
            failed.append('total_degree')
        if self.degree + self.n != -k:
            failed.append('homogeneity')
        if not k <= weight <= 2 * k:
            failed.append('weight_range')
        if any(sum(g) > k + 1 or sum(g) < 2 for g in self.gammas):
            failed.append('gamma_order')
        return failed

    def to_dict(self) -> Dict[str, Any]:
        return {'coeff': str(self.coeff), 'beta': list(self.beta), 'monomial': list(self.monomial),
                'q': self.q, 'gammas': [list(g) for g in self.gammas]}


@dataclass
class IbpExpansion:
    """All terms of psi_k grouped by the derivative d^beta psi they multiply"""
    k: int
    d: int
    terms: Dict[Multiindex, List[IbpTerm]]

    @property
    def term_count(self) -> int:
        return sum(len(v) for v in self.terms.values())

    def all_terms(self) -> List[IbpTerm]:
        return [t for beta in sorted(self.terms, key=lambda b: (sum(b), b)) for t in self.terms[beta]]

    def check(self) -> List[Dict[str, Any]]:
        """Terms failing any counting identity"""
        bad = []
        for term in self.all_terms():
            failed = term.bookkeeping(self.k)
            if failed:
                bad.append({'term': term.to_dict(), 'failed': failed})
        return bad

    def max_gamma_order(self) -> int:
        return max((sum(g) for t in self.all_terms() for g in t.gammas), default=0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'k': self.k, 'd': self.d, 'phase_power': self.k, 'term_count': self.term_count,
            'terms': {','.join(map(str, beta)): [t.to_dict() for t in self.terms[beta]]
                      for beta in sorted(self.terms, key=lambda b: (sum(b), b))},
        }


def _canonical(key: TermKey, d: int) -> TermKey:
    beta, monomial, q, gammas = key
    if d == 1 and q > 0 and monomial[0] >= 2:
        # |y|^2 = y^2 in one variable
        cancel = min(q, monomial[0] // 2)
        monomial, q = (monomial[0] - 2 * cancel,), q - cancel
    return beta, monomial, q, tuple(sorted(gammas, reverse=True))


def _shift(alpha: Multiindex, i: int, by: int = 1) -> Multiindex:
    out = list(alpha)
    out[i] += by
    return tuple(out)


def _step(current: Dict[TermKey, Fraction], d: int) -> Dict[TermKey, Fraction]:
    """One integration by parts: T -> sum_l d_l(T u_l)"""
    out: Dict[TermKey, Fraction] = defaultdict(Fraction)

    def add(key: TermKey, value: Fraction):
        out[_canonical(key, d)] += value

    for (beta, monomial, q, gammas), c in current.items():
        for l in range(d):
            a = _shift(monomial, l)
            qq = q + 1
            # derivative hits d^beta psi
            add((_shift(beta, l), a, qq, gammas), c)
            # derivative hits the factor in grad f
            for n in range(d):
                hessian = _shift(_shift((0,) * d, l), n)
                if a[n] > 0:
                    add((beta, _shift(a, n, -1), qq, gammas + (hessian,)), c * a[n])
                add((beta, _shift(a, n), qq + 1, gammas + (hessian,)), c * (-2 * qq))
            # derivative hits a higher-derivative factor
            for j in range(len(gammas)):
                raised = gammas[:j] + (_shift(gammas[j], l),) + gammas[j + 1:]
                add((beta, a, qq, raised), c)
    return {key: v for key, v in out.items() if v != 0}


@lru_cache(maxsize=None)
def ibp_expand(k: int, d: int) -> IbpExpansion:
    """
    Symbolic expansion of the k-times reduced amplitude

    Args:
        k: Number of integrations by parts (0..5)
        d: Dimension (1..3)

    Returns:
        IbpExpansion with deterministic term order

    Raises:
        OrderError: k out of range
    """
    if not 0 <= k <= MAX_IBP_ORDER:
        raise OrderError(f"IBP order must lie in [0, {MAX_IBP_ORDER}], got {k}")
    if not 1 <= d <= MAX_IBP_DIM:
        raise ValueError(f"IBP expansion supports d in [1, {MAX_IBP_DIM}], got {d}")
    current: Dict[TermKey, Fraction] = {((0,) * d, (0,) * d, 0, ()): Fraction(1)}
    for _ in range(k):
        current = _step(current, d)
    grouped: Dict[Multiindex, List[IbpTerm]] = defaultdict(list)
    for key in sorted(current):
        beta, monomial, q, gammas = key
        grouped[beta].append(IbpTerm(current[key], beta, monomial, q, gammas))
    expansion = IbpExpansion(k, d, dict(grouped))
    logger.debug(f"ibp_expand(k={k}, d={d}): {expansion.term_count} terms")
    return expansion


def _ipow(x: Any, n: int) -> Any:
    out = 1.0
    for _ in range(n):
        out = out * x
    return out


def derivatives(field: ScalarField, coords: Sequence[Any], order: int) -> Dict[Multiindex, Any]:
    """
    All partials d^alpha f(coords), |alpha| <= order, of the same kind as coords

    Floats and arrays give arrays; jets give jets (the partials are composed
    with the coordinate jets, so the result is exact to the jet order).
    """
    d = field.arity
    if isinstance(coords[0], Jet):
        r = min(c.order for c in coords)
        base = np.stack(np.broadcast_arrays(*[np.asarray(c.value, dtype=float) for c in coords]), axis=0)
        with np.errstate(all='ignore'):
            outer = field.rule(Jet.variables(base, order + r))
        if not isinstance(outer, Jet):
            outer = Jet.constant(np.broadcast_to(outer, base.shape[1:]), d, order + r)
        out = {}
        for alpha in multiindices(d, order):
            jet = outer
            for i, a in enumerate(alpha):
                for _ in range(a):
                    jet = jet.partial(i)
            out[alpha] = compose(jet.truncate(r), list(coords))
        return out
    base = np.stack(np.broadcast_arrays(*[np.asarray(c, dtype=float) for c in coords]), axis=0)
    with np.errstate(all='ignore'):
        jet = field.rule(Jet.variables(base, order))
    if not isinstance(jet, Jet):
        return {alpha: (np.broadcast_to(np.asarray(jet, dtype=float), base.shape[1:]) if sum(alpha) == 0
                        else np.zeros(base.shape[1:])) for alpha in multiindices(d, order)}
    return {alpha: jet.derivative(alpha) for alpha in multiindices(d, order)}


def coefficient_value(terms: Sequence[IbpTerm], D: Dict[Multiindex, Any], d: int) -> Any:
    """Real part sum of one F_beta (without the i^k factor) from the partials D of f"""
    grad = [D[tuple(1 if i == n else 0 for i in range(d))] for n in range(d)]
    square = 0.0
    for g in grad:
        square = square + g * g
    inverse = 1.0 / square if any(t.q for t in terms) else 1.0
    total = 0.0
    for term in terms:
        value = float(term.coeff) * _ipow(inverse, term.q)
        for n, a in enumerate(term.monomial):
            value = value * _ipow(grad[n], a)
        for gamma in term.gammas:
            value = value * D[gamma]
        total = total + value
    return total


Omega = Union[float, ScalarField]


@dataclass
class ReducedAmplitude:
    """psi_k with its expansion and the weight it was validated against"""
    f: ScalarField
    psi: ScalarField
    k: int
    omega: Omega
    expansion: IbpExpansion
    field: ScalarField
    support_points: np.ndarray

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.field(points)

    def coefficients(self, points: np.ndarray) -> Dict[Multiindex, np.ndarray]:
        """Complex F_beta at points of shape (n, d)"""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        D = derivatives(self.f, [pts[:, i] for i in range(self.f.arity)], self.k + 1)
        factor = 1j ** self.k
        return {beta: factor * np.asarray(coefficient_value(terms, D, self.f.arity))
                for beta, terms in self.expansion.terms.items()}

    def sharpjunk_ratio(self, points: Optional[np.ndarray] = None) -> Dict[str, Any]:
        """Largest |F_beta| (omega |grad f|)^k / omega^|beta| over points"""
        pts = self.support_points if points is None else np.atleast_2d(points)
        coeffs = self.coefficients(pts)
        grad = np.linalg.norm(jet_eval(self.f, pts, 1).gradient, axis=0)
        omega = _omega_values(self.omega, pts)
        worst, witness = 0.0, None
        for beta, values in coeffs.items():
            ratio = np.abs(values) * (omega * grad) ** self.k / omega ** sum(beta)
            i = int(np.argmax(ratio))
            if ratio[i] > worst:
                worst, witness = float(ratio[i]), {'x': pts[i].tolist(), 'beta': list(beta)}
        return {'k': self.k, 'constant': worst, 'witness': witness, 'points': len(pts)}


def _omega_values(omega: Omega, points: np.ndarray) -> np.ndarray:
    if isinstance(omega, ScalarField):
        return np.abs(omega.real(points))
    return np.full(len(points), float(omega))


def support_points(psi: ScalarField, n: int = SUPPORT_GRID) -> np.ndarray:
    """Grid points of the support box (or the unit ball) where psi does not vanish"""
    d = psi.arity
    if psi.support is not None:
        lower, upper = (np.asarray(b, dtype=float) for b in psi.support)
        per_axis = n if d == 1 else min(n, SUPPORT_GRID_2D)
        axes = [np.linspace(lower[i], upper[i], per_axis) for i in range(d)]
        pts = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, d)
    else:
        pts = ball_grid(d, n)
    values = psi.real(pts)
    return pts[np.abs(values) > 0]


def check_gradient(f: ScalarField, points: np.ndarray):
    """DomainError at the first point where |grad f| <= 1e-12 sup |grad f|"""
    grad = np.linalg.norm(jet_eval(f, points, 1).gradient, axis=0)
    floor = GRADIENT_THRESHOLD * max(float(np.max(grad)), 1e-300)
    bad = np.nonzero(grad <= floor)[0]
    if len(bad):
        x = points[bad[0]]
        raise DomainError(f"Gradient of {f.name or 'phase'} vanishes at {x.tolist()} on the amplitude support")
    return grad


def check_omega(f: ScalarField, omega: Omega, points: np.ndarray, k: int):
    """
    Verify 1/omega >= sup_{2 <= |gamma| <= k+1} (|d^gamma f| / |grad f|)^(1/(|gamma|-1)) at every point

    Raises:
        OmegaViolation: With the first offending point, order and values
    """
    jet = jet_eval(f, points, k + 1)
    grad = np.linalg.norm(jet.gradient, axis=0)
    weights = _omega_values(omega, points)
    if np.any(weights <= 0):
        i = int(np.argmax(weights <= 0))
        raise OmegaViolation("omega must be positive", {'x': points[i].tolist(), 'omega': float(weights[i])})
    for r in range(2, k + 2):
        worst = np.zeros(len(points))
        for alpha in multiindices(f.arity, r):
            if sum(alpha) == r:
                worst = np.maximum(worst, np.abs(jet.derivative(alpha)))
        bound = (worst / grad) ** (1.0 / (r - 1))
        excess = weights * bound
        i = int(np.argmax(excess))
        if excess[i] > 1.0 + 1e-12:
            raise OmegaViolation(
                f"omega too large at {points[i].tolist()} for derivatives of order {r}",
                {'x': points[i].tolist(), 'order': r, 'omega': float(weights[i]), 'required': float(1.0 / bound[i])})


def admissible_omega(f: ScalarField, psi: ScalarField, k: int, n: int = SUPPORT_GRID) -> float:
    """Largest constant omega satisfying the weight condition on the support grid"""
    points = support_points(psi, n)
    jet = jet_eval(f, points, k + 1)
    grad = np.linalg.norm(jet.gradient, axis=0)
    worst = 0.0
    for r in range(2, k + 2):
        top = np.zeros(len(points))
        for alpha in multiindices(f.arity, r):
            if sum(alpha) == r:
                top = np.maximum(top, np.abs(jet.derivative(alpha)))
        worst = max(worst, float(np.max((top / grad) ** (1.0 / (r - 1)))))
    return 1.0 / worst if worst > 0 else 1.0


def reduce_amplitude(f: ScalarField, psi: ScalarField, k: int, omega: Omega = 1.0,
                     grid: int = SUPPORT_GRID) -> ReducedAmplitude:
    """
    Reduced amplitude psi_k with int e^(if) psi = int e^(if) psi_k

    Args:
        f: Phase with nonvanishing gradient on the support of psi
        psi: Compactly supported amplitude (its phase factor is carried along)
        k: Number of integrations by parts
        omega: Positive constant or field satisfying the weight condition
        grid: Support grid resolution per axis

    Returns:
        ReducedAmplitude whose field is jet-evaluable, so it can be reduced again

    Raises:
        DomainError: Vanishing gradient on the support
        OmegaViolation: Weight condition fails at a grid point
    """
    if f.arity != psi.arity:
        raise ValueError(f"Phase and amplitude dimensions differ: {f.arity} vs {psi.arity}")
    d = f.arity
    expansion = ibp_expand(k, d)
    points = support_points(psi, grid)
    if len(points):
        check_gradient(f, points)
        check_omega(f, omega, points, k)

    def rule(c):
        D = derivatives(f, c, k + 1)
        P = derivatives(psi, c, k)
        total = 0.0
        for beta, terms in expansion.terms.items():
            total = total + P[beta] * coefficient_value(terms, D, d)
        return total

    m_max = max(0, min(f.m_max - k - 1, psi.m_max - k))
    field = ScalarField(d, rule, psi.params, psi.domain, m_max, f"ibp{k}[{psi.name}]",
                        psi.phase * (1j ** k), psi.support)
    logger.info(f"Reduced {psi.name or 'amplitude'} by {k} integrations by parts "
                f"({expansion.term_count} terms, {len(points)} support points)")
    return ReducedAmplitude(f, psi, k, omega, expansion, field, points)
