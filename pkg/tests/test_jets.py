#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Unit tests for jet arithmetic
"""

import math
import unittest

import numpy as np
import sympy

import jets
from errors import DomainError, OrderError
from homspace import AffineChart, RayChart
from jets import Domain, Jet, ScalarField, compose, dk_norm, jet_eval, order_norms, pullback_jet
from phase_dsl import catalog_get, field_from_text


class TestJetEval(unittest.TestCase):
    """Test exact derivatives of fields"""

    def test_polynomial_in_two_variables(self):
        """Test value, gradient and Hessian of x^2 + y^2"""
        jet = jet_eval(field_from_text("x^2 + y^2", 2), [1.0, 2.0], 2)
        self.assertEqual(float(jet.value), 5.0)
        self.assertEqual(jet.gradient.tolist(), [2.0, 4.0])
        self.assertEqual(jet.hessian.tolist(), [[2.0, 0.0], [0.0, 2.0]])

    def test_exponential_series(self):
        """Test raw partials of exp at 0"""
        jet = jet_eval(field_from_text("exp(t)"), [0.0], 3)
        self.assertEqual([float(jet.derivative((k,))) for k in range(4)], [1.0, 1.0, 1.0, 1.0])

    def test_sine(self):
        """Test sin(10 t) at 0"""
        jet = jet_eval(field_from_text("sin(10*t)"), [0.0], 2)
        np.testing.assert_allclose([float(jet.derivative((k,))) for k in range(3)], [0.0, 10.0, 0.0], atol=1e-12)

    def test_batched_matches_pointwise(self):
        """Test a batch of points gives the same coefficients as single points"""
        field = field_from_text("x^3*y - log(1 + x^2) + cos(y)", 2)
        points = np.array([[0.5, -1.0], [1.5, 0.25], [-2.0, 3.0]])
        batch = jet_eval(field, points, 4)
        for i, p in enumerate(points):
            single = jet_eval(field, p, 4)
            np.testing.assert_allclose(batch.raw()[:, i], single.raw(), rtol=1e-13, atol=1e-13)

    def test_against_finite_differences(self):
        """Test second derivatives of the flat exponential against central differences"""
        field = catalog_get('flat_exponential', {'alpha': 1.0})
        t, h = 0.5, 1e-4
        jet = jet_eval(field, [t], 2)
        values = [field.real(np.array([t + s * h])) for s in (-1, 0, 1)]
        second = (values[0] - 2 * values[1] + values[2]) / h ** 2
        self.assertAlmostEqual(float(jet.derivative((2,))) / second, 1.0, places=5)

    def test_order_above_smoothness(self):
        """Test orders above m_max are rejected"""
        field = field_from_text("t^2", m_max=3)
        with self.assertRaises(OrderError):
            jet_eval(field, [0.5], 4)

    def test_outside_domain(self):
        """Test points outside the declared domain"""
        field = catalog_get('flat_exponential', {'alpha': 1.0})
        with self.assertRaises(DomainError):
            jet_eval(field, [-0.5], 2)

    def test_abs_at_zero(self):
        """Test a non-differentiable primitive at its kink"""
        with self.assertRaises(DomainError):
            jet_eval(field_from_text("abs(t)"), [0.0], 1)


class TestJetArithmetic(unittest.TestCase):
    """Test operators and primitives"""

    def test_reflected_numpy_operands(self):
        """Test numpy scalars on the left defer to the jet"""
        t = Jet.variable(0, [2.0], 2)
        jet = np.float64(3.0) * t + np.float64(1.0)
        self.assertIsInstance(jet, Jet)
        self.assertEqual(float(jet.value), 7.0)

    def test_quotient_and_power(self):
        """Test 1/t and t^(1/2) against closed forms"""
        t = Jet.variable(0, [4.0], 3)
        inverse = 1.0 / t
        self.assertAlmostEqual(float(inverse.derivative((2,))), 2.0 / 64.0)
        root = jets.sqrt(t)
        self.assertAlmostEqual(float(root.derivative((1,))), 0.25)
        self.assertAlmostEqual(float(root.derivative((3,))), 3.0 / 8.0 * 4.0 ** -2.5)

    def test_partial_and_truncate(self):
        """Test d/dx of x^2 y and truncation"""
        x, y = Jet.variables([1.0, 2.0], 3)
        jet = x * x * y
        partial = jet.partial(0)
        self.assertEqual(partial.order, 2)
        self.assertEqual(float(partial.value), 4.0)
        self.assertEqual(float(partial.derivative((0, 1))), 2.0)
        self.assertEqual(jet.truncate(1).order, 1)
        with self.assertRaises(OrderError):
            jet.truncate(4)

    def test_taylor_polynomial(self):
        """Test the Taylor polynomial reproduces a cubic exactly"""
        t = Jet.variable(0, [1.0], 3)
        jet = t ** 3 - 2.0 * t
        self.assertAlmostEqual(float(jet.taylor_polynomial([0.5])), 1.5 ** 3 - 3.0)

    def test_compose(self):
        """Test composing exp with a polynomial inner jet"""
        s = Jet.variable(0, [0.0], 3)
        inner = [s * 2.0 + s * s]
        outer = jet_eval(field_from_text("exp(t)"), [0.0], 3)
        direct = jets.exp(inner[0])
        np.testing.assert_allclose(compose(outer, inner).raw(), direct.raw(), rtol=1e-13)

    def test_smooth_cutoff(self):
        """Test the cutoff vanishes with all derivatives below zero"""
        u = Jet.variables(np.array([[-0.5, 0.5]]), 3)[0]
        jet = jets.smooth_cutoff(u)
        self.assertTrue(np.all(jet.raw()[:, 0] == 0.0))
        self.assertAlmostEqual(float(jet.value[1]), math.exp(-2.0))


class TestPullbackAndNorms(unittest.TestCase):
    """Test chart pullbacks and derivative norms"""

    def test_ray_pullback_of_identity(self):
        """Test x o exp(t) x0 at x0 = 1"""
        jet = pullback_jet(field_from_text("x"), RayChart(np.array([1.0]), 1.0), [0.0], 1)
        self.assertAlmostEqual(float(jet.derivative((1,))), 1.0)

    def test_ray_pullback_of_square(self):
        """Test x^2 through the scale-j ray chart"""
        j, x = 1, 1.5
        rj = 3.0 ** j
        jet = pullback_jet(field_from_text("x^2"), RayChart(np.array([x]), rj), [0.0], 2)
        np.testing.assert_allclose([float(jet.derivative((k,))) for k in range(3)],
                                   [x ** 2, 2 * rj * x ** 2, 4 * rj ** 2 * x ** 2])

    def test_pullback_against_finite_differences(self):
        """Test pullback jets against differences of the composed map"""
        field = catalog_get('gaussian_bump', {'d': 2, 'radius': 2.0})
        chart = AffineChart(np.array([0.3, -0.2]), 0.5)
        t, h = np.array([0.1, 0.2]), 1e-4
        jet = pullback_jet(field, chart, t, 2)
        e = np.array([1.0, 0.0])
        values = [field.real(chart(t + s * h * e)) for s in (-1, 0, 1)]
        second = (values[0] - 2 * values[1] + values[2]) / h ** 2
        self.assertAlmostEqual(float(jet.derivative((2, 0))) / second, 1.0, places=4)

    def test_pullback_outside_unit_ball(self):
        """Test local points must lie in the open unit ball"""
        with self.assertRaises(DomainError):
            pullback_jet(field_from_text("x"), RayChart(np.array([1.0]), 1.0), [1.0], 1)

    def test_dk_norm(self):
        """Test the scale-adapted norms of x^2 at x = 1, j = 0"""
        jet = pullback_jet(field_from_text("x^2"), RayChart(np.array([1.0]), 1.0), [0.0], 2)
        self.assertAlmostEqual(float(dk_norm(jet, 1)), 2.0)
        self.assertAlmostEqual(float(dk_norm(jet, 2)), 4.0)
        with self.assertRaises(OrderError):
            dk_norm(jet, 3)

    def test_dk_norm_constant(self):
        """Test constant fields have zero norms"""
        constant = ScalarField(1, lambda c: 3.0, name="three")
        jet = pullback_jet(constant, RayChart(np.array([2.0]), 3.0), [0.2], 3)
        self.assertEqual(float(dk_norm(jet, 3)), 0.0)

    def test_dk_norm_monotone(self):
        """Test dk_norm is nondecreasing in k"""
        jet = jet_eval(field_from_text("sin(3*x)*exp(y)", 2), np.array([[0.1, 0.2], [1.0, -1.0]]), 4)
        norms = np.array([dk_norm(jet, k) for k in range(1, 5)])
        self.assertTrue(np.all(np.diff(norms, axis=0) >= 0))
        self.assertEqual(order_norms(jet).shape, (5, 2))

    def test_domain_excluded_points(self):
        """Test excluded points of a declared domain"""
        domain = Domain(d=2, excluded=[[0.0, 0.0]])
        self.assertEqual(domain.contains(np.array([[0.0, 0.0], [1.0, 0.0]])).tolist(), [False, True])


class TestSymbolicAgreement(unittest.TestCase):
    """Test jet coefficients of random polynomials against symbolic differentiation"""

    def random_polynomial(self, rng, degree):
        x, y = sympy.symbols('x y')
        terms, expr = [], sympy.Integer(0)
        for a in range(degree + 1):
            for b in range(degree + 1 - a):
                c = int(rng.integers(-5, 6))
                if c:
                    factors = [f"{v}^{p}" for v, p in (("x", a), ("y", b)) if p]
                    terms.append("*".join([f"({c})"] + factors))
                    expr += c * x ** a * y ** b
        return " + ".join(terms) or "0*x + 0*y", expr, (x, y)

    def test_random_polynomials(self):
        """Test every partial of 40 seeded polynomials: bitwise at dyadic points, 1e-12 elsewhere"""
        rng = np.random.default_rng(11)
        order = 5
        alphas = [(a, b) for a in range(order + 1) for b in range(order + 1 - a)]
        for _ in range(40):
            text, expr, (x, y) = self.random_polynomial(rng, int(rng.integers(1, 5)))
            field = field_from_text(text, 2, variables=['x', 'y'])
            exact = [sympy.Rational(int(k), 8) for k in rng.integers(-12, 13, size=2)]
            inexact = rng.uniform(-1.5, 1.5, size=2)
            exact_jet = jet_eval(field, [float(v) for v in exact], order)
            inexact_jet = jet_eval(field, inexact, order)
            for alpha in alphas:
                partial = sympy.diff(expr, x, alpha[0], y, alpha[1])
                expected = float(partial.subs({x: exact[0], y: exact[1]}))
                self.assertEqual(float(exact_jet.derivative(alpha)), expected, (text, alpha))
                reference = float(partial.subs({x: float(inexact[0]), y: float(inexact[1])}))
                self.assertLessEqual(abs(float(inexact_jet.derivative(alpha)) - reference),
                                     1e-12 * max(1.0, abs(reference)), (text, alpha))


if __name__ == '__main__':
    unittest.main()
