#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Unit tests for tameness constants and the epsilon finder
"""

import math
import unittest

import numpy as np

from errors import ConvexityError, DomainError, OrderError
from phase_dsl import catalog_get, field_from_text
from tameness import (
    certificate_holds_pointwise, contact_infimum, epsilon_for, radial_tameness, tameness_constant,
    tameness_stability,
)


def monomial_constant(n: int, m: int) -> float:
    return max(math.factorial(n) / math.factorial(n - k) / n ** k for k in range(2, min(n, m) + 1))


class TestTamenessConstant(unittest.TestCase):
    """Test one-dimensional tameness constants"""

    def test_square(self):
        """Test t^2 to order 2 gives 1/2"""
        report = tameness_constant(field_from_text("t^2"), 1.0, 2, grid=256)
        self.assertAlmostEqual(report.constant, 0.5, places=12)
        self.assertEqual(report.rows()[0][0], 2)

    def test_monomials_closed_form(self):
        """Test t^n against max_k (n!/(n-k)!)/n^k"""
        for n in range(2, 7):
            field = catalog_get('monomial', {'n': n})
            report = tameness_constant(field, 1.0, n, grid=256)
            self.assertLessEqual(abs(report.constant - monomial_constant(n, n)), 1e-10)

    def test_quartic(self):
        """Test t^4 to order 4 gives 3/4"""
        report = tameness_constant(catalog_get('monomial', {'n': 4}), 2.0, 4, grid=256)
        self.assertAlmostEqual(report.constant, 0.75, places=10)
        self.assertAlmostEqual(report.per_order[4], 24.0 / 256.0, places=10)

    def test_flat_exponential_stable(self):
        """Test the flat exponential has a finite constant stable under grid refinement"""
        field = catalog_get('flat_exponential', {'alpha': 1.0})
        stability = tameness_stability(field, 1.0, 4, grid=2048)
        self.assertTrue(math.isfinite(stability['fine']))
        self.assertLessEqual(stability['relative_change'], 0.01)

    def test_nonconvex(self):
        """Test a concave phase raises with a witness"""
        with self.assertRaises(ConvexityError) as ctx:
            tameness_constant(field_from_text("-t^2"), 1.0, 2, grid=64)
        self.assertLess(ctx.exception.witness['second_derivative'], 0.0)

    def test_order_below_two(self):
        """Test m must be at least 2"""
        with self.assertRaises(OrderError):
            tameness_constant(field_from_text("t^2"), 1.0, 1)

    def test_origin_normalization(self):
        """Test f(0) != 0 and f'(0) < 0 are domain errors"""
        with self.assertRaises(DomainError):
            tameness_constant(field_from_text("t^2 + 1"), 1.0, 2, grid=64)
        with self.assertRaises(DomainError):
            tameness_constant(field_from_text("t^2 - t"), 1.0, 2, grid=64)
        report = tameness_constant(field_from_text("t^2 + t"), 1.0, 2, grid=64)
        self.assertTrue(math.isfinite(report.constant))

    def test_to_dict(self):
        """Test the report dictionary exposes C"""
        data = tameness_constant(field_from_text("t^3"), 1.0, 3, grid=64).to_dict()
        self.assertAlmostEqual(data['C'], monomial_constant(3, 3), places=10)
        self.assertEqual(sorted(data['per_order']), ['2', '3'])


class TestRadialTameness(unittest.TestCase):
    """Test tameness uniformly over rays"""

    def test_radial_square(self):
        """Test |x|^2 in the plane gives 1/2 on every ray"""
        report = radial_tameness(catalog_get('radial_power', {'p': 2, 'd': 2}), m=2, rays=16, grid=128, threads=1)
        self.assertAlmostEqual(report.constant, 0.5, places=10)
        self.assertEqual(len(report.per_ray), 16)

    def test_sum_of_fourth_powers(self):
        """Test x^4 + y^4 matches the monomial value 3/4"""
        field = catalog_get('sum_of_even_powers', {'n': 4, 'd': 2})
        report = radial_tameness(field, m=4, rays=12, grid=128, threads=2)
        self.assertAlmostEqual(report.constant, 0.75, places=8)

    def test_saddle_witness(self):
        """Test x^2 - y^2 reports the concave direction"""
        with self.assertRaises(ConvexityError) as ctx:
            radial_tameness(field_from_text("x^2 - y^2", 2), m=2, rays=8, grid=64, threads=1)
        direction = ctx.exception.witness['direction']
        self.assertGreater(abs(direction[1]), abs(direction[0]))

    def test_origin_outside_domain(self):
        """Test fractional powers cannot be centered at the excluded origin"""
        with self.assertRaises(DomainError):
            radial_tameness(catalog_get('radial_power', {'p': 3, 'd': 2}), m=2, rays=4, grid=32)


class TestEpsilonFinder(unittest.TestCase):
    """Test the finite-type epsilon certificate"""

    def test_low_degree_polynomial(self):
        """Test polynomials of degree below m certify with epsilon 1"""
        cert = epsilon_for(catalog_get('polynomial', {'coeffs': [1.0, 2.0, 3.0]}), 4, 0, grid=256)
        self.assertEqual(cert.epsilon, 1.0)
        self.assertTrue(cert.holds)

    def test_sine(self):
        """Test sin(20 t) with m = 4, ell = 1 gives epsilon near 1/20"""
        field = field_from_text("sin(20*t)")
        cert = epsilon_for(field, 4, 1, grid=2048)
        self.assertTrue(cert.holds)
        self.assertTrue(1.0 / 40.0 <= cert.epsilon <= 2.0 / 20.0)
        self.assertTrue(certificate_holds_pointwise(field, cert, grid=2048))

    def test_zero_field(self):
        """Test the zero field is flagged degenerate"""
        cert = epsilon_for(field_from_text("0*t"), 3, 0, grid=64)
        self.assertTrue(cert.degenerate)
        self.assertTrue(cert.to_dict()['holds'])

    def test_bad_orders(self):
        """Test ell must lie below m"""
        with self.assertRaises(OrderError):
            epsilon_for(field_from_text("t^2"), 2, 2)


class TestContact(unittest.TestCase):
    """Test finite order of contact"""

    def test_paraboloid(self):
        """Test x^2 + y^2 has second-order contact 2 along unit directions"""
        directions = np.array([[1.0, 0.0], [0.6, 0.8]])
        result = contact_infimum(field_from_text("x^2 + y^2", 2), np.array([[0.0, 0.0], [0.5, 0.5]]), directions, 2)
        self.assertAlmostEqual(result['infimum'], 2.0, places=12)


if __name__ == '__main__':
    unittest.main()
