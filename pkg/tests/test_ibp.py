#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Unit tests for the integration-by-parts expansion and reduced amplitudes
"""

import math
import unittest

import numpy as np

from errors import DomainError, OmegaViolation, OrderError
from estimator import oracle_integral
from ibp import admissible_omega, ibp_expand, reduce_amplitude, support_points
from phase_dsl import catalog_get, field_from_text


def bump_amplitude():
    return catalog_get('gaussian_bump', {'d': 1, 'radius': 0.5, 'center': 0.0})


class TestExpansion(unittest.TestCase):
    """Test the symbolic expansion"""

    def test_base_case(self):
        """Test k = 0 is the single term 1"""
        expansion = ibp_expand(0, 1)
        self.assertEqual(expansion.term_count, 1)
        term = expansion.terms[(0,)][0]
        self.assertEqual(term.coeff, 1)
        self.assertEqual(term.gammas, ())

    def test_bookkeeping_identities(self):
        """Test every generated term satisfies the counting identities"""
        for k, d in [(1, 1), (2, 1), (3, 1), (4, 1), (5, 1), (1, 2), (2, 2), (3, 2), (2, 3)]:
            expansion = ibp_expand(k, d)
            self.assertEqual(expansion.check(), [], f"k={k}, d={d}")
            self.assertLessEqual(expansion.max_gamma_order(), k + 1)

    def test_highest_beta_present(self):
        """Test the pure derivative term d^k psi appears"""
        expansion = ibp_expand(3, 2)
        self.assertIn((3, 0), expansion.terms)
        self.assertIn((0, 3), expansion.terms)

    def test_out_of_range(self):
        """Test orders and dimensions outside the supported range"""
        with self.assertRaises(OrderError):
            ibp_expand(6, 1)
        with self.assertRaises(ValueError):
            ibp_expand(1, 4)

    def test_serialization(self):
        """Test the term list serializes with string coefficients"""
        data = ibp_expand(2, 1).to_dict()
        self.assertEqual(data['k'], 2)
        self.assertEqual(data['term_count'], sum(len(v) for v in data['terms'].values()))
        first = next(iter(data['terms'].values()))[0]
        self.assertIsInstance(first['coeff'], str)


class TestLinearPhase(unittest.TestCase):
    """Test classical integration by parts against a linear phase"""

    def test_single_step(self):
        """Test f = 2t, k = 1 gives psi_1 = (i/2) psi'"""
        reduced = reduce_amplitude(field_from_text("2*t"), bump_amplitude(), 1, omega=1.0)
        coeffs = reduced.coefficients(np.array([[0.1], [-0.2]]))
        np.testing.assert_allclose(coeffs[(1,)], [0.5j, 0.5j], atol=1e-15)
        np.testing.assert_allclose(coeffs[(0,)], [0.0, 0.0], atol=1e-15)

    def test_three_steps(self):
        """Test f = 2t, k = 3 leaves only the third derivative with |F| = 1/8"""
        reduced = reduce_amplitude(field_from_text("2*t"), bump_amplitude(), 3, omega=1.0)
        coeffs = reduced.coefficients(np.array([[0.0], [0.3]]))
        np.testing.assert_allclose(np.abs(coeffs[(3,)]), [0.125, 0.125], rtol=1e-14)
        for beta in [(0,), (1,), (2,)]:
            if beta in coeffs:
                np.testing.assert_allclose(coeffs[beta], 0.0, atol=1e-15)


class TestReducedAmplitude(unittest.TestCase):
    """Test the oscillatory-integral identity and the hypotheses"""

    def setUp(self):
        self.f = field_from_text("t^2 + 2*t")
        self.psi = bump_amplitude()
        self.omega = admissible_omega(self.f, self.psi, 2)

    def test_admissible_omega(self):
        """Test the admissible weight for |f''| / |f'| <= 2 on the support"""
        self.assertAlmostEqual(self.omega, 0.5, delta=0.01)

    def test_identity(self):
        """Test int e^(if) psi = int e^(if) psi_2"""
        reduced = reduce_amplitude(self.f, self.psi, 2, self.omega)
        original = oracle_integral(self.f, self.psi, 1.0, self.psi.support).value
        after = oracle_integral(self.f, reduced, 1.0, self.psi.support).value
        self.assertLessEqual(abs(original - after), 1e-8 * abs(original))

    def test_composition(self):
        """Test reducing twice by one step matches one reduction by two steps"""
        once = reduce_amplitude(self.f, self.psi, 1, self.omega)
        twice = reduce_amplitude(self.f, once.field, 1, self.omega)
        direct = reduce_amplitude(self.f, self.psi, 2, self.omega)
        first = oracle_integral(self.f, twice, 1.0, self.psi.support).value
        second = oracle_integral(self.f, direct, 1.0, self.psi.support).value
        self.assertLessEqual(abs(first - second), 1e-7 * max(1.0, abs(second)))

    def test_sharpjunk_ratio(self):
        """Test the coefficient bound constant is finite and has a witness"""
        reduced = reduce_amplitude(self.f, self.psi, 2, self.omega)
        result = reduced.sharpjunk_ratio()
        self.assertTrue(math.isfinite(result['constant']))
        self.assertGreater(result['constant'], 0.0)
        self.assertIsNotNone(result['witness'])

    def test_omega_violation(self):
        """Test an oversized weight is rejected with a witness"""
        with self.assertRaises(OmegaViolation) as ctx:
            reduce_amplitude(self.f, self.psi, 2, omega=10.0)
        self.assertEqual(ctx.exception.witness['order'], 2)

    def test_vanishing_gradient(self):
        """Test a critical point on the support"""
        with self.assertRaises(DomainError):
            reduce_amplitude(field_from_text("t^2"), self.psi, 1)

    def test_support_points(self):
        """Test support grids skip the zeros of the amplitude"""
        points = support_points(self.psi, 101)
        self.assertTrue(np.all(np.abs(points) < 0.5))
        self.assertEqual(len(points), 99)


if __name__ == '__main__':
    unittest.main()
