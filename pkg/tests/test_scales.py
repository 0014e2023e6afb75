#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Unit tests for scale assignments and their hypotheses
"""

import unittest

import numpy as np

from errors import DomainError
from homspace import bnw_atlas, make_atlas
from phase_dsl import catalog_get, field_from_text
from scales import (
    ScaleAssignment, bnw_scale, canonical_assignment, canonical_scale, derivative_bracket, validate_hypotheses,
)


class TestBnwScale(unittest.TestCase):
    """Test the radial scale function"""

    def test_square_norm(self):
        """Test |x|^2 with C = 1/2 gives R = -2 everywhere"""
        field = catalog_get('radial_power', {'p': 2, 'd': 2})
        for x in ([1.0, 0.0], [0.3, -0.4], [5.0, 7.0]):
            self.assertEqual(bnw_scale(field, x, 0.5), -2)

    def test_fourth_power(self):
        """Test |x|^4 with C = 3/4 gives R = -3"""
        field = catalog_get('radial_power', {'p': 4, 'd': 2})
        self.assertEqual(bnw_scale(field, [0.6, 0.8], 0.75), -3)

    def test_origin(self):
        """Test the origin is outside the region of the scale function"""
        with self.assertRaises(DomainError):
            bnw_scale(catalog_get('radial_power', {'p': 2, 'd': 2}), [0.0, 0.0], 0.5)

    def test_invalid_constant(self):
        """Test the tameness constant must be positive"""
        with self.assertRaises(ValueError):
            bnw_scale(field_from_text("x^2"), [1.0], 0.0)


class TestAssignments(unittest.TestCase):
    """Test assignment constructors"""

    def test_constant(self):
        """Test constant scales"""
        R = ScaleAssignment.constant(-2)
        self.assertEqual(R(np.array([[1.0], [2.0]])).tolist(), [-2, -2])

    def test_piecewise(self):
        """Test scales by radius"""
        R = ScaleAssignment.piecewise([1.5], [-2, -3])
        self.assertEqual(R(np.array([[1.0], [1.5], [2.0]])).tolist(), [-2, -3, -3])
        with self.assertRaises(ValueError):
            ScaleAssignment.piecewise([1.0, 2.0], [-1])

    def test_perturbed(self):
        """Test a single corrupted point"""
        R = ScaleAssignment.constant(-2).perturbed([1.5], 5)
        self.assertEqual(R(np.array([[1.0], [1.5]])).tolist(), [-2, 3])


class TestHypotheses(unittest.TestCase):
    """Test the three scale hypotheses on the radial atlas"""

    def setUp(self):
        self.atlas = bnw_atlas(1)
        self.field = field_from_text("x^2")
        self.probe = np.linspace(0.5, 2.0, 50).reshape(-1, 1)
        self.R = ScaleAssignment.bnw(self.field, 0.5)

    def test_bnw_passes(self):
        """Test the radial assignment satisfies all hypotheses with N = 2"""
        report = validate_hypotheses(self.atlas, self.field, self.R, 1.0, 3, self.probe)
        self.assertTrue(report.all_passed, report.witnesses)
        self.assertEqual(report.N, 2)
        self.assertEqual(report.constants['lipschitz'], 0)

    def test_derivative_bracket(self):
        """Test |d f|_R(x) / f(x) = 2 * 3^-2 at every probe"""
        bracket = derivative_bracket(self.atlas, self.field, self.R, self.probe, 2)
        self.assertAlmostEqual(bracket['1']['min'], 2.0 / 9.0, places=12)
        self.assertAlmostEqual(bracket['1']['max'], 2.0 / 9.0, places=12)

    def test_corrupted_assignment(self):
        """Test R + 5 at one probe breaks the Lipschitz hypothesis"""
        R = self.R.perturbed(self.probe[10], 5)
        report = validate_hypotheses(self.atlas, self.field, R, 1.0, 3, self.probe)
        self.assertFalse(report.passed['lipschitz'])
        witness = report.witnesses['lipschitz'][0]
        self.assertGreaterEqual(abs(witness['R_x'] - witness['R_xp']), 2)


class TestCanonicalScale(unittest.TestCase):
    """Test the canonical scale from the defining collection"""

    def test_close_to_bnw(self):
        """Test canonical scales stay within 2 of the radial scales for x^2"""
        atlas = bnw_atlas(1)
        field = field_from_text("x^2")
        probe = np.linspace(0.5, 2.0, 20).reshape(-1, 1)
        R = canonical_assignment(atlas, field, 1.0, m=3, threads=2)
        self.assertEqual(R.N, 3)
        canonical = R(probe)
        radial = ScaleAssignment.bnw(field, 0.5)(probe)
        self.assertTrue(np.all(np.abs(canonical - radial) <= 2))

    def test_linear_phase(self):
        """Test a linear phase on the flat atlas reaches the top admissible scale"""
        atlas = make_atlas('euclidean', 1, scale_cap=2)
        field = field_from_text("2*t + 1")
        for x in (-0.5, 0.3, 1.7):
            self.assertEqual(canonical_scale(atlas, field, 1.0, [x], m=3), 1)

    def test_invalid_epsilon(self):
        """Test epsilon outside (0, 1]"""
        with self.assertRaises(ValueError):
            canonical_scale(bnw_atlas(1), field_from_text("x^2"), 0.0, [1.0])


if __name__ == '__main__':
    unittest.main()
