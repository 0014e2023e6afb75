#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Unit tests for atlases, axiom checks, bumps and the partition of unity
"""

import math
import unittest

import numpy as np

from errors import DomainError, HypothesisViolation
from homspace import (
    Bump, bnw_atlas, build_partition, bump, check_axioms, make_atlas, unit_ball_rule,
)


def ray_points(lo: float, hi: float, n: int) -> np.ndarray:
    return np.linspace(lo, hi, n).reshape(-1, 1)


class TestAtlases(unittest.TestCase):
    """Test chart maps and existence"""

    def test_bnw_chart(self):
        """Test chart(0, 1)(0.5) = e^0.5"""
        atlas = bnw_atlas(1)
        self.assertAlmostEqual(float(atlas.chart(0, np.array([1.0]))(np.array([0.5]))[0]), math.exp(0.5))

    def test_bnw_existence(self):
        """Test balls exist below the scale cap and away from the origin"""
        atlas = bnw_atlas(2)
        self.assertTrue(atlas.exists(0, [1.0, 1.0]))
        self.assertFalse(atlas.exists(1, [1.0, 1.0]))
        self.assertFalse(atlas.exists(-3, [0.0, 0.0]))

    def test_chart_inverse(self):
        """Test inverse charts undo the forward map"""
        atlas = bnw_atlas(2)
        chart = atlas.chart(-1, np.array([0.6, 0.8]))
        t = np.array([[-0.5], [0.0], [0.7]])
        np.testing.assert_allclose(chart.inverse(chart(t)).reshape(-1, 1), t, atol=1e-12)

    def test_make_atlas(self):
        """Test atlases by name"""
        self.assertEqual(make_atlas('euclidean', 2).ball_dimension([0.0, 0.0]), 2)
        with self.assertRaises(ValueError):
            make_atlas('hyperbolic', 1)


class TestAxioms(unittest.TestCase):
    """Test the axiom checkers"""

    def test_bnw_passes(self):
        """Test the radial atlas on 50 points of [0.5, 2] over scales -4..0"""
        report = check_axioms(bnw_atlas(1), ray_points(0.5, 2.0, 50), range(-4, 1), m=3)
        self.assertTrue(report.all_passed, report.witnesses)
        self.assertAlmostEqual(report.constants['nesting_c'], 1.0 / 3.0, places=12)
        self.assertLessEqual(report.constants['measure_mass_error'], 1e-10)
        self.assertGreater(report.constants['measure_weight_inf'], 0.0)

    def test_euclidean_passes(self):
        """Test the flat atlas with bounded smooth engulfing constants"""
        report = check_axioms(make_atlas('euclidean', 1), ray_points(0.5, 2.0, 30), range(-4, 1), m=3)
        self.assertTrue(report.all_passed, report.witnesses)
        for k, value in report.constants['smooth_engulfing'].items():
            self.assertLessEqual(value, 3.0 ** int(k) + 1e-12)

    def test_radix_two_breaks_engulfing(self):
        """Test halving radii instead of thirding them gives an engulfing witness"""
        report = check_axioms(bnw_atlas(1, radix=2), ray_points(0.5, 2.0, 50), range(-4, 1), m=2)
        self.assertFalse(report.passed['engulfing'])
        witness = report.witnesses['engulfing'][0]
        self.assertIn('outside_point', witness)
        self.assertLess(witness['jp'], witness['j'])

    def test_report_serializes(self):
        """Test the report dictionary carries flags and constants"""
        report = check_axioms(bnw_atlas(1), ray_points(0.5, 2.0, 10), [-2, -1], m=2)
        data = report.to_dict()
        self.assertTrue(data['all_passed'])
        self.assertIn('weak_doubling', data['constants'])


class TestBumps(unittest.TestCase):
    """Test bump functions"""

    def test_center_and_outside(self):
        """Test the bump is 1 at the center and 0 off the ball"""
        eta = bump(bnw_atlas(1), 0, [1.0])
        self.assertEqual(float(eta(np.array([1.0]))), 1.0)
        self.assertEqual(float(eta(np.array([math.exp(1.5)]))), 0.0)

    def test_profile_cutoff(self):
        """Test the profile vanishes past (1 + c) / 2 = 2/3"""
        eta = bump(bnw_atlas(1), 0, [1.0])
        self.assertEqual(float(eta(np.array([math.exp(0.9)]))), 0.0)
        self.assertEqual(float(eta(np.array([math.exp(0.3)]))), 1.0)
        middle = float(eta(np.array([math.exp(0.5)])))
        self.assertTrue(0.0 < middle < 1.0)

    def test_values_in_unit_interval(self):
        """Test bump values stay in [0, 1]"""
        eta = bump(make_atlas('euclidean', 2), -1, [0.2, 0.1])
        values = eta(np.random.default_rng(1).uniform(-0.5, 0.8, size=(500, 2)))
        self.assertTrue(np.all((values >= 0.0) & (values <= 1.0)))

    def test_missing_ball(self):
        """Test bumps need an existing ball"""
        with self.assertRaises(DomainError):
            Bump(bnw_atlas(1), 1, [1.0])


class TestPartition(unittest.TestCase):
    """Test the covering-lemma partition of unity"""

    def test_constant_scale_sums_to_one(self):
        """Test R = -2 on the ray segment [1, 2]"""
        atlas = bnw_atlas(1)
        partition = build_partition(atlas, -2, ray_points(1.0, 2.0, 400), N=2)
        total = partition.total(ray_points(1.0, 2.0, 1000))
        self.assertLessEqual(float(np.max(np.abs(total - 1.0))), 1e-12)
        self.assertTrue(np.all(partition.scales == -2))

    def test_single_bump(self):
        """Test a region inside one B_{R-1} ball gives a single bump identically one"""
        atlas = bnw_atlas(1)
        region = ray_points(1.0, math.exp(0.01), 20)
        partition = build_partition(atlas, -2, region, N=2)
        self.assertEqual(len(partition), 1)
        np.testing.assert_array_equal(partition.evaluate(region)[0], np.ones(len(region)))

    def test_two_scales(self):
        """Test R = -2 on [1, 1.5] and -3 on (1.5, 2] with N = 2"""
        atlas = bnw_atlas(1)
        R = lambda pts: np.where(pts[:, 0] <= 1.5, -2, -3)
        region = ray_points(1.0, 2.0, 300)
        partition = build_partition(atlas, R, region, N=2)
        self.assertEqual(sorted(set(partition.scales.tolist())), [-3, -2])
        self.assertLessEqual(float(np.max(np.abs(partition.total(region) - 1.0))), 1e-12)
        self.assertLessEqual(partition.multiplicity(region), partition.packing_bound)
        values = partition.evaluate(region)
        self.assertTrue(np.all((values >= 0.0) & (values <= 1.0 + 1e-15)))

    def test_support(self):
        """Test every partition function vanishes off its ball"""
        atlas = bnw_atlas(1)
        partition = build_partition(atlas, -2, ray_points(1.0, 2.0, 100), N=2)
        samples = ray_points(0.8, 2.4, 500)
        values = partition.evaluate(samples)
        for k in range(len(partition)):
            outside = ~atlas.contains(int(partition.scales[k]), partition.centers[k], samples)
            self.assertTrue(np.all(values[k][outside] == 0.0))

    def test_lipschitz_violation(self):
        """Test adjacent balls with scales N apart are rejected"""
        atlas = bnw_atlas(1)
        R = lambda pts: np.where(pts[:, 0] <= 1.5, -1, -4)
        with self.assertRaises(HypothesisViolation) as ctx:
            build_partition(atlas, R, ray_points(1.0, 2.0, 100), N=2)
        self.assertIn('R_xp', ctx.exception.witness)

    def test_unbounded_assignment(self):
        """Test infinite scales are rejected"""
        with self.assertRaises(HypothesisViolation):
            build_partition(bnw_atlas(1), lambda pts: np.full(len(pts), -np.inf), ray_points(1.0, 2.0, 10))

    def test_fractional_scale(self):
        """Test a non-integer scale assignment is rejected with its witness"""
        with self.assertRaises(HypothesisViolation) as ctx:
            build_partition(bnw_atlas(1), lambda pts: np.full(len(pts), -2.5), ray_points(1.0, 2.0, 10))
        self.assertEqual(ctx.exception.witness['R_x'], -2.5)
        partition = build_partition(bnw_atlas(1), lambda pts: np.full(len(pts), -2.0 - 1e-12),
                                    ray_points(1.0, 2.0, 10))
        self.assertTrue(np.all(partition.scales == -2))


class TestMeasureWeights(unittest.TestCase):
    """Test normalized chart weights"""

    def test_bnw_weight_mass(self):
        """Test the polar weight integrates to one on (-1, 1) in dimensions 1 to 3"""
        nodes, weights = unit_ball_rule(1)
        for d in (1, 2, 3):
            for j in (-3, 0):
                weight = bnw_atlas(d).measure_weight(j, np.ones(d))
                mass = float(np.dot(weights, weight([nodes[:, 0]])))
                self.assertAlmostEqual(mass, 1.0, delta=1e-10)

    def test_ball_rule_volume(self):
        """Test the product rules integrate 1 to the unit ball volume"""
        for dim, volume in ((1, 2.0), (2, math.pi), (3, 4.0 * math.pi / 3.0)):
            _, weights = unit_ball_rule(dim)
            self.assertAlmostEqual(float(np.sum(weights)), volume, places=10)


if __name__ == '__main__':
    unittest.main()
