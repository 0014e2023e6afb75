#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Unit tests for Carnot-Caratheodory balls, exponential charts and their axioms
"""

import math
import unittest

import numpy as np

from cc_geometry import (
    CCSystem, VectorField, cc_axiom_check, cc_ball_sample, cc_exp_chart, cc_system, doubling_ratio,
    flow_refinement, integrability_check, lie_bracket, select_basis,
)
from errors import DomainError
from homspace import local_samples


class TestSystems(unittest.TestCase):
    """Test vector field systems"""

    def test_catalog(self):
        """Test catalog systems and overrides"""
        heisenberg = cc_system('heisenberg', steps=8)
        self.assertEqual(heisenberg.dim, 3)
        self.assertEqual(heisenberg.q, 3)
        self.assertEqual(heisenberg.d_scale, 1)
        self.assertEqual(heisenberg.steps, 8)
        with self.assertRaises(ValueError):
            cc_system('nonexistent')

    def test_zero_degree(self):
        """Test every field needs a nonzero degree"""
        fields = [VectorField.from_text(['1', '0']), VectorField.from_text(['0', '1'])]
        with self.assertRaises(ValueError):
            CCSystem('bad', fields, [[1], [0]])

    def test_admissible(self):
        """Test scales must lie in (0, 1] coordinatewise"""
        flat = cc_system('flat')
        self.assertTrue(flat.admissible([1.0, 1.0]))
        self.assertTrue(flat.admissible([0.5, 0.25]))
        self.assertFalse(flat.admissible([0.5, 0.0]))
        self.assertFalse(flat.admissible([1.5, 0.5]))
        self.assertFalse(flat.admissible([0.5]))

    def test_weights(self):
        """Test delta^d_i for the Heisenberg degrees"""
        np.testing.assert_allclose(cc_system('heisenberg').weights([0.5]), [0.5, 0.5, 0.25])

    def test_roundtrip_dict(self):
        """Test systems rebuild from their dictionary"""
        system = cc_system('grushin')
        rebuilt = CCSystem.from_dict(system.to_dict())
        self.assertEqual(rebuilt.to_dict(), system.to_dict())


class TestIntegrability(unittest.TestCase):
    """Test brackets and the integrability condition"""

    def test_line_bracket(self):
        """Test [d_x, x d_x] = d_x on the line"""
        system = cc_system('line_dilation')
        points = np.array([[-1.0], [0.0], [2.0]])
        bracket = lie_bracket(system.fields[0], system.fields[1], points)
        np.testing.assert_allclose(bracket[:, 0], [1.0, 1.0, 1.0])
        self.assertTrue(integrability_check(system, points)['passed'])

    def test_heisenberg_bracket(self):
        """Test [X_1, X_2] = X_3 for the Heisenberg fields"""
        system = cc_system('heisenberg')
        points = np.array([[0.0, 0.0, 0.0], [0.3, -0.2, 1.0]])
        np.testing.assert_allclose(lie_bracket(system.fields[0], system.fields[1], points),
                                   [[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]], atol=1e-14)
        self.assertTrue(integrability_check(system, points)['passed'])

    def test_grushin_failure(self):
        """Test the Grushin pair fails on the singular line with a witness"""
        points = np.array([[1.0, 0.0], [0.0, 0.5]])
        result = integrability_check(cc_system('grushin'), points)
        self.assertFalse(result['passed'])
        witness = result['witnesses'][0]
        self.assertEqual(witness['x'], [0.0, 0.5])
        self.assertEqual(witness['reason'], 'span')

    def test_grushin_completed(self):
        """Test adding d_y of degree 2 repairs the Grushin system"""
        points = np.array([[1.0, 0.0], [0.0, 0.5]])
        self.assertTrue(integrability_check(cc_system('grushin_full'), points)['passed'])


class TestBallSampling(unittest.TestCase):
    """Test controlled-path ball clouds"""

    def test_flat_ellipse(self):
        """Test the flat ball is the ellipse of area pi delta_1 delta_2"""
        delta = [0.5, 0.25]
        cloud = cc_ball_sample(cc_system('flat', steps=16), [0.0, 0.0], delta, n_paths=20_000, seed=3)
        radii = (cloud.points[:, 0] / delta[0]) ** 2 + (cloud.points[:, 1] / delta[1]) ** 2
        self.assertTrue(np.all(radii < 1.0))
        area = math.pi * delta[0] * delta[1]
        self.assertLessEqual(abs(cloud.hull_volume() - area), 0.05 * area)

    def test_deterministic(self):
        """Test clouds depend on the seed only"""
        system = cc_system('heisenberg', steps=8)
        first = cc_ball_sample(system, [0.0, 0.0, 0.0], [0.5], n_paths=9000, seed=7, threads=1)
        second = cc_ball_sample(system, [0.0, 0.0, 0.0], [0.5], n_paths=9000, seed=7, threads=3)
        np.testing.assert_array_equal(first.points, second.points)
        other = cc_ball_sample(system, [0.0, 0.0, 0.0], [0.5], n_paths=9000, seed=8, threads=1)
        self.assertFalse(np.array_equal(first.points, other.points))

    def test_inadmissible_scale(self):
        """Test a zero scale coordinate is rejected"""
        with self.assertRaises(DomainError):
            cc_ball_sample(cc_system('flat'), [0.0, 0.0], [0.5, 0.0], n_paths=10)
        with self.assertRaises(ValueError):
            cc_ball_sample(cc_system('flat'), [0.0, 0.0], [0.5, 0.5], n_paths=0)

    def test_csv_layout(self):
        """Test one column per ambient coordinate"""
        cloud = cc_ball_sample(cc_system('heisenberg', steps=8), [0.0, 0.0, 0.0], [0.5], n_paths=50)
        self.assertEqual(cloud.csv_header(), ['x0', 'x1', 'x2'])
        self.assertEqual(len(cloud.csv_rows()), 50)
        self.assertEqual(cloud.to_dict()['discarded'], 0)

    def test_heisenberg_doubling(self):
        """Test the Heisenberg ball volume scales by 2^4 under doubling"""
        result = doubling_ratio(cc_system('heisenberg', steps=8), [0.0, 0.0, 0.0], [0.25], n_paths=4000, seed=0)
        self.assertLessEqual(abs(result['ratio'] - 16.0), 1.6)

    def test_flow_refinement(self):
        """Test RK4 is exact on the polynomial Heisenberg flow"""
        change = flow_refinement(cc_system('heisenberg', steps=16), [0.1, 0.2, 0.0], [0.5], n_paths=64)
        self.assertLessEqual(change, 1e-10)


class TestExponentialCharts(unittest.TestCase):
    """Test exponential charts and their Jacobians"""

    def test_flat_chart(self):
        """Test the flat chart is x0 + (delta_1 u_1, delta_2 u_2)"""
        x0, delta = np.array([1.0, -2.0]), np.array([0.5, 0.25])
        chart = cc_exp_chart(cc_system('flat', steps=4), x0, delta)
        t = np.array([[0.2, -0.4], [0.0, 0.5]])
        values, jac = chart.jacobian(t)
        np.testing.assert_allclose(values, x0 + delta * t, atol=1e-14)
        np.testing.assert_allclose(np.linalg.det(jac), [0.125, 0.125], rtol=1e-12)

    def test_heisenberg_jacobian(self):
        """Test det dPhi at 0 equals delta^4"""
        delta = 0.5
        chart = cc_exp_chart(cc_system('heisenberg', steps=16), [0.0, 0.0, 0.0], [delta])
        self.assertEqual(chart.basis, (0, 1, 2))
        _, jac = chart.jacobian(np.zeros((1, 3)))
        self.assertLessEqual(abs(np.linalg.det(jac[0]) - delta ** 4), 1e-6)

    def test_heisenberg_comparability(self):
        """Test the Jacobian is constant on the Heisenberg chart ball"""
        chart = cc_exp_chart(cc_system('heisenberg', steps=16), [0.2, -0.1, 0.3], [0.5])
        result = chart.comparability(samples=8)
        self.assertAlmostEqual(result['K'], 1.0, places=8)

    def test_inverse(self):
        """Test chart inversion on the Heisenberg chart"""
        chart = cc_exp_chart(cc_system('heisenberg', steps=16), [0.0, 0.0, 0.0], [0.5])
        t = 0.5 * local_samples(3, 8)
        image = chart(t)
        back = np.stack(chart.inverse_generic([image[:, k] for k in range(3)]), axis=1)
        np.testing.assert_allclose(back, t, atol=1e-8)
        self.assertTrue(np.all(chart.contains(image)))

    def test_line_basis(self):
        """Test the line with d_x and x d_x selects one field"""
        system = cc_system('line_dilation', steps=16)
        basis = select_basis(system, [1.0], [0.5])
        self.assertEqual(len(basis), 1)
        chart = cc_exp_chart(system, [1.0], [0.5])
        self.assertEqual(chart.dim, 1)

    def test_vanishing_fields(self):
        """Test a point where every field vanishes"""
        system = CCSystem('vanishing', [VectorField.from_text(['t'])], [[1]])
        with self.assertRaises(DomainError):
            cc_exp_chart(system, [0.0], [0.5])


class TestAxiomCheck(unittest.TestCase):
    """Test the axiom check on CC ball families"""

    def test_flat_system(self):
        """Test the flat anisotropic system passes every axiom"""
        system = cc_system('flat', steps=4, pieces=4)
        points = np.array([[0.0, 0.0], [0.3, -0.2]])
        report = cc_axiom_check(system, 4, [-2, -1], points, m=2, n_paths=2000, samples=4, max_pairs=6)
        self.assertTrue(report.all_passed, report.witnesses)
        for ratio in report.constants['volume_doubling'].values():
            self.assertAlmostEqual(ratio, 4.0, delta=0.8)

    def test_grushin_stops_early(self):
        """Test a failed integrability check skips the ball family"""
        points = np.array([[0.0, 0.5]])
        report = cc_axiom_check(cc_system('grushin'), 4, [-1], points, n_paths=10)
        self.assertFalse(report.passed['integrability'])
        self.assertFalse(report.all_passed)
        self.assertIn('integrability', report.witnesses)


if __name__ == '__main__':
    unittest.main()
