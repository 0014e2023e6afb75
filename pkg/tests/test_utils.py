#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Unit tests for utility functions
"""

import os
import shutil
import tempfile
import unittest

import numpy as np

from utils import (
    atomic_write, geometric_grid, interior_grid, multiindices, multi_factorial, parallel_map,
    parse_lambda_grid, parse_params, resolve_threads, retry, scale_distance, scale_leq,
    sphere_directions, to_jsonable,
)


class TestUtils(unittest.TestCase):
    """Test utility functions"""

    def setUp(self):
        """Set up test fixtures"""
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        """Clean up test fixtures"""
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_multiindices(self):
        """Test graded multiindex enumeration"""
        indices = multiindices(2, 2)
        self.assertEqual(len(indices), 6)
        self.assertEqual(indices[0], (0, 0))
        self.assertEqual(indices[1:3], ((1, 0), (0, 1)))
        self.assertEqual(multi_factorial((2, 3)), 12)

    def test_geometric_grid(self):
        """Test grid packing towards a singular endpoint"""
        grid = geometric_grid(2.0, 100)
        self.assertEqual(len(grid), 100)
        self.assertAlmostEqual(grid[-1], 2.0)
        self.assertTrue(np.all(np.diff(grid) > 0))
        self.assertLess(grid[0], 1e-3)

    def test_interior_grid(self):
        """Test ball grids stay strictly inside"""
        grid = interior_grid(10, 2)
        self.assertTrue(np.all(np.linalg.norm(grid, axis=1) < 1.0))

    def test_sphere_directions(self):
        """Test unit directions"""
        self.assertEqual(sphere_directions(1, 10).tolist(), [[1.0], [-1.0]])
        directions = sphere_directions(3, 50)
        np.testing.assert_allclose(np.linalg.norm(directions, axis=1), 1.0)

    def test_scale_order(self):
        """Test multi-parameter scale comparisons"""
        self.assertTrue(scale_leq((1, 2), (1, 3)))
        self.assertFalse(scale_leq((2, 2), (1, 3)))
        self.assertEqual(scale_distance((1, 5), (3, 4)), 2)

    def test_parse_lambda_grid(self):
        """Test frequency grid specifications"""
        grid = parse_lambda_grid("1e2:1e5:geometric:4")
        np.testing.assert_allclose(grid, [1e2, 1e3, 1e4, 1e5])
        self.assertEqual(parse_lambda_grid("10, 20,30"), [10.0, 20.0, 30.0])
        with self.assertRaises(ValueError):
            parse_lambda_grid("10,5")
        with self.assertRaises(ValueError):
            parse_lambda_grid("1:2:cubic:3")

    def test_parse_params(self):
        """Test parameter bindings"""
        self.assertEqual(parse_params("a=1, n=4"), {'a': 1.0, 'n': 4.0})
        self.assertEqual(parse_params(None), {})
        with self.assertRaises(ValueError):
            parse_params("a:1")

    def test_atomic_write(self):
        """Test atomic writes leave no temporary files"""
        path = os.path.join(self.temp_dir, "sub", "report.json")
        atomic_write(path, "first")
        atomic_write(path, "second")
        with open(path, encoding='utf-8') as f:
            self.assertEqual(f.read(), "second")
        self.assertEqual(os.listdir(os.path.dirname(path)), ["report.json"])

    def test_parallel_map_order(self):
        """Test results keep input order on a thread pool"""
        self.assertEqual(parallel_map(lambda x: x * x, range(20), threads=4), [x * x for x in range(20)])
        self.assertEqual(resolve_threads(0), 1)

    def test_retry_refines_arguments(self):
        """Test retry escalates keyword arguments between attempts"""
        seen = []

        def refine(kwargs, attempt):
            kwargs['level'] += 1

        @retry(max_attempts=3, exceptions=(ArithmeticError,), refine=refine)
        def solve(level=1):
            seen.append(level)
            if level < 3:
                raise ArithmeticError("too coarse")
            return level

        self.assertEqual(solve(level=1), 3)
        self.assertEqual(seen, [1, 2, 3])

    def test_retry_gives_up(self):
        """Test retry re-raises after the last attempt"""
        @retry(max_attempts=2, exceptions=(ValueError,))
        def always_fails():
            raise ValueError("no")

        with self.assertRaises(ValueError):
            always_fails()

    def test_to_jsonable(self):
        """Test conversion of numpy and complex values"""
        value = to_jsonable({'a': np.float64(1.5), 'b': np.arange(3), 'c': 1 + 2j, 1: float('inf'),
                             'd': np.bool_(True)})
        self.assertEqual(value, {'a': 1.5, 'b': [0, 1, 2], 'c': {'re': 1.0, 'im': 2.0}, '1': 'inf', 'd': True})


if __name__ == '__main__':
    unittest.main()
