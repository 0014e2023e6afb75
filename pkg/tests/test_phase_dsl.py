#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Unit tests for the expression language and the phase catalog
"""

import math
import random
import unittest

import numpy as np

from errors import ArityError, CatalogError, ParseError, UnknownIdentifierError
from jets import jet_eval
from phase_dsl import (
    Binary, Call, Const, Param, Unary, Var, catalog_get, evaluate, field_from_text, free_parameters, parse,
    to_text,
)


def random_expr(rng: random.Random, depth: int):
    """Random AST over x, y and a parameter a, kept finite on [0.5, 1.5]^2"""
    if depth == 0 or rng.random() < 0.25:
        choice = rng.randrange(3)
        if choice == 0:
            return Const(round(rng.uniform(-3, 3), 3))
        if choice == 1:
            return Var(rng.choice(['x', 'y']))
        return Param('a')
    kind = rng.randrange(4)
    if kind == 0:
        return Unary('-', random_expr(rng, depth - 1))
    if kind == 1:
        return Binary(rng.choice('+-*'), random_expr(rng, depth - 1), random_expr(rng, depth - 1))
    if kind == 2:
        return Binary('^', random_expr(rng, depth - 1), Const(float(rng.randrange(0, 4))))
    return Call(rng.choice(['sin', 'cos']), (random_expr(rng, depth - 1),))


class TestParser(unittest.TestCase):
    """Test parsing, printing and evaluation"""

    def test_sum_of_squares(self):
        """Test x^2 + y^2 at (1, 2)"""
        self.assertEqual(evaluate(parse("x^2 + y^2", ['x', 'y']), {'x': 1.0, 'y': 2.0}), 5.0)

    def test_flat_exponential_text(self):
        """Test the flat exponential expression with a = 1 at t = 1"""
        expr = parse("exp(-(1+1/a)*t^(-a))", ['t'])
        self.assertEqual(free_parameters(expr), ['a'])
        self.assertAlmostEqual(evaluate(expr, {'t': 1.0, 'a': 1.0}), math.exp(-2.0), places=12)

    def test_precedence(self):
        """Test power binds tighter than unary minus, and minus tighter than products"""
        self.assertEqual(evaluate(parse("-t^2", ['t']), {'t': 3.0}), -9.0)
        self.assertEqual(evaluate(parse("2*3^2", ['t']), {'t': 0.0}), 18.0)
        self.assertEqual(evaluate(parse("2^-1", ['t']), {'t': 0.0}), 0.5)
        self.assertEqual(evaluate(parse("1 - 2 - 3", ['t']), {'t': 0.0}), -4.0)

    def test_syntax_error_offset(self):
        """Test a dangling operator reports the end offset"""
        with self.assertRaises(ParseError) as ctx:
            parse("x +", ['x'])
        self.assertEqual(ctx.exception.position, 3)

    def test_unknown_identifier(self):
        """Test undeclared names with a declared parameter list"""
        with self.assertRaises(UnknownIdentifierError):
            parse("x + b", ['x'], parameters=['a'])
        with self.assertRaises(UnknownIdentifierError):
            parse("foo(x)", ['x'])

    def test_arity_mismatch(self):
        """Test primitives called with the wrong number of arguments"""
        with self.assertRaises(ArityError):
            parse("pow(x)", ['x'])
        with self.assertRaises(ParseError):
            parse("sin", ['x'])

    def test_unbound_parameter(self):
        """Test fields need every parameter bound"""
        with self.assertRaises(UnknownIdentifierError):
            field_from_text("a*t")

    def test_print_parse_fuzz(self):
        """Test printed random ASTs re-parse to evaluation-equivalent ASTs"""
        rng = random.Random(7)
        points = np.random.default_rng(7).uniform(0.5, 1.5, size=(10, 2))
        for _ in range(300):
            expr = random_expr(rng, 4)
            again = parse(to_text(expr), ['x', 'y'])
            for x, y in points:
                env = {'x': x, 'y': y, 'a': 0.75}
                first, second = evaluate(expr, env), evaluate(again, env)
                self.assertLessEqual(abs(first - second), 1e-13 * max(1.0, abs(first)))


class TestCatalog(unittest.TestCase):
    """Test named phases and amplitudes"""

    def test_monomial(self):
        """Test the monomial t^2"""
        field = catalog_get('monomial', {'n': 2})
        self.assertEqual(field.arity, 1)
        self.assertAlmostEqual(float(field.real(np.array([3.0]))), 9.0)

    def test_flat_exponential(self):
        """Test the flat exponential and its domain (0, 1]"""
        field = catalog_get('flat_exponential', {'alpha': 1.0})
        self.assertAlmostEqual(float(field.real(np.array([0.5]))), math.exp(-4.0))
        self.assertEqual(field.domain.contains(np.array([[0.0], [1.0]])).tolist(), [False, True])
        with self.assertRaises(CatalogError):
            catalog_get('flat_exponential', {'alpha': 0.0})

    def test_radial_power(self):
        """Test |x|^2 in the plane and a fractional power away from the origin"""
        field = catalog_get('radial_power', {'p': 2, 'd': 2})
        self.assertAlmostEqual(float(field.real(np.array([3.0, 4.0]))), 25.0)
        odd = catalog_get('radial_power', {'p': 3, 'd': 2})
        self.assertAlmostEqual(float(odd.real(np.array([3.0, 4.0]))), 125.0)
        self.assertFalse(odd.domain.contains(np.zeros(2))[0])

    def test_gaussian_bump_support(self):
        """Test the bump is compactly supported with value 1 at its center"""
        field = catalog_get('gaussian_bump', {'d': 1, 'radius': 0.5, 'center': 1.0})
        self.assertAlmostEqual(float(field.real(np.array([1.0]))), 1.0)
        self.assertEqual(float(field.real(np.array([1.6]))), 0.0)
        self.assertEqual(field.support, ([0.5], [1.5]))

    def test_polynomial(self):
        """Test coefficient lists"""
        field = catalog_get('polynomial', {'coeffs': [1.0, 0.0, -2.0]})
        self.assertAlmostEqual(float(field.real(np.array([2.0]))), -7.0)

    def test_invalid_entries(self):
        """Test unknown names and invalid parameters"""
        with self.assertRaises(CatalogError):
            catalog_get('cubic_spline', {})
        with self.assertRaises(CatalogError):
            catalog_get('sum_of_even_powers', {'n': 3})
        with self.assertRaises(CatalogError):
            catalog_get('monomial', {'n': 1.5})

    def test_evaluation_matches_jets(self):
        """Test pointwise evaluation equals order-0 jets for catalog fields"""
        rng = np.random.default_rng(3)
        entries = [('monomial', {'n': 4}), ('sum_of_even_powers', {'n': 4, 'd': 2}),
                   ('radial_power', {'p': 3, 'd': 2}), ('flat_exponential', {'alpha': 0.5}),
                   ('gaussian_bump', {'d': 2, 'radius': 1.5}), ('polynomial', {'coeffs': [0.5, 1.0, 3.0]})]
        for name, params in entries:
            field = catalog_get(name, params)
            points = rng.uniform(0.05, 1.0, size=(1000, field.arity))
            np.testing.assert_allclose(jet_eval(field, points, 0).value, field.real(points), rtol=1e-12, atol=1e-300)


if __name__ == '__main__':
    unittest.main()
