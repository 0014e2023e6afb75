#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Phase and amplitude expression language

Grammar (precedence: ^ > unary minus > * / > + -, ^ right associative):

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := ('-' | '+') unary | power
    power := atom ('^' unary)?
    atom  := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'

Names are variables when declared as such, primitives when followed by a
call, and parameters otherwise; parameters are bound when a field is
built, so one parse serves a whole sweep of parameter values.
"""

import re
import math
import logging
from dataclasses import dataclass, field as dataclass_field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

import jets
from constants import CATALOG_NAMES, DEFAULT_M_MAX
from errors import ArityError, CatalogError, ParseError, UnknownIdentifierError
from jets import Domain, ScalarField

logger = logging.getLogger(__name__)

FUNCTIONS = {
    'exp': (1, jets.exp),
    'sin': (1, jets.sin),
    'cos': (1, jets.cos),
    'log': (1, jets.log),
    'abs': (1, jets.fabs),
    'pow': (2, jets.power),
}
NAMED_CONSTANTS = {'pi': math.pi}

_TOKEN_RE = re.compile(r'\s*(?:(?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)'
                       r'|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))')


# AST nodes

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    operand: Any


@dataclass(frozen=True)
class Binary:
    op: str
    left: Any
    right: Any


@dataclass(frozen=True)
class Call:
    func: str
    args: Tuple[Any, ...]


Expr = Union[Const, Var, Param, Unary, Binary, Call]


def tokenize(text: str) -> List[Tuple[str, str, int]]:
    """
    Split expression text into (kind, text, offset) tokens

    Raises:
        ParseError: On an unexpected character
    """
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == '':
            break
        match = _TOKEN_RE.match(text, pos)
        if not match:
            offset = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ParseError(f"Unexpected character '{text[offset]}'", offset)
        kind = match.lastgroup
        tokens.append((kind, match.group(kind), match.start(kind)))
        pos = match.end()
    tokens.append(('end', '', len(text)))
    return tokens


class _Parser:
    """Recursive-descent parser over a token list"""

    def __init__(self, text: str, variables: Sequence[str], parameters: Optional[Iterable[str]]):
        self.text = text
        self.tokens = tokenize(text)
        self.index = 0
        self.variables = list(variables)
        self.parameters = None if parameters is None else set(parameters)

    @property
    def current(self) -> Tuple[str, str, int]:
        return self.tokens[self.index]

    def _advance(self) -> Tuple[str, str, int]:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def _expect(self, op: str):
        kind, value, offset = self.current
        if kind != 'op' or value != op:
            found = 'end of input' if kind == 'end' else f"'{value}'"
            raise ParseError(f"Expected '{op}', found {found}", offset)
        self._advance()

    def parse(self) -> Expr:
        expr = self._expr()
        kind, value, offset = self.current
        if kind != 'end':
            raise ParseError(f"Unexpected token '{value}'", offset)
        return expr

    def _expr(self) -> Expr:
        node = self._term()
        while self.current[0] == 'op' and self.current[1] in '+-':
            op = self._advance()[1]
            node = Binary(op, node, self._term())
        return node

    def _term(self) -> Expr:
        node = self._unary()
        while self.current[0] == 'op' and self.current[1] in '*/':
            op = self._advance()[1]
            node = Binary(op, node, self._unary())
        return node

    def _unary(self) -> Expr:
        if self.current[0] == 'op' and self.current[1] in '+-':
            op = self._advance()[1]
            operand = self._unary()
            return operand if op == '+' else Unary('-', operand)
        return self._power()

    def _power(self) -> Expr:
        base = self._atom()
        if self.current[0] == 'op' and self.current[1] == '^':
            self._advance()
            return Binary('^', base, self._unary())
        return base

    def _atom(self) -> Expr:
        kind, value, offset = self.current
        if kind == 'number':
            self._advance()
            return Const(float(value))
        if kind == 'name':
            self._advance()
            is_call = self.current[0] == 'op' and self.current[1] == '('
            if is_call:
                return self._call(value, offset)
            if value in FUNCTIONS:
                raise ParseError(f"Primitive '{value}' must be called", offset)
            if value in self.variables:
                return Var(value)
            if value in NAMED_CONSTANTS:
                return Const(NAMED_CONSTANTS[value])
            if self.parameters is not None and value not in self.parameters:
                raise UnknownIdentifierError(f"Unknown identifier '{value}'", offset)
            return Param(value)
        if kind == 'op' and value == '(':
            self._advance()
            node = self._expr()
            self._expect(')')
            return node
        found = 'end of input' if kind == 'end' else f"'{value}'"
        raise ParseError(f"Unexpected {found}", offset)

    def _call(self, name: str, offset: int) -> Expr:
        if name not in FUNCTIONS:
            raise UnknownIdentifierError(f"Unknown function '{name}'", offset)
        self._expect('(')
        args = [self._expr()]
        while self.current[0] == 'op' and self.current[1] == ',':
            self._advance()
            args.append(self._expr())
        self._expect(')')
        arity = FUNCTIONS[name][0]
        if len(args) != arity:
            raise ArityError(f"'{name}' takes {arity} argument(s), got {len(args)}", offset)
        return Call(name, tuple(args))


def parse(text: str, variables: Sequence[str], parameters: Optional[Iterable[str]] = None) -> Expr:
    """
    Parse expression text

    Args:
        text: Expression, e.g. "exp(-(1+1/a)*t^(-a))"
        variables: Declared variable names
        parameters: Declared parameter names; when given, any other name is an error

    Returns:
        Immutable AST

    Raises:
        ParseError: Syntax error with offset
        UnknownIdentifierError: Undeclared name
        ArityError: Primitive called with the wrong number of arguments
    """
    if not text or not text.strip():
        raise ParseError("Empty expression", 0)
    return _Parser(text, variables, parameters).parse()


def to_text(expr: Expr) -> str:
    """Print an AST so that parsing the text yields an evaluation-equivalent AST"""
    if isinstance(expr, Const):
        if not math.isfinite(expr.value):
            raise ValueError(f"Cannot print non-finite constant {expr.value}")
        text = repr(float(abs(expr.value)))
        return f"(-{text})" if math.copysign(1.0, expr.value) < 0 else text
    if isinstance(expr, (Var, Param)):
        return expr.name
    if isinstance(expr, Unary):
        return f"(-{to_text(expr.operand)})"
    if isinstance(expr, Binary):
        return f"({to_text(expr.left)} {expr.op} {to_text(expr.right)})"
    if isinstance(expr, Call):
        return f"{expr.func}({', '.join(to_text(a) for a in expr.args)})"
    raise TypeError(f"Not an expression node: {expr!r}")


def free_parameters(expr: Expr) -> List[str]:
    """Parameter names occurring in an AST, sorted"""
    names = set()

    def visit(node):
        if isinstance(node, Param):
            names.add(node.name)
        elif isinstance(node, Unary):
            visit(node.operand)
        elif isinstance(node, Binary):
            visit(node.left)
            visit(node.right)
        elif isinstance(node, Call):
            for arg in node.args:
                visit(arg)

    visit(expr)
    return sorted(names)


def compile_expr(expr: Expr, variables: Sequence[str], params: Optional[Dict[str, float]] = None) -> Callable[[List[Any]], Any]:
    """
    Compile an AST into a generic rule over floats, arrays and jets

    Args:
        expr: AST
        variables: Variable names in coordinate order
        params: Parameter bindings

    Returns:
        Function mapping a list of coordinates to the expression value

    Raises:
        UnknownIdentifierError: If a parameter is unbound
    """
    params = params or {}
    position = {name: i for i, name in enumerate(variables)}

    def build(node):
        if isinstance(node, Const):
            value = node.value
            return lambda c: value
        if isinstance(node, Var):
            i = position[node.name]
            return lambda c: c[i]
        if isinstance(node, Param):
            if node.name not in params:
                raise UnknownIdentifierError(f"Unbound parameter '{node.name}'", 0)
            value = float(params[node.name])
            return lambda c: value
        if isinstance(node, Unary):
            inner = build(node.operand)
            return lambda c: -inner(c)
        if isinstance(node, Binary):
            left, right = build(node.left), build(node.right)
            if node.op == '+':
                return lambda c: left(c) + right(c)
            if node.op == '-':
                return lambda c: left(c) - right(c)
            if node.op == '*':
                return lambda c: left(c) * right(c)
            if node.op == '/':
                return lambda c: left(c) / right(c)
            return lambda c: jets.power(left(c), right(c))
        if isinstance(node, Call):
            func = FUNCTIONS[node.func][1]
            args = [build(a) for a in node.args]
            if len(args) == 1:
                only = args[0]
                return lambda c: func(only(c))
            return lambda c: func(*[a(c) for a in args])
        raise TypeError(f"Not an expression node: {node!r}")

    return build(expr)


def evaluate(expr: Expr, env: Dict[str, float]) -> float:
    """Evaluate an AST with variables and parameters taken from env"""
    variables = sorted(name for name in env)
    rule = compile_expr(expr, variables, env)
    return rule([env[name] for name in variables])


@dataclass
class PhaseSpec:
    """Declarative description of a phase or amplitude"""
    text: str
    variables: List[str]
    params: Dict[str, float] = dataclass_field(default_factory=dict)
    domain: Optional[Domain] = None
    m_max: int = DEFAULT_M_MAX

    def __post_init__(self):
        if self.m_max < 2:
            raise ValueError(f"Declared smoothness must be >= 2, got {self.m_max}")
        if not self.variables:
            raise ValueError("At least one variable is required")
        if self.domain is None:
            self.domain = Domain(d=len(self.variables))
        if self.domain.d != len(self.variables):
            raise ValueError("Domain dimension does not match the variable list")


def field_from_spec(spec: PhaseSpec, name: Optional[str] = None) -> ScalarField:
    """Parse and compile a PhaseSpec into a ScalarField"""
    expr = parse(spec.text, spec.variables)
    rule = compile_expr(expr, spec.variables, spec.params)
    return ScalarField(len(spec.variables), rule, spec.params, spec.domain, spec.m_max,
                       name or spec.text, expr=expr, variables=spec.variables)


def default_variables(d: int) -> List[str]:
    """Conventional variable names for d = 1, 2, 3"""
    if d == 1:
        return ['t']
    if d <= 3:
        return ['x', 'y', 'z'][:d]
    return [f'x{i + 1}' for i in range(d)]


def infer_variables(text: str, d: int) -> List[str]:
    """Variable list for text: the conventional names, with x accepted for t in one dimension"""
    if d == 1:
        names = set(m.group(0) for m in re.finditer(r'[A-Za-z_][A-Za-z_0-9]*', text))
        if 't' not in names and 'x' in names:
            return ['x']
    return default_variables(d)


def field_from_text(text: str, d: int = 1, params: Optional[Dict[str, float]] = None,
                    variables: Optional[Sequence[str]] = None, domain: Optional[Domain] = None,
                    m_max: int = DEFAULT_M_MAX) -> ScalarField:
    """Convenience wrapper: text to field with inferred variables"""
    variables = list(variables) if variables else infer_variables(text, d)
    return field_from_spec(PhaseSpec(text, variables, dict(params or {}), domain, m_max))


# catalog

def _require_int(params: Dict[str, Any], key: str, default: Optional[int] = None, minimum: int = 0) -> int:
    value = params.get(key, default)
    if value is None:
        raise CatalogError(f"Missing parameter '{key}'")
    if float(value) != int(float(value)) or int(float(value)) < minimum:
        raise CatalogError(f"Parameter '{key}' must be an integer >= {minimum}, got {value}")
    return int(float(value))


def _bump_field(d: int, radius: float, center: Sequence[float]) -> ScalarField:
    center = np.asarray(center, dtype=float)

    def rule(c):
        s = 0.0
        for i in range(d):
            s = s + (c[i] - center[i]) * (c[i] - center[i])
        return np.e * jets.smooth_cutoff(1.0 - s / (radius * radius))

    support = (list(center - radius), list(center + radius))
    return ScalarField(d, rule, {'radius': radius}, Domain(d=d), DEFAULT_M_MAX,
                       f"gaussian_bump(d={d}, r={radius})", support=support)


def catalog_get(name: str, params: Optional[Dict[str, Any]] = None) -> ScalarField:
    """
    Named phases and amplitudes

    Args:
        name: One of monomial, sum_of_even_powers, radial_power,
            flat_exponential, gaussian_bump, polynomial
        params: Entry parameters (n, d, p, alpha, radius, center, coeffs)

    Returns:
        ScalarField with its domain and smoothness

    Raises:
        CatalogError: Unknown name or invalid parameters
    """
    params = dict(params or {})
    if name not in CATALOG_NAMES:
        raise CatalogError(f"Unknown catalog entry '{name}'")
    d = _require_int(params, 'd', 1, minimum=1)
    names = default_variables(d)

    if name == 'monomial':
        n = _require_int(params, 'n')
        field = field_from_text(f"{names[0]}^{n}", d, variables=names)
    elif name == 'sum_of_even_powers':
        n = _require_int(params, 'n', minimum=2)
        if n % 2:
            raise CatalogError(f"sum_of_even_powers needs an even power, got {n}")
        field = field_from_text(' + '.join(f"{v}^{n}" for v in names), d, variables=names)
    elif name == 'radial_power':
        p = float(params.get('p', 2))
        if p <= 0:
            raise CatalogError(f"radial_power needs p > 0, got {p}")
        square = ' + '.join(f"{v}^2" for v in names)
        if p.is_integer() and int(p) % 2 == 0:
            field = field_from_text(f"({square})^{int(p) // 2}", d, variables=names)
        else:
            domain = Domain(d=d, excluded=[[0.0] * d])
            field = field_from_text(f"({square})^(p/2)", d, {'p': p}, names, domain)
    elif name == 'flat_exponential':
        alpha = float(params.get('alpha', params.get('a', 1.0)))
        if alpha <= 0:
            raise CatalogError(f"flat_exponential needs alpha > 0, got {alpha}")
        if d != 1:
            raise CatalogError("flat_exponential is one-dimensional")
        domain = Domain(d=1, lower=[0.0], upper=[1.0], closed_lower=False, closed_upper=True)
        field = field_from_text("exp(-(1+1/a)*t^(-a))", 1, {'a': alpha}, ['t'], domain)
    elif name == 'gaussian_bump':
        radius = float(params.get('radius', 1.0))
        if radius <= 0:
            raise CatalogError(f"gaussian_bump needs radius > 0, got {radius}")
        center = params.get('center', [0.0] * d)
        center = [float(center)] * d if np.isscalar(center) else [float(c) for c in center]
        if len(center) != d:
            raise CatalogError("gaussian_bump center has the wrong dimension")
        field = _bump_field(d, radius, center)
    else:
        coeffs = params.get('coeffs')
        if not coeffs:
            raise CatalogError("polynomial needs a nonempty 'coeffs' list")
        if d != 1:
            raise CatalogError("polynomial is one-dimensional")
        terms = [f"({float(c)!r})*t^{k}" for k, c in enumerate(coeffs)]
        field = field_from_text(' + '.join(terms), 1, variables=['t'])

    field.name = f"{name}({', '.join(f'{k}={v}' for k, v in sorted(params.items()))})"
    field.params.update({k: v for k, v in params.items() if np.isscalar(v)})
    logger.debug(f"Catalog field {field.name}")
    return field
