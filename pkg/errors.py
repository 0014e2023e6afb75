#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Exception hierarchy for oscigeo
"""

from typing import Any, Dict, Optional


class OscigeoError(Exception):
    """Base class for every error raised by the package"""


class DomainError(OscigeoError, ValueError):
    """Point outside a declared domain or non-differentiable primitive"""


class OrderError(OscigeoError, ValueError):
    """Requested derivative order out of range"""


class ParseError(OscigeoError, ValueError):
    """Malformed expression text"""

    def __init__(self, message: str, position: int = 0):
        super().__init__(f"{message} at offset {position}")
        self.position = position


class UnknownIdentifierError(ParseError):
    """Name that is neither a variable, a parameter nor a primitive"""


class ArityError(ParseError):
    """Primitive called with the wrong number of arguments"""


class CatalogError(OscigeoError, ValueError):
    """Unknown catalog entry or invalid catalog parameters"""


class ResolutionError(OscigeoError):
    """Quadrature budget exceeded or two-level estimates disagree"""


class MomentSystemError(OscigeoError):
    """Singular mollifier moment system"""


class ChartInversionError(OscigeoError):
    """Chart map could not be inverted at a point"""


class ConfigError(OscigeoError, ValueError):
    """Malformed or invalid experiment configuration"""

    def __init__(self, message: str, field: Optional[str] = None,
                 line: Optional[int] = None, column: Optional[int] = None):
        location = []
        if field:
            location.append(f"field '{field}'")
        if line is not None:
            location.append(f"line {line}, column {column}")
        super().__init__(f"{message} ({', '.join(location)})" if location else message)
        self.field = field
        self.line = line
        self.column = column


class WitnessedError(OscigeoError):
    """Failure that carries a JSON-serialisable witness"""

    def __init__(self, message: str, witness: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.witness = witness or {}


class HypothesisViolation(WitnessedError, ValueError):
    """Scale or partition hypotheses fail on a probe"""


class OmegaViolation(WitnessedError, ValueError):
    """Weight function does not dominate the phase derivatives"""


class ConvexityError(WitnessedError, ValueError):
    """Phase is not convex along a sampled direction"""
