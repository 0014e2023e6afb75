#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Utility functions for oscigeo
"""

import os
import re
import math
import time
import logging
import tempfile
import itertools
from functools import wraps, lru_cache
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from constants import ENV_THREADS, GEOMETRIC_GRID_FLOOR, GEOMETRIC_GRID_FRACTION

logger = logging.getLogger(__name__)

Scale = Union[int, Tuple[int, ...]]


@lru_cache(maxsize=None)
def multiindices(d: int, m: int) -> Tuple[Tuple[int, ...], ...]:
    """
    All multiindices of dimension d and total degree at most m, graded order

    Args:
        d: Number of variables
        m: Maximum total degree

    Returns:
        Tuple of multiindices sorted by degree, then lexicographically descending
    """
    if d < 1 or m < 0:
        raise ValueError(f"Invalid multiindex range d={d}, m={m}")
    indices = [alpha for alpha in itertools.product(range(m + 1), repeat=d) if sum(alpha) <= m]
    indices.sort(key=lambda alpha: (sum(alpha), tuple(-a for a in alpha)))
    return tuple(indices)


def multi_factorial(alpha: Sequence[int]) -> int:
    """alpha! = prod alpha_i!"""
    return math.prod(math.factorial(a) for a in alpha)


def unit_vector(d: int, i: int) -> Tuple[int, ...]:
    """Multiindex e_i"""
    return tuple(1 if k == i else 0 for k in range(d))


def add_multiindex(alpha: Sequence[int], beta: Sequence[int]) -> Tuple[int, ...]:
    return tuple(a + b for a, b in zip(alpha, beta))


def geometric_grid(upper: float, n: int, lower: float = 0.0, singular_lower: bool = True) -> np.ndarray:
    """
    Grid on (lower, upper] packed geometrically near a singular lower endpoint

    The grid is defined relative to the interval so that rescaling the
    interval rescales every node by the same factor.

    Args:
        upper: Right endpoint (included)
        n: Number of nodes
        lower: Left endpoint (excluded)
        singular_lower: Pack a share of the nodes geometrically towards lower

    Returns:
        Sorted array of nodes
    """
    if n < 2 or upper <= lower:
        raise ValueError(f"Invalid grid: n={n}, interval=({lower}, {upper}]")
    length = upper - lower
    if not singular_lower:
        return lower + length * np.arange(1, n + 1) / n
    n_geo = int(n * GEOMETRIC_GRID_FRACTION)
    n_lin = n - n_geo
    geo = np.geomspace(GEOMETRIC_GRID_FLOOR, 1.0 / n_lin, n_geo, endpoint=False)
    lin = np.arange(1, n_lin + 1) / n_lin
    return lower + length * np.concatenate([geo, lin])


def interior_grid(n: int, d: int = 1, radius: float = 1.0) -> np.ndarray:
    """
    Tensor grid of the open ball of the given radius

    Args:
        n: Nodes per axis
        d: Dimension
        radius: Ball radius

    Returns:
        Array of shape (N, d) with every node strictly inside the ball
    """
    axis = radius * (2.0 * np.arange(n) + 1.0 - n) / n
    mesh = np.stack(np.meshgrid(*([axis] * d), indexing='ij'), axis=-1).reshape(-1, d)
    return mesh[np.linalg.norm(mesh, axis=1) < radius]


def sphere_directions(d: int, n: int) -> np.ndarray:
    """
    Deterministic, roughly uniform unit directions

    Args:
        d: Dimension (1, 2 or 3)
        n: Requested number of directions (d=1 always yields the two rays)

    Returns:
        Array of shape (n, d)
    """
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        theta = 2.0 * np.pi * np.arange(n) / n
        return np.stack([np.cos(theta), np.sin(theta)], axis=1)
    if d == 3:
        # Fibonacci sphere
        k = np.arange(n) + 0.5
        z = 1.0 - 2.0 * k / n
        phi = np.pi * (3.0 - np.sqrt(5.0)) * k
        r = np.sqrt(1.0 - z * z)
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    raise ValueError(f"Directions supported only for d <= 3, got {d}")


def scale_shift(j: Scale, k: int) -> Scale:
    """j + k on every scale coordinate"""
    if isinstance(j, tuple):
        return tuple(x + k for x in j)
    return j + k


def scale_leq(a: Scale, b: Scale) -> bool:
    """Componentwise a <= b"""
    if isinstance(a, tuple):
        return all(x <= y for x, y in zip(a, b))
    return a <= b


def scale_distance(a: Scale, b: Scale) -> int:
    """|a - b| in the sup norm"""
    if isinstance(a, tuple):
        return max(abs(x - y) for x, y in zip(a, b))
    return abs(a - b)


def parse_lambda_grid(text: str) -> List[float]:
    """
    Parse a frequency grid specification

    Accepts "start:stop:geometric:n", "start:stop:linear:n" or a comma
    separated list of values.

    Args:
        text: Grid specification

    Returns:
        Strictly increasing list of frequencies

    Raises:
        ValueError: If the specification is malformed
    """
    text = text.strip()
    if not text:
        raise ValueError("Empty lambda grid")
    if ':' in text:
        parts = text.split(':')
        if len(parts) != 4:
            raise ValueError(f"Lambda grid must be start:stop:kind:n, got '{text}'")
        start, stop, kind, n = float(parts[0]), float(parts[1]), parts[2], int(parts[3])
        if n < 1:
            raise ValueError("Lambda grid needs at least one point")
        if kind == 'geometric':
            if start <= 0:
                raise ValueError("Geometric lambda grid needs a positive start")
            values = np.geomspace(start, stop, n)
        elif kind == 'linear':
            values = np.linspace(start, stop, n)
        else:
            raise ValueError(f"Unknown lambda grid kind: {kind}")
        grid = [float(v) for v in values]
    else:
        grid = [float(v) for v in text.split(',') if v.strip()]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError(f"Lambda grid must be strictly increasing: {grid}")
    if any(v < 0 for v in grid):
        raise ValueError("Lambda grid must be nonnegative")
    return grid


def parse_params(text: Optional[str]) -> Dict[str, float]:
    """
    Parse "name=value,name=value" parameter bindings

    Args:
        text: Binding list (may be empty)

    Returns:
        Dictionary of float values
    """
    params: Dict[str, float] = {}
    if not text:
        return params
    for item in text.split(','):
        item = item.strip()
        if not item:
            continue
        match = re.fullmatch(r'([A-Za-z_][A-Za-z_0-9]*)\s*=\s*(\S+)', item)
        if not match:
            raise ValueError(f"Invalid parameter binding: '{item}'")
        params[match.group(1)] = float(match.group(2))
    return params


def atomic_write(path: str, text: str):
    """
    Write text to path through a temporary file and a rename

    Args:
        path: Destination path
        text: File contents
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.tmp-', suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def resolve_threads(threads: Optional[int] = None) -> int:
    """Worker count from the argument, then OSCIGEO_THREADS, else 1"""
    if threads is None:
        env_value = os.getenv(ENV_THREADS)
        if env_value:
            try:
                threads = int(env_value)
            except ValueError:
                logger.warning(f"Ignoring non-integer {ENV_THREADS}={env_value}")
                threads = 1
        else:
            threads = 1
    return max(1, threads)


def parallel_map(func: Callable[[Any], Any], items: Iterable[Any], threads: Optional[int] = None,
                 show_progress: bool = False, desc: str = "Working") -> List[Any]:
    """
    Apply func to every item, possibly on a thread pool

    Results come back in input order regardless of completion order.

    Args:
        func: Function of one argument
        items: Work items
        threads: Maximum workers (defaults to OSCIGEO_THREADS)
        show_progress: Show a tqdm progress bar
        desc: Progress bar label

    Returns:
        List of results in input order
    """
    items = list(items)
    workers = min(resolve_threads(threads), max(1, len(items)))
    if workers == 1:
        iterator = tqdm(items, desc=desc, unit="item") if show_progress else items
        return [func(item) for item in iterator]

    results: List[Any] = [None] * len(items)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        future_to_index = {executor.submit(func, item): i for i, item in enumerate(items)}
        futures = as_completed(future_to_index)
        if show_progress:
            futures = tqdm(futures, total=len(items), desc=desc, unit="item")
        for future in futures:
            results[future_to_index[future]] = future.result()
    return results


def retry(max_attempts: int = 3, backoff: float = 0.0, exceptions: tuple = (Exception,),
          refine: Optional[Callable[[Dict[str, Any], int], None]] = None):
    """
    Decorator for retrying numerical routines with escalated resolution

    Args:
        max_attempts: Maximum number of attempts
        backoff: Optional pause in seconds, doubled per attempt
        exceptions: Tuple of exceptions to catch and retry
        refine: Callback mutating the keyword arguments before the next attempt
    """
    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            last_exception = None
            for attempt in range(max_attempts):
                try:
                    return func(*args, **kwargs)
                except exceptions as e:
                    last_exception = e
                    if attempt < max_attempts - 1:
                        logger.warning(
                            f"{func.__name__} failed (attempt {attempt + 1}/{max_attempts}): {e}. Retrying..."
                        )
                        if refine is not None:
                            refine(kwargs, attempt + 1)
                        if backoff > 0:
                            time.sleep(backoff * (2 ** attempt))
                    else:
                        logger.error(f"{func.__name__} failed after {max_attempts} attempts: {e}")
            raise last_exception
        return wrapper
    return decorator


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays, tuples and complex numbers for json.dump"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        value = float(value)
    if isinstance(value, (complex, np.complexfloating)):
        return {'re': to_jsonable(float(value.real)), 'im': to_jsonable(float(value.imag))}
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, float) and not math.isfinite(value):
        return 'inf' if value > 0 else ('-inf' if value < 0 else 'nan')
    return value
