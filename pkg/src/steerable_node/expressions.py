"""Compile coefficient expressions (strings such as ``"-cos(x)"``) into
vectorised numpy callables over base points.

The expressions come from JSON model files, so they are parsed with sympy
instead of ``eval``.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import sympy

SPACE_VARIABLES = {
    "R1": ("x",),
    "R2": ("x", "y"),
    "S2": ("x", "y", "z"),
    "S1": ("theta",),
}


def compile_expressions(exprs: Sequence[str | float], space: str) -> Callable[[np.ndarray], np.ndarray]:
    """Return ``f(points) -> (..., len(exprs))`` evaluating each expression.

    Variables are the base coordinates named as in ``SPACE_VARIABLES``.
    """
    names = SPACE_VARIABLES[space]
    symbols = sympy.symbols(names)
    table = {n: s for n, s in zip(names, symbols)}
    try:
        parsed = [sympy.sympify(str(e), locals=table) for e in exprs]
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise ValueError(f"cannot parse coefficient expressions {list(exprs)!r}: {exc}") from None
    unknown = set().union(*(p.free_symbols for p in parsed)) - set(symbols) if parsed else set()
    if unknown:
        raise ValueError(f"unknown variables {sorted(map(str, unknown))} for space {space}")
    funcs = [sympy.lambdify(symbols, p, modules="numpy") for p in parsed]

    def evaluate(points):
        points = np.asarray(points, dtype=float)
        args = [points[..., i] for i in range(len(names))]
        shape = points.shape[:-1]
        cols = [np.broadcast_to(np.asarray(f(*args), dtype=float), shape) for f in funcs]
        return np.stack(cols, axis=-1)

    return evaluate
