"""Compile user expressions in one variable into vectorized closures."""
from __future__ import annotations

from typing import Callable

import numpy as np
import sympy as sp

from .errors import ConfigInvalid

_X = sp.Symbol("x", real=True)


def _vectorize(fn) -> Callable[[np.ndarray], np.ndarray]:
    def wrapped(x):
        x = np.asarray(x, dtype=float)
        return np.asarray(fn(x), dtype=float) + np.zeros_like(x)

    return wrapped


def compile_expr(text: str, var: str = "x"):
    """Return (g, g') for an expression string such as ``"exp(2*x)"``."""
    sym = sp.Symbol(var, real=True)
    try:
        expr = sp.sympify(text, locals={var: sym})
    except (sp.SympifyError, TypeError, SyntaxError) as exc:
        raise ConfigInvalid(f"cannot parse expression {text!r}: {exc}") from exc
    extra = expr.free_symbols - {sym}
    if extra:
        raise ConfigInvalid(f"expression {text!r} has unknown symbols {sorted(map(str, extra))}")
    g = sp.lambdify(sym, expr, "numpy")
    dg = sp.lambdify(sym, sp.diff(expr, sym), "numpy")
    return _vectorize(g), _vectorize(dg)
