"""Initial data profiles in the physical coordinate x."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import ConfigInvalid
from ..exprs import compile_expr

Fn = Callable[[np.ndarray], np.ndarray]


def _zero(x):
    return np.zeros(np.shape(x))


@dataclass(frozen=True)
class Profile:
    """A scalar profile g(x) with derivative and the right end of its support."""

    g: Fn
    dg: Fn
    support: float = math.inf
    echo: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.g(np.asarray(x, dtype=float))

    def __add__(self, other: "Profile") -> "Profile":
        return Profile(lambda x: self.g(x) + other.g(x), lambda x: self.dg(x) + other.dg(x),
                       max(self.support, other.support), {"kind": "sum", "terms": [self.echo, other.echo]})

    def scaled(self, s: float) -> "Profile":
        return Profile(lambda x: s * self.g(x), lambda x: s * self.dg(x), self.support,
                       {"kind": "scaled", "factor": s, "of": self.echo})


ZERO = Profile(_zero, _zero, 0.0, {"kind": "zero"})


def bump(center: float, halfwidth: float, amplitude: float = 1.0) -> Profile:
    """amplitude * (1 - s^2)^4 with s = (x - center) / halfwidth, zero for |s| >= 1."""

    def g(x):
        s = (np.asarray(x, dtype=float) - center) / halfwidth
        return amplitude * np.where(np.abs(s) < 1.0, (1.0 - s * s) ** 4, 0.0)

    def dg(x):
        s = (np.asarray(x, dtype=float) - center) / halfwidth
        return amplitude * np.where(np.abs(s) < 1.0, -8.0 * s * (1.0 - s * s) ** 3 / halfwidth, 0.0)

    echo = {"kind": "bump", "center": center, "halfwidth": halfwidth, "amplitude": amplitude}
    return Profile(g, dg, center + halfwidth, echo)


def constant(value: float) -> Profile:
    return Profile(lambda x: np.full(np.shape(x), float(value)), _zero, math.inf,
                   {"kind": "const", "value": value})


def expression(text: str, support: float = math.inf) -> Profile:
    g, dg = compile_expr(text)
    return Profile(g, dg, support, {"kind": "expr", "expr": text, "support": support})


def from_config(block, name: str) -> Profile:
    if block is None:
        return ZERO
    if isinstance(block, (int, float)):
        return constant(float(block)) if block else ZERO
    kind = block.get("kind")
    try:
        if kind == "zero":
            return ZERO
        if kind == "bump":
            return bump(float(block["center"]), float(block["halfwidth"]), float(block.get("amplitude", 1.0)))
        if kind == "const":
            return constant(float(block["value"]))
        if kind == "expr":
            sup = block.get("support")
            return expression(str(block["expr"]), math.inf if sup is None else float(sup))
        if kind == "sum":
            parts = [from_config(b, name) for b in block["terms"]]
            out = parts[0]
            for p in parts[1:]:
                out = out + p
            return out
    except KeyError as exc:
        raise ConfigInvalid(f"missing field 'initial.{name}.{exc.args[0]}'") from exc
    raise ConfigInvalid(f"unknown profile kind {kind!r} in 'initial.{name}'")


@dataclass(frozen=True)
class InitialData:
    u0: Profile = ZERO
    u1: Profile = ZERO

    @property
    def support(self) -> float:
        return max(self.u0.support, self.u1.support)

    def echo(self) -> dict:
        return {"u0": self.u0.echo, "u1": self.u1.echo}
