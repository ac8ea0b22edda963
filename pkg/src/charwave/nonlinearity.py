"""Boundary law triple (f, f^-1, F) with the slope-one cutoff and helpers."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import ConfigInvalid, NotAHomeomorphism, QuadratureFailure

Fn = Callable[[np.ndarray], np.ndarray]

# kernel codes understood by charwave.ivp.kernels
KIND_LINEAR = 0
KIND_CUBIC = 1


@dataclass(frozen=True)
class Nonlinearity:
    f: Fn
    f_inv: Fn
    F: Fn
    direction: str
    label: str
    A: float | None = None
    B: float | None = None
    # (kind code, parameter, cutoff K); None for closures the kernels cannot run
    kernel: tuple[int, float, float] | None = None
    params: dict = field(default_factory=dict)

    @property
    def increasing(self) -> bool:
        return self.direction == "increasing"


def _cubic_inv(gamma: float) -> Fn:
    def f_inv(y):
        r = 2.0 * np.asarray(y, dtype=float) / gamma
        return np.copysign(np.abs(r) ** (1.0 / 3.0), r)

    return f_inv


def _bisect_inverse(f: Fn, direction: str, tol: float = 1e-13) -> Fn:
    sgn = 1.0 if direction == "increasing" else -1.0

    def f_inv(y):
        y = np.asarray(y, dtype=float)
        lo = -np.ones_like(y)
        hi = np.ones_like(y)
        for _ in range(200):
            grow = sgn * (f(lo) - y) > 0
            if not grow.any():
                break
            lo = np.where(grow, 2 * lo, lo)
        for _ in range(200):
            grow = sgn * (f(hi) - y) < 0
            if not grow.any():
                break
            hi = np.where(grow, 2 * hi, hi)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            up = sgn * (f(mid) - y) < 0
            lo = np.where(up, mid, lo)
            hi = np.where(up, hi, mid)
            if np.all(hi - lo <= tol * np.maximum(1.0, np.abs(mid))):
                break
        return 0.5 * (lo + hi)

    return f_inv


def _quad_F(f: Fn) -> Fn:
    def F(s):
        s = np.asarray(s, dtype=float)
        out = np.empty(s.shape)
        for i, si in np.ndenumerate(s):
            val, _ = integrate.quad(lambda v: float(f(np.array(si))) - float(f(np.array(v))), 0.0, float(si),
                                    epsabs=1e-13, epsrel=1e-12, limit=200)
            out[i] = val
        return out

    return F


def _sampled_direction(f: Fn, lo: float = -10.0, hi: float = 10.0) -> str:
    y = np.linspace(lo, hi, 2001)
    dy = np.diff(f(y))
    if np.all(dy > 0):
        return "increasing"
    if np.all(dy < 0):
        return "decreasing"
    raise NotAHomeomorphism("f is not strictly monotone on the sampled range")


def _check_roundtrip(f: Fn, f_inv: Fn, lo: float = -10.0, hi: float = 10.0) -> None:
    y = np.linspace(lo, hi, 2001)
    err = np.abs(f(f_inv(y)) - y) / np.maximum(1.0, np.abs(y))
    if not np.all(err <= 1e-10):
        raise NotAHomeomorphism(f"f(f_inv(y)) deviates from y by {err.max():.2e}")


def make_standard(kind: str, gamma: float | None = None, a: float | None = None,
                  f: Fn | None = None, f_inv: Fn | None = None, F: Fn | None = None,
                  A: float | None = None, B: float | None = None, label: str | None = None) -> Nonlinearity:
    """Build a shipped law ('cubic', 'linear') or wrap custom closures ('custom')."""
    if kind == "cubic":
        if gamma is None:
            raise ConfigInvalid("cubic nonlinearity needs 'gamma'")
        g = float(gamma)
        if g == 0.0:
            raise ConfigInvalid("cubic nonlinearity needs gamma != 0")

        def f(y):
            y = np.asarray(y, dtype=float)
            return 0.5 * g * (y * y * y)

        f_inv = _cubic_inv(g)
        F = lambda s: 0.375 * g * np.asarray(s, dtype=float) ** 4
        kernel = (KIND_CUBIC, g, math.inf)
        params = {"kind": "cubic", "gamma": g}
        label = label or f"cubic(gamma={g:g})"
    elif kind == "linear":
        if a is None:
            raise ConfigInvalid("linear nonlinearity needs 'a'")
        s_ = float(a)
        if s_ == 0.0:
            raise ConfigInvalid("linear nonlinearity needs a != 0")
        f = lambda y: s_ * np.asarray(y, dtype=float)
        f_inv = lambda y: np.asarray(y, dtype=float) / s_
        F = lambda s: 0.5 * s_ * np.asarray(s, dtype=float) ** 2
        kernel = (KIND_LINEAR, s_, math.inf)
        params = {"kind": "linear", "a": s_}
        label = label or f"linear(a={s_:g})"
        A = abs(s_) if A is None else A
        B = 0.0 if B is None else B
    elif kind == "custom":
        if f is None:
            raise ConfigInvalid("custom nonlinearity needs f")
        kernel = None
        params = {"kind": "custom"}
        label = label or "custom"
    else:
        raise ConfigInvalid(f"unknown nonlinearity kind {kind!r}")

    direction = _sampled_direction(f)
    if f_inv is None:
        f_inv = _bisect_inverse(f, direction)
    _check_roundtrip(f, f_inv)
    if F is None:
        F = _quad_F(f)
    return Nonlinearity(f, f_inv, F, direction, label, A, B, kernel, params)


def cutoff(nl: Nonlinearity, K: float) -> Nonlinearity:
    """f_K: equal to f on [-K, K], slope-one affine continuation outside."""
    if not nl.increasing:
        raise ConfigInvalid("cutoff is defined for increasing f only")
    if not K > 0:
        raise ConfigInvalid("cutoff needs K > 0")
    K = float(K)
    fK_hi = float(nl.f(np.array(K)))
    fK_lo = float(nl.f(np.array(-K)))
    FK_hi = float(nl.F(np.array(K)))
    FK_lo = float(nl.F(np.array(-K)))
    f0, finv0, F0 = nl.f, nl.f_inv, nl.F
    # offsets folded once so that odd f gives an exactly odd f_K
    off_hi, off_lo = fK_hi - K, fK_lo + K

    def f(y):
        y = np.asarray(y, dtype=float)
        return np.where(y >= K, y + off_hi, np.where(y <= -K, y + off_lo, f0(np.clip(y, -K, K))))

    def f_inv(v):
        v = np.asarray(v, dtype=float)
        mid = finv0(np.clip(v, fK_lo, fK_hi))
        return np.where(v >= fK_hi, v - off_hi, np.where(v <= fK_lo, v - off_lo, mid))

    def F(s):
        s = np.asarray(s, dtype=float)
        tail = 0.5 * (s * s - K * K)
        return np.where(s >= K, FK_hi + tail, np.where(s <= -K, FK_lo + tail, F0(np.clip(s, -K, K))))

    kernel = None if nl.kernel is None else (nl.kernel[0], nl.kernel[1], K)
    params = dict(nl.params, K=K)
    return Nonlinearity(f, f_inv, F, "increasing", f"{nl.label}|K={K:g}", 1.0, None, kernel, params)


def energy_bound_K(nl: Nonlinearity, u0_prime: Fn, u1: Fn, pot, T: float, k_floor: float = 0.0) -> float:
    """Smallest K with F(+-K) >= C, C = F(u1(0)) + half the data energy on [0, kappa^-1(T)].

    Returns max(K, k_floor); zero data give C = 0 and hence K = 0.
    """
    x_end = float(pot.kappa_inv(min(T, pot.z_max)))
    points = [x for x in pot.breakpoints if 0.0 < x < x_end]

    def dens(x):
        x = np.asarray(x, dtype=float)
        return pot.V(x) * np.asarray(u1(x)) ** 2 + np.asarray(u0_prime(x)) ** 2

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(lambda x: float(dens(np.array(x))), 0.0, x_end,
                                      points=points or None, limit=500, epsabs=1e-13, epsrel=1e-12)
        except integrate.IntegrationWarning as exc:
            raise QuadratureFailure(str(exc)) from exc
    if not math.isfinite(val):
        raise QuadratureFailure("data energy integral is not finite")
    C = float(nl.F(np.array(float(u1(np.array(0.0)))))) + 0.5 * val
    if C <= 0.0:
        return max(0.0, k_floor)

    def worst(k):
        return min(float(nl.F(np.array(k))), float(nl.F(np.array(-k))))

    hi = 1.0
    while worst(hi) < C:
        hi *= 2.0
        if hi > 1e300:
            raise QuadratureFailure("F does not grow enough to bound C")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if worst(mid) >= C:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * hi:
            break
    return max(hi, k_floor)


def chain_rule_check(nl: Nonlinearity, g, t0: float | None = None, t1: float | None = None,
                     n: int = 10_000) -> float:
    """|F(g(t1)) - F(g(t0)) - int g d(f(g))| with a trapezoid Stieltjes sum.

    `g` is either a callable (sampled at `n` uniform points on [t0, t1]) or
    an array of samples along the path.
    """
    if callable(g):
        t = np.linspace(t0, t1, n)
        gs = np.asarray(g(t), dtype=float)
    else:
        gs = np.asarray(g, dtype=float)
    fg = nl.f(gs)
    integral = np.sum(0.5 * (gs[1:] + gs[:-1]) * np.diff(fg))
    return float(abs(nl.F(gs[-1]) - nl.F(gs[0]) - integral))


def from_config(block: dict) -> Nonlinearity:
    if not isinstance(block, dict) or "kind" not in block:
        raise ConfigInvalid("nonlinearity block needs field 'kind'")
    kind = block["kind"]
    if kind == "cubic":
        if "gamma" not in block:
            raise ConfigInvalid("missing field 'nonlinearity.gamma'")
        return make_standard("cubic", gamma=block["gamma"])
    if kind == "linear":
        if "a" not in block:
            raise ConfigInvalid("missing field 'nonlinearity.a'")
        return make_standard("linear", a=block["a"])
    if kind == "cutoff":
        if "K" not in block or "base" not in block:
            raise ConfigInvalid("cutoff nonlinearity needs 'base' and 'K'")
        return cutoff(from_config(block["base"]), float(block["K"]))
    raise ConfigInvalid(f"unknown nonlinearity kind {kind!r}")
