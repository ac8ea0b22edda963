"""Piecewise coefficient V(x) and the travel-time coordinate z = kappa(x).

Constant pieces are integrated in closed form.  Smooth pieces carry a table of
composite Gauss-Legendre sums (8 nodes per subcell) so that kappa is exact to
rounding for practical purposes and its inverse is a safeguarded Newton solve.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigInvalid, OutOfRange, RejectedA1, RejectedA2
from .exprs import compile_expr

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_JOIN_TOL = 1e-12


@dataclass(frozen=True)
class Piece:
    """V on [x0, x1]: either a constant `value` or a closure `func` with `deriv`."""

    x0: float
    x1: float
    value: float | None = None
    func: Callable[[np.ndarray], np.ndarray] | None = None
    deriv: Callable[[np.ndarray], np.ndarray] | None = None

    @property
    def constant(self) -> bool:
        return self.func is None

    def V(self, x):
        if self.constant:
            return np.full(np.shape(x), float(self.value))
        return self.func(np.asarray(x, dtype=float))

    def dV(self, x):
        if self.constant:
            return np.zeros(np.shape(x))
        if self.deriv is not None:
            return self.deriv(np.asarray(x, dtype=float))
        x = np.asarray(x, dtype=float)
        eps = 1e-6 * max(1.0, self.x1 - self.x0)
        lo = np.maximum(x - eps, self.x0)
        hi = np.minimum(x + eps, self.x1)
        return (self.func(hi) - self.func(lo)) / (hi - lo)


def _piece_from_desc(item) -> Piece:
    if isinstance(item, Piece):
        return item
    try:
        x0 = float(item["x0"])
        x1 = item.get("x1")
        x1 = math.inf if x1 is None else float(x1)
        kind = item.get("kind", "const")
        value = item["value"]
    except KeyError as exc:
        raise ConfigInvalid(f"potential piece is missing field {exc.args[0]!r}") from exc
    if kind == "const":
        return Piece(x0, x1, value=float(value))
    if kind == "expr":
        if callable(value):
            return Piece(x0, x1, func=value, deriv=item.get("deriv"))
        f, df = compile_expr(str(value))
        return Piece(x0, x1, func=f, deriv=df)
    raise ConfigInvalid(f"unknown potential piece kind {kind!r}")


def periodic_step_pieces(a: float, b: float, theta: float, x_max: float) -> list[Piece]:
    """2pi-periodic step profile: a on |x| < theta*pi, b on theta*pi < |x| < pi.

    Whole cells are emitted until `x_max` is covered.
    """
    ncell = max(1, math.ceil(x_max / (2.0 * math.pi) - 1e-12))
    pieces: list[Piece] = []
    for m in range(ncell):
        base = 2.0 * math.pi * m
        for lo, hi, v in (
            (base, base + theta * math.pi, a),
            (base + theta * math.pi, base + (2.0 - theta) * math.pi, b),
            (base + (2.0 - theta) * math.pi, base + 2.0 * math.pi, a),
        ):
            if pieces and pieces[-1].value == v:
                pieces[-1] = Piece(pieces[-1].x0, hi, value=v)
            else:
                pieces.append(Piece(lo, hi, value=v))
    return pieces


class Potential:
    """Validated coefficient with its coordinate map.

    Attributes of interest: `v_min`, `v_sup`, `dv_sup`, `breakpoints`,
    `gap_min` (smallest gap in breakpoints together with 0),
    `breakpoint_gap` (smallest gap among breakpoints alone), `x_max`.
    """

    def __init__(self, pieces: Sequence[Piece], gap_floor: float = 1e-3):
        pieces = list(pieces)
        if not pieces:
            raise ConfigInvalid("potential needs at least one piece")
        if abs(pieces[0].x0) > _JOIN_TOL:
            raise ConfigInvalid("potential pieces must start at x = 0")
        for p, q in zip(pieces, pieces[1:]):
            if abs(p.x1 - q.x0) > _JOIN_TOL * max(1.0, abs(p.x1)):
                raise ConfigInvalid(f"potential pieces leave a gap or overlap at x = {p.x1}")
        for p in pieces[:-1]:
            if not math.isfinite(p.x1):
                raise ConfigInvalid("only the last piece may extend to infinity")
        if not pieces[-1].constant and not math.isfinite(pieces[-1].x1):
            raise RejectedA1("a non-constant last piece needs a finite right end (sup-norms)")

        merged: list[Piece] = []
        for p in pieces:
            if merged and p.constant and merged[-1].constant and p.value == merged[-1].value:
                merged[-1] = Piece(merged[-1].x0, p.x1, value=p.value)
            else:
                merged.append(p)
        self.pieces: tuple[Piece, ...] = tuple(merged)
        self.x_max = self.pieces[-1].x1
        self.gap_floor = gap_floor

        vmin, vsup, dvsup = math.inf, 0.0, 0.0
        for p in self.pieces:
            if p.constant:
                v = np.array([p.value], dtype=float)
                dv = np.zeros(1)
            else:
                xs = np.linspace(p.x0, p.x1, 1025)
                v = p.V(xs)
                dv = p.dV(xs)
            if not (np.all(np.isfinite(v)) and np.all(np.isfinite(dv))):
                raise RejectedA1("V or V' is not finite on the represented range")
            vmin = min(vmin, float(v.min()))
            vsup = max(vsup, float(np.abs(v).max()))
            dvsup = max(dvsup, float(np.abs(dv).max()))
        if not vmin > 0.0:
            raise RejectedA1(f"inf V = {vmin} is not positive")
        self.v_min, self.v_sup, self.dv_sup = vmin, vsup, dvsup

        bps = []
        for p, q in zip(self.pieces, self.pieces[1:]):
            x = q.x0
            jump = abs(float(p.V(x)) - float(q.V(x))) + abs(float(p.dV(x)) - float(q.dV(x)))
            if jump > 1e-12 * max(1.0, vsup):
                bps.append(x)
        self.breakpoints: tuple[float, ...] = tuple(bps)
        with_zero = np.array([0.0] + bps)
        self.gap_min = float(np.diff(with_zero).min()) if bps else math.inf
        self.breakpoint_gap = float(np.diff(np.array(bps)).min()) if len(bps) > 1 else math.inf
        if self.gap_min < gap_floor:
            raise RejectedA2(f"breakpoint gap {self.gap_min:.3e} is below the floor {gap_floor:.3e}")

        self._x0s = np.array([p.x0 for p in self.pieces])
        self._x1s = np.array([p.x1 for p in self.pieces])
        z0 = [0.0]
        self._tables: list[tuple[np.ndarray, np.ndarray] | None] = []
        for p in self.pieces:
            if p.constant:
                self._tables.append(None)
                if math.isfinite(p.x1):
                    z0.append(z0[-1] + math.sqrt(p.value) * (p.x1 - p.x0))
            else:
                n = int(min(20000, max(8, math.ceil(64 * (p.x1 - p.x0)))))
                edges = np.linspace(p.x0, p.x1, n + 1)
                zs = np.concatenate([[0.0], np.cumsum(_gauss_sqrt_v(p, edges[:-1], edges[1:]))])
                zs += z0[-1]
                self._tables.append((edges, zs))
                z0.append(float(zs[-1]))
        self._z0s = np.array(z0[: len(self.pieces)])
        self.z_max = z0[-1] if math.isfinite(self.x_max) else math.inf
        self.z_breakpoints = tuple(float(self.kappa(x)) for x in bps)

    @property
    def is_piecewise_constant(self) -> bool:
        return all(p.constant for p in self.pieces)

    def piece_index(self, x, side: int = 1) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if side >= 0:
            idx = np.searchsorted(self._x0s, x, side="right") - 1
        else:
            idx = np.searchsorted(self._x1s, x, side="left")
        return np.clip(idx, 0, len(self.pieces) - 1)

    def V(self, x, side: int = 1) -> np.ndarray:
        return self._eval(x, side, "V")

    def dV(self, x, side: int = 1) -> np.ndarray:
        return self._eval(x, side, "dV")

    def _eval(self, x, side, attr):
        shape = np.shape(x)
        x = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
        idx = self.piece_index(x, side)
        out = np.empty(x.shape)
        for k in np.unique(idx):
            m = idx == k
            out[m] = getattr(self.pieces[k], attr)(x[m])
        return out.reshape(shape)

    def _check_x(self, x):
        if np.any(x < -1e-14) or np.any(x > self.x_max * (1 + 1e-14)):
            raise OutOfRange(f"x outside the represented range [0, {self.x_max}]")

    def kappa(self, x) -> np.ndarray | float:
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        self._check_x(x)
        x = np.clip(x, 0.0, self.x_max)
        idx = self.piece_index(x)
        out = np.empty(x.shape)
        for k in np.unique(idx):
            m = idx == k
            p = self.pieces[k]
            if p.constant:
                out[m] = self._z0s[k] + math.sqrt(p.value) * (x[m] - p.x0)
            else:
                edges, zs = self._tables[k]
                j = np.clip(np.searchsorted(edges, x[m], side="right") - 1, 0, len(edges) - 2)
                out[m] = zs[j] + _gauss_sqrt_v(p, edges[j], x[m])
        return float(out[0]) if scalar else out

    def kappa_inv(self, z) -> np.ndarray | float:
        scalar = np.ndim(z) == 0
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if np.any(z < -1e-14) or np.any(z > self.z_max * (1 + 1e-14)):
            raise OutOfRange(f"z outside the represented range [0, {self.z_max}]")
        z = np.clip(z, 0.0, self.z_max)
        idx = np.clip(np.searchsorted(self._z0s, z, side="right") - 1, 0, len(self.pieces) - 1)
        out = np.empty(z.shape)
        for k in np.unique(idx):
            m = idx == k
            p = self.pieces[k]
            if p.constant:
                out[m] = p.x0 + (z[m] - self._z0s[k]) / math.sqrt(p.value)
            else:
                out[m] = self._invert_smooth(p, self._tables[k], z[m])
        return float(out[0]) if scalar else out

    @staticmethod
    def _invert_smooth(p: Piece, table, z: np.ndarray) -> np.ndarray:
        edges, zs = table
        j = np.clip(np.searchsorted(zs, z, side="right") - 1, 0, len(edges) - 2)
        lo, hi = edges[j].copy(), edges[j + 1].copy()
        x = lo + (z - zs[j]) / (zs[j + 1] - zs[j]) * (hi - lo)
        for _ in range(60):
            g = zs[j] + _gauss_sqrt_v(p, edges[j], x) - z
            done = np.abs(g) <= 2e-16 * (1.0 + np.abs(z))
            if np.all(done):
                break
            lo = np.where(g < 0, x, lo)
            hi = np.where(g > 0, x, hi)
            xn = x - g / np.sqrt(p.V(x))
            bad = (xn <= lo) | (xn >= hi)
            x = np.where(done, x, np.where(bad, 0.5 * (lo + hi), xn))
        return x

    def coordinate_map(self) -> "CoordinateMap":
        return CoordinateMap(self)


def _gauss_sqrt_v(p: Piece, a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    nodes = mid[..., None] + half[..., None] * _GL_X
    return half * (np.sqrt(p.V(nodes)) @ _GL_W)


@dataclass(frozen=True)
class CoordinateMap:
    """Evaluable c(z) and lambda(z) = c_z / c, with the z-images of breakpoints."""

    pot: Potential

    @property
    def discontinuities(self) -> tuple[float, ...]:
        return self.pot.z_breakpoints

    def kappa_nodes(self, n: int = 257) -> tuple[np.ndarray, np.ndarray]:
        top = self.pot.x_max if math.isfinite(self.pot.x_max) else max(1.0, 2 * max(self.pot.breakpoints, default=1.0))
        xs = np.linspace(0.0, top, n)
        return xs, np.asarray(self.pot.kappa(xs))

    def c(self, z, side: int = 1) -> np.ndarray:
        x = self.pot.kappa_inv(z)
        return 1.0 / np.sqrt(self.pot.V(x, side))

    def lam(self, z, side: int = 1) -> np.ndarray:
        # c_z / c equals dc/dx with c = V^(-1/2)
        x = self.pot.kappa_inv(z)
        v = self.pot.V(x, side)
        return -0.5 * self.pot.dV(x, side) * v ** -1.5

    @property
    def lam_sup(self) -> float:
        sup = 0.0
        for p in self.pot.pieces:
            if p.constant:
                continue
            xs = np.linspace(p.x0, p.x1, 2049)
            sup = max(sup, float(np.max(np.abs(0.5 * p.dV(xs) * p.V(xs) ** -1.5))))
        return sup


def build_potential(desc, gap_floor: float = 1e-3, x_max: float | None = None) -> Potential:
    """Validate a piecewise description and return a `Potential`.

    `desc` may be a list of `Piece` objects or dicts ``{x0, x1, kind, value}``,
    a dict with key ``pieces``, or a dict ``{kind: "periodic_step", a, b, theta}``.
    """
    if isinstance(desc, dict):
        if desc.get("kind") == "periodic_step":
            try:
                a, b, theta = float(desc["a"]), float(desc["b"]), float(desc["theta"])
            except KeyError as exc:
                raise ConfigInvalid(f"periodic_step potential is missing field {exc.args[0]!r}") from exc
            top = x_max if x_max is not None else float(desc.get("x_max", 8 * math.pi))
            return Potential(periodic_step_pieces(a, b, theta, top), gap_floor)
        if "pieces" not in desc:
            raise ConfigInvalid("potential block needs 'pieces' or kind 'periodic_step'")
        desc = desc["pieces"]
    pieces = [_piece_from_desc(item) for item in desc]
    return Potential(pieces, gap_floor)


def kappa_forward(pot: Potential, x):
    return pot.kappa(x)


def kappa_inverse(pot: Potential, z):
    return pot.kappa_inv(z)


def lambda_profile(pot: Potential) -> CoordinateMap:
    return CoordinateMap(pot)
