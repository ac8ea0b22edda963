"""Linear machinery on characteristic triangles of the (z, t) grid.

A full triangle with apex centre z0, base time t0 and radius r holds the nodes
(z0 + i*h, t0 + n*h) with |i| + n <= R, R = r / h.  Arrays are stored on the
bounding rectangle, shape (R + 1, 2R + 1), rows n and columns i + R; entries
outside the triangle are NaN.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ContractionViolated, IncompatibleTrace, MisalignedGrid, NoConvergence


@dataclass(frozen=True)
class Triangle:
    z0: float
    t0: float
    r: float
    kind: str = "full"  # full | half_plus | half_minus
    delta: float = 1e-2

    def __post_init__(self):
        if not self.r > 0:
            raise MisalignedGrid("triangle radius must be positive")
        if self.kind not in ("full", "half_plus", "half_minus"):
            raise MisalignedGrid(f"unknown triangle kind {self.kind!r}")
        R = self.r / self.delta
        if abs(R - round(R)) > 1e-9 * max(1.0, R):
            raise MisalignedGrid(f"radius {self.r} is not a multiple of the spacing {self.delta}")

    @property
    def R(self) -> int:
        return int(round(self.r / self.delta))

    def base_z(self) -> np.ndarray:
        h, R = self.delta, self.R
        if self.kind == "full":
            return self.z0 + h * np.arange(-R, R + 1)
        if self.kind == "half_plus":
            return self.z0 + h * np.arange(0, R + 1)
        return self.z0 + h * np.arange(-R, 1)

    def times(self) -> np.ndarray:
        return self.t0 + self.delta * np.arange(self.R + 1)

    def mask(self) -> np.ndarray:
        R = self.R
        n = np.arange(R + 1)[:, None]
        if self.kind == "full":
            i = np.arange(-R, R + 1)[None, :]
        elif self.kind == "half_plus":
            i = np.arange(0, R + 1)[None, :]
        else:
            i = np.arange(-R, 1)[None, :]
        return np.abs(i) + n <= R


@dataclass(frozen=True)
class CauchyData:
    """Samples of u0, u0' and u1 on the base nodes of a triangle."""

    u0: np.ndarray
    du0: np.ndarray
    u1: np.ndarray

    @classmethod
    def from_callables(cls, tri: Triangle, u0: Callable, du0: Callable, u1: Callable) -> "CauchyData":
        z = tri.base_z()
        return cls(np.asarray(u0(z), float) + 0 * z, np.asarray(du0(z), float) + 0 * z,
                   np.asarray(u1(z), float) + 0 * z)

    def check(self, tri: Triangle) -> None:
        n = tri.base_z().size
        if not (self.u0.shape == self.du0.shape == self.u1.shape == (n,)):
            raise MisalignedGrid(f"Cauchy data must have {n} samples on the base of the triangle")


@dataclass(frozen=True)
class FineConstants:
    q: float
    alpha: float
    beta: float


@dataclass
class TriangleField:
    u: np.ndarray
    ut: np.ndarray
    uz: np.ndarray
    tri: Triangle

    @property
    def wp(self) -> np.ndarray:
        return self.ut + self.uz

    @property
    def wm(self) -> np.ndarray:
        return self.ut - self.uz


@dataclass
class PicardReport:
    iterations: int
    q: float
    updates: list
    bound: int


def fine_constants(r: float, lam_sup: float) -> FineConstants:
    q = r * lam_sup
    if q >= 1.0:
        raise ContractionViolated(f"q = r * ||lambda|| = {q:g} must be < 1")
    return FineConstants(q, 2.0 * lam_sup / (4.0 - q), 4.0 * lam_sup / ((2.0 - q) * (4.0 - q)))


def _diag_sum(g: np.ndarray, step: int) -> np.ndarray:
    """D[n, c] = g[n, c] + D[n-1, c+step], zero outside the array."""
    out = np.array(g, dtype=float)
    R1, W = g.shape
    for n in range(1, R1):
        if step > 0:
            out[n, :-1] += out[n - 1, 1:]
        else:
            out[n, 1:] += out[n - 1, :-1]
    return out


def _source_terms(g: np.ndarray, h: float):
    """Characteristic line integrals and the triangle integral of g at every node.

    Trapezoid along each characteristic; the triangle integral is trapezoid in
    the space variable on each time row and then trapezoid in time.
    """
    R1, W = g.shape
    dp = _diag_sum(g, +1)
    dm = _diag_sum(g, -1)
    idx = np.arange(W)
    rows = np.arange(R1)[:, None]
    first_r = np.where(idx[None, :] + rows < W, g[0, np.minimum(idx[None, :] + rows, W - 1)], 0.0)
    first_l = np.where(idx[None, :] - rows >= 0, g[0, np.maximum(idx[None, :] - rows, 0)], 0.0)
    line_r = h * (dp - 0.5 * g - 0.5 * first_r)
    line_l = h * (dm - 0.5 * g - 0.5 * first_l)
    Q = np.concatenate([np.zeros((R1, 1)), np.cumsum(0.5 * h * (g[:, 1:] + g[:, :-1]), axis=1)], axis=1)
    A = _diag_sum(Q, +1)
    B = _diag_sum(Q, -1)
    q0r = np.where(idx[None, :] + rows < W, Q[0, np.minimum(idx[None, :] + rows, W - 1)], 0.0)
    q0l = np.where(idx[None, :] - rows >= 0, Q[0, np.maximum(idx[None, :] - rows, 0)], 0.0)
    area = h * ((A - B) - 0.5 * (q0r - q0l))
    line_r[0] = 0.0
    line_l[0] = 0.0
    area[0] = 0.0
    return line_r, line_l, area


def _data_terms(R: int, h: float, data: CauchyData):
    W = 2 * R + 1
    c = np.arange(W)[None, :]
    n = np.arange(R + 1)[:, None]
    right = np.clip(c + n, 0, W - 1)
    left = np.clip(c - n, 0, W - 1)
    P = np.concatenate([[0.0], np.cumsum(0.5 * h * (data.u1[1:] + data.u1[:-1]))])
    u = 0.5 * (data.u0[right] + data.u0[left]) + 0.5 * (P[right] - P[left])
    ut = 0.5 * (data.du0[right] - data.du0[left]) + 0.5 * (data.u1[right] + data.u1[left])
    uz = 0.5 * (data.du0[right] + data.du0[left]) + 0.5 * (data.u1[right] - data.u1[left])
    return u, ut, uz


def dalembert_solve(tri: Triangle, data: CauchyData, g: np.ndarray | None = None) -> TriangleField:
    """Closed-form solution of u_tt - u_zz = g on a full triangle."""
    if tri.kind != "full":
        raise MisalignedGrid("dalembert_solve works on full triangles")
    data.check(tri)
    R, h = tri.R, tri.delta
    if g is not None:
        g = np.asarray(g, dtype=float)
        if g.shape != (R + 1, 2 * R + 1):
            raise MisalignedGrid(f"source must have shape {(R + 1, 2 * R + 1)}")
        g = np.where(np.isfinite(g), g, 0.0)
    u, ut, uz = _data_terms(R, h, data)
    if g is not None and np.any(g):
        lr, ll, area = _source_terms(g, h)
        u = u + 0.5 * area
        ut = ut + 0.5 * (lr + ll)
        uz = uz + 0.5 * (lr - ll)
    m = tri.mask()
    nan = np.full(u.shape, np.nan)
    return TriangleField(np.where(m, u, nan), np.where(m, ut, nan), np.where(m, uz, nan), tri)


def _lam_on_base(tri: Triangle, lam) -> np.ndarray:
    z = tri.base_z()
    if lam is None:
        return np.zeros(z.shape)
    if callable(lam):
        return np.asarray(lam(z), dtype=float) + 0 * z
    lam = np.asarray(lam, dtype=float)
    if lam.ndim == 0:
        return np.full(z.shape, float(lam))
    if lam.shape != z.shape:
        raise MisalignedGrid("lambda samples must match the base of the triangle")
    return lam


def picard_triangle_solve(tri: Triangle, data: CauchyData, lam=None, tol: float = 1e-12,
                          lam_sup: float | None = None, g0: np.ndarray | None = None,
                          margin: int = 25) -> tuple[TriangleField, PicardReport]:
    """Iterate u_z -> data part + source part with g = g0 - lambda u_z.

    Converges for q = r * ||lambda|| < 1.  `g0` is an optional fixed source.
    """
    if tri.kind != "full":
        raise MisalignedGrid("picard_triangle_solve works on full triangles")
    data.check(tri)
    R, h = tri.R, tri.delta
    lam_b = _lam_on_base(tri, lam)
    sup = float(np.max(np.abs(lam_b))) if lam_sup is None else float(lam_sup)
    q = tri.r * sup
    if q >= 1.0:
        raise ContractionViolated(f"q = r * ||lambda|| = {q:g} must be < 1")
    mask = tri.mask()
    _, _, uz_data = _data_terms(R, h, data)
    g_fixed = np.zeros((R + 1, 2 * R + 1)) if g0 is None else np.where(mask, np.nan_to_num(g0), 0.0)

    def apply(uz):
        g = np.where(mask, g_fixed - lam_b[None, :] * uz, 0.0)
        lr, ll, _ = _source_terms(g, h)
        return np.where(mask, uz_data + 0.5 * (lr - ll), 0.0)

    uz = apply(np.zeros((R + 1, 2 * R + 1)))
    t0 = float(np.max(np.abs(uz))) if uz.size else 0.0
    if sup == 0.0:
        bound = 1
    elif t0 == 0.0 or q == 0.0:
        bound = 1 + margin
    else:
        bound = max(1, math.ceil(math.log(tol / t0) / math.log(q))) + margin
    updates = []
    it = 1
    if sup > 0.0:
        while True:
            new = apply(uz)
            upd = float(np.max(np.abs(new - uz)))
            updates.append(upd)
            uz = new
            it += 1
            if upd <= tol:
                break
            if it > bound:
                raise NoConvergence(f"Picard update {upd:.3e} above tol after {it} iterations")
    g = np.where(mask, g_fixed - lam_b[None, :] * uz, 0.0)
    field = dalembert_solve(tri, data, g)
    return field, PicardReport(it, q, updates, bound)


@dataclass
class HalfSolution:
    field: TriangleField
    trace: np.ndarray
    report: PicardReport


def _gb(R: int, h: float, b: np.ndarray, bp: np.ndarray, db0: float):
    """G^b and its z-derivative on the half grid (n, i), i = 0..R."""
    n = np.arange(R + 1)[:, None]
    i = np.arange(R + 1)[None, :]
    far = i > n
    k = np.clip(n - i, 0, R)
    G = np.where(far, b[0] + n * h * db0, b[k] + i * h * db0)
    Gz = np.where(far, 0.0, -bp[k] + db0)
    return G, Gz


def dirichlet_half_solve(tri: Triangle, b: np.ndarray, data: CauchyData, lam=None, tol: float = 1e-12,
                         bp: np.ndarray | None = None, db0: float | None = None,
                         lam_sup: float | None = None, compat_tol: float = 1e-8) -> HalfSolution:
    """Solve on a half triangle with Dirichlet trace u(z0, t) = b(t).

    `b` (and optionally its derivative `bp`) are sampled on the R + 1 time
    levels.  Works by subtracting G^b, odd reflection about z0 and a full
    Picard solve.  half_minus is mapped onto half_plus by z -> 2 z0 - z.
    """
    if tri.kind == "full":
        raise MisalignedGrid("dirichlet_half_solve needs a half triangle")
    R, h = tri.R, tri.delta
    b = np.asarray(b, dtype=float)
    if b.shape != (R + 1,):
        raise MisalignedGrid(f"boundary trace must have {R + 1} samples")
    data.check(tri)
    lam_b = _lam_on_base(tri, lam)
    if tri.kind == "half_minus":
        flipped = CauchyData(data.u0[::-1].copy(), -data.du0[::-1].copy(), data.u1[::-1].copy())
        mirror = Triangle(tri.z0, tri.t0, tri.r, "half_plus", h)
        sol = dirichlet_half_solve(mirror, b, flipped, -lam_b[::-1].copy(), tol, bp, db0, lam_sup, compat_tol)
        f = sol.field
        field = TriangleField(f.u[:, ::-1].copy(), f.ut[:, ::-1].copy(), -f.uz[:, ::-1].copy(), tri)
        return HalfSolution(field, sol.trace, sol.report)

    if bp is None:
        bp = np.gradient(b, h, edge_order=2) if R >= 2 else np.full(R + 1, (b[-1] - b[0]) / h)
    bp = np.asarray(bp, dtype=float)
    if db0 is None:
        db0 = float(bp[0])
    scale = max(1.0, float(np.max(np.abs(b))), float(np.max(np.abs(data.u0))))
    if abs(b[0] - data.u0[0]) > compat_tol * scale or abs(db0 - data.u1[0]) > compat_tol * max(1.0, abs(db0)):
        raise IncompatibleTrace(
            f"trace incompatible with data: b(t0) - u0(z0) = {b[0] - data.u0[0]:.3e}, "
            f"b'(t0) - u1(z0) = {db0 - data.u1[0]:.3e}")
    G, Gz = _gb(R, h, b, bp, db0)

    v0 = data.u0 - b[0]
    dv0 = data.du0 - Gz[0]
    v1 = data.u1 - db0
    v0f = np.concatenate([-v0[:0:-1], v0])
    dv0f = np.concatenate([dv0[:0:-1], dv0])
    v1f = np.concatenate([-v1[:0:-1], v1])
    lamf = np.concatenate([-lam_b[:0:-1], lam_b])
    lamf[R] = 0.0
    Gzf = np.concatenate([Gz[:, :0:-1], Gz], axis=1)
    full = Triangle(tri.z0, tri.t0, tri.r, "full", h)
    sup = float(np.max(np.abs(lam_b))) if lam_sup is None else lam_sup
    g0 = -lamf[None, :] * Gzf
    vf, rep = picard_triangle_solve(full, CauchyData(v0f, dv0f, v1f), lamf, tol, sup, g0)
    v = vf.u[:, R:]
    vt = vf.ut[:, R:]
    vz = vf.uz[:, R:]
    n = np.arange(R + 1)[:, None]
    i = np.arange(R + 1)[None, :]
    far = i > n
    k = np.clip(n - i, 0, R)
    Gt = np.where(far, db0, bp[k])
    m = tri.mask()
    nan = np.nan
    field = TriangleField(np.where(m, v + G, nan), np.where(m, vt + Gt, nan), np.where(m, vz + Gz, nan), tri)
    return HalfSolution(field, field.u[:, 0].copy(), rep)
