"""Interface, nonlinear boundary and wall relations.

Orientation: w+ = u_t + u_z travels left (dz/dt = -1), w- = u_t - u_z travels
right.  Across an interface u and u_t are continuous and u_z / c is continuous.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DecreasingNonlinearity, MisalignedGrid, NoConvergence
from .ivp.kernels import _SD, incoming_at_wall
from .nonlinearity import Nonlinearity
from .triangles import (CauchyData, HalfSolution, Triangle, TriangleField, dirichlet_half_solve,
                        fine_constants)


@dataclass(frozen=True)
class InterfaceCoefficients:
    z0: float
    c_minus: float
    c_plus: float

    @property
    def gamma(self) -> float:
        return 1.0 / (1.0 / self.c_minus + 1.0 / self.c_plus)


@dataclass
class BoundaryTrace:
    t: np.ndarray
    b: np.ndarray
    d: np.ndarray | None
    bprime: np.ndarray


@dataclass
class IterationReport:
    iterations: int
    updates: list = field(default_factory=list)
    factors: list = field(default_factory=list)
    mu: float = 0.0
    beta: float = 0.0
    relax: float = 1.0


def jump_transmission_step(coeffs: InterfaceCoefficients, w_minus_in: float, w_plus_in: float):
    """(u_t, u_z(z0-), u_z(z0+)) from the two invariants arriving at the interface."""
    ut = coeffs.gamma * (w_minus_in / coeffs.c_minus + w_plus_in / coeffs.c_plus)
    return ut, ut - w_minus_in, w_plus_in - ut


def dirichlet_wall_step(w_minus_in):
    """Outgoing w+ at a wall where u_t = 0."""
    return -w_minus_in


def _antiderivative(y: np.ndarray, h: float, y0: float = 0.0) -> np.ndarray:
    return y0 + np.concatenate([[0.0], np.cumsum(0.5 * h * (y[1:] + y[:-1]))])


def _weighted_sup(x: np.ndarray, t: np.ndarray, mu: float) -> float:
    return float(np.max(np.exp(-mu * t) * np.abs(x)))


def _split(tri: Triangle, data: CauchyData):
    R = tri.R
    left = CauchyData(data.u0[:R + 1], data.du0[:R + 1], data.u1[:R + 1])
    right = CauchyData(data.u0[R:], data.du0[R:], data.u1[R:])
    return left, right


def _samples(lam, z: np.ndarray) -> np.ndarray:
    if lam is None:
        return np.zeros(z.shape)
    if callable(lam):
        return np.asarray(lam(z), dtype=float) + 0 * z
    return np.asarray(lam, dtype=float) + 0 * z


@dataclass
class JumpSolution:
    trace: BoundaryTrace
    minus: TriangleField
    plus: TriangleField
    report: IterationReport


def jump_trace_solve(tri: Triangle, data: CauchyData, c_minus: float, c_plus: float,
                     lam_minus=None, lam_plus=None, tol: float = 1e-12, mu: float | None = None,
                     max_iter: int = 200) -> JumpSolution:
    """Trace b at an interface z0 from the fixed point on b'.

    `tri` is the full triangle around z0; Cauchy data are sampled on its base.
    The two half triangles are solved with Dirichlet trace b, and b' is updated
    with gamma * ((b' - u_z(z0-)) / c- + (b' + u_z(z0+)) / c+) until the update
    in the norm sup exp(-mu t) |.| drops below tol.
    """
    if tri.kind != "full":
        raise MisalignedGrid("jump_trace_solve needs the full triangle around the interface")
    data.check(tri)
    R, h = tri.R, tri.delta
    z = tri.base_z()
    t = tri.times()
    dl, dr = _split(tri, data)
    lm = _samples(lam_minus, z[:R + 1])
    lp = _samples(lam_plus, z[R:])
    sup = max(float(np.max(np.abs(lm))), float(np.max(np.abs(lp))))
    beta = fine_constants(tri.r, sup).beta
    if mu is None:
        mu = 2.0 * beta if beta > 0 else 1.0
    coeffs = InterfaceCoefficients(tri.z0, c_minus, c_plus)
    g = coeffs.gamma
    left = Triangle(tri.z0, tri.t0, tri.r, "half_minus", h)
    right = Triangle(tri.z0, tri.t0, tri.r, "half_plus", h)
    u00 = float(data.u0[R])
    v00 = float(data.u1[R])

    def solve(bp):
        b = _antiderivative(bp, h, u00)
        sm = dirichlet_half_solve(left, b, dl, lm, tol=0.1 * tol, bp=bp, db0=v00, lam_sup=sup)
        sp = dirichlet_half_solve(right, b, dr, lp, tol=0.1 * tol, bp=bp, db0=v00, lam_sup=sup)
        return b, sm, sp

    def T(bp, sm: HalfSolution, sp: HalfSolution):
        uzm = sm.field.uz[:, -1]
        uzp = sp.field.uz[:, 0]
        new = g * ((bp - uzm) / c_minus + (bp + uzp) / c_plus)
        new[0] = v00
        return new

    bp = np.full(R + 1, v00)
    rep = IterationReport(0, mu=mu, beta=beta)
    prev = None
    while True:
        b, sm, sp = solve(bp)
        new = T(bp, sm, sp)
        upd = _weighted_sup(new - bp, t - tri.t0, mu)
        rep.iterations += 1
        rep.updates.append(upd)
        if prev is not None and prev > 0:
            rep.factors.append(upd / prev)
        prev = upd
        bp = new
        if upd <= tol:
            break
        if rep.iterations >= max_iter:
            raise NoConvergence(f"interface trace update {upd:.3e} above tol after {max_iter} iterations")
    b, sm, sp = solve(bp)
    return JumpSolution(BoundaryTrace(t, b, None, bp), sm.field, sp.field, rep)


def _integrate_boundary(w: np.ndarray, h: float, c0: float, d0: float, b0: float, nl: Nonlinearity,
                        substeps: int):
    """Integrate d' = (w_in - f^-1(d)) / c0, b' = f^-1(d) with w_in sampled on the time nodes."""
    n = w.size
    if n < 4:
        raise MisalignedGrid("boundary integration needs at least 4 time levels")
    implicit = nl.increasing
    from .ivp.solver import stage_solver

    stage = stage_solver(nl) if implicit else None
    finv = lambda d: float(nl.f_inv(d))
    d = np.empty(n)
    b = np.empty(n)
    y = np.empty(n)
    d[0], b[0] = d0, b0
    y[0] = finv(d0)
    for k in range(n - 1):
        j0 = min(k, n - 4)
        # shifted stencil: the helper evaluates the cubic at x = (s / h) relative to node j0
        off = k - j0
        dk, bk = d[k], b[k]
        dt = h / substeps
        yk = y[k]
        for m in range(substeps):
            s = m * dt
            if implicit:
                a = _SD * dt / c0
                w1s = incoming_at_wall(w[j0], w[j0 + 1], w[j0 + 2], w[j0 + 3], 0.0, 0.0, off + (s + _SD * dt) / h, h)
                w2s = incoming_at_wall(w[j0], w[j0 + 1], w[j0 + 2], w[j0 + 3], 0.0, 0.0, off + (s + dt) / h, h)
                y1 = stage(a, dk + a * w1s)
                base = dk + (1.0 - _SD) * dt * (w1s - y1) / c0
                y2 = stage(a, base + a * w2s)
                dk = base + _SD * dt * (w2s - y2) / c0
                bk = bk + dt * ((1.0 - _SD) * y1 + _SD * y2)
                yk = y2
            else:
                ws = [incoming_at_wall(w[j0], w[j0 + 1], w[j0 + 2], w[j0 + 3], 0.0, 0.0, off + (s + q * dt) / h, h)
                      for q in (0.0, 0.5, 1.0)]
                f1 = finv(dk)
                k1 = (ws[0] - f1) / c0
                f2 = finv(dk + 0.5 * dt * k1)
                k2 = (ws[1] - f2) / c0
                f3 = finv(dk + 0.5 * dt * k2)
                k3 = (ws[1] - f3) / c0
                f4 = finv(dk + dt * k3)
                k4 = (ws[2] - f4) / c0
                dk = dk + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
                bk = bk + dt / 6.0 * (f1 + 2 * f2 + 2 * f3 + f4)
                yk = finv(dk)
        d[k + 1], b[k + 1], y[k + 1] = dk, bk, yk
    return d, b, y


@dataclass
class BoundarySolution:
    trace: BoundaryTrace
    field: TriangleField
    w_in: np.ndarray
    w_out: np.ndarray
    report: IterationReport


def boundary_trace_solve(tri: Triangle, data: CauchyData, nl: Nonlinearity, lam=None, c0: float = 1.0,
                         substeps: int = 4, tol: float = 1e-12, relax: float = 1.0, max_iter: int = 200,
                         general: bool | None = None, allow_illposed: bool = False) -> BoundarySolution:
    """Boundary trace at z0 = 0 for u_x(0, t) = (f(u_t(0, t)))_t on a half_plus triangle.

    The fast path (lambda = 0) integrates the scalar trace ODE driven by the
    incoming invariant read off the data.  The general path iterates on the
    incoming invariant seen by the boundary, re-solving the trace ODE and the
    Dirichlet half problem each round; `relax` damps the update and is halved
    whenever the update grows.
    """
    if tri.kind != "half_plus":
        raise MisalignedGrid("boundary_trace_solve needs a half_plus triangle")
    if not nl.increasing and not allow_illposed:
        raise DecreasingNonlinearity(
            f"boundary law {nl.label!r} is decreasing; the forward problem is ill-posed")
    data.check(tri)
    h = tri.delta
    z = tri.base_z()
    t = tri.times()
    lam_b = _samples(lam, z)
    if general is None:
        general = bool(np.any(lam_b != 0.0))
    d0 = float(nl.f(data.u1[0]))
    b0 = float(data.u0[0])
    w_data = data.u1 + data.du0
    rep = IterationReport(0, relax=relax)

    def trace_and_field(w):
        d, b, y = _integrate_boundary(w, h, c0, d0, b0, nl, substeps)
        sol = dirichlet_half_solve(tri, b, data, lam_b, tol=0.1 * tol, bp=y, db0=float(y[0]))
        return d, b, y, sol

    w = w_data.copy()
    d, b, y, sol = trace_and_field(w)
    if general:
        prev = math.inf
        omega = relax
        while True:
            w_new = sol.field.uz[:, 0] + y
            upd = float(np.max(np.abs(w_new - w)))
            rep.iterations += 1
            rep.updates.append(upd)
            if upd <= tol:
                break
            if upd > prev:
                omega *= 0.5
            prev = upd
            if rep.iterations >= max_iter:
                raise NoConvergence(f"boundary trace update {upd:.3e} above tol after {max_iter} iterations")
            w = (1.0 - omega) * w + omega * w_new
            d, b, y, sol = trace_and_field(w)
        rep.relax = omega
    else:
        rep.iterations = 1
    w_in = sol.field.uz[:, 0] + y
    trace = BoundaryTrace(t, b, d, y)
    return BoundarySolution(trace, sol.field, w_in, 2.0 * y - w_in, rep)
