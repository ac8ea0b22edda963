"""Hot loops of the characteristic-grid marcher.

Two implementations share one contract:

* ``march_loops``: scalar loops, compiled with numba when it is importable and
  the environment variable ``CHARWAVE_NUMBA`` is not ``"0"``.
* ``march_numpy``: vectorized numpy, also accepts an arbitrary callable f^-1.

Layout: every segment (constant or smooth piece of the snapped medium) owns the
contiguous index range ``lo[s]..hi[s]`` of the state arrays; interface nodes are
duplicated, so ``hi[s] + 1 == lo[s + 1]``.  Each step advances by h = dz.

Trace rows are (t, b, d, u_t(0), field energy, field momentum).
"""
from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

NUMBA_ENABLED = HAVE_NUMBA and os.environ.get("CHARWAVE_NUMBA", "1") != "0"


def _maybe_jit(fn):
    if NUMBA_ENABLED:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn


def finv_scalar(d, kind, p, K, fhi, flo):
    if d >= fhi:
        return d + K - fhi
    if d <= flo:
        return d - K - flo
    if kind == 0:
        return d / p
    r = 2.0 * d / p
    return math.copysign(abs(r) ** (1.0 / 3.0), r)


finv_scalar = _maybe_jit(finv_scalar)


def incoming_at_wall(w0, w1, w2, w3, s0, s1, x, h):
    # cubic Lagrange through nodes 0..3 at x = s / h, plus the source picked up
    # along the left-moving characteristic from (s, t_n) to (0, t_n + s)
    l0 = -(x - 1.0) * (x - 2.0) * (x - 3.0) / 6.0
    l1 = x * (x - 2.0) * (x - 3.0) / 2.0
    l2 = -x * (x - 1.0) * (x - 3.0) / 2.0
    l3 = x * (x - 1.0) * (x - 2.0) / 6.0
    w = l0 * w0 + l1 * w1 + l2 * w2 + l3 * w3
    return w + x * h * 0.5 * ((1.0 - x) * s0 + x * s1 + s0)


incoming_at_wall = _maybe_jit(incoming_at_wall)


def stage_solve(alpha, r, kind, p, K, fhi, flo):
    """Unique y with f(y) + alpha * y = r for an increasing shipped law."""
    if fhi < math.inf:
        if r >= fhi + alpha * K:
            return (r + K - fhi) / (1.0 + alpha)
        if r <= flo - alpha * K:
            return (r - K - flo) / (1.0 + alpha)
    if kind == 0:
        return r / (p + alpha)
    if r == 0.0:
        return 0.0
    q = 0.5 * p
    ar = abs(r)
    # root of q y^3 + alpha y = |r| lies in (0, min(|r| / alpha, (|r| / q)^(1/3))]
    y = (ar / q) ** (1.0 / 3.0)
    if alpha > 0.0 and ar / alpha < y:
        y = ar / alpha
    for _ in range(100):
        g = q * y * y * y + alpha * y - ar
        dy = g / (3.0 * q * y * y + alpha)
        y_new = y - dy
        if y_new <= 0.0:
            y_new = 0.5 * y
        if abs(y_new - y) <= 1e-16 * y:
            y = y_new
            break
        y = y_new
    return math.copysign(y, r)


stage_solve = _maybe_jit(stage_solve)

_SD = 1.0 - 1.0 / math.sqrt(2.0)


def boundary_step(w0, w1, w2, w3, s0, s1, h, c0, d, b, kind, p, K, fhi, flo, m, implicit):
    """Advance (d, b) over one grid step with m substeps; returns (d, b, u_t(0)).

    d' = (w_in(t) - f^-1(d)) / c0 and b' = f^-1(d).  For increasing laws the
    stages of a two-stage L-stable SDIRK scheme are solved in y = f^-1(d), so
    the cube-root singularity of f^-1 at 0 never enters a derivative.  The
    explicit RK4 branch serves decreasing laws, where the stage equation can
    have several roots.
    """
    dt = h / m
    y = finv_scalar(d, kind, p, K, fhi, flo)
    for k in range(m):
        s = k * dt
        if implicit:
            a = _SD * dt / c0
            w1s = incoming_at_wall(w0, w1, w2, w3, s0, s1, (s + _SD * dt) / h, h)
            w2s = incoming_at_wall(w0, w1, w2, w3, s0, s1, (s + dt) / h, h)
            y1 = stage_solve(a, d + a * w1s, kind, p, K, fhi, flo)
            k1 = (w1s - y1) / c0
            base = d + (1.0 - _SD) * dt * k1
            y2 = stage_solve(a, base + a * w2s, kind, p, K, fhi, flo)
            k2 = (w2s - y2) / c0
            d = base + _SD * dt * k2
            b = b + dt * ((1.0 - _SD) * y1 + _SD * y2)
            y = y2
        else:
            wa = incoming_at_wall(w0, w1, w2, w3, s0, s1, s / h, h)
            wb = incoming_at_wall(w0, w1, w2, w3, s0, s1, (s + 0.5 * dt) / h, h)
            wc = incoming_at_wall(w0, w1, w2, w3, s0, s1, (s + dt) / h, h)
            f1 = finv_scalar(d, kind, p, K, fhi, flo)
            k1 = (wa - f1) / c0
            f2 = finv_scalar(d + 0.5 * dt * k1, kind, p, K, fhi, flo)
            k2 = (wb - f2) / c0
            f3 = finv_scalar(d + 0.5 * dt * k2, kind, p, K, fhi, flo)
            k3 = (wb - f3) / c0
            f4 = finv_scalar(d + dt * k3, kind, p, K, fhi, flo)
            k4 = (wc - f4) / c0
            d = d + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            b = b + dt / 6.0 * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
            y = finv_scalar(d, kind, p, K, fhi, flo)
    return d, b, y


boundary_step = _maybe_jit(boundary_step)


def field_integrals(wp, wm, c, lo, hi, h):
    """Trapezoid sums of (wp^2 + wm^2) / (4c) and (wp + wm) / (2c) per segment."""
    e = 0.0
    mo = 0.0
    for s in range(lo.shape[0]):
        for j in range(lo[s], hi[s] + 1):
            wgt = h
            if j == lo[s] or j == hi[s]:
                wgt = 0.5 * h
            e += wgt * (wp[j] * wp[j] + wm[j] * wm[j]) / (4.0 * c[j])
            mo += wgt * (wp[j] + wm[j]) / (2.0 * c[j])
    return e, mo


field_integrals = _maybe_jit(field_integrals)


def march_loops(wp, wm, Fp, Gp, u, lo, hi, c, lam, gam, has_lam, use_pot, right_wall,
                h, nsteps, t0, b, d, kind, p, K, fhi, flo, substeps, implicit, trace):
    n = wp.shape[0]
    nseg = lo.shape[0]
    wpn = np.empty(n)
    wmn = np.empty(n)
    Fn = np.empty(n)
    Gn = np.empty(n)
    S = np.zeros(n)
    for step in range(nsteps):
        if has_lam:
            for j in range(n):
                S[j] = -lam[j] * 0.5 * (wp[j] - wm[j])
        d_new, b_new, ut = boundary_step(wp[0], wp[1], wp[2], wp[3], S[0], S[1], h, c[0], d, b,
                                         kind, p, K, fhi, flo, substeps, implicit)

        for s in range(nseg):
            if has_lam:
                for j in range(lo[s], hi[s]):
                    wpn[j] = wp[j + 1] + 0.5 * h * S[j + 1]
                for j in range(lo[s] + 1, hi[s] + 1):
                    wmn[j] = wm[j - 1] + 0.5 * h * S[j - 1]
                for j in range(lo[s] + 1, hi[s]):
                    sn = -lam[j] * 0.5 * (wpn[j] - wmn[j])
                    wpn[j] += 0.5 * h * sn
                    wmn[j] += 0.5 * h * sn
            else:
                for j in range(lo[s], hi[s]):
                    wpn[j] = wp[j + 1]
                for j in range(lo[s] + 1, hi[s] + 1):
                    wmn[j] = wm[j - 1]

        k0 = 0.5 * h * lam[0] if has_lam else 0.0
        wpn[0] = (wpn[0] + k0 * ut) / (1.0 + k0)
        wmn[0] = 2.0 * ut - wpn[0]

        for s in range(nseg - 1):
            e = hi[s]
            a = lo[s + 1]
            ke = 0.5 * h * lam[e] if has_lam else 0.0
            ka = 0.5 * h * lam[a] if has_lam else 0.0
            g = gam[s]
            bl = wmn[e]
            ar = wpn[a]
            num = g * (bl / ((1.0 - ke) * c[e]) + ar / ((1.0 + ka) * c[a]))
            den = 1.0 + g * ke / ((1.0 - ke) * c[e]) - g * ka / ((1.0 + ka) * c[a])
            ui = num / den
            wme = (bl - ke * ui) / (1.0 - ke)
            wpa = (ar + ka * ui) / (1.0 + ka)
            wmn[e] = wme
            wpn[e] = 2.0 * ui - wme
            wpn[a] = wpa
            wmn[a] = 2.0 * ui - wpa

        e = hi[nseg - 1]
        kr = 0.5 * h * lam[e] if has_lam else 0.0
        if right_wall:
            wmn[e] = wmn[e] / (1.0 - kr)
            wpn[e] = -wmn[e]
        else:
            wmn[e] = wmn[e] / (1.0 - 0.5 * kr)
            wpn[e] = 0.0

        if use_pot:
            for s in range(nseg):
                for j in range(lo[s], hi[s]):
                    Fn[j] = Fp[j + 1]
                for j in range(lo[s] + 1, hi[s] + 1):
                    Gn[j] = Gp[j - 1]
            Gn[0] = b_new - Fn[0]
            for s in range(nseg - 1):
                e = hi[s]
                a = lo[s + 1]
                du = 2.0 * gam[s] * ((Gn[e] - Gp[e]) / c[e] + (Fn[a] - Fp[a]) / c[a])
                un = Fp[e] + Gp[e] + du
                Fn[e] = un - Gn[e]
                Gn[a] = un - Fn[a]
            e = hi[nseg - 1]
            if right_wall:
                Fn[e] = -Gn[e]
            else:
                Fn[e] = Fp[e]
            for j in range(n):
                Fp[j] = Fn[j]
                Gp[j] = Gn[j]
                u[j] = Fn[j] + Gn[j]
        else:
            for j in range(n):
                u[j] += 0.25 * h * (wp[j] + wm[j] + wpn[j] + wmn[j])
            u[0] = b_new
            if right_wall:
                u[hi[nseg - 1]] = 0.0

        for j in range(n):
            wp[j] = wpn[j]
            wm[j] = wmn[j]
        b = b_new
        d = d_new
        ef, mf = field_integrals(wp, wm, c, lo, hi, h)
        trace[step, 0] = t0 + (step + 1) * h
        trace[step, 1] = b
        trace[step, 2] = d
        trace[step, 3] = ut
        trace[step, 4] = ef
        trace[step, 5] = mf
    return b, d


march_loops = _maybe_jit(march_loops)


def march_numpy(wp, wm, Fp, Gp, u, lo, hi, c, lam, gam, has_lam, use_pot, right_wall,
                h, nsteps, t0, b, d, bstep, trace):
    """Vectorized twin of `march_loops`.

    `bstep(w4, s0, s1, h, c0, d, b) -> (d, b, u_t(0))` advances the boundary,
    which lets closures without a kernel code run here.
    """
    lo = np.asarray(lo)
    hi = np.asarray(hi)
    ends_e = hi[:-1]
    ends_a = lo[1:]
    last = int(hi[-1])
    inner = np.ones(wp.shape[0], dtype=bool)
    inner[lo] = False
    inner[hi] = False
    seg_w = np.full(wp.shape[0], h)
    seg_w[lo] = 0.5 * h
    seg_w[hi] = 0.5 * h
    inv4c = seg_w / (4.0 * c)
    inv2c = seg_w / (2.0 * c)
    ce, ca = c[ends_e], c[ends_a]

    for step in range(nsteps):
        S = -lam * 0.5 * (wp - wm) if has_lam else None
        s0 = S[0] if has_lam else 0.0
        s1 = S[1] if has_lam else 0.0
        d_new, b_new, ut = bstep(wp[:4], s0, s1, h, c[0], d, b)

        wpn = np.empty_like(wp)
        wmn = np.empty_like(wm)
        if has_lam:
            wpn[:-1] = wp[1:] + 0.5 * h * S[1:]
            wmn[1:] = wm[:-1] + 0.5 * h * S[:-1]
            sn = -lam[inner] * 0.5 * (wpn[inner] - wmn[inner])
            wpn[inner] += 0.5 * h * sn
            wmn[inner] += 0.5 * h * sn
            k0 = 0.5 * h * lam[0]
            ke = 0.5 * h * lam[ends_e]
            ka = 0.5 * h * lam[ends_a]
            kr = 0.5 * h * lam[last]
        else:
            wpn[:-1] = wp[1:]
            wmn[1:] = wm[:-1]
            k0 = 0.0
            ke = np.zeros(ends_e.shape)
            ka = np.zeros(ends_a.shape)
            kr = 0.0

        wpn[0] = (wpn[0] + k0 * ut) / (1.0 + k0)
        wmn[0] = 2.0 * ut - wpn[0]

        if ends_e.size:
            bl = wmn[ends_e]
            ar = wpn[ends_a]
            num = gam * (bl / ((1.0 - ke) * ce) + ar / ((1.0 + ka) * ca))
            den = 1.0 + gam * ke / ((1.0 - ke) * ce) - gam * ka / ((1.0 + ka) * ca)
            ui = num / den
            wme = (bl - ke * ui) / (1.0 - ke)
            wpa = (ar + ka * ui) / (1.0 + ka)
            wmn[ends_e] = wme
            wpn[ends_e] = 2.0 * ui - wme
            wpn[ends_a] = wpa
            wmn[ends_a] = 2.0 * ui - wpa

        if right_wall:
            wmn[last] = wmn[last] / (1.0 - kr)
            wpn[last] = -wmn[last]
        else:
            wmn[last] = wmn[last] / (1.0 - 0.5 * kr)
            wpn[last] = 0.0

        if use_pot:
            Fn = np.empty_like(Fp)
            Gn = np.empty_like(Gp)
            Fn[:-1] = Fp[1:]
            Gn[1:] = Gp[:-1]
            Gn[0] = b_new - Fn[0]
            if ends_e.size:
                du = 2.0 * gam * ((Gn[ends_e] - Gp[ends_e]) / ce + (Fn[ends_a] - Fp[ends_a]) / ca)
                un = Fp[ends_e] + Gp[ends_e] + du
                Fn[ends_e] = un - Gn[ends_e]
                Gn[ends_a] = un - Fn[ends_a]
            Fn[last] = -Gn[last] if right_wall else Fp[last]
            Fp[:] = Fn
            Gp[:] = Gn
            u[:] = Fn + Gn
        else:
            u += 0.25 * h * (wp + wm + wpn + wmn)
            u[0] = b_new
            if right_wall:
                u[last] = 0.0

        wp[:] = wpn
        wm[:] = wmn
        b, d = b_new, d_new
        trace[step, 0] = t0 + (step + 1) * h
        trace[step, 1] = b
        trace[step, 2] = d
        trace[step, 3] = ut
        trace[step, 4] = float(np.sum(inv4c * (wp * wp + wm * wm)))
        trace[step, 5] = float(np.sum(inv2c * (wp + wm)))
    return b, d


def boundary_step_py(w, s0, s1, h, c0, d, b, stage, finv, m, implicit):
    """Python version of `boundary_step` driven by callables.

    `stage(alpha, r)` returns the root of f(y) + alpha * y = r and `finv` is the
    scalar inverse of f.
    """
    dt = h / m
    y = finv(d)
    for k in range(m):
        s = k * dt
        if implicit:
            a = _SD * dt / c0
            w1s = incoming_at_wall(w[0], w[1], w[2], w[3], s0, s1, (s + _SD * dt) / h, h)
            w2s = incoming_at_wall(w[0], w[1], w[2], w[3], s0, s1, (s + dt) / h, h)
            y1 = stage(a, d + a * w1s)
            k1 = (w1s - y1) / c0
            base = d + (1.0 - _SD) * dt * k1
            y2 = stage(a, base + a * w2s)
            k2 = (w2s - y2) / c0
            d = base + _SD * dt * k2
            b = b + dt * ((1.0 - _SD) * y1 + _SD * y2)
            y = y2
        else:
            wa = incoming_at_wall(w[0], w[1], w[2], w[3], s0, s1, s / h, h)
            wb = incoming_at_wall(w[0], w[1], w[2], w[3], s0, s1, (s + 0.5 * dt) / h, h)
            wc = incoming_at_wall(w[0], w[1], w[2], w[3], s0, s1, (s + dt) / h, h)
            f1 = finv(d)
            k1 = (wa - f1) / c0
            f2 = finv(d + 0.5 * dt * k1)
            k2 = (wb - f2) / c0
            f3 = finv(d + 0.5 * dt * k2)
            k3 = (wb - f3) / c0
            f4 = finv(d + dt * k3)
            k4 = (wc - f4) / c0
            d = d + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            b = b + dt / 6.0 * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
            y = finv(d)
    return d, b, y
