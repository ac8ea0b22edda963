"""Conserved quantities, weak-form residuals, continuous dependence and staggered grids."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol

import numpy as np
from scipy.interpolate import CubicSpline, interp1d
from scipy.optimize import brentq

from .ivp import kernels
from .ivp.config import SimulationConfig
from .ivp.data import InitialData, Profile, bump
from .ivp.solver import FieldState, SolutionRecord, advance_step, build_grid, init_state, run_simulation
from .nonlinearity import Nonlinearity

_GX, _GW = np.polynomial.legendre.leggauss(8)


# ---------------------------------------------------------------- conservation

def energy_of(state: FieldState, nl: Nonlinearity, pot=None) -> float:
    """Trapezoid quadrature of (1/2c)(u_t^2 + u_z^2) over z plus F(u_t(0, t))."""
    g = state.grid
    e, _ = kernels.field_integrals(state.wp, state.wm, g.c, g.lo, g.hi, g.h)
    return float(e + nl.F(np.array(0.5 * (state.wp[0] + state.wm[0]))))


def momentum_of(state: FieldState, nl: Nonlinearity, pot=None) -> float:
    """Trapezoid quadrature of u_t / c over z plus f(u_t(0, t))."""
    g = state.grid
    _, m = kernels.field_integrals(state.wp, state.wm, g.c, g.lo, g.hi, g.h)
    return float(m + nl.f(np.array(0.5 * (state.wp[0] + state.wm[0]))))


@dataclass
class ConservationSeries:
    times: np.ndarray
    E: np.ndarray
    M: np.ndarray
    E_drift: float
    M_drift: float
    floor: float
    tol: float | None = None
    flags: list = field(default_factory=list)


def relative_drift(series: np.ndarray, floor: float = 1e-14) -> float:
    scale = max(float(np.max(np.abs(series))), 1.0)
    ref = max(abs(float(series[0])), floor * scale)
    return float(np.max(np.abs(series - series[0])) / ref)


def conservation_report(record: SolutionRecord, tol: float | None = None, floor: float = 1e-14) -> ConservationSeries:
    E = np.asarray(record.E)
    M = np.asarray(record.M)
    out = ConservationSeries(record.times.copy(), E.copy(), M.copy(), relative_drift(E, floor),
                             relative_drift(M, floor), floor, tol)
    if tol is not None:
        if out.E_drift > tol:
            out.flags.append(f"energy drift {out.E_drift:.3e} above {tol:g}")
        if out.M_drift > tol:
            out.flags.append(f"momentum drift {out.M_drift:.3e} above {tol:g}")
    return out


# ---------------------------------------------------------------- weak form

class Candidate(Protocol):
    t_max: float
    x_max: float

    def ut(self, x: np.ndarray, t: np.ndarray) -> np.ndarray: ...

    def ux(self, x: np.ndarray, t: np.ndarray) -> np.ndarray: ...

    def ut0(self, t: np.ndarray) -> np.ndarray: ...

    def u1(self, x: np.ndarray) -> np.ndarray: ...

    def singular_x(self, t: float) -> np.ndarray: ...

    def singular_t(self) -> np.ndarray: ...


@dataclass
class ExactCandidate:
    """Closed-form candidate; `lines` are times t_k of right-moving lines x = t - t_k."""

    ut_fn: Callable
    ux_fn: Callable
    u1_fn: Callable
    t_max: float = math.inf
    x_max: float = math.inf
    lines: tuple = ()

    def ut(self, x, t):
        return self.ut_fn(x, t)

    def ux(self, x, t):
        return self.ux_fn(x, t)

    def ut0(self, t):
        return self.ut_fn(np.zeros_like(t), t)

    def u1(self, x):
        return self.u1_fn(x)

    def singular_x(self, t):
        return np.array([t - tk for tk in self.lines])

    def singular_t(self):
        return np.asarray(self.lines, dtype=float)


ZERO_CANDIDATE = ExactCandidate(lambda x, t: np.zeros(np.broadcast(x, t).shape),
                                lambda x, t: np.zeros(np.broadcast(x, t).shape),
                                lambda x: np.zeros(np.shape(x)))


class TraceCandidate:
    """Solver output on a homogeneous half-line, rebuilt from data and the boundary trace.

    With V constant the interior field is u = F(z + t) + G(z - t); F' and G' on
    positive arguments come from the data and G' on negative arguments from the
    recorded boundary velocity, which is evaluated as f^-1 of a cubic spline of
    d = f(u_t(0, t)).  Zero crossings of d are kept as singular lines.
    """

    def __init__(self, record: SolutionRecord):
        cfg = record.config
        g = record.grid
        if len(g.lo) != 1 or g.has_lam:
            raise ValueError("TraceCandidate needs a run on a homogeneous medium")
        self.c = float(g.c[0])
        self.data = cfg.data
        self.nl = cfg.nonlinearity
        tr = record.trace
        self.t_max = float(tr[-1, 0])
        self.x_max = float(g.x[-1]) - self.t_max
        tk, dk = tr[:, 0], tr[:, 2]
        self._d = CubicSpline(tk, dk)
        self._roots = self._singular_times(tk, dk)

    def _singular_times(self, tk, dk):
        # sign changes of d and the ends of stretches where d vanishes identically
        sgn = np.sign(np.where(np.abs(dk) <= 1e-300, 0.0, dk))
        out = []
        for i in np.nonzero(sgn[1:] != sgn[:-1])[0]:
            if sgn[i] == 0.0:
                out.append(tk[i])
            elif sgn[i + 1] == 0.0:
                out.append(tk[i + 1])
            else:
                out.append(brentq(lambda s: float(self._d(s)), tk[i], tk[i + 1], xtol=1e-15))
        out = np.array(sorted(out))
        return out[(out > 0) & (out < self.t_max)]

    def _fp(self, s):
        # F'(s) in z for s >= 0
        xs = s * self.c
        return 0.5 * (self.data.u0.dg(xs) * self.c + self.data.u1(xs))

    def _gp(self, s):
        out = np.empty(np.shape(s))
        pos = s >= 0
        xs = np.where(pos, s, 0.0) * self.c
        out[pos] = (0.5 * (self.data.u0.dg(xs) * self.c - self.data.u1(xs)))[pos]
        tt = np.where(pos, 0.0, -s)
        y = self.nl.f_inv(self._d(tt))
        out[~pos] = (self._fp(tt) - y)[~pos]
        return out

    def _z(self, x):
        return np.asarray(x, dtype=float) / self.c

    def ut(self, x, t):
        z = self._z(x)
        return self._fp(z + t) - self._gp(z - t)

    def ux(self, x, t):
        z = self._z(x)
        return (self._fp(z + t) + self._gp(z - t)) / self.c

    def ut0(self, t):
        return self.nl.f_inv(self._d(np.asarray(t, dtype=float)))

    def u1(self, x):
        return self.data.u1(x)

    def singular_x(self, t):
        return (t - self._roots) * self.c

    def singular_t(self):
        return self._roots


class GridCandidate:
    """Bilinear interpolation of recorded snapshots in (x, t); first order in general media."""

    def __init__(self, record: SolutionRecord):
        g = record.grid
        self.grid = g
        self.times = np.array([s.t for s in record.snapshots])
        self.snaps = record.snapshots
        self.data = record.config.data
        self.t_max = float(self.times[-1])
        self.x_max = float(g.x[-1])
        self._trace = record.trace

    def _field(self, x, t, which):
        g = self.grid
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        x, t = np.broadcast_arrays(x, t)
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2)
        out = np.empty(x.shape)
        for kk in np.unique(k):
            m = k == kk
            vals = []
            for s in (self.snaps[kk], self.snaps[kk + 1]):
                ut = 0.5 * (s.wp + s.wm)
                ux = 0.5 * (s.wp - s.wm) / g.c
                arr = ut if which == "ut" else ux
                v = np.empty(m.sum())
                xm = x[m]
                for seg in range(len(g.lo)):
                    sl = slice(g.lo[seg], g.hi[seg] + 1)
                    xa, xb = g.x[g.lo[seg]], g.x[g.hi[seg]]
                    sel = (xm >= xa) & ((xm < xb) | (seg == len(g.lo) - 1))
                    v[sel] = np.interp(xm[sel], g.x[sl], arr[sl])
                vals.append(v)
            t0, t1 = self.times[kk], self.times[kk + 1]
            w = (t[m] - t0) / (t1 - t0)
            out[m] = (1 - w) * vals[0] + w * vals[1]
        return out

    def ut(self, x, t):
        return self._field(x, t, "ut")

    def ux(self, x, t):
        return self._field(x, t, "ux")

    def ut0(self, t):
        return np.interp(t, self._trace[:, 0], self._trace[:, 3])

    def u1(self, x):
        return self.data.u1(x)

    def singular_x(self, t):
        return np.array([])

    def singular_t(self):
        return np.array([])


@dataclass(frozen=True)
class TensorBump:
    """phi(x, t) = B((x - xc) / hx) * B((t - tc) / ht) with B(s) = (1 - s^2)^4."""

    xc: float
    hx: float
    tc: float
    ht: float

    @staticmethod
    def _b(s):
        return np.where(np.abs(s) < 1.0, (1.0 - s * s) ** 4, 0.0)

    @staticmethod
    def _db(s):
        return np.where(np.abs(s) < 1.0, -8.0 * s * (1.0 - s * s) ** 3, 0.0)

    def phi(self, x, t):
        return self._b((x - self.xc) / self.hx) * self._b((t - self.tc) / self.ht)

    def phi_x(self, x, t):
        return self._db((x - self.xc) / self.hx) / self.hx * self._b((t - self.tc) / self.ht)

    def phi_t(self, x, t):
        return self._b((x - self.xc) / self.hx) * self._db((t - self.tc) / self.ht) / self.ht

    @property
    def x_range(self):
        return max(0.0, self.xc - self.hx), self.xc + self.hx

    @property
    def t_range(self):
        return max(0.0, self.tc - self.ht), self.tc + self.ht


def bump_bank(x_max: float, t_max: float, n: int = 12, seed: int = 0,
              width: tuple[float, float] = (0.3, 1.2)) -> list[TensorBump]:
    """Tensor bumps on random sub-rectangles of [0, x_max] x [0, t_max].

    A quarter of them straddle x = 0, a quarter straddle t = 0 and one sits on
    the corner, so every term of the weak form is exercised.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        hx = rng.uniform(*width)
        ht = rng.uniform(*width)
        hx = min(hx, 0.45 * x_max)
        ht = min(ht, 0.45 * t_max)
        xc = rng.uniform(hx, x_max - hx)
        tc = rng.uniform(ht, t_max - ht)
        if i == 0:
            xc, tc = rng.uniform(0, 0.5 * hx), rng.uniform(0, 0.5 * ht)
        elif i % 4 == 1:
            xc = rng.uniform(-0.5 * hx, 0.5 * hx)
        elif i % 4 == 2:
            tc = rng.uniform(-0.5 * ht, 0.5 * ht)
        out.append(TensorBump(float(xc), float(hx), float(tc), float(ht)))
    return out


def _graded(a: float, b: float, sing_a: bool, sing_b: bool, panels: int, levels: int):
    """Composite 8-point Gauss nodes on [a, b], geometrically graded toward singular ends."""
    if b <= a:
        return np.empty(0), np.empty(0)
    L = b - a
    lo_cut = a + 0.25 * L if sing_a else a
    hi_cut = b - 0.25 * L if sing_b else b
    edges = list(np.linspace(lo_cut, hi_cut, panels + 1))
    if sing_a:
        edges += [a] + [a + 0.25 * L * 0.5 ** k for k in range(levels)]
    if sing_b:
        edges += [b] + [b - 0.25 * L * 0.5 ** k for k in range(levels)]
    e = np.unique(edges)
    lo, hi = e[:-1], e[1:]
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    x = (mid[:, None] + half[:, None] * _GX[None, :]).ravel()
    w = (half[:, None] * _GW[None, :]).ravel()
    return x, w


def _split_nodes(a: float, b: float, singular, panels: int, levels: int, plain=()):
    sing = {float(p) for p in singular if a < p < b}
    edges = sorted(sing | {float(p) for p in plain if a < p < b} | {a, b})
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        x, w = _graded(lo, hi, lo in sing, hi in sing, panels, levels)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


@dataclass
class WeakReport:
    residuals: np.ndarray
    bank: list

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.residuals))) if self.residuals.size else 0.0


def weak_residual(cand, nl: Nonlinearity, pot, bank: list | None = None, panels: int = 4,
                  levels: int = 14, n_bank: int = 12, seed: int = 0) -> WeakReport:
    """Evaluate the weak form of the boundary problem for each test function in the bank.

    The residual for phi is
      int int (V u_t phi_t - u_x phi_x) dx dt + int f(u_t(0, t)) phi_t(0, t) dt
        + int V u1 phi(x, 0) dx + f(u1(0)) phi(0, 0).
    Quadrature is iterated Gauss, split at the candidate's singular lines (graded
    toward them) and at the jumps of V.
    """
    if bank is None:
        xm = min(cand.x_max, 6.0)
        tm = min(cand.t_max, 6.0)
        bank = bump_bank(xm, tm, n_bank, seed)
    V = (lambda x: np.ones(np.shape(x))) if pot is None else pot.V
    jumps = () if pot is None else tuple(pot.breakpoints)
    res = np.empty(len(bank))
    lines = np.asarray(cand.singular_t(), dtype=float)
    c_lines = getattr(cand, "c", 1.0)
    for i, tb in enumerate(bank):
        xa, xb = tb.x_range
        ta, tb_ = tb.t_range
        if xb > cand.x_max or tb_ > cand.t_max:
            raise ValueError("test function support leaves the candidate's domain")
        # times where a singular line enters or leaves the x-range
        tbreak = np.concatenate([lines + xa / c_lines, lines + xb / c_lines, lines])
        ts, wt = _split_nodes(ta, tb_, tbreak, panels, levels)
        xs_all, w_all = [], []
        for t, w in zip(ts, wt):
            xs, wx = _split_nodes(xa, xb, cand.singular_x(t), panels, levels, jumps)
            xs_all.append(xs)
            w_all.append((t, w * wx))
        X = np.concatenate(xs_all)
        T = np.concatenate([np.full(w.shape, t) for t, w in w_all])
        W = np.concatenate([w for _, w in w_all])
        integrand = V(X) * cand.ut(X, T) * tb.phi_t(X, T) - cand.ux(X, T) * tb.phi_x(X, T)
        total = float(integrand @ W)
        if xa == 0.0:
            ts0, w0 = _split_nodes(ta, tb_, lines, panels, levels)
            total += float((nl.f(cand.ut0(ts0)) * tb.phi_t(np.zeros_like(ts0), ts0)) @ w0)
        if ta == 0.0:
            xs0, w0 = _split_nodes(xa, xb, (), 4 * panels, 0, jumps)
            total += float((V(xs0) * cand.u1(xs0) * tb.phi(xs0, np.zeros_like(xs0))) @ w0)
            if xa == 0.0:
                total += float(nl.f(np.array(float(cand.u1(np.array(0.0)))))) * float(tb.phi(0.0, 0.0))
        res[i] = total
    return WeakReport(res, bank)


# ---------------------------------------------------------------- continuous dependence

@dataclass
class DependenceRow:
    eps: float
    du: float
    dut: float
    dux: float


@dataclass
class DependenceTable:
    rows: list
    slope: float
    z_max: float
    identical_at_zero: bool | None = None


def _perturbed(cfg: SimulationConfig, pert: Profile, eps: float, target: str) -> SimulationConfig:
    if eps == 0.0:
        return cfg
    if target == "u0":
        data = InitialData(cfg.data.u0 + pert.scaled(eps), cfg.data.u1)
    else:
        data = InitialData(cfg.data.u0, cfg.data.u1 + pert.scaled(eps))
    return replace(cfg, data=data)


def continuous_dependence_experiment(cfg: SimulationConfig, eps_list=(1e-2, 1e-3, 1e-4),
                                     perturbation: Profile | None = None, target: str = "u1",
                                     z_max: float | None = None) -> DependenceTable:
    """Sup-differences between base and perturbed runs over [0, T] on z <= z_max.

    The slope of log(du) against log(eps) is an empirical observation; only
    continuity is guaranteed by the theory.
    """
    if perturbation is None:
        perturbation = bump(1.0, 0.5)
    sup = max(cfg.data.support, perturbation.support)
    z_ext = float(cfg.potential.kappa(sup)) + cfg.T + max(16 * cfg.dz, 0.05)
    cfg = replace(cfg, z_extent=z_ext, snapshot_every=cfg.snapshot_every or max(1, int(round(0.1 / cfg.dz))))
    if z_max is None:
        z_max = z_ext - cfg.T
    base = run_simulation(cfg)
    keep = base.grid.z <= z_max + 1e-12

    def diffs(rec):
        du = dut = dux = 0.0
        c = rec.grid.c[keep]
        for s0, s1 in zip(base.snapshots, rec.snapshots):
            du = max(du, float(np.max(np.abs(s1.u[keep] - s0.u[keep]))))
            dut = max(dut, float(np.max(np.abs(0.5 * ((s1.wp - s0.wp) + (s1.wm - s0.wm))[keep]))))
            dux = max(dux, float(np.max(np.abs(0.5 * ((s1.wp - s0.wp) - (s1.wm - s0.wm))[keep] / c))))
        return du, dut, dux

    rows = []
    identical = None
    for eps in eps_list:
        rec = run_simulation(_perturbed(cfg, perturbation, float(eps), target))
        if eps == 0.0:
            identical = all(np.array_equal(a.u, b.u) and np.array_equal(a.wp, b.wp) and np.array_equal(a.wm, b.wm)
                            for a, b in zip(base.snapshots, rec.snapshots))
        rows.append(DependenceRow(float(eps), *diffs(rec)))
    pos = [r for r in rows if r.eps > 0 and r.du > 0]
    slope = float(np.polyfit(np.log([r.eps for r in pos]), np.log([r.du for r in pos]), 1)[0]) if len(pos) >= 2 else math.nan
    return DependenceTable(rows, slope, float(z_max), identical)


# ---------------------------------------------------------------- staggered grids

@dataclass
class StaggeredReport:
    h: float
    times: np.ndarray
    du: np.ndarray
    dut: np.ndarray

    @property
    def max_du(self) -> float:
        return float(np.max(self.du))


def _resample(src: FieldState, grid) -> FieldState:
    """Carry a fine-grid state onto `grid` segment by segment (linear, extrapolated at snapped ends)."""
    g0 = src.grid
    fields = {k: np.empty(grid.n) for k in ("u", "wp", "wm", "F", "G")}
    for s in range(len(grid.lo)):
        a, b = grid.lo[s], grid.hi[s] + 1
        fa, fb = g0.lo[s], g0.hi[s] + 1
        for k, out in fields.items():
            f = interp1d(g0.z[fa:fb], getattr(src, k)[fa:fb], fill_value="extrapolate", assume_sorted=True)
            out[a:b] = f(grid.z[a:b])
    return FieldState(src.t, fields["u"], fields["wp"], fields["wm"], fields["F"], fields["G"],
                      src.b, src.d, grid, 0, src.t)


def staggered_comparison(cfg: SimulationConfig, times=None) -> StaggeredReport:
    """Run a second grid whose time levels sit half a step after the first one and compare.

    The offset grid starts from one step of a half-spacing run. The reference
    grid is interpolated linearly in time to the offset levels; only nodes whose
    domain of dependence stays inside the simulated range are compared.
    """
    h = cfg.dz
    grid = build_grid(cfg)
    z_end = grid.J * h
    fine_cfg = replace(cfg, dz=0.5 * h, z_extent=z_end)
    fine = advance_step(fine_cfg, init_state(fine_cfg), 1)
    st_b = _resample(fine, grid)
    st_a = init_state(cfg, grid)
    if times is None:
        times = np.linspace(0.0, cfg.T, 5)[1:]
    ks = sorted({min(int(math.floor((t - 0.5 * h) / h + 1e-9)), cfg.nsteps - 1) for t in times})
    out_t, du, dut = [], [], []
    for k in ks:
        st_a = advance_step(cfg, st_a, k - st_a.step) if k > st_a.step else st_a
        nxt = advance_step(cfg, st_a, 1)
        st_b = advance_step(cfg, st_b, k - st_b.step) if k > st_b.step else st_b
        keep = grid.z <= z_end - st_b.t - h
        ua = 0.5 * (st_a.u + nxt.u)
        uta = 0.5 * (st_a.ut + nxt.ut)
        out_t.append(st_b.t)
        du.append(float(np.max(np.abs(ua - st_b.u)[keep])))
        dut.append(float(np.max(np.abs(uta - st_b.ut)[keep])))
    return StaggeredReport(h, np.array(out_t), np.array(du), np.array(dut))
