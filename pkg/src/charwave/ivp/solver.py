"""Global marcher on the characteristic grid (dt = dz) and its records."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from ..errors import ConfigInvalid, DecreasingNonlinearity, IncompatibleData
from . import kernels
from .config import SimulationConfig

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


@dataclass
class Grid:
    h: float
    J: int
    lo: np.ndarray
    hi: np.ndarray
    zidx: np.ndarray
    z: np.ndarray
    x: np.ndarray
    c: np.ndarray
    lam: np.ndarray
    gam: np.ndarray
    x_ranges: list
    snaps: list
    has_lam: bool
    right_wall: bool

    @property
    def n(self) -> int:
        return int(self.z.shape[0])

    @property
    def interfaces(self) -> list[tuple[int, int]]:
        return [(int(e), int(a)) for e, a in zip(self.hi[:-1], self.lo[1:])]

    def node_at(self, z: float) -> int:
        """First storage index whose node sits closest to z."""
        return int(np.argmin(np.abs(self.z - z)))


@dataclass
class FieldState:
    t: float
    u: np.ndarray
    wp: np.ndarray
    wm: np.ndarray
    F: np.ndarray
    G: np.ndarray
    b: float
    d: float
    grid: Grid
    step: int = 0
    t0: float = 0.0  # time of step 0; nonzero for time-staggered grids

    @property
    def ut(self) -> np.ndarray:
        return 0.5 * (self.wp + self.wm)

    @property
    def uz(self) -> np.ndarray:
        return 0.5 * (self.wp - self.wm)

    @property
    def ux(self) -> np.ndarray:
        return self.uz / self.grid.c

    def copy(self) -> "FieldState":
        return FieldState(self.t, self.u.copy(), self.wp.copy(), self.wm.copy(), self.F.copy(), self.G.copy(),
                          self.b, self.d, self.grid, self.step, self.t0)


@dataclass
class Snapshot:
    t: float
    step: int
    u: np.ndarray
    wp: np.ndarray
    wm: np.ndarray


@dataclass
class SolutionRecord:
    config: SimulationConfig
    grid: Grid
    snapshots: list
    trace: np.ndarray  # columns t, b, d, u_t(0), field energy, field momentum
    E: np.ndarray
    M: np.ndarray
    meta: dict = field(default_factory=dict)
    final: FieldState | None = None

    @property
    def times(self) -> np.ndarray:
        return self.trace[:, 0]

    def snapshot(self, t: float) -> Snapshot:
        return min(self.snapshots, key=lambda s: abs(s.t - t))


def build_grid(cfg: SimulationConfig) -> Grid:
    pot = cfg.potential
    h = cfg.dz
    z_end = cfg.z_end()
    if z_end > pot.z_max * (1 + 1e-12):
        raise ConfigInvalid(f"potential covers z <= {pot.z_max:.6g} but the run needs z <= {z_end:.6g}")
    J = int(math.ceil(z_end / h - 1e-9))
    if cfg.mode == "bounded":
        J = int(round(z_end / h))
    snaps = []
    cuts = []
    xs_cut = []
    for xb, zb in zip(pot.breakpoints, pot.z_breakpoints):
        if zb >= J * h - 0.5 * h:
            break
        j = int(round(zb / h))
        snaps.append({"x": xb, "z": zb, "z_node": j * h, "error": abs(j * h - zb)})
        cuts.append(j)
        xs_cut.append(xb)
    if cfg.mode == "bounded":
        snaps.append({"x": cfg.L, "z": z_end, "z_node": J * h, "error": abs(J * h - z_end), "wall": True})
    elif cuts and J - cuts[-1] < 8:
        J = cuts[-1] + 8
    edges = [0] + cuts + [J]
    zgaps = np.diff(np.array([0.0] + [s["z"] for s in snaps]))
    if zgaps.size and h > zgaps.min() / 8.0 * (1 + 1e-12):
        raise ConfigInvalid(f"dz = {h:g} exceeds 1/8 of the smallest z-gap {zgaps.min():.6g} between interfaces")
    if min(np.diff(edges)) < 4:
        raise ConfigInvalid("a segment of the snapped medium has fewer than 4 cells")
    lam_sup = pot.coordinate_map().lam_sup
    if h * lam_sup >= 1.0:
        raise ConfigInvalid(f"dz * ||lambda|| = {h * lam_sup:.3g} must stay below 1")

    x_edges = [0.0] + xs_cut + [float(pot.kappa_inv(min(J * h, pot.z_max)))]
    lo, hi, zidx = [], [], []
    start = 0
    for s in range(len(edges) - 1):
        idx = np.arange(edges[s], edges[s + 1] + 1)
        lo.append(start)
        hi.append(start + idx.size - 1)
        zidx.append(idx)
        start += idx.size
    zidx = np.concatenate(zidx)
    z = zidx * h
    x = np.asarray(pot.kappa_inv(np.minimum(z, pot.z_max)))
    c = np.empty(z.shape)
    lam = np.empty(z.shape)
    for s in range(len(lo)):
        xa, xb = x_edges[s], x_edges[s + 1]
        delta = 1e-12 * max(1.0, abs(xb))
        xc = np.clip(x[lo[s]:hi[s] + 1], xa + delta, xb - delta)
        v = pot.V(xc)
        c[lo[s]:hi[s] + 1] = 1.0 / np.sqrt(v)
        lam[lo[s]:hi[s] + 1] = -0.5 * pot.dV(xc) * v ** -1.5
    lo = np.array(lo, dtype=np.int64)
    hi = np.array(hi, dtype=np.int64)
    gam = 1.0 / (1.0 / c[hi[:-1]] + 1.0 / c[lo[1:]])
    ranges = [(x_edges[s], x_edges[s + 1]) for s in range(len(lo))]
    return Grid(h, J, lo, hi, zidx, z, x, c, lam, gam, ranges, snaps, bool(np.any(lam != 0.0)),
                cfg.mode == "bounded")


def _u1_antiderivative(cfg: SimulationConfig, grid: Grid) -> np.ndarray:
    """Integral of u1(kappa^-1(z)) dz from 0 to each node, by 8-point Gauss per cell."""
    pot = cfg.potential
    h = grid.h
    cells = np.arange(grid.J)
    nodes = (cells[:, None] + 0.5 + 0.5 * _GL_X[None, :]) * h
    xq = np.asarray(pot.kappa_inv(np.minimum(nodes.ravel(), pot.z_max))).reshape(nodes.shape)
    vals = cfg.data.u1(xq) @ _GL_W * (0.5 * h)
    cum = np.concatenate([[0.0], np.cumsum(vals)])
    return cum[grid.zidx]


def init_state(cfg: SimulationConfig, grid: Grid | None = None) -> FieldState:
    """Sample u0, u0', u1 at the nodes and assemble the invariants."""
    if grid is None:
        grid = build_grid(cfg)
    nl = cfg.nonlinearity
    x = grid.x
    u0 = cfg.data.u0(x)
    du0 = cfg.data.u0.dg(x)
    u1 = cfg.data.u1(x)
    if not (np.all(np.isfinite(u0)) and np.all(np.isfinite(du0)) and np.all(np.isfinite(u1))):
        raise ConfigInvalid("initial data are not finite on the grid")
    if cfg.mode == "bounded":
        uL = float(cfg.data.u0(np.array(cfg.L)))
        if abs(uL) > 1e-12 * max(1.0, float(np.max(np.abs(u0)))):
            raise IncompatibleData(f"u0(L) = {uL:.3e} but the wall requires u(L, t) = 0")
        u0[grid.hi[-1]] = 0.0
    uz = du0 * grid.c
    wp = u1 + uz
    wm = u1 - uz
    U1 = _u1_antiderivative(cfg, grid)
    F = 0.5 * (u0 + U1)
    G = 0.5 * (u0 - U1)
    b = float(cfg.data.u0(np.array(0.0)))
    d = float(nl.f(np.array(float(cfg.data.u1(np.array(0.0))))))
    return FieldState(0.0, u0.copy(), wp, wm, F, G, b, d, grid, 0)


def _kernel_args(cfg: SimulationConfig):
    return _kernel_args_nl(cfg.nonlinearity)


def _kernel_args_nl(nl):
    if nl.kernel is None:
        return None
    kind, p, K = nl.kernel
    if math.isfinite(K):
        fhi = float(nl.f(np.array(K)))
        flo = float(nl.f(np.array(-K)))
    else:
        fhi, flo = math.inf, -math.inf
    return int(kind), float(p), float(K), fhi, flo


def resolve_backend(cfg: SimulationConfig) -> str:
    want = cfg.backend
    if want == "numpy":
        return "numpy"
    if kernels.NUMBA_ENABLED and cfg.nonlinearity.kernel is not None:
        return "numba"
    if want == "numba":
        raise ConfigInvalid("numba backend unavailable (disabled, missing, or custom nonlinearity)")
    return "numpy"


def stage_solver(nl):
    """Scalar root finder for f(y) + alpha * y = r (alpha > 0, f increasing)."""
    args = _kernel_args_nl(nl)
    if args is not None:
        kind, p, K, fhi, flo = args
        return lambda alpha, r: kernels.stage_solve(alpha, r, kind, p, K, fhi, flo)

    def solve(alpha, r):
        g = lambda y: float(nl.f(np.array(y))) + alpha * y - r
        lo, hi = -1.0, 1.0
        while g(lo) > 0:
            lo *= 2.0
        while g(hi) < 0:
            hi *= 2.0
        return optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)

    return solve


def boundary_stepper(cfg: SimulationConfig):
    nl = cfg.nonlinearity
    stage = stage_solver(nl) if nl.increasing else None
    finv = lambda v: float(nl.f_inv(np.array(v)))
    m = cfg.substeps

    def bstep(w, s0, s1, h, c0, d, b):
        return kernels.boundary_step_py(w, s0, s1, h, c0, d, b, stage, finv, m, nl.increasing)

    return bstep


def _march(cfg: SimulationConfig, st: FieldState, nsteps: int, backend: str) -> np.ndarray:
    g = st.grid
    trace = np.empty((nsteps, 6))
    if nsteps == 0:
        return trace
    use_pot = (not g.has_lam) and (not cfg.general_path)
    args = (st.wp, st.wm, st.F, st.G, st.u, g.lo, g.hi, g.c, g.lam, g.gam, g.has_lam, use_pot,
            g.right_wall, g.h, nsteps, st.t)
    if backend == "numba":
        kind, p, K, fhi, flo = _kernel_args(cfg)
        b, d = kernels.march_loops(*args, st.b, st.d, kind, p, K, fhi, flo, cfg.substeps,
                                   cfg.nonlinearity.increasing, trace)
    else:
        b, d = kernels.march_numpy(*args, st.b, st.d, boundary_stepper(cfg), trace)
    st.b, st.d = float(b), float(d)
    st.step += nsteps
    st.t = st.t0 + st.step * g.h
    return trace


def _check_wellposed(cfg: SimulationConfig) -> None:
    if not cfg.nonlinearity.increasing and not cfg.allow_illposed:
        raise DecreasingNonlinearity(
            f"boundary law {cfg.nonlinearity.label} is decreasing; the forward problem is not "
            "well posed (pass allow_illposed to override)")


def advance_step(cfg: SimulationConfig, state: FieldState, nsteps: int = 1) -> FieldState:
    """Return the state `nsteps` grid steps later; the input is left untouched."""
    _check_wellposed(cfg)
    new = state.copy()
    _march(cfg, new, nsteps, resolve_backend(cfg))
    return new


def _row0(st: FieldState) -> np.ndarray:
    g = st.grid
    ef, mf = kernels.field_integrals(st.wp, st.wm, g.c, g.lo, g.hi, g.h)
    return np.array([st.t, st.b, st.d, float(0.5 * (st.wp[0] + st.wm[0])), ef, mf])


def consistency_gap(st: FieldState) -> float:
    """max |u - (b + integral of u_z from 0)|, the spatial cross-check of u."""
    g = st.grid
    uz = st.uz
    rec = np.empty_like(st.u)
    acc = st.b
    for s in range(len(g.lo)):
        sl = slice(g.lo[s], g.hi[s] + 1)
        seg = uz[sl]
        cum = np.concatenate([[0.0], np.cumsum(0.5 * g.h * (seg[1:] + seg[:-1]))])
        rec[sl] = acc + cum
        acc = rec[g.hi[s]]
    return float(np.max(np.abs(rec - st.u)))


def run_simulation(cfg: SimulationConfig, state: FieldState | None = None) -> SolutionRecord:
    _check_wellposed(cfg)
    t_start = time.perf_counter()
    grid = build_grid(cfg) if state is None else state.grid
    st = init_state(cfg, grid) if state is None else state.copy()
    backend = resolve_backend(cfg)
    nsteps = cfg.nsteps
    marks = {0, nsteps}
    if cfg.snapshot_every:
        marks.update(range(0, nsteps + 1, int(cfg.snapshot_every)))
    for t in cfg.snapshot_times:
        k = int(round(t / grid.h))
        if 0 <= k <= nsteps:
            marks.add(k)
    marks = sorted(marks)

    snaps = [Snapshot(st.t, st.step, st.u.copy(), st.wp.copy(), st.wm.copy())]
    rows = [_row0(st)[None, :]]
    gap = consistency_gap(st)
    for k0, k1 in zip(marks[:-1], marks[1:]):
        rows.append(_march(cfg, st, k1 - k0, backend))
        snaps.append(Snapshot(st.t, st.step, st.u.copy(), st.wp.copy(), st.wm.copy()))
        gap = max(gap, consistency_gap(st))
    trace = np.concatenate(rows, axis=0)
    nl = cfg.nonlinearity
    E = trace[:, 4] + nl.F(trace[:, 3])
    M = trace[:, 5] + nl.f(trace[:, 3])
    runtime = time.perf_counter() - t_start
    meta = {
        "config": cfg.echo,
        "grid": {"dz": grid.h, "nodes": grid.n, "segments": int(len(grid.lo)), "z_end": grid.J * grid.h,
                 "steps": nsteps, "t_end": nsteps * grid.h, "general_path": bool(grid.has_lam or cfg.general_path)},
        "snap_errors": grid.snaps,
        "max_snap_error": max([s["error"] for s in grid.snaps], default=0.0),
        "u_consistency_gap": gap,
        "backend": backend,
        "runtime_s": runtime,
    }
    return SolutionRecord(cfg, grid, snaps, trace, E, M, meta, st)


def run_bounded_domain(cfg: SimulationConfig) -> SolutionRecord:
    if cfg.mode != "bounded":
        raise ConfigInvalid("run_bounded_domain needs mode 'bounded' with L")
    return run_simulation(cfg)
