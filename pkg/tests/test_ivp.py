import math
from dataclasses import replace

import numpy as np
import pytest
import sympy as sp

from charwave.cli import convergence_ladder
from charwave.errors import ConfigInvalid, DecreasingNonlinearity, IncompatibleData
from charwave.ivp import (InitialData, SimulationConfig, advance_step, bump, from_dict, init_state, run_bounded_domain,
                          run_simulation)
from charwave.ivp.demo import boundary_identity_residual, nonuniqueness_demo, up
from charwave.ivp.solver import resolve_backend
from charwave.ivp import kernels
from charwave.nonlinearity import make_standard
from charwave.potential import build_potential

from conftest import A5, load_config, sym_bump

ONE = [{"x0": 0.0, "x1": None, "kind": "const", "value": 1.0}]
CUBIC = make_standard("cubic", gamma=1.0)


def const_cfg(data, T, dz, **kw):
    return SimulationConfig(build_potential(ONE), CUBIC, data, T=T, dz=dz, **kw)


def dalembert_reference(center, halfwidth, a0, a1):
    """Closed-form u(x, t) on the whole line for bump data, via exact antiderivatives."""
    x, g, G = sym_bump(center, halfwidth)
    t = sp.Symbol("t", real=True)
    u = (a0 * (g.subs(x, x - t) + g.subs(x, x + t)) + a1 * (G.subs(x, x + t) - G.subs(x, x - t))) / 2
    return sp.lambdify((x, t), u, "numpy")


def test_defaults():
    raw = {"potential": {"pieces": ONE}, "nonlinearity": {"kind": "cubic", "gamma": 1.0},
           "initial": {"u1": {"kind": "bump", "center": 2.0, "halfwidth": 1.0}}, "T": 1.0}
    cfg = from_dict(raw)
    assert cfg.dz == 1e-3 and cfg.tol == 1e-10
    assert cfg.mode == "half_line"


def test_missing_field_named():
    with pytest.raises(ConfigInvalid, match="nonlinearity"):
        from_dict({"potential": {"pieces": ONE}, "T": 1.0})


def test_zero_data_stays_zero():
    cfg = const_cfg(InitialData(), 2.0, 0.01, z_extent=3.0)
    st = init_state(cfg)
    for a in (st.u, st.wp, st.wm, st.F, st.G):
        assert np.all(a == 0.0)
    nxt = advance_step(cfg, st, 5)
    assert np.all(nxt.u == 0.0) and nxt.t == pytest.approx(0.05)
    rec = run_simulation(cfg)
    assert all(np.all(s.u == 0.0) for s in rec.snapshots)
    assert np.all(rec.trace[:, 1:4] == 0.0)


def test_advance_leaves_input():
    cfg = const_cfg(InitialData(bump(2, 1), bump(2, 1)), 1.0, 0.01)
    st = init_state(cfg)
    before = st.u.copy()
    advance_step(cfg, st, 3)
    assert np.array_equal(st.u, before) and st.step == 0


def test_causality_boundary_quiet():
    cfg = const_cfg(InitialData(bump(6, 1), bump(6, 1)), 4.5, 0.005)
    rec = run_simulation(cfg)
    assert np.all(rec.trace[:, 1:4] == 0.0)


def test_causality_twin_runs():
    base = const_cfg(InitialData(bump(3, 1, 0.5), bump(3, 1)), 1.5, 0.005, z_extent=13.0)
    far = bump(10, 0.5, 2.0)
    twin = replace(base, data=InitialData(base.data.u0 + far, base.data.u1 + far))
    a, b = run_simulation(base), run_simulation(twin)
    keep = a.grid.z <= 9.5 - 1.5
    assert np.array_equal(a.final.u[keep], b.final.u[keep])
    assert np.array_equal(a.final.wp[keep], b.final.wp[keep])
    assert not np.array_equal(a.final.u, b.final.u)


def test_interior_matches_dalembert():
    ref = dalembert_reference(4, 1, 0.5, 1.0)
    cfg = const_cfg(InitialData(bump(4, 1, 0.5), bump(4, 1)), 2.0, 0.01, snapshot_every=20)
    rec = run_simulation(cfg)
    for s in rec.snapshots:
        assert np.max(np.abs(s.u - ref(rec.grid.z, s.t))) <= 1e-12


def test_backends_agree(step_cfg):
    if not kernels.NUMBA_ENABLED:
        pytest.skip("numba disabled")
    cfg = replace(step_cfg, T=3.0, dz=4e-3)
    a = run_simulation(replace(cfg, backend="numba"))
    b = run_simulation(replace(cfg, backend="numpy"))
    assert a.meta["backend"] == "numba" and b.meta["backend"] == "numpy"
    assert np.max(np.abs(a.final.u - b.final.u)) <= 1e-12
    assert np.max(np.abs(a.E - b.E)) <= 1e-12


def test_custom_law_uses_numpy():
    nl = make_standard("custom", f=lambda y: y + y ** 3)
    cfg = SimulationConfig(build_potential(ONE), nl, InitialData(bump(2, 1)), T=1.0, dz=0.01)
    assert resolve_backend(cfg) == "numpy"
    with pytest.raises(ConfigInvalid):
        resolve_backend(replace(cfg, backend="numba"))


def test_energy_nonnegative_and_consistency(step_cfg):
    rec = run_simulation(replace(step_cfg, T=4.0, dz=4e-3))
    assert np.all(rec.E >= 0)
    assert rec.meta["u_consistency_gap"] <= 1e-3
    assert rec.meta["max_snap_error"] <= 0.5 * 4e-3


def test_grid_convergence():
    cfg = from_dict(load_config("const_cubic.json", T=4.0, dz=0.01))
    rows = convergence_ladder(cfg, 3)
    assert rows[-1][2] >= 1.5


def test_refuses_decreasing():
    cfg = SimulationConfig(build_potential(ONE), make_standard("cubic", gamma=-2.0), InitialData(), T=1.0,
                           dz=0.01, z_extent=1.0)
    with pytest.raises(DecreasingNonlinearity) as exc:
        run_simulation(cfg)
    assert exc.value.exit_code == 3


def test_bounded_zero_and_incompatible():
    pot = build_potential(A5, x_max=8 * math.pi)
    cfg = SimulationConfig(pot, CUBIC, InitialData(), T=2.0, dz=0.01, mode="bounded", L=6.0)
    rec = run_bounded_domain(cfg)
    assert np.all(rec.final.u == 0.0)
    with pytest.raises(IncompatibleData):
        run_bounded_domain(replace(cfg, data=InitialData(bump(6, 1))))


def test_bounded_energy(step_cfg):
    cfg = replace(step_cfg, mode="bounded", L=8.0, T=10.0, dz=2e-3)
    rec = run_bounded_domain(cfg)
    e = np.max(np.abs(rec.E - rec.E[0])) / rec.E[0]
    m = np.max(np.abs(rec.M - rec.M[0])) / max(abs(rec.M[0]), 1e-14)
    assert e <= 1e-3
    assert m > 10 * e


def test_up_boundary_identity_symbolic():
    x, t = sp.symbols("x t", positive=True)
    u = (sp.Rational(2, 3) * (t - x)) ** sp.Rational(3, 2)
    ut0 = sp.diff(u, t).subs(x, 0)
    ux0 = sp.diff(u, x).subs(x, 0)
    assert sp.simplify(ux0 - sp.diff(-ut0 ** 3, t)) == 0
    ts = np.linspace(0.1, 5, 1000)
    assert np.max(np.abs(boundary_identity_residual(ts))) <= 1e-12
    f = sp.lambdify((x, t), u)
    assert np.allclose(up(0.3, ts[ts > 0.3]), f(0.3, ts[ts > 0.3]), rtol=1e-14)


def test_nonuniqueness_demo():
    rep = nonuniqueness_demo()
    assert rep.boundary_residual <= 1e-12
    assert rep.weak["zero"] == 0.0
    for name in ("u_p", "u_p(t-1)", "-u_p(t-1)"):
        assert rep.weak[name] <= 1e-6
    assert rep.refused and rep.exit_code == 3
    assert len(rep.candidates_passing) >= 3
