import numpy as np
import pytest

from charwave.errors import DecreasingNonlinearity
from charwave.interface_boundary import (InterfaceCoefficients, boundary_trace_solve, dirichlet_wall_step,
                                         jump_trace_solve, jump_transmission_step)
from charwave.nonlinearity import make_standard
from charwave.triangles import CauchyData, Triangle


def brute_force(cm, cp, wm, wp):
    """Solve for (u_t, u_z-, u_z+): w- = u_t - u_z-, w+ = u_t + u_z+, u_z-/c- = u_z+/c+."""
    A = np.array([[1.0, -1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0 / cm, -1.0 / cp]])
    return np.linalg.solve(A, np.array([wm, wp, 0.0]))


def zero(z):
    return np.zeros_like(z)


def test_transmission_example():
    co = InterfaceCoefficients(0.0, 1.0, 0.5)
    assert co.gamma == pytest.approx(1 / 3, abs=1e-15)
    out = jump_transmission_step(co, 1.0, 0.0)
    assert np.allclose(out, brute_force(1.0, 0.5, 1.0, 0.0), atol=1e-15)
    assert np.allclose(out, (1 / 3, -2 / 3, -1 / 3), atol=1e-15)


def test_transmission_zero():
    assert jump_transmission_step(InterfaceCoefficients(0.0, 2.0, 0.3), 0.0, 0.0) == (0.0, 0.0, 0.0)


def test_transmission_random(rng):
    cm, cp = rng.uniform(0.1, 3.0, (2, 10_000))
    wm, wp = rng.normal(size=(2, 10_000))
    worst = 0.0
    for i in range(0, 10_000, 97):
        out = jump_transmission_step(InterfaceCoefficients(0.0, cm[i], cp[i]), wm[i], wp[i])
        assert np.allclose(out, brute_force(cm[i], cp[i], wm[i], wp[i]), rtol=1e-12, atol=1e-12)
    ut, a, b = jump_transmission_step(InterfaceCoefficients(0.0, cm, cp), wm, wp)
    worst = np.max(np.abs(a / cm - b / cp) / (1 + np.abs(a / cm)))
    assert worst <= 1e-14


def test_wall():
    assert dirichlet_wall_step(0.0) == 0.0
    assert dirichlet_wall_step(0.7) == -0.7


def test_jump_zero_data():
    tri = Triangle(1.0, 0.0, 0.5, "full", 0.01)
    data = CauchyData.from_callables(tri, lambda z: 0.3 + 0 * z, zero, zero)
    sol = jump_trace_solve(tri, data, 1.0, 0.5)
    assert sol.report.iterations == 1
    assert np.all(sol.trace.b == 0.3)


def jump_case(h, lam=0.0):
    # u0' / c continuous across z0 = 1 where c jumps from 1 to 1/2
    tri = Triangle(1.0, 0.0, 0.5, "full", h)
    c = lambda z: np.where(z < 1.0, 1.0, 0.5)
    data = CauchyData.from_callables(tri, lambda z: c(z) * np.sin(3 * (z - 1)), lambda z: 3 * c(z) * np.cos(3 * (z - 1)),
                                     np.cos)
    return tri, data, jump_trace_solve(tri, data, 1.0, 0.5, lam, lam)


def test_jump_matches_transmission():
    tri, data, sol = jump_case(0.01)
    t = tri.times()
    z0 = tri.z0
    wm_in = np.cos(z0 - t) - 3 * np.cos(3 * t)
    wp_in = np.cos(z0 + t) + 1.5 * np.cos(3 * t)
    ut, uzm, uzp = jump_transmission_step(InterfaceCoefficients(z0, 1.0, 0.5), wm_in, wp_in)
    assert np.max(np.abs(sol.trace.bprime - ut)) <= 1e-10
    # the base carries one u0' sample at z0 (the right limit), so row 0 is one-sided
    assert np.max(np.abs(sol.minus.uz[1:, -1] - uzm[1:])) <= 1e-10
    assert np.max(np.abs(sol.plus.uz[:, 0] - uzp)) <= 1e-10


def test_jump_contraction_with_lambda():
    _, _, sol = jump_case(0.01, lam=0.4)
    rep = sol.report
    assert rep.updates[-1] <= 1e-12
    assert all(f <= rep.beta / rep.mu + 1e-12 for f in rep.factors)


def boundary_linear(h):
    tri = Triangle(0.0, 0.0, 2.0, "half_plus", h)
    data = CauchyData.from_callables(tri, lambda z: z, lambda z: 1 + 0 * z, zero)
    return tri, boundary_trace_solve(tri, data, make_standard("linear", a=1.0))


def test_boundary_linear_ode():
    errs = []
    for h in (0.02, 0.01, 0.005):
        tri, sol = boundary_linear(h)
        errs.append(np.max(np.abs(sol.trace.d - (1 - np.exp(-tri.times())))))
    assert errs[-1] <= 1e-6
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_boundary_zero_data():
    tri = Triangle(0.0, 0.0, 1.0, "half_plus", 0.01)
    data = CauchyData.from_callables(tri, zero, zero, zero)
    sol = boundary_trace_solve(tri, data, make_standard("cubic", gamma=1.0))
    assert np.all(sol.trace.d == 0.0)
    assert np.all(sol.field.u[tri.mask()] == 0.0)


def test_boundary_dissipative():
    # w_in = u1 + u0' = 0 with u_t(0, 0) = 0.5
    tri = Triangle(0.0, 0.0, 2.0, "half_plus", 0.01)
    data = CauchyData.from_callables(tri, lambda z: -0.5 * z, lambda z: -0.5 + 0 * z, lambda z: 0.5 + 0 * z)
    sol = boundary_trace_solve(tri, data, make_standard("cubic", gamma=1.0))
    d = np.abs(sol.trace.d)
    assert d[0] > 0
    assert np.all(np.diff(d) <= 1e-15)


def test_boundary_refuses_decreasing():
    tri = Triangle(0.0, 0.0, 1.0, "half_plus", 0.01)
    data = CauchyData.from_callables(tri, zero, zero, zero)
    with pytest.raises(DecreasingNonlinearity):
        boundary_trace_solve(tri, data, make_standard("cubic", gamma=-2.0))


def test_general_and_fast_paths_agree():
    tri = Triangle(0.0, 0.0, 1.0, "half_plus", 0.01)
    data = CauchyData.from_callables(tri, lambda z: 0.2 * np.sin(z), lambda z: 0.2 * np.cos(z), lambda z: 0.3 * z)
    nl = make_standard("cubic", gamma=1.0)
    a = boundary_trace_solve(tri, data, nl, general=False)
    b = boundary_trace_solve(tri, data, nl, general=True)
    assert np.max(np.abs(a.trace.b - b.trace.b)) <= 1e-12
    assert np.max(np.abs(a.trace.d - b.trace.d)) <= 1e-12


def test_general_path_with_lambda():
    tri = Triangle(0.0, 0.0, 1.0, "half_plus", 0.01)
    data = CauchyData.from_callables(tri, lambda z: 0.2 * np.sin(z), lambda z: 0.2 * np.cos(z), lambda z: 0.3 * z)
    nl = make_standard("cubic", gamma=1.0)
    sol = boundary_trace_solve(tri, data, nl, lam=lambda z: -0.5 / (z + 1.0))
    assert sol.report.iterations > 1
    assert sol.report.updates[-1] <= 1e-12
    # the boundary law holds on the output: b' = f^-1(d), w_out = 2 b' - w_in
    assert np.allclose(nl.f(sol.trace.bprime), sol.trace.d, atol=1e-12)
