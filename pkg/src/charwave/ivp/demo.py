"""Nonuniqueness for the decreasing law f(y) = -y^3 on V = 1 with zero data."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import CharwaveError
from ..nonlinearity import make_standard
from ..potential import build_potential
from .config import SimulationConfig
from .data import InitialData
from .solver import run_simulation


def up(x, t, tau: float = 0.0, sign: float = 1.0):
    """u_p(x, t - tau) = ((2/3)(t - tau - x))^(3/2) above the line x = t - tau, zero below."""
    s = np.maximum(np.asarray(t, dtype=float) - tau - np.asarray(x, dtype=float), 0.0)
    return sign * (2.0 * s / 3.0) ** 1.5


def up_t(x, t, tau: float = 0.0, sign: float = 1.0):
    s = np.maximum(np.asarray(t, dtype=float) - tau - np.asarray(x, dtype=float), 0.0)
    return sign * np.sqrt(2.0 * s / 3.0)


def up_x(x, t, tau: float = 0.0, sign: float = 1.0):
    return -up_t(x, t, tau, sign)


def boundary_identity_residual(t: np.ndarray) -> np.ndarray:
    """u_x(0, t) - (f(u_t(0, t)))_t for u_p and f(y) = -y^3, from the closed-form derivatives."""
    t = np.asarray(t, dtype=float)
    ux0 = up_x(0.0, t)
    # d/dt of -((2/3) t)^(3/2)
    dft = -np.sqrt(2.0 * t / 3.0)
    return ux0 - dft


@dataclass
class NonuniquenessReport:
    boundary_residual: float
    weak: dict
    refused: bool
    exit_code: int | None
    message: str
    t_range: tuple = (0.1, 5.0)
    notes: list = field(default_factory=list)

    @property
    def candidates_passing(self) -> list[str]:
        return [k for k, v in self.weak.items() if v <= 1e-6]


def candidates():
    from ..diagnostics import ZERO_CANDIDATE, ExactCandidate

    zero = lambda x: np.zeros(np.shape(x))
    out = {"zero": ZERO_CANDIDATE}
    for name, tau, sign in (("u_p", 0.0, 1.0), ("u_p(t-1)", 1.0, 1.0), ("-u_p(t-1)", 1.0, -1.0)):
        out[name] = ExactCandidate(lambda x, t, a=tau, s=sign: up_t(x, t, a, s),
                                   lambda x, t, a=tau, s=sign: up_x(x, t, a, s), zero, lines=(tau,))
    return out


def nonuniqueness_demo(dz: float = 1e-2, n_bank: int = 12, seed: int = 0, t_range=(0.1, 5.0),
                       samples: int = 1000) -> NonuniquenessReport:
    from ..diagnostics import weak_residual

    nl = make_standard("cubic", gamma=-2.0, label="f(y) = -y^3")
    t = np.linspace(t_range[0], t_range[1], samples)
    bres = float(np.max(np.abs(boundary_identity_residual(t))))
    weak = {name: weak_residual(c, nl, None, n_bank=n_bank, seed=seed).max_abs
            for name, c in candidates().items()}
    pot = build_potential([{"x0": 0.0, "x1": None, "kind": "const", "value": 1.0}])
    cfg = SimulationConfig(pot, nl, InitialData(), T=1.0, dz=dz, z_extent=1.0)
    try:
        run_simulation(cfg)
        refused, code, msg = False, 0, "forward solver accepted the decreasing law"
    except CharwaveError as exc:
        refused, code, msg = True, exc.exit_code, str(exc)
    return NonuniquenessReport(bres, weak, refused, code, msg, tuple(t_range))
