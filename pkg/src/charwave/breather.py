"""Time-periodic localized solutions in the resonant periodic step medium.

The medium is the 2pi-periodic profile V = a on |x| < theta*pi and V = b on
theta*pi < |x| < pi.  Fields are odd-harmonic series
u(x, t) = sum_k alpha_k phi_k(x) e_k(t), with e_k(t) = exp(i k omega t) / sqrt(T)
and phi_k the decaying Bloch mode of -phi'' - k^2 omega^2 V phi = 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConfigInvalid, DegenerateFloquet, EvenHarmonicPresent, EvenK, NewtonDiverged,
                     ResonanceViolated, TrivialSolution)
from .ivp.config import SimulationConfig
from .ivp.data import InitialData, Profile
from .ivp.solver import run_simulation
from .nonlinearity import Nonlinearity, make_standard
from .potential import Potential, build_potential


@dataclass(frozen=True)
class BreatherMedium:
    a: float
    b: float
    theta: float
    omega: float
    m_a: int
    m_b: int

    @property
    def T(self) -> float:
        return 2.0 * math.pi / self.omega

    @property
    def rho(self) -> float:
        return (math.log(self.b) - math.log(self.a)) / (4.0 * math.pi)

    def cell(self) -> list[tuple[float, float]]:
        """(V, length) of the pieces of the cell [0, 2pi)."""
        return [(self.a, self.theta * math.pi), (self.b, 2.0 * (1.0 - self.theta) * math.pi),
                (self.a, self.theta * math.pi)]

    def potential(self, x_max: float) -> Potential:
        return build_potential({"kind": "periodic_step", "a": self.a, "b": self.b, "theta": self.theta},
                               x_max=x_max)


def _odd_residual(m: float) -> float:
    n = 2.0 * math.floor(m / 2.0) + 1.0
    return min(abs(m - n), abs(m - (n - 2.0)), abs(m - (n + 2.0)))


def validate_resonance(a: float, b: float, theta: float, omega: float, tol: float = 1e-9) -> BreatherMedium:
    if not (0.0 < a < b):
        raise ConfigInvalid("need 0 < a < b")
    if not (0.0 < theta < 1.0):
        raise ConfigInvalid("need theta in (0, 1)")
    if not omega > 0.0:
        raise ConfigInvalid("need omega > 0")
    ma = 4.0 * math.sqrt(a) * theta * omega
    mb = 4.0 * math.sqrt(b) * (1.0 - theta) * omega
    ra, rb = _odd_residual(ma), _odd_residual(mb)
    if ra > tol or rb > tol or ma < 1.0 - tol or mb < 1.0 - tol:
        raise ResonanceViolated(
            f"resonance fails: 4 sqrt(a) theta omega = {ma:.12g} (off by {ra:.2e}), "
            f"4 sqrt(b) (1 - theta) omega = {mb:.12g} (off by {rb:.2e}); both must be odd integers",
            (ra, rb))
    return BreatherMedium(a, b, theta, omega, int(round(ma)), int(round(mb)))


def piece_transfer(v: float, length: float, k: int, omega: float) -> np.ndarray:
    s = abs(k) * omega * math.sqrt(v)
    c, sn = math.cos(s * length), math.sin(s * length)
    return np.array([[c, sn / s], [-s * sn, c]])


def monodromy(medium: BreatherMedium, k: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """Transfer matrix of [phi, phi'] over one cell and the per-piece factors."""
    mats = [piece_transfer(v, ln, k, medium.omega) for v, ln in medium.cell()]
    out = np.eye(2)
    for m in mats:
        out = m @ out
    return out, mats


@dataclass(frozen=True)
class BlochMode:
    k: int
    mu: float
    dphi0: float
    medium: BreatherMedium
    phi0: float = 1.0

    @property
    def multiplier(self) -> float:
        """Multiplier over 4pi."""
        return self.mu * self.mu

    @property
    def decay_rate(self) -> float:
        return -math.log(self.multiplier) / (4.0 * math.pi)

    def eval(self, x) -> tuple[np.ndarray, np.ndarray]:
        """phi_k and phi_k' at x >= 0."""
        x = np.asarray(x, dtype=float)
        period = 2.0 * math.pi
        n = np.floor(x / period)
        r = x - n * period
        scale = self.mu ** n
        phi = np.empty(x.shape)
        dphi = np.empty(x.shape)
        state = np.array([self.phi0, self.dphi0])
        x0 = 0.0
        pieces = self.medium.cell()
        for i, (v, ln) in enumerate(pieces):
            s = abs(self.k) * self.medium.omega * math.sqrt(v)
            last = i == len(pieces) - 1
            sel = (r >= x0) & ((r < x0 + ln) | last)
            y = r[sel] - x0
            phi[sel] = state[0] * np.cos(s * y) + state[1] / s * np.sin(s * y)
            dphi[sel] = -state[0] * s * np.sin(s * y) + state[1] * np.cos(s * y)
            state = piece_transfer(v, ln, self.k, self.medium.omega) @ state
            x0 += ln
        return scale * phi, scale * dphi


def bloch_mode(medium: BreatherMedium, k: int, gap_tol: float = 1e-12) -> BlochMode:
    if k % 2 == 0:
        raise EvenK(f"k = {k} is even; only odd harmonics carry a decaying mode")
    M, _ = monodromy(medium, k)
    w, v = np.linalg.eig(M)
    if abs(w[0] - w[1]) < gap_tol:
        raise DegenerateFloquet(f"Floquet multipliers coincide for k = {k}")
    i = int(np.argmin(np.abs(w)))
    mu = w[i]
    vec = v[:, i]
    if abs(mu.imag) > 1e-12 or abs(vec[0]) < 1e-14:
        raise DegenerateFloquet(f"no real decaying eigenvector for k = {k}")
    return BlochMode(abs(k), float(mu.real), float((vec[1] / vec[0]).real), medium)


def bloch_modes(medium: BreatherMedium, N: int) -> dict[int, BlochMode]:
    return {k: bloch_mode(medium, k) for k in range(1, N + 1, 2)}


@dataclass
class TraceCoefficients:
    """Coefficients for k = 1, 3, ..., N; negative k follow by conjugation."""

    N: int
    values: np.ndarray

    @property
    def ks(self) -> np.ndarray:
        return np.arange(1, self.N + 1, 2)

    @classmethod
    def zeros(cls, N: int) -> "TraceCoefficients":
        return cls(N, np.zeros((N + 1) // 2, dtype=complex))

    @classmethod
    def from_full(cls, full: np.ndarray, tol: float = 1e-12) -> "TraceCoefficients":
        """From an array indexed k = -N..N; even entries must vanish."""
        full = np.asarray(full, dtype=complex)
        N = (full.size - 1) // 2
        ks = np.arange(-N, N + 1)
        scale = max(1.0, float(np.max(np.abs(full))))
        if np.any(np.abs(full[ks % 2 == 0]) > tol * scale):
            raise EvenHarmonicPresent("even Fourier modes must vanish")
        centre = N
        if N % 2 == 0:
            N -= 1
        return cls(N, full[centre + np.arange(1, N + 1, 2)].copy())

    def full(self) -> np.ndarray:
        out = np.zeros(2 * self.N + 1, dtype=complex)
        out[self.N + self.ks] = self.values
        out[self.N - self.ks] = np.conj(self.values)
        return out


def _basis(medium: BreatherMedium, ks: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.exp(1j * np.outer(ks, medium.omega * t)) / math.sqrt(medium.T)


def synthesize_signal(medium: BreatherMedium, coeffs: TraceCoefficients, t) -> np.ndarray:
    """sum over odd |k| <= N of c_k e_k(t) (real)."""
    t = np.asarray(t, dtype=float)
    return 2.0 * np.real(coeffs.values @ _basis(medium, coeffs.ks, t))


def fourier_coefficients(medium: BreatherMedium, samples: np.ndarray, N: int, check_even: bool = True,
                         tol: float = 1e-10) -> TraceCoefficients:
    """ft_k of a signal sampled at M uniform times on [0, T), trapezoid rule."""
    samples = np.asarray(samples, dtype=float)
    M = samples.size
    t = np.arange(M) * medium.T / M
    ks_all = np.arange(1, N + 1)
    ft = (medium.T / M) * (np.conj(_basis(medium, ks_all, t)) @ samples)
    if check_even:
        scale = max(1e-300, float(np.max(np.abs(samples)))) * math.sqrt(medium.T)
        mean = abs(samples.mean()) * math.sqrt(medium.T)
        even = np.abs(ft[ks_all % 2 == 0])
        if mean > tol * scale or (even.size and even.max() > tol * scale):
            raise EvenHarmonicPresent("input trace carries even harmonics")
    return TraceCoefficients(N, ft[ks_all % 2 == 1].copy())


def trace_maps(medium: BreatherMedium, modes: dict, direction: str, data, nl: Nonlinearity | None = None,
               M: int | None = None, N: int | None = None):
    """alpha -> beta multiplies by phi_k'(0) / (i k omega); beta -> alpha integrates f^-1(beta) spectrally.

    For beta -> alpha, `data` is either TraceCoefficients or samples of beta on
    M uniform times of [0, T); `nl` defaults to the identity law.
    """
    if direction == "alpha_to_beta":
        if not isinstance(data, TraceCoefficients):
            data = TraceCoefficients.from_full(data)
        dp = np.array([modes[k].dphi0 for k in data.ks])
        return TraceCoefficients(data.N, dp / (1j * data.ks * medium.omega) * data.values)
    if direction != "beta_to_alpha":
        raise ConfigInvalid(f"unknown direction {direction!r}")
    finv = (lambda y: y) if nl is None else nl.f_inv
    if isinstance(data, TraceCoefficients):
        N = data.N
        M = M or 16 * N
        t = np.arange(M) * medium.T / M
        beta = synthesize_signal(medium, data, t)
    else:
        beta = np.asarray(data, dtype=float)
        if N is None:
            raise ConfigInvalid("sampled input needs the truncation N")
        if beta.size < 8 * N:
            raise ConfigInvalid(f"need at least 8N = {8 * N} samples")
        fourier_coefficients(medium, beta, N)
    dalpha = fourier_coefficients(medium, np.asarray(finv(beta), dtype=float), N, check_even=False)
    return TraceCoefficients(N, dalpha.values / (1j * dalpha.ks * medium.omega))


def breather_residual(medium: BreatherMedium, modes: dict, coeffs: TraceCoefficients, gamma: float,
                      M: int | None = None) -> np.ndarray:
    """R_k = phi_k'(0) alpha_k - i k omega ft_k(f(alpha')) for k = 1, 3, ..., N."""
    N = coeffs.N
    M = M or 16 * N
    t = np.arange(M) * medium.T / M
    ks = coeffs.ks
    dalpha = TraceCoefficients(N, 1j * ks * medium.omega * coeffs.values)
    v = synthesize_signal(medium, dalpha, t)
    beta = fourier_coefficients(medium, 0.5 * gamma * v ** 3, N, check_even=False)
    dp = np.array([modes[k].dphi0 for k in ks])
    return dp * coeffs.values - 1j * ks * medium.omega * beta.values


@dataclass
class SynthesisReport:
    coeffs: TraceCoefficients
    residual: float
    iterations: int
    history: list = field(default_factory=list)
    C: float = math.nan

    @property
    def amplitudes(self) -> np.ndarray:
        return np.abs(self.coeffs.values)


def seed_amplitude(medium: BreatherMedium, mode1: BlochMode, gamma: float) -> float:
    """Real alpha_1 balancing the k = 1 equation with a single mode."""
    w = medium.omega
    return math.sqrt(abs(-2.0 * mode1.dphi0 * medium.T / (3.0 * gamma * w ** 4)))


def synthesize_breather(medium: BreatherMedium, gamma: float, N: int, seed: TraceCoefficients | None = None,
                        tol: float = 1e-10, max_iter: int = 50, fd_step: float = 1e-6,
                        modes: dict | None = None) -> SynthesisReport:
    """Newton iteration on the truncated odd-harmonic system.

    Unknowns are Re and Im of alpha_k, k = 1, 3, ..., N; the Jacobian is built
    by forward differences and solved in the least-squares sense (the system
    is invariant under time shifts, so it is singular along one direction).
    """
    if N < 1 or N % 2 == 0:
        raise ConfigInvalid("N must be a positive odd integer")
    modes = modes or bloch_modes(medium, N)
    n = (N + 1) // 2
    if seed is None:
        seed = TraceCoefficients.zeros(N)
        seed.values[0] = seed_amplitude(medium, modes[1], gamma)

    def pack(c):
        return np.concatenate([c.real, c.imag])

    def unpack(x):
        return TraceCoefficients(N, x[:n] + 1j * x[n:])

    def res(x):
        return pack(breather_residual(medium, modes, unpack(x), gamma))

    x = pack(np.asarray(seed.values, dtype=complex))
    r = res(x)
    hist = [float(np.max(np.abs(r)))]
    it = 0
    while hist[-1] > tol:
        if it >= max_iter or not math.isfinite(hist[-1]):
            raise NewtonDiverged(f"Newton stopped after {it} iterations with residual {hist[-1]:.3e}", hist[-1])
        h = fd_step * max(1.0, float(np.max(np.abs(x))))
        J = np.empty((r.size, x.size))
        for j in range(x.size):
            e = x.copy()
            e[j] += h
            J[:, j] = (res(e) - r) / h
        x = x + np.linalg.lstsq(J, -r, rcond=None)[0]
        r = res(x)
        hist.append(float(np.max(np.abs(r))))
        it += 1
    coeffs = unpack(x)
    if float(np.max(np.abs(coeffs.values))) < 1e-8:
        raise TrivialSolution("Newton converged to the zero solution; retry with a scaled seed")
    k = np.arange(1, N + 1, 2)
    C = float(np.mean([modes[int(q)].dphi0 / (q * (-1) ** ((q - 1) // 2)) for q in k]))
    return SynthesisReport(coeffs, hist[-1], it, hist, C)


@dataclass
class BreatherField:
    u: np.ndarray
    ut: np.ndarray
    ux: np.ndarray
    utx: np.ndarray
    imag_max: float


def breather_field_eval(medium: BreatherMedium, modes: dict, coeffs: TraceCoefficients, x, t) -> BreatherField:
    """Fields on the grid t x x (shape (len(t), len(x)))."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    shape = (t.size, x.size)
    acc = {key: np.zeros(shape, dtype=complex) for key in ("u", "ut", "ux", "utx")}
    for k, a in zip(coeffs.ks, coeffs.values):
        if a == 0:
            continue
        phi, dphi = modes[int(k)].eval(x)
        for kk, ak in ((k, a), (-k, np.conj(a))):
            e = ak * np.exp(1j * kk * medium.omega * t) / math.sqrt(medium.T)
            de = 1j * kk * medium.omega * e
            acc["u"] += np.outer(e, phi)
            acc["ut"] += np.outer(de, phi)
            acc["ux"] += np.outer(e, dphi)
            acc["utx"] += np.outer(de, dphi)
    imag = max(float(np.max(np.abs(v.imag))) if v.size else 0.0 for v in acc.values())
    return BreatherField(acc["u"].real, acc["ut"].real, acc["ux"].real, acc["utx"].real, imag)


def initial_profiles(medium: BreatherMedium, modes: dict, coeffs: TraceCoefficients) -> InitialData:
    def field_at(x, key):
        xs = np.asarray(x, dtype=float)
        f = breather_field_eval(medium, modes, coeffs, xs.ravel(), [0.0])
        return getattr(f, key)[0].reshape(xs.shape)

    echo = {"kind": "breather", "N": coeffs.N}
    u0 = Profile(lambda x: field_at(x, "u"), lambda x: field_at(x, "ux"), math.inf, echo)
    u1 = Profile(lambda x: field_at(x, "ut"), lambda x: field_at(x, "utx"), math.inf, echo)
    return InitialData(u0, u1)


@dataclass
class RoundTripReport:
    dz: float
    period_error: float
    antiperiod_error: float
    energy_drift: float
    x_check: float
    envelope_ratio: float
    envelope_target: float
    runtime_s: float
    meta: dict = field(default_factory=dict)


def envelope_ratio(medium: BreatherMedium, modes: dict, coeffs: TraceCoefficients, x: float,
                   samples: int = 4096) -> float:
    """max_t |u(x, t)| / max_t |u(0, t)| over one period."""
    t = np.arange(samples) * medium.T / samples
    f = breather_field_eval(medium, modes, coeffs, [0.0, x], t)
    a0 = float(np.max(np.abs(f.u[:, 0])))
    return float(np.max(np.abs(f.u[:, 1]))) / a0 if a0 > 0 else 0.0


def breather_roundtrip_check(medium: BreatherMedium, modes: dict, coeffs: TraceCoefficients, gamma: float,
                             steps_per_period: int = 6280, x_check: float = 8.0 * math.pi,
                             substeps: int = 4, nl: Nonlinearity | None = None) -> RoundTripReport:
    """Run the IVP from the breather's own data over one period.

    The step count per period must be a multiple of 8 so that T/2, T and the
    images of the medium's jumps (multiples of T/8 in z when omega = 1) fall on
    grid nodes.  Errors are measured on x <= x_check, which the truncation at
    the right end of the domain cannot reach within one period.
    """
    if steps_per_period % 8:
        raise ConfigInvalid("steps_per_period must be a multiple of 8")
    nl = nl or make_standard("cubic", gamma=gamma)
    T = medium.T
    dz = T / steps_per_period
    scale = max(1.0, medium.m_a, medium.m_b)
    x_need = x_check + (T + 1.0) * math.sqrt(medium.b) * scale + 2 * math.pi
    pot = medium.potential(x_need + 4 * math.pi)
    z_check = float(pot.kappa(x_check))
    z_end = z_check + T + 16 * dz
    z_end = math.ceil(z_end / dz) * dz
    data = initial_profiles(medium, modes, coeffs)
    cfg = SimulationConfig(pot, nl, data, T=T, dz=dz, snapshot_times=(0.5 * T, T), z_extent=z_end,
                           substeps=substeps)
    rec = run_simulation(cfg)
    keep = rec.grid.z <= z_check + 1e-9
    u0 = rec.snapshots[0].u[keep]
    uh = rec.snapshot(0.5 * T).u[keep]
    uT = rec.snapshot(T).u[keep]
    E = rec.E
    target = math.exp(-medium.rho * 4.0 * math.pi)
    return RoundTripReport(dz, float(np.max(np.abs(uT - u0))), float(np.max(np.abs(uh + u0))),
                           float(np.max(np.abs(E - E[0])) / max(abs(E[0]), 1e-300)), x_check,
                           envelope_ratio(medium, modes, coeffs, 4.0 * math.pi), target,
                           rec.meta["runtime_s"], {"nodes": rec.grid.n, "steps": cfg.nsteps})
