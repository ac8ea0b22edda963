"""Simulation configuration and its JSON ingestion."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .. import nonlinearity as nlmod
from ..errors import ConfigInvalid
from ..nonlinearity import Nonlinearity
from ..potential import Potential, build_potential
from .data import InitialData, from_config as profile_from_config

DEFAULTS = {
    "dz": 1e-3,
    "tol": 1e-10,
    "mode": "half_line",
    "substeps": 4,
    "snapshot_every": None,
    "snapshot_times": [],
    "allow_illposed": False,
    "general_path": False,
}


@dataclass
class SimulationConfig:
    potential: Potential
    nonlinearity: Nonlinearity
    data: InitialData
    T: float
    dz: float = 1e-3
    mode: str = "half_line"
    L: float | None = None
    snapshot_times: tuple[float, ...] = ()
    snapshot_every: int | None = None
    tol: float = 1e-10
    allow_illposed: bool = False
    general_path: bool = False
    substeps: int = 4
    z_extent: float | None = None
    margin: float | None = None
    backend: str | None = None
    echo: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ConfigInvalid("T must be positive and finite")
        if not self.dz > 0:
            raise ConfigInvalid("dz must be positive")
        if self.mode not in ("half_line", "bounded"):
            raise ConfigInvalid(f"unknown domain mode {self.mode!r}")
        if self.mode == "bounded" and not (self.L and self.L > 0):
            raise ConfigInvalid("bounded mode needs L > 0")
        if self.substeps < 1:
            raise ConfigInvalid("substeps must be >= 1")

    @property
    def nsteps(self) -> int:
        return int(math.ceil(self.T / self.dz - 1e-9))

    def z_end(self) -> float:
        """Right end of the simulated z-range."""
        pot = self.potential
        if self.mode == "bounded":
            return float(pot.kappa(self.L))
        if self.z_extent is not None:
            return float(self.z_extent)
        sup = self.data.support
        if not math.isfinite(sup):
            raise ConfigInvalid("data without compact support need 'domain.z_extent'")
        margin = self.margin if self.margin is not None else max(16 * self.dz, 0.05)
        return float(pot.kappa(min(sup, pot.x_max))) + self.T + margin


def _potential_covering(block: dict, z_needed) -> Potential:
    if block.get("kind") == "periodic_step":
        x_max = float(block.get("x_max", 8 * math.pi))
        while True:
            pot = build_potential(block, x_max=x_max)
            if z_needed(pot) <= pot.z_max:
                return pot
            x_max *= 2.0
    return build_potential(block)


def from_dict(raw: dict) -> SimulationConfig:
    """Validate a parsed JSON config; missing required fields raise ConfigInvalid naming them."""
    if not isinstance(raw, dict):
        raise ConfigInvalid("config must be a JSON object")
    for key in ("potential", "nonlinearity", "T"):
        if key not in raw:
            raise ConfigInvalid(f"missing field '{key}'")
    nl = nlmod.from_config(raw["nonlinearity"])
    init = raw.get("initial", {})
    data = InitialData(profile_from_config(init.get("u0"), "u0"), profile_from_config(init.get("u1"), "u1"))
    dom = dict(raw.get("domain", {}))
    out = raw.get("output", {})
    opts = {k: raw.get(k, v) for k, v in DEFAULTS.items()}
    mode = dom.get("mode", opts["mode"])
    L = dom.get("L")
    T = float(raw["T"])
    dz = float(raw.get("dz", opts["dz"]))
    z_extent = dom.get("z_extent")

    def z_needed(pot):
        if mode == "bounded":
            return float(pot.kappa(min(float(L), pot.x_max))) if L else 0.0
        if z_extent is not None:
            return float(z_extent)
        sup = data.support
        if not math.isfinite(sup):
            return 0.0
        return float(pot.kappa(min(sup, pot.x_max))) + T + 1.0

    pot = _potential_covering(raw["potential"], z_needed)
    flags = raw.get("flags", {})
    echo = {
        "potential": raw["potential"], "nonlinearity": raw["nonlinearity"], "initial": data.echo(),
        "T": T, "dz": dz, "domain": {"mode": mode, "L": L, "z_extent": z_extent},
        "output": {"snapshot_every": out.get("snapshot_every"), "snapshot_times": out.get("snapshot_times", [])},
        "tol": float(raw.get("tol", opts["tol"])), "substeps": int(raw.get("substeps", opts["substeps"])),
        "flags": {"allow_illposed": bool(flags.get("allow_illposed", False)),
                  "general_path": bool(flags.get("general_path", False))},
    }
    return SimulationConfig(
        potential=pot, nonlinearity=nl, data=data, T=T, dz=dz, mode=mode,
        L=None if L is None else float(L),
        snapshot_times=tuple(float(t) for t in out.get("snapshot_times", [])),
        snapshot_every=out.get("snapshot_every"),
        tol=echo["tol"], allow_illposed=echo["flags"]["allow_illposed"],
        general_path=echo["flags"]["general_path"], substeps=echo["substeps"],
        z_extent=None if z_extent is None else float(z_extent), echo=echo,
    )
