"""Command line entry point: solve, diag, breather, demo-nonuniqueness, converge."""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CharwaveError, ConfigInvalid

FMT = "%.16e"


@dataclass
class RunManifest:
    config_hash: str
    version: str
    subcommand: str
    wall_time_s: float = 0.0
    files: list = field(default_factory=list)
    status: str = "ok"
    exit_code: int = 0
    message: str = ""


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


def _apply_threads() -> None:
    n = os.environ.get("CHARWAVE_THREADS")
    if not n:
        return
    try:
        import numba

        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
    except (ImportError, ValueError):
        pass


class Output:
    def __init__(self, out: Path | None):
        self.dir = out
        self.files: list[str] = []
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, header: list[str], rows) -> None:
        if self.dir is None:
            return
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        path = self.dir / name
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for r in rows:
                fh.write(",".join(FMT % v for v in r) + "\n")
        self.files.append(name)

    def json(self, name: str, obj) -> None:
        if self.dir is None:
            return
        with open(self.dir / name, "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        self.files.append(name)


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    return str(o)


def parse_config(path: str):
    """Read and validate a JSON config; returns (raw dict, SimulationConfig)."""
    from .ivp.config import from_dict

    p = Path(path)
    if not p.exists():
        raise ConfigInvalid(f"config file {path} does not exist")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return raw, from_dict(raw)


# ---------------------------------------------------------------- subcommands

def _write_record(out: Output, rec) -> None:
    out.csv("trace.csv", ["t", "b", "d", "u_t0", "E", "M"],
            np.column_stack([rec.trace[:, 0], rec.trace[:, 1], rec.trace[:, 2], rec.trace[:, 3], rec.E, rec.M]))
    g = rec.grid
    for s in rec.snapshots:
        ut = 0.5 * (s.wp + s.wm)
        ux = 0.5 * (s.wp - s.wm) / g.c
        out.csv(f"snapshot_{s.t:.6f}.csv", ["x", "z", "u", "u_t", "u_x"], np.column_stack([g.x, g.z, s.u, ut, ux]))


def cmd_solve(args, out: Output) -> dict:
    from .ivp.solver import run_simulation

    raw, cfg = parse_config(args.config)
    if args.backend:
        cfg = replace(cfg, backend=args.backend)
    rec = run_simulation(cfg)
    _write_record(out, rec)
    out.json("config.json", raw)
    out.json("meta.json", rec.meta)
    return raw


def _rerun(record_dir: Path, snapshot_every: int | None = None):
    from .ivp.config import from_dict
    from .ivp.solver import run_simulation

    raw = json.loads((record_dir / "config.json").read_text())
    cfg = from_dict(raw)
    if snapshot_every:
        cfg = replace(cfg, snapshot_every=snapshot_every)
    return raw, cfg, run_simulation(cfg)


def cmd_diag(args, out: Output) -> dict:
    from .diagnostics import GridCandidate, TraceCandidate, relative_drift, weak_residual

    rd = Path(args.record)
    summary = {}
    raw = json.loads((rd / "config.json").read_text()) if (rd / "config.json").exists() else {}
    if args.conservation:
        tr = np.loadtxt(rd / "trace.csv", delimiter=",", skiprows=1, ndmin=2)
        E, M = tr[:, 4], tr[:, 5]
        eD, mD = relative_drift(E), relative_drift(M)
        out.csv("conservation.csv", ["t", "E", "M"], np.column_stack([tr[:, 0], E, M]))
        summary.update({"energy_drift": eD, "momentum_drift": mD})
    if args.weak:
        _, cfg, rec = _rerun(rd, snapshot_every=1 if args.grid_candidate else None)
        g = rec.grid
        if len(g.lo) == 1 and not g.has_lam and not args.grid_candidate:
            cand, kind = TraceCandidate(rec), "trace"
        else:
            if not args.grid_candidate:
                _, cfg, rec = _rerun(rd, snapshot_every=1)
            cand, kind = GridCandidate(rec), "grid"
        rep = weak_residual(cand, cfg.nonlinearity, cfg.potential, n_bank=args.bank, seed=args.seed)
        out.csv("weak.csv", ["xc", "hx", "tc", "ht", "residual"],
                [[b.xc, b.hx, b.tc, b.ht, r] for b, r in zip(rep.bank, rep.residuals)])
        summary.update({"weak_residual_max": rep.max_abs, "candidate": kind})
    out.json("diag.json", summary)
    for k, v in summary.items():
        print(f"{k}: {v}")
    return {"record": str(rd), "config": raw, "weak": args.weak, "conservation": args.conservation}


def cmd_breather(args, out: Output) -> dict:
    from .breather import (bloch_modes, breather_residual, breather_roundtrip_check, synthesize_breather,
                           validate_resonance)

    req = {"a": args.a, "b": args.b, "theta": args.theta, "omega": args.omega, "gamma": args.gamma, "N": args.N}
    medium = validate_resonance(args.a, args.b, args.theta, args.omega)
    modes = bloch_modes(medium, args.N)
    out.csv("modes.csv", ["k", "phi0", "dphi0", "multiplier"],
            [[k, m.phi0, m.dphi0, m.multiplier] for k, m in modes.items()])
    rep = synthesize_breather(medium, args.gamma, args.N, tol=args.tol, modes=modes)
    R = breather_residual(medium, modes, rep.coeffs, args.gamma)
    out.csv("coeffs.csv", ["k", "re_alpha", "im_alpha", "residual"],
            [[k, a.real, a.imag, abs(r)] for k, a, r in zip(rep.coeffs.ks, rep.coeffs.values, R)])
    print(f"Newton residual {rep.residual:.3e} after {rep.iterations} iterations")
    if args.roundtrip:
        rows = []
        for n in args.steps_per_period:
            rt = breather_roundtrip_check(medium, modes, rep.coeffs, args.gamma, steps_per_period=n)
            rows.append([rt.dz, rt.period_error, rt.antiperiod_error, rt.energy_drift, rt.envelope_ratio,
                         rt.envelope_target])
            print(f"dz={rt.dz:.4e} period error {rt.period_error:.3e} antiperiod error {rt.antiperiod_error:.3e}")
        out.csv("roundtrip.csv", ["dz", "period_error", "antiperiod_error", "energy_drift", "envelope_ratio",
                                  "envelope_target"], rows)
    return req


def cmd_demo(args, out: Output) -> dict:
    from .ivp.demo import nonuniqueness_demo

    rep = nonuniqueness_demo(n_bank=args.bank, seed=args.seed)
    if out.dir is not None:
        lines = ["candidate,weak_residual,passes"]
        lines += [f"{k},{FMT % v},{int(v <= 1e-6)}" for k, v in rep.weak.items()]
        (out.dir / "report.csv").write_text("\n".join(lines) + "\n")
        out.files.append("report.csv")
    out.json("demo.json", {"boundary_identity_residual": rep.boundary_residual, "t_range": rep.t_range,
                           "weak": rep.weak, "solver_refused": rep.refused, "solver_exit_code": rep.exit_code,
                           "solver_message": rep.message})
    print(f"boundary identity residual {rep.boundary_residual:.3e}")
    for k, v in rep.weak.items():
        print(f"weak residual {k}: {v:.3e}")
    print(f"forward solver: {rep.message} (exit code {rep.exit_code})")
    return {"bank": args.bank, "seed": args.seed}


def convergence_ladder(cfg, rungs: int = 3):
    """Runs at dz, dz/2, ... and the sup-differences of u at the final time on the coarse nodes."""
    from .ivp.solver import run_simulation

    recs = []
    dz = cfg.dz
    z_end = cfg.z_end()
    for i in range(rungs):
        recs.append(run_simulation(replace(cfg, dz=dz / 2 ** i, z_extent=z_end, snapshot_every=None,
                                           snapshot_times=())))
    z0 = recs[0].grid.z
    finals = []
    for r in recs:
        st = r.final
        idx = np.searchsorted(r.grid.z, z0)
        idx = np.clip(idx, 0, r.grid.n - 1)
        finals.append(st.u[idx])
    rows = []
    for i in range(rungs - 1):
        diff = float(np.max(np.abs(finals[i] - finals[i + 1])))
        rows.append([recs[i].grid.h, diff])
    for i, row in enumerate(rows):
        p = math.log2(rows[i - 1][1] / row[1]) if i > 0 and row[1] > 0 else math.nan
        row.append(p)
    return rows


def cmd_converge(args, out: Output) -> dict:
    raw, cfg = parse_config(args.config)
    rows = convergence_ladder(cfg, args.rungs)
    out.csv("orders.csv", ["dz", "sup_diff_u", "order"], rows)
    for dz, d, p in rows:
        print(f"dz={dz:.3e} diff={d:.3e} order={p:.3f}")
    return raw


# ---------------------------------------------------------------- dispatch

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="charwave", description="Characteristic-grid solver for the wave "
                                 "equation with a quasilinear boundary condition.")
    ap.add_argument("--version", action="version", version=f"charwave {__version__}")
    sub = ap.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("solve", help="run a simulation from a JSON config")
    s.add_argument("--config", required=True, help="path to the JSON config")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--backend", choices=["numba", "numpy"], help="force a kernel backend")

    d = sub.add_parser("diag", help="conservation and weak-form diagnostics of a solve output")
    d.add_argument("--record", required=True, help="directory written by 'solve'")
    d.add_argument("--out", help="output directory (defaults to the record directory)")
    d.add_argument("--weak", action="store_true", help="evaluate the weak-form residual")
    d.add_argument("--conservation", action="store_true", help="energy and momentum drift")
    d.add_argument("--grid-candidate", action="store_true", help="use grid interpolation as weak candidate")
    d.add_argument("--bank", type=int, default=12, help="number of test functions")
    d.add_argument("--seed", type=int, default=0, help="seed of the test-function bank")

    b = sub.add_parser("breather", help="Bloch modes, breather synthesis and round trip")
    b.add_argument("--a", type=float, required=True, help="V on the inner layer")
    b.add_argument("--b", type=float, required=True, help="V on the outer layer")
    b.add_argument("--theta", type=float, required=True, help="inner layer fraction")
    b.add_argument("--omega", type=float, required=True, help="base frequency")
    b.add_argument("--gamma", type=float, default=1.0, help="cubic coefficient, f(y) = gamma y^3 / 2")
    b.add_argument("--N", type=int, default=9, help="largest odd harmonic")
    b.add_argument("--tol", type=float, default=1e-10, help="Newton residual tolerance")
    b.add_argument("--roundtrip", action="store_true", help="run the IVP over one period")
    b.add_argument("--steps-per-period", type=int, nargs="+", default=[6280, 12560],
                   help="grid steps per period for the round trip (multiples of 8)")
    b.add_argument("--out", required=True, help="output directory")

    n = sub.add_parser("demo-nonuniqueness", help="weak solutions for the decreasing law f(y) = -y^3")
    n.add_argument("--out", required=True, help="output directory")
    n.add_argument("--bank", type=int, default=12, help="number of test functions")
    n.add_argument("--seed", type=int, default=0, help="seed of the test-function bank")

    c = sub.add_parser("converge", help="dz-halving ladder with observed orders")
    c.add_argument("--config", required=True, help="path to the JSON config")
    c.add_argument("--out", required=True, help="output directory")
    c.add_argument("--rungs", type=int, default=3, help="number of grids")
    return ap


COMMANDS = {"solve": cmd_solve, "diag": cmd_diag, "breather": cmd_breather,
            "demo-nonuniqueness": cmd_demo, "converge": cmd_converge}


def dispatch(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _apply_threads()
    out_dir = getattr(args, "out", None) or getattr(args, "record", None)
    out = Output(Path(out_dir) if out_dir else None)
    man = RunManifest(config_hash(vars(args)), __version__, args.cmd)
    t0 = time.perf_counter()
    code = 0
    try:
        key = COMMANDS[args.cmd](args, out)
        man.config_hash = config_hash(key)
    except CharwaveError as exc:
        code = exc.exit_code
        man.status = "error"
        man.exit_code = code
        man.message = f"{type(exc).__name__}: {exc}"
        print(f"error: {exc}", file=sys.stderr)
    man.wall_time_s = time.perf_counter() - t0
    if out.dir is not None:
        man.files = sorted(set(out.files)) + ["manifest.json"]
        with open(out.dir / "manifest.json", "w") as fh:
            json.dump(asdict(man), fh, indent=2, sort_keys=True)
    return code


def main(argv=None) -> None:
    sys.exit(dispatch(argv))


if __name__ == "__main__":
    main()
