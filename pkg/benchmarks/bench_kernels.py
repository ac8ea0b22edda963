"""Wall time of the marcher with the numba kernels and with the pure-numpy fallback.

Each backend runs in a fresh interpreter so that CHARWAVE_NUMBA takes effect at
import time.  The numba timing excludes compilation (one warm-up run first).

    python3 benchmarks/bench_kernels.py --T 2 --dz 2e-3
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

CHILD = r"""
import json, sys, time
import numpy as np
from charwave.ivp import SimulationConfig, InitialData, bump, run_simulation
from charwave.nonlinearity import make_standard
from charwave.potential import build_potential

T, dz, reps = float(sys.argv[1]), float(sys.argv[2]), int(sys.argv[3])
pot = build_potential({"kind": "periodic_step", "a": 1.0, "b": 25 / 9, "theta": 0.25}, x_max=40.0)
B = bump(2.0, 1.0)
cfg = SimulationConfig(pot, make_standard("cubic", gamma=1.0), InitialData(B.scaled(0.5), B), T=T, dz=dz)
run_simulation(cfg)  # warm-up (compiles the kernels when numba is on)
times = []
for _ in range(reps):
    t0 = time.perf_counter()
    rec = run_simulation(cfg)
    times.append(time.perf_counter() - t0)
print(json.dumps({"backend": rec.meta["backend"], "best_s": min(times), "E_end": float(rec.E[-1]),
                  "u_end": rec.final.u.tolist()[:2000:50]}))
"""


def run(flag: str, T: float, dz: float, reps: int) -> dict:
    env = dict(os.environ, CHARWAVE_NUMBA=flag)
    res = subprocess.run([sys.executable, "-c", CHILD, str(T), str(dz), str(reps)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=float, default=2.0)
    ap.add_argument("--dz", type=float, default=2e-3)
    ap.add_argument("--reps", type=int, default=3)
    args = ap.parse_args()
    t0 = time.perf_counter()
    fast = run("1", args.T, args.dz, args.reps)
    slow = run("0", args.T, args.dz, max(1, args.reps // 3))
    diff = float(np.max(np.abs(np.array(fast["u_end"]) - np.array(slow["u_end"]))))
    print(f"{'backend':<8} {'best [s]':>10}")
    print(f"{fast['backend']:<8} {fast['best_s']:>10.4f}")
    print(f"{slow['backend']:<8} {slow['best_s']:>10.4f}")
    print(f"speed-up {slow['best_s'] / fast['best_s']:.1f}x, max |u| difference {diff:.2e}, "
          f"total {time.perf_counter() - t0:.1f} s")


if __name__ == "__main__":
    main()
