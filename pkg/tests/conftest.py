import json
from pathlib import Path

import numpy as np
import pytest
import sympy as sp

from charwave.ivp import from_dict

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

A5 = {"kind": "periodic_step", "a": 1.0, "b": 25.0 / 9.0, "theta": 0.25}


def load_config(name: str, **overrides) -> dict:
    raw = json.loads((CONFIGS / name).read_text())
    raw.update(overrides)
    return raw


def sym_bump(center, halfwidth, amplitude=1):
    """The shipped bump as a sympy Piecewise in x, plus its exact antiderivative from -inf.

    The antiderivative is integrated in the local variable s = (x - center) / halfwidth
    so that the lambdified polynomial stays well conditioned.
    """
    x = sp.Symbol("x", real=True)
    s, v = sp.symbols("s v", real=True)
    hw = sp.nsimplify(halfwidth)
    amp = sp.nsimplify(amplitude)
    prim = amp * hw * sp.integrate((1 - v ** 2) ** 4, (v, -1, s))
    total = prim.subs(s, 1)
    loc = (x - center) / hw
    g = sp.Piecewise((0, loc <= -1), (amp * (1 - loc ** 2) ** 4, loc < 1), (0, True))
    G = sp.Piecewise((0, loc <= -1), (prim.subs(s, loc), loc < 1), (total, True))
    return x, g, G


@pytest.fixture(scope="session")
def step_cfg():
    return from_dict(load_config("step_cubic.json"))


@pytest.fixture(scope="session")
def const_cfg():
    return from_dict(load_config("const_cubic.json"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE: list[str] = []


def report(number: int, title: str, ok: bool, detail: str) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split("criterion")[1].split()[0])):
            terminalreporter.write_line(line)
