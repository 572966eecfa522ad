import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lagsym.builtins import NAMES, builtin  # noqa: E402
from lagsym.constraints import SurfaceNotFound, run_constraint_algorithm  # noqa: E402
from lagsym.system import sample_points  # noqa: E402

_systems = {}
_ledgers = {}


def compiled(name):
    if name not in _systems:
        _systems[name] = builtin(name).compile()
    return _systems[name]


def ledger_for(name):
    if name not in _ledgers:
        _ledgers[name] = run_constraint_algorithm(compiled(name), rng=np.random.default_rng(0))
    return _ledgers[name]


def points(name, n, seed=0):
    return [np.concatenate(p) for p in sample_points(compiled(name), n, np.random.default_rng(seed))]


def on_shell(name, n, seed=0):
    """n projected points; seeds whose projection leaves the admissible region are skipped."""
    led = ledger_for(name)
    out = []
    for u in points(name, 4 * n, seed):
        try:
            out.append(led.project(u))
        except SurfaceNotFound:
            continue
        if len(out) == n:
            return out
    raise RuntimeError(f"only {len(out)} of {n} points projected for {name}")


@pytest.fixture(params=NAMES)
def any_builtin(request):
    return request.param
