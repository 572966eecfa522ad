"""Built-in example systems, the Table-1 harness and the appendix identity check."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import expr as ex
from .codegen import compile_exprs
from .constraints import SurfaceNotFound, run_constraint_algorithm
from .geometry import PhasePoint, eval_tensors, scale_of
from .kernel import TOL_RANK, ker_omega_basis
from .parser import SystemSpec, parse_expression, parse_spec
from .symmetry import EPS_ID, classify_action_symmetries, classify_el_symmetries, symmetry_report
from .system import CompiledLagrangian, compile_system, sample_points

__all__ = [
    "NAMES",
    "TABLE1_ROWS",
    "COLUMNS",
    "BuiltinExample",
    "UnknownExample",
    "builtin",
    "builtin_source",
    "analyze_row",
    "reproduce_table1",
    "appendix_check",
]

NAMES = ("oscillator", "s1_conformal", "s1_spherical", "s1_generic", "s2", "s3")
COLUMNS = ("kerOmega/G", "Sym", "SymL", "I1", "Sol")

# (N0, dim Sym, dim SymL, I1, dim Sol) as published
TABLE1_ROWS = {
    "s1_conformal": (1, 1, 1, 0, 1),
    "s1_spherical": (1, 1, 0, 1, 0),
    "s1_generic": (1, 0, 0, 1, 0),
    "s2": (2, 1, 1, 1, 1),
    "s3": (2, 2, 2, 0, 2),
}
_EXPECTED = {"oscillator": (0, 0, 0, 0, 0), **TABLE1_ROWS}

# potential pieces used by the appendix check, in each system's namespace
_POTENTIALS = {
    "s1_spherical": {"V_Sph": "0.5*kappa*(norm(q) - 1)^2", "V_AS": "k*q[3]/norm(q)"},
    "s1_conformal": {"V_AS": "k*q[3]/norm(q)"},
}


class UnknownExample(KeyError):
    pass


@dataclass
class BuiltinExample:
    name: str
    spec: SystemSpec
    expected: tuple[int, int, int, int, int]
    potentials: dict[str, ex.Expr] = field(default_factory=dict)
    _compiled: CompiledLagrangian | None = field(default=None, repr=False)

    @property
    def in_table1(self) -> bool:
        return self.name in TABLE1_ROWS

    def compile(self) -> CompiledLagrangian:
        if self._compiled is None:
            self._compiled = compile_system(self.spec)
        return self._compiled


def builtin_source(name: str) -> str:
    if name not in NAMES:
        raise UnknownExample(f"unknown example {name!r}; choose from {', '.join(NAMES)}")
    return resources.files("lagsym").joinpath("specs").joinpath(f"{name}.lag").read_text()


def builtin(name: str) -> BuiltinExample:
    spec = parse_spec(builtin_source(name))
    pots = {k: parse_expression(t, spec) for k, t in _POTENTIALS.get(name, {}).items()}
    return BuiltinExample(name, spec, _EXPECTED[name], pots)


def analyze_row(name: str, seed: int = 0, samples: int = 64, tol_rank: float = TOL_RANK,
                eps_id: float = EPS_ID, max_order: int = 10) -> dict:
    """Full pipeline for one built-in; returns the row and its evidence."""
    sys = builtin(name).compile()
    rng = np.random.default_rng(seed)
    ledger = run_constraint_algorithm(sys, max_order=max_order, rng=rng, tol_rank=tol_rank)
    symL = classify_action_symmetries(sys, samples, seed, eps_id, ledger, tol_rank)
    sym = classify_el_symmetries(sys, samples, seed, eps_id, ledger, tol_rank)
    rep = symmetry_report(sys, ledger, symL, sym)
    return {"name": name, "row": list(rep.row), "ledger": ledger.to_dict(),
            "evidence": rep.evidence,
            "symL_nullities": symL.to_dict()["nullity_counts"],
            "sym_nullities": sym.to_dict()["nullity_counts"]}


def _row_job(args):
    name, kwargs = args
    return analyze_row(name, **kwargs)


def reproduce_table1(seed: int = 0, samples: int = 64, tol_rank: float = TOL_RANK,
                     eps_id: float = EPS_ID, max_order: int = 10, workers: int = 1) -> dict:
    """Compare all 25 published cells; mismatches are listed by row and column."""
    kwargs = dict(seed=seed, samples=samples, tol_rank=tol_rank, eps_id=eps_id,
                  max_order=max_order)
    jobs = [(n, kwargs) for n in TABLE1_ROWS]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_row_job, jobs))
    else:
        results = [_row_job(j) for j in jobs]
    rows, mismatches = [], []
    for res in results:
        want = TABLE1_ROWS[res["name"]]
        for col, got, exp in zip(COLUMNS, res["row"], want):
            if got != exp:
                mismatches.append({"row": res["name"], "column": col, "expected": exp, "got": got})
        rows.append({**res, "expected": list(want), "match": tuple(res["row"]) == want})
    return {"columns": list(COLUMNS), "rows": rows, "mismatches": mismatches,
            "cells_checked": 5 * len(rows), "all_match": not mismatches}


def _gradient(e: ex.Expr, D: int, params) -> callable:
    grads = [ex.simplify(ex.differentiate(e, ("q", i))) for i in range(1, D + 1)]
    fn = compile_exprs(grads, D, params, name="grad")
    return lambda q: fn(q, np.zeros(D))


def appendix_check(points: int = 16, seed: int = 0) -> dict:
    """Projected accelerations of the spherical case against the conformal case.

    At points of the critical-radius surface the spherical potential reduces
    to V_Sph(R) + V_AS, so the projected Euler-Lagrange accelerations
    -M^+ g of the two systems must agree.  The two projector identities
    used along the way are checked with symbolic gradients.
    """
    sph = builtin("s1_spherical")
    conf = builtin("s1_conformal")
    s_sys, c_sys = sph.compile(), conf.compile()
    D = s_sys.D
    if conf.spec.params.get("b", 0.0) != 0.0:
        raise ValueError("comparison system must have b = V_Sph(R) = 0")
    ledger = run_constraint_algorithm(s_sys, rng=np.random.default_rng(seed))
    grad_sph = _gradient(sph.potentials["V_Sph"], D, sph.spec.params)
    grad_as = _gradient(sph.potentials["V_AS"], D, sph.spec.params)
    rng = np.random.default_rng(seed + 1)
    accel, sph_id, as_id, gam, radius = [], [], [], [], []
    for q, v in sample_points(s_sys, 4 * points, rng):
        if len(accel) == points:
            break
        try:
            u = ledger.project(np.concatenate([q, v]))
        except SurfaceNotFound:
            continue
        p = PhasePoint.from_u(u)
        r = float(np.linalg.norm(p.q))
        Pi = np.eye(D) - np.outer(p.q, p.q) / r ** 2
        ts = eval_tensors(s_sys, p)
        tc = eval_tensors(c_sys, p)
        a_s = -ker_omega_basis(ts).Mpinv @ ts.g
        a_c = -ker_omega_basis(tc).Mpinv @ tc.g
        accel.append(float(np.linalg.norm(Pi @ (a_s - a_c))) / scale_of(a_s, a_c))
        gs, ga = grad_sph(p.q), grad_as(p.q)
        sph_id.append(float(np.linalg.norm(Pi @ gs)))
        as_id.append(float(np.linalg.norm(Pi @ ga - ga)))
        gam.append(abs(float(p.q @ gs) / r))
        radius.append(r)
    if not accel:
        raise SurfaceNotFound("no projected point reached the critical-radius surface")
    return {
        "points": len(accel),
        "acceleration_residual": max(accel),
        "projector_kills_radial": max(sph_id),
        "projector_fixes_angular": max(as_id),
        "radial_derivative_at_surface": max(gam),
        "radii": [min(radius), max(radius)],
    }
