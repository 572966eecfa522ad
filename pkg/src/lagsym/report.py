"""Full analysis report with a versioned, deterministic JSON form."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .constraints import run_constraint_algorithm
from .geometry import PhasePoint, eval_tensors
from .kernel import TOL_RANK, ker_omega_basis
from .parser import SystemSpec
from .symmetry import (EPS_ID, MIN_SAMPLES, classify_action_symmetries, classify_el_symmetries,
                       symmetry_report)
from .system import CompiledLagrangian, compile_system, sample_points

__all__ = ["SCHEMA", "RunConfig", "ConfigError", "analyze", "kernel_dimensions", "to_json",
           "to_text"]

SCHEMA = "lagsym-report/1"
SIG_DIGITS = 12


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    samples: int = 64
    tol_rank: float = TOL_RANK
    eps_id: float = EPS_ID
    max_order: int = 10

    def __post_init__(self):
        if self.samples < MIN_SAMPLES:
            raise ConfigError(f"samples must be at least {MIN_SAMPLES}")
        if not (self.tol_rank > 0 and self.eps_id > 0):
            raise ConfigError("tolerances must be positive")
        if self.max_order < 1:
            raise ConfigError("max_order must be at least 1")


def _votes(values) -> dict[str, int]:
    out: dict[str, int] = {}
    for v in values:
        out[str(v)] = out.get(str(v), 0) + 1
    return dict(sorted(out.items()))


def kernel_dimensions(sys: CompiledLagrangian, samples: int, seed: int,
                      tol_rank: float = TOL_RANK) -> dict:
    """Per-sample N0 and dim ker Omega, set against the two closed-form counts."""
    rng = np.random.default_rng(seed)
    n0, svd_dim, reduced, lifted, agree = [], [], [], [], 0
    min_gap, max_lift, max_pair = math.inf, 0.0, 0.0
    for q, v in sample_points(sys, samples, rng):
        t = eval_tensors(sys, PhasePoint(q, v))
        kd = ker_omega_basis(t, tol_rank)
        n0.append(kd.N0)
        svd_dim.append(kd.dim_ker_omega)
        reduced.append(kd.predicted_reduced_count)
        lifted.append(kd.predicted_lift_count)
        agree += kd.dim_ker_omega == kd.predicted_lift_count
        min_gap = min(min_gap, kd.omega_gap, kd.mass_gap)
        if kd.N0:
            scale = 1.0 + max(float(np.max(np.abs(t.M))), float(np.max(np.abs(t.F))))
            max_lift = max(max_lift, float(np.max(kd.lift_residuals)) / scale)
            pair = np.linalg.norm(kd.P_reps.T @ t.omega, axis=1)
            max_pair = max(max_pair, float(np.max(pair)) / (1.0 + np.linalg.norm(t.omega, 2)))
    return {
        "N0": max(set(n0), key=n0.count),
        "N0_votes": _votes(n0),
        "ker_omega_svd_votes": _votes(svd_dim),
        "ker_omega_reduced_count_votes": _votes(reduced),
        "ker_omega_lift_count_votes": _votes(lifted),
        "svd_matches_lift_count": f"{agree}/{len(n0)}",
        "min_spectral_gap": min_gap,
        "max_lift_residual": max_lift,
        "max_rep_pairing": max_pair,
    }


def _source_digest(spec: SystemSpec) -> str:
    return hashlib.sha256(spec.source.encode()).hexdigest()[:16]


def analyze(system: CompiledLagrangian | SystemSpec, config: RunConfig | None = None,
            name: str = "") -> dict:
    """Run kernel, constraint and symmetry analysis; return the report dictionary."""
    from . import __version__

    cfg = config or RunConfig()
    sys = system if isinstance(system, CompiledLagrangian) else compile_system(system)
    dims = kernel_dimensions(sys, cfg.samples, cfg.seed, cfg.tol_rank)
    ledger = run_constraint_algorithm(sys, max_order=cfg.max_order,
                                      rng=np.random.default_rng(cfg.seed), tol_rank=cfg.tol_rank)
    symL = classify_action_symmetries(sys, cfg.samples, cfg.seed, cfg.eps_id, ledger, cfg.tol_rank)
    sym = classify_el_symmetries(sys, cfg.samples, cfg.seed, cfg.eps_id, ledger, cfg.tol_rank)
    rep = symmetry_report(sys, ledger, symL, sym)
    report = {
        "schema": SCHEMA,
        "system": {
            "name": name,
            "D": sys.D,
            "params": dict(sorted(sys.spec.params.items())),
            "source_sha256": _source_digest(sys.spec),
            "box": {"q": [list(b) for b in sys.spec.q_box], "v": [list(b) for b in sys.spec.v_box]},
        },
        "row": {"kerOmega/G": rep.N0, "Sym": rep.dim_sym, "SymL": rep.dim_symL,
                "I1": rep.I1, "Sol": rep.dim_sol},
        "dims": dims,
        "ledger": ledger.to_dict(),
        "symmetry": rep.to_dict(),
        "provenance": {
            "lagsym": __version__,
            **asdict(cfg),
            "domain_box": sys.spec.box_description(),
            "guards": len(sys.spec.guards),
        },
    }
    return _clean(report)


def _clean(obj):
    """Plain JSON types with floats rounded to a fixed number of digits."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(f"{x:.{SIG_DIGITS}g}")
    return obj


def to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def to_text(report: dict) -> str:
    row = report["row"]
    led = report["ledger"]
    dims = report["dims"]
    lines = [
        f"system         {report['system']['name'] or '(file)'}  D={report['system']['D']}",
        "row            " + "  ".join(f"{k}={v}" for k, v in row.items()),
        f"kernel         N0={dims['N0']}  svd={dims['ker_omega_svd_votes']}  "
        f"lift-count agreement {dims['svd_matches_lift_count']}",
        f"ledger         ranks={led['ranks']}  I={led['independent']}  n_F={led['n_F']}  "
        f"({led['termination_reason']})",
        f"provenance     seed={report['provenance']['seed']}  "
        f"samples={report['provenance']['samples']}  tol_rank={report['provenance']['tol_rank']}  "
        f"eps_id={report['provenance']['eps_id']}",
    ]
    return "\n".join(lines) + "\n"
