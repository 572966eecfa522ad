"""Command-line front end: analyze, integrate, table1."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .builtins import NAMES, TABLE1_ROWS, COLUMNS, builtin, reproduce_table1
from .constraints import SurfaceNotFound, run_constraint_algorithm
from .dynamics import GaugeChoice, GaugeError, IntegrationError, assemble_soelvf, integrate_flow
from .geometry import PhasePoint
from .kernel import TOL_RANK, RankInstability
from .parser import DslError, SystemSpec, parse_spec
from .report import ConfigError, RunConfig, analyze, to_json, to_text
from .symmetry import EPS_ID
from .system import GuardViolation, compile_system, sample_points

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_PARSE = 2
EXIT_RANK = 3
EXIT_EMPTY = 4


def _seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("LAGSYM_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"LAGSYM_SEED must be an integer, got {env!r}") from None
    return 0


def _config(args) -> RunConfig:
    return RunConfig(seed=_seed(args.seed), samples=args.samples, tol_rank=args.tol_rank,
                     eps_id=args.eps_id, max_order=args.max_order)


def load_spec(target: str) -> tuple[SystemSpec, str]:
    """A built-in name or a path to a .lag file."""
    if target in NAMES:
        return builtin(target).spec, target
    path = Path(target)
    if not path.exists():
        raise FileNotFoundError(f"{target}: no such file and not a built-in ({', '.join(NAMES)})")
    return parse_spec(path.read_text()), path.stem


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _vector(text: str | None, D: int, what: str) -> np.ndarray | None:
    if text is None:
        return None
    vals = [float(x) for x in text.replace(",", " ").split()]
    if len(vals) != D:
        raise ConfigError(f"{what} needs {D} components, got {len(vals)}")
    return np.array(vals)


def cmd_analyze(args) -> int:
    spec, name = load_spec(args.spec)
    report = analyze(spec, _config(args), name=name)
    _emit(to_text(report) if args.format == "text" else to_json(report), args.out)
    return EXIT_OK


def cmd_integrate(args) -> int:
    spec, _ = load_spec(args.spec)
    cfg = _config(args)
    csys = compile_system(spec)
    D = csys.D
    rng = np.random.default_rng(cfg.seed)
    ledger = run_constraint_algorithm(csys, max_order=cfg.max_order, rng=rng,
                                      tol_rank=cfg.tol_rank)
    q0, v0 = _vector(args.q0, D, "--q0"), _vector(args.v0, D, "--v0")
    if q0 is None or v0 is None:
        q, v = sample_points(csys, 1, np.random.default_rng(cfg.seed + 1))[0]
        q0 = q if q0 is None else q0
        v0 = v if v0 is None else v0
    u0 = ledger.project(np.concatenate([q0, v0]))
    gauge = GaugeChoice.from_text(csys, args.gauge) if args.gauge else None
    sv = assemble_soelvf(csys, ledger, gauge, reduced_base=args.reduced_base)
    traj = integrate_flow(sv, PhasePoint.from_u(u0), args.t_end, dt=args.dt,
                          project_each_step=args.project_each_step)
    summary = traj.summary()
    if args.format == "json":
        _emit(traj.to_json(), args.out)
    elif args.format == "csv":
        _emit(traj.to_csv(), args.out)
    else:
        _emit("".join(f"{k:18s} {v}\n" for k, v in summary.items())
              + "final              " + " ".join(f"{x:.10g}" for x in traj.points[-1]) + "\n",
              args.out)
    print(f"max E drift {summary['max_energy_drift']:.3e}  "
          f"max |constraint| {summary['max_constraint']:.3e}  steps {summary['steps']}",
          file=sys.stderr)
    return EXIT_OK


def _table_text(result: dict) -> str:
    width = max(len(n) for n in TABLE1_ROWS) + 2
    lines = ["system".ljust(width) + "".join(c.rjust(12) for c in COLUMNS) + "   match"]
    for row in result["rows"]:
        cells = "".join(str(x).rjust(12) for x in row["row"])
        lines.append(row["name"].ljust(width) + cells + ("   yes" if row["match"] else "   NO"))
    for m in result["mismatches"]:
        lines.append(f"mismatch {m['row']}.{m['column']}: expected {m['expected']}, got {m['got']}")
    lines.append(f"{result['cells_checked']} cells checked, "
                 f"{len(result['mismatches'])} mismatched")
    return "\n".join(lines) + "\n"


def cmd_table1(args) -> int:
    cfg = _config(args)
    result = reproduce_table1(seed=cfg.seed, samples=cfg.samples, tol_rank=cfg.tol_rank,
                              eps_id=cfg.eps_id, max_order=cfg.max_order, workers=args.workers)
    payload = json.dumps(result, indent=2, sort_keys=True, default=float) + "\n"
    if args.format == "json":
        _emit(payload, args.out)
    else:
        sys.stdout.write(_table_text(result))
        if args.out:
            Path(args.out).write_text(payload)
    return EXIT_OK if result["all_match"] else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="sampling seed (falls back to $LAGSYM_SEED, then 0)")
    common.add_argument("--samples", type=int, default=64)
    common.add_argument("--tol-rank", type=float, default=TOL_RANK)
    common.add_argument("--eps-id", type=float, default=EPS_ID)
    common.add_argument("--max-order", type=int, default=10)
    common.add_argument("--format", choices=("json", "text", "csv"), default="text")
    common.add_argument("--out", default=None, help="output file (default stdout)")

    p = argparse.ArgumentParser(prog="lagsym", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[common], help="full kernel/constraint/symmetry report")
    a.add_argument("spec", help=f"built-in name ({', '.join(NAMES)}) or .lag file")
    a.set_defaults(func=cmd_analyze, format="json")

    i = sub.add_parser("integrate", parents=[common], help="integrate the assembled field")
    i.add_argument("spec")
    i.add_argument("--q0", help="initial q, comma or space separated")
    i.add_argument("--v0", help="initial v, comma or space separated")
    i.add_argument("--t-end", type=float, default=5.0)
    i.add_argument("--dt", type=float, default=None, help="output spacing (adaptive if omitted)")
    i.add_argument("--gauge", default=None,
                   help="direction field for free multipliers: D expressions separated by ';'")
    i.add_argument("--reduced-base", action="store_true",
                   help="drop the base field's component along free kernel directions")
    i.add_argument("--project-each-step", action="store_true")
    i.set_defaults(func=cmd_integrate, format="csv")

    t = sub.add_parser("table1", parents=[common], help="reproduce the published symmetry table")
    t.add_argument("--workers", type=int, default=1)
    t.set_defaults(func=cmd_table1)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DslError, FileNotFoundError, ConfigError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_PARSE
    except RankInstability as err:
        print(f"rank instability: {err}", file=sys.stderr)
        return EXIT_RANK
    except SurfaceNotFound as err:
        print(f"empty constraint surface: {err}", file=sys.stderr)
        return EXIT_EMPTY
    except (IntegrationError, GaugeError, GuardViolation) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
