"""Symmetry and constraint analysis for almost-regular Lagrangians."""

from .builtins import builtin, reproduce_table1
from .constraints import run_constraint_algorithm
from .dynamics import assemble_soelvf, integrate_flow
from .parser import DslError, parse_expression, parse_spec
from .report import analyze
from .symmetry import classify_action_symmetries, classify_el_symmetries, symmetry_report
from .system import compile_system

__version__ = "0.1.0"

__all__ = [
    "DslError",
    "analyze",
    "assemble_soelvf",
    "builtin",
    "classify_action_symmetries",
    "classify_el_symmetries",
    "compile_system",
    "integrate_flow",
    "parse_expression",
    "parse_spec",
    "reproduce_table1",
    "run_constraint_algorithm",
    "symmetry_report",
]
