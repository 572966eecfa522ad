"""Compile expression DAGs into straight-line Python functions.

Shared subexpressions become local temporaries, so a function returning
hundreds of derivative entries evaluates each distinct node once.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from .expr import Expr, walk

__all__ = ["EvaluationError", "compile_exprs"]


class EvaluationError(ArithmeticError):
    """Raised when a compiled expression hits a singular point."""


def _literal(x: Fraction) -> str:
    text = repr(float(x))
    return f"({text})" if x < 0 else text


def _pow_code(base: str, e: Fraction) -> str:
    if e.denominator == 1:
        n = e.numerator
        if n == 2:
            return f"{base}*{base}"
        if n == -1:
            return f"1.0/{base}"
        if n == -2:
            return f"1.0/({base}*{base})"
        return f"{base}**{n}"
    if e == Fraction(1, 2):
        return f"_sqrt({base})"
    if e == Fraction(-1, 2):
        return f"1.0/_sqrt({base})"
    if e.denominator == 2:
        n = e.numerator
        return f"_sqrt({base})**{n}"
    return f"_pow({base}, {float(e)!r})"


def compile_exprs(exprs: Sequence[Expr], D: int, params: Mapping[str, float],
                  name: str = "compiled") -> Callable[[Sequence[float], Sequence[float]], np.ndarray]:
    """Return ``f(q, v) -> ndarray`` evaluating ``exprs`` in order."""
    nodes = walk(exprs)
    names: dict[int, str] = {}
    body: list[str] = []
    counter = 0
    for n in nodes:
        op = n.op
        if op == "const":
            names[id(n)] = _literal(n.value)
            continue
        if op == "param":
            value = float(params[n.value])
            names[id(n)] = f"({value!r})" if value < 0 else repr(value)
            continue
        if op == "q":
            names[id(n)] = f"q{n.value}"
            continue
        if op == "v":
            names[id(n)] = f"v{n.value}"
            continue
        args = [names[id(a)] for a in n.args]
        if op == "add":
            code = " + ".join(args)
        elif op == "mul":
            code = "*".join(args)
        elif op == "pow":
            code = _pow_code(args[0], n.value)
        elif op == "sin":
            code = f"_sin({args[0]})"
        elif op == "cos":
            code = f"_cos({args[0]})"
        elif op == "ln":
            code = f"_log({args[0]})"
        else:  # pragma: no cover
            raise AssertionError(op)
        tmp = f"t{counter}"
        counter += 1
        body.append(f"    {tmp} = {code}")
        names[id(n)] = tmp
    unpack = []
    if D:
        unpack.append("    " + ", ".join(f"q{i}" for i in range(1, D + 1)) + ", = q")
        unpack.append("    " + ", ".join(f"v{i}" for i in range(1, D + 1)) + ", = v")
    outs = ", ".join(names[id(e)] for e in exprs)
    src = "\n".join([f"def {name}(q, v):", *unpack, *body, f"    return ({outs}{',' if len(exprs) == 1 else ''})"])
    env = {"_sqrt": math.sqrt, "_pow": math.pow, "_sin": math.sin, "_cos": math.cos,
           "_log": math.log}
    exec(compile(src, f"<lagsym:{name}>", "exec"), env)
    raw = env[name]
    count = len(exprs)

    def evaluate(q: Sequence[float], v: Sequence[float]) -> np.ndarray:
        try:
            values = raw([float(x) for x in q], [float(x) for x in v])
        except (ValueError, ZeroDivisionError, OverflowError) as err:
            raise EvaluationError(f"{name}: {err}") from None
        out = np.fromiter(values, dtype=float, count=count)
        return out

    evaluate.source = src  # type: ignore[attr-defined]
    return evaluate
