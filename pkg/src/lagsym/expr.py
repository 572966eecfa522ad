"""Immutable, hash-consed expression trees over phase-space coordinates.

Every node is interned: two structurally equal expressions are the same
Python object, so equality is identity and subexpressions are shared.
Constructors canonicalise as they build (flattening, constant folding,
collection of like terms and powers), which keeps derivatives compact.

Constants are exact :class:`fractions.Fraction` values.  Folding that would
leave the rationals (``sqrt(2)``, ``sin(1)``) is not performed.
"""

from __future__ import annotations

import hashlib
import math
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

__all__ = [
    "Expr",
    "const",
    "param",
    "coord",
    "vel",
    "add",
    "mul",
    "neg",
    "sub",
    "div",
    "power",
    "sqrt",
    "sin",
    "cos",
    "ln",
    "ZERO",
    "ONE",
    "differentiate",
    "simplify",
    "evaluate",
    "to_text",
    "free_symbols",
    "count_nodes",
]

# Sort rank of each node kind; constants lead products and sums.
_RANK = {"const": 0, "param": 1, "q": 2, "v": 3, "pow": 4, "mul": 5,
         "add": 6, "sin": 7, "cos": 8, "ln": 9}

_TABLE: dict[tuple, "Expr"] = {}


class Expr:
    """A node.  Build with the module-level constructors, never directly."""

    __slots__ = ("op", "value", "args", "digest", "__weakref__")

    op: str
    value: object
    args: tuple["Expr", ...]
    digest: bytes

    def __new__(cls, op: str, value: object = None, args: tuple = ()) -> "Expr":
        key = (op, value, args)
        node = _TABLE.get(key)
        if node is not None:
            return node
        node = object.__new__(cls)
        object.__setattr__(node, "op", op)
        object.__setattr__(node, "value", value)
        object.__setattr__(node, "args", args)
        h = hashlib.blake2b(digest_size=12)
        h.update(op.encode())
        h.update(repr(value).encode())
        for a in args:
            h.update(a.digest)
        object.__setattr__(node, "digest", h.digest())
        _TABLE[key] = node
        return node

    def __setattr__(self, name, value):
        raise AttributeError("Expr is immutable")

    def __reduce__(self):
        return (Expr, (self.op, self.value, self.args))

    @property
    def sort_key(self) -> tuple:
        return (_RANK[self.op], self.digest)

    def is_const(self, value=None) -> bool:
        if self.op != "const":
            return False
        return value is None or self.value == value

    def __repr__(self) -> str:
        return f"Expr({to_text(self)})"

    def __str__(self) -> str:
        return to_text(self)

    # Operator sugar, used heavily in tests and builtin definitions.
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)


def _lift(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, Fraction)):
        return const(x)
    if isinstance(x, float):
        return const(Fraction(x).limit_denominator(10**12))
    raise TypeError(f"cannot use {type(x).__name__} in an expression")


# ---------------------------------------------------------------------------
# leaves


def const(value) -> Expr:
    return Expr("const", Fraction(value))


def param(name: str) -> Expr:
    return Expr("param", name)


def coord(index: int) -> Expr:
    """Configuration coordinate q[index], 1-based."""
    return Expr("q", int(index))


def vel(index: int) -> Expr:
    """Velocity coordinate v[index], 1-based."""
    return Expr("v", int(index))


ZERO = const(0)
ONE = const(1)
_MINUS_ONE = const(-1)


# ---------------------------------------------------------------------------
# canonicalising constructors


def _split_coeff(e: Expr) -> tuple[Fraction, Expr]:
    if e.op == "const":
        return e.value, ONE
    if e.op == "mul" and e.args[0].op == "const":
        rest = e.args[1:]
        return e.args[0].value, rest[0] if len(rest) == 1 else Expr("mul", None, rest)
    return Fraction(1), e


def add(*terms: Expr) -> Expr:
    flat: list[Expr] = []
    for t in terms:
        if t.op == "add":
            flat.extend(t.args)
        else:
            flat.append(t)
    constant = Fraction(0)
    coeffs: dict[Expr, Fraction] = {}
    order: list[Expr] = []
    for t in flat:
        if t.op == "const":
            constant += t.value
            continue
        c, rest = _split_coeff(t)
        if rest in coeffs:
            coeffs[rest] += c
        else:
            coeffs[rest] = c
            order.append(rest)
    out = []
    for rest in order:
        c = coeffs[rest]
        if c == 0:
            continue
        out.append(rest if c == 1 else _scale(c, rest))
    out.sort(key=lambda e: e.sort_key)
    if constant != 0:
        out.insert(0, const(constant))
    if not out:
        return ZERO
    if len(out) == 1:
        return out[0]
    return Expr("add", None, tuple(out))


def _scale(c: Fraction, e: Expr) -> Expr:
    if e.op == "mul":
        return Expr("mul", None, (const(c),) + e.args)
    return Expr("mul", None, (const(c), e))


def _split_pow(e: Expr) -> tuple[Expr, Fraction]:
    if e.op == "pow":
        return e.args[0], e.value
    return e, Fraction(1)


def mul(*factors: Expr) -> Expr:
    flat: list[Expr] = []
    for f in factors:
        if f.op == "mul":
            flat.extend(f.args)
        else:
            flat.append(f)
    coeff = Fraction(1)
    exps: dict[Expr, Fraction] = {}
    order: list[Expr] = []
    for f in flat:
        if f.op == "const":
            coeff *= f.value
            continue
        base, e = _split_pow(f)
        if base in exps:
            exps[base] += e
        else:
            exps[base] = e
            order.append(base)
    if coeff == 0:
        return ZERO
    out = []
    for base in order:
        e = exps[base]
        if e == 0:
            continue
        p = power(base, e)
        if p.op == "const":
            coeff *= p.value
        elif p.op == "mul":
            # integer power of a product may expose a constant factor
            for a in p.args:
                if a.op == "const":
                    coeff *= a.value
                else:
                    out.append(a)
        else:
            out.append(p)
    out.sort(key=lambda e: e.sort_key)
    if not out:
        return const(coeff)
    if coeff != 1:
        out.insert(0, const(coeff))
    if len(out) == 1:
        return out[0]
    return Expr("mul", None, tuple(out))


def neg(e: Expr) -> Expr:
    return mul(_MINUS_ONE, e)


def sub(a: Expr, b: Expr) -> Expr:
    return add(a, neg(b))


def div(a: Expr, b: Expr) -> Expr:
    if b.is_const(0):
        raise ZeroDivisionError("division by the constant 0")
    return mul(a, power(b, -1))


def _exact_root(x: Fraction, n: int):
    """Exact n-th root of a non-negative rational, or None."""
    if x < 0:
        return None

    def iroot(k: int):
        r = round(k ** (1.0 / n)) if k else 0
        for cand in (r - 1, r, r + 1):
            if cand >= 0 and cand ** n == k:
                return cand
        return None

    num, den = iroot(x.numerator), iroot(x.denominator)
    if num is None or den is None:
        return None
    return Fraction(num, den)


def power(base: Expr, exponent) -> Expr:
    """base ** exponent for a rational constant exponent."""
    if isinstance(exponent, Expr):
        if exponent.op != "const":
            raise ValueError("exponent must be a rational constant")
        exponent = exponent.value
    e = Fraction(exponent)
    if e == 0:
        return ONE
    if e == 1:
        return base
    if base.op == "const":
        b = base.value
        if b == 0:
            if e < 0:
                raise ZeroDivisionError("0 raised to a negative power")
            return ZERO
        if e.denominator == 1:
            return const(b ** e.numerator)
        root = _exact_root(b, e.denominator)
        if root is not None:
            return const(root ** e.numerator)
        return Expr("pow", e, (base,))
    if base.op == "pow":
        inner = base.value
        even_int = inner.denominator == 1 and inner.numerator % 2 == 0
        if e.denominator == 1 or not even_int:
            return power(base.args[0], inner * e)
        return Expr("pow", e, (base,))
    if base.op == "mul" and e.denominator == 1:
        return mul(*(power(a, e) for a in base.args))
    return Expr("pow", e, (base,))


def sqrt(e: Expr) -> Expr:
    return power(e, Fraction(1, 2))


def sin(e: Expr) -> Expr:
    if e.is_const(0):
        return ZERO
    return Expr("sin", None, (e,))


def cos(e: Expr) -> Expr:
    if e.is_const(0):
        return ONE
    return Expr("cos", None, (e,))


def ln(e: Expr) -> Expr:
    if e.is_const(1):
        return ZERO
    return Expr("ln", None, (e,))


_REBUILD: dict[str, Callable[..., Expr]] = {
    "add": add,
    "mul": mul,
    "sin": sin,
    "cos": cos,
    "ln": ln,
}


def _rebuild(e: Expr, args: Sequence[Expr]) -> Expr:
    if e.op == "pow":
        return power(args[0], e.value)
    return _REBUILD[e.op](*args)


# ---------------------------------------------------------------------------
# calculus


def differentiate(e: Expr, wrt: tuple[str, int] | Expr,
                  _memo: dict | None = None) -> Expr:
    """Exact partial derivative with respect to ('q', i) or ('v', i)."""
    if isinstance(wrt, Expr):
        wrt = (wrt.op, wrt.value)
    kind, index = wrt
    if kind not in ("q", "v"):
        raise ValueError(f"can only differentiate by q or v, not {kind!r}")
    memo = {} if _memo is None else _memo
    return _diff(e, kind, index, memo)


def _diff(e: Expr, kind: str, index: int, memo: dict) -> Expr:
    hit = memo.get(e)
    if hit is not None:
        return hit
    op = e.op
    if op in ("const", "param"):
        d = ZERO
    elif op in ("q", "v"):
        d = ONE if (op == kind and e.value == index) else ZERO
    elif op == "add":
        d = add(*(_diff(a, kind, index, memo) for a in e.args))
    elif op == "mul":
        terms = []
        for i, a in enumerate(e.args):
            da = _diff(a, kind, index, memo)
            if da.is_const(0):
                continue
            rest = e.args[:i] + e.args[i + 1:]
            terms.append(mul(da, *rest))
        d = add(*terms)
    elif op == "pow":
        base = e.args[0]
        db = _diff(base, kind, index, memo)
        d = ZERO if db.is_const(0) else mul(const(e.value), power(base, e.value - 1), db)
    elif op == "sin":
        da = _diff(e.args[0], kind, index, memo)
        d = mul(cos(e.args[0]), da)
    elif op == "cos":
        da = _diff(e.args[0], kind, index, memo)
        d = neg(mul(sin(e.args[0]), da))
    elif op == "ln":
        da = _diff(e.args[0], kind, index, memo)
        d = div(da, e.args[0])
    else:  # pragma: no cover - exhaustive over node kinds
        raise AssertionError(op)
    memo[e] = d
    return d


def simplify(e: Expr, _memo: dict | None = None) -> Expr:
    """Bottom-up re-canonicalisation.

    Constructors already fold and collect locally; this pass additionally
    expands integer powers of sums into products of the sum (no
    distribution) and re-collects, which is value preserving everywhere the
    input is defined.
    """
    memo = {} if _memo is None else _memo
    return _simp(e, memo)


def _simp(e: Expr, memo: dict) -> Expr:
    hit = memo.get(e)
    if hit is not None:
        return hit
    if not e.args:
        out = e
    else:
        args = [_simp(a, memo) for a in e.args]
        out = _rebuild(e, args)
        if out.op == "add":
            out = _distribute_constants(out)
    memo[e] = out
    return out


def _distribute_constants(e: Expr) -> Expr:
    # c*(a + b) terms nested in a sum are spread so that like terms meet.
    spread = []
    changed = False
    for t in e.args:
        c, rest = _split_coeff(t)
        if rest.op == "add" and t is not rest:
            spread.extend(mul(const(c), a) for a in rest.args)
            changed = True
        else:
            spread.append(t)
    return add(*spread) if changed else e


# ---------------------------------------------------------------------------
# evaluation and inspection


def evaluate(e: Expr, q: Sequence[float], v: Sequence[float],
             params: Mapping[str, float] | None = None,
             _memo: dict | None = None) -> float:
    """Reference tree-walking evaluator (slow; used as an oracle in tests)."""
    params = params or {}
    memo = {} if _memo is None else _memo

    def ev(n: Expr) -> float:
        hit = memo.get(n)
        if hit is not None:
            return hit
        op = n.op
        if op == "const":
            r = float(n.value)
        elif op == "param":
            r = float(params[n.value])
        elif op == "q":
            r = float(q[n.value - 1])
        elif op == "v":
            r = float(v[n.value - 1])
        elif op == "add":
            r = math.fsum(ev(a) for a in n.args)
        elif op == "mul":
            r = 1.0
            for a in n.args:
                r *= ev(a)
        elif op == "pow":
            b = ev(n.args[0])
            ex = n.value
            if ex.denominator == 1:
                r = b ** ex.numerator
            else:
                r = math.pow(b, float(ex))
        elif op == "sin":
            r = math.sin(ev(n.args[0]))
        elif op == "cos":
            r = math.cos(ev(n.args[0]))
        elif op == "ln":
            r = math.log(ev(n.args[0]))
        else:  # pragma: no cover
            raise AssertionError(op)
        memo[n] = r
        return r

    return ev(e)


def walk(roots: Iterable[Expr]) -> list[Expr]:
    """Distinct nodes reachable from roots, children before parents."""
    seen: set[int] = set()
    out: list[Expr] = []
    stack: list[tuple[Expr, bool]] = [(r, False) for r in reversed(list(roots))]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            out.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for a in reversed(node.args):
            if id(a) not in seen:
                stack.append((a, False))
    return out


def free_symbols(e: Expr) -> set[tuple[str, object]]:
    return {(n.op, n.value) for n in walk([e]) if n.op in ("q", "v", "param")}


def count_nodes(roots: Iterable[Expr]) -> int:
    return len(walk(roots))


# ---------------------------------------------------------------------------
# printing (output re-parses to the identical node)

_PREC = {"add": 1, "mul": 2, "neg": 3, "pow": 4, "atom": 5}


def _fmt_fraction(x: Fraction) -> str:
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


def to_text(e: Expr) -> str:
    text, _ = _fmt(e)
    return text


def _wrap(part: tuple[str, int], min_prec: int) -> str:
    text, prec = part
    return f"({text})" if prec < min_prec else text


def _fmt(e: Expr) -> tuple[str, int]:
    op = e.op
    if op == "const":
        x = e.value
        if x < 0:
            return "-" + _fmt_fraction(-x), _PREC["neg"] if x.denominator == 1 else _PREC["add"]
        return _fmt_fraction(x), _PREC["atom"] if x.denominator == 1 else _PREC["mul"]
    if op == "param":
        return e.value, _PREC["atom"]
    if op in ("q", "v"):
        return f"{op}[{e.value}]", _PREC["atom"]
    if op in ("sin", "cos", "ln"):
        return f"{op}({to_text(e.args[0])})", _PREC["atom"]
    if op == "pow":
        base = _wrap(_fmt(e.args[0]), _PREC["atom"])
        x = e.value
        if x.denominator == 1 and x > 0:
            return f"{base}^{x.numerator}", _PREC["pow"]
        return f"{base}^({_fmt_fraction(x)})", _PREC["pow"]
    if op == "mul":
        first = e.args[0]
        if first.is_const(-1):
            rest = e.args[1:]
            inner = rest[0] if len(rest) == 1 else Expr("mul", None, rest)
            return "-" + _wrap(_fmt(inner), _PREC["pow"]), _PREC["neg"]
        parts = [_wrap(_fmt(a), _PREC["pow"]) for a in e.args]
        return "*".join(parts), _PREC["mul"]
    if op == "add":
        out = _wrap(_fmt(e.args[0]), _PREC["add"])
        for t in e.args[1:]:
            c, rest = _split_coeff(t)
            if c < 0:
                mag = rest if c == -1 else _scale(-c, rest) if rest is not ONE else const(-c)
                out += " - " + _wrap(_fmt(mag), _PREC["mul"])
            else:
                out += " + " + _wrap(_fmt(t), _PREC["mul"])
        return out, _PREC["add"]
    raise AssertionError(op)  # pragma: no cover
