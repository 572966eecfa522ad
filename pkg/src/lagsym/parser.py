"""Text format for Lagrangian specifications.

A spec is a sequence of ``;``-terminated statements::

    dim 3;                      # configuration dimension D
    param m = 1;                # named real constant
    slice x = q[1..2];          # named range of coordinates (or v[..])
    guard norm(q);              # must stay away from zero when sampling
    box q 0.5 2;                # sampling interval for a slice, q, v or q[i]
    L = 0.5*m*dot(v, v);

A box with ``0 < lo < hi`` is a symmetric shell: samples are drawn from
``[lo, hi]`` with a random sign.  Any other box is a plain interval.  The
default box is ``[-1, 1]`` for every coordinate.

``q`` and ``v`` name the full coordinate vectors.  Vector-valued names may
only appear inside ``dot``/``norm``; everything else is scalar.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

from . import expr as ex
from .expr import Expr

__all__ = ["DslError", "SystemSpec", "parse_spec", "parse_expression", "print_spec"]


class DslError(ValueError):
    """Parse or resolution failure, carrying a 1-based source position."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.message = message
        self.line = line
        self.col = col
        where = f"{line}:{col}: " if line else ""
        super().__init__(where + message)


@dataclass(frozen=True)
class SystemSpec:
    D: int
    params: dict[str, float]
    slices: dict[str, tuple[str, int, int]]
    lagrangian: Expr
    guards: tuple[Expr, ...] = ()
    # (kind, lo, hi) per q index and per v index, 1-based keys
    q_box: tuple[tuple[float, float], ...] = ()
    v_box: tuple[tuple[float, float], ...] = ()
    source: str = ""

    def param_values(self) -> dict[str, float]:
        return dict(self.params)

    def box_description(self) -> dict:
        return {"q": [list(b) for b in self.q_box], "v": [list(b) for b in self.v_box]}


# ---------------------------------------------------------------------------
# tokens

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<number>(?:\d+\.(?!\.)\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<range>\.\.)
  | (?P<op>[-+*/^()\[\],;=])
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise DslError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# ---------------------------------------------------------------------------
# raw syntax tree: tuples (tag, token, *children)


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def next(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg: str, tok: Token | None = None):
        tok = tok or self.tok
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise DslError(f"{msg}, found {found}", tok.line, tok.col)

    def expect(self, text: str) -> Token:
        if self.tok.text != text or self.tok.kind not in ("op", "range", "name"):
            self.error(f"expected {text!r}")
        return self.next()

    def expect_kind(self, kind: str, what: str) -> Token:
        if self.tok.kind != kind:
            self.error(f"expected {what}")
        return self.next()

    def end_statement(self):
        if self.tok.text == ";":
            self.next()
        elif self.tok.kind != "eof":
            self.error("expected ';'")

    # statements -------------------------------------------------------

    def statements(self) -> Iterator[tuple]:
        while self.tok.kind != "eof":
            if self.tok.text == ";":
                self.next()
                continue
            head = self.expect_kind("name", "a statement")
            word = head.text
            if word == "dim":
                n = self.expect_kind("number", "an integer")
                yield ("dim", head, n)
            elif word == "param":
                name = self.expect_kind("name", "a parameter name")
                self.expect("=")
                yield ("param", head, name, self.signed_number())
            elif word == "slice":
                name = self.expect_kind("name", "a slice name")
                self.expect("=")
                base = self.expect_kind("name", "'q' or 'v'")
                if base.text not in ("q", "v"):
                    self.error("slice must index 'q' or 'v'", base)
                self.expect("[")
                lo = self.expect_kind("number", "an integer")
                self.expect_kind("range", "'..'")
                hi = self.expect_kind("number", "an integer")
                self.expect("]")
                yield ("slice", head, name, base, lo, hi)
            elif word == "guard":
                yield ("guard", head, self.expr())
            elif word == "box":
                name = self.expect_kind("name", "a box target")
                idx = None
                if self.tok.text == "[":
                    self.next()
                    idx = self.expect_kind("number", "an integer index")
                    self.expect("]")
                lo = self.signed_number()
                hi = self.signed_number()
                yield ("box", head, name, lo, hi, idx)
            elif word == "L":
                self.expect("=")
                yield ("L", head, self.expr())
            else:
                self.error("expected a statement (dim, param, slice, guard, box, L)", head)
            self.end_statement()

    def signed_number(self) -> tuple[Fraction, Token]:
        sign = 1
        start = self.tok
        if self.tok.text in ("-", "+"):
            sign = -1 if self.next().text == "-" else 1
        n = self.expect_kind("number", "a number")
        return sign * Fraction(n.text), start

    # expressions: precedence climbing -------------------------------

    _BINARY = {"+": (1, "left"), "-": (1, "left"), "*": (2, "left"), "/": (2, "left"),
               "^": (4, "right")}

    def expr(self, min_prec: int = 1):
        lhs = self.unary()
        while True:
            t = self.tok
            info = self._BINARY.get(t.text) if t.kind == "op" else None
            if info is None or info[0] < min_prec:
                return lhs
            prec, assoc = info
            self.next()
            rhs = self.expr(prec + 1 if assoc == "left" else prec)
            lhs = ("bin", t, lhs, rhs)

    def unary(self):
        t = self.tok
        if t.kind == "op" and t.text in ("-", "+"):
            self.next()
            operand = self.expr(3)  # binds looser than ^, tighter than * /
            return ("neg", t, operand) if t.text == "-" else operand
        return self.atom()

    def atom(self):
        t = self.tok
        if t.kind == "number":
            self.next()
            return ("num", t)
        if t.text == "(":
            self.next()
            inner = self.expr()
            self.expect(")")
            return inner
        if t.kind == "name":
            self.next()
            if self.tok.text == "[":
                self.next()
                idx = self.expect_kind("number", "an integer index")
                self.expect("]")
                return ("index", t, idx)
            if self.tok.text == "(":
                self.next()
                args = [self.expr()]
                while self.tok.text == ",":
                    self.next()
                    args.append(self.expr())
                self.expect(")")
                return ("call", t, *args)
            return ("name", t)
        self.error("expected an expression")


# ---------------------------------------------------------------------------
# resolution


_FUNCS = {"sqrt": ex.sqrt, "sin": ex.sin, "cos": ex.cos, "ln": ex.ln}


def _int(tok: Token) -> int:
    if not re.fullmatch(r"\d+", tok.text):
        raise DslError(f"expected an integer, found {tok.text!r}", tok.line, tok.col)
    return int(tok.text)


class _Resolver:
    def __init__(self, D: int, params: dict, slices: dict):
        self.D = D
        self.params = params
        self.slices = slices

    def vector(self, node) -> list[Expr] | None:
        """Component list when node denotes a vector (q, v or a slice)."""
        if node[0] != "name":
            return None
        name = node[1].text
        if name == "q":
            return [ex.coord(i) for i in range(1, self.D + 1)]
        if name == "v":
            return [ex.vel(i) for i in range(1, self.D + 1)]
        if name in self.slices:
            base, lo, hi = self.slices[name]
            make = ex.coord if base == "q" else ex.vel
            return [make(i) for i in range(lo, hi + 1)]
        return None

    def scalar(self, node) -> Expr:
        tag, tok = node[0], node[1]
        if tag == "num":
            return ex.const(Fraction(tok.text))
        if tag == "name":
            if tok.text in self.params:
                return ex.param(tok.text)
            if self.vector(node) is not None:
                raise DslError(f"vector {tok.text!r} used as a scalar (wrap it in dot/norm "
                               "or index it)", tok.line, tok.col)
            raise DslError(f"unbound name {tok.text!r}", tok.line, tok.col)
        if tag == "index":
            return self.index(tok, node[2])
        if tag == "neg":
            return ex.neg(self.scalar(node[2]))
        if tag == "bin":
            op = tok.text
            if op == "^":
                return self.power(node)
            a, b = self.scalar(node[2]), self.scalar(node[3])
            if op == "+":
                return ex.add(a, b)
            if op == "-":
                return ex.sub(a, b)
            if op == "*":
                return ex.mul(a, b)
            try:
                return ex.div(a, b)
            except ZeroDivisionError:
                raise DslError("division by zero", tok.line, tok.col) from None
        if tag == "call":
            return self.call(tok, node[2:])
        raise AssertionError(tag)  # pragma: no cover

    def index(self, tok: Token, idx_tok: Token) -> Expr:
        i = _int(idx_tok)
        name = tok.text
        if name in ("q", "v"):
            if not 1 <= i <= self.D:
                raise DslError(f"index {name}[{i}] out of range 1..{self.D}",
                               idx_tok.line, idx_tok.col)
            return ex.coord(i) if name == "q" else ex.vel(i)
        if name in self.slices:
            base, lo, hi = self.slices[name]
            if not 1 <= i <= hi - lo + 1:
                raise DslError(f"index {name}[{i}] out of range 1..{hi - lo + 1}",
                               idx_tok.line, idx_tok.col)
            j = lo + i - 1
            return ex.coord(j) if base == "q" else ex.vel(j)
        if name in self.params:
            raise DslError(f"parameter {name!r} cannot be indexed", tok.line, tok.col)
        raise DslError(f"unbound name {name!r}", tok.line, tok.col)

    def power(self, node) -> Expr:
        tok = node[1]
        base = self.scalar(node[2])
        exponent = self.scalar(node[3])
        if exponent.op != "const":
            raise DslError("non-rational exponent: exponents must be rational constants",
                           tok.line, tok.col)
        try:
            return ex.power(base, exponent.value)
        except ZeroDivisionError:
            raise DslError("zero raised to a negative power", tok.line, tok.col) from None

    def call(self, tok: Token, args) -> Expr:
        name = tok.text
        if name in _FUNCS:
            if len(args) != 1:
                raise DslError(f"{name} takes one argument", tok.line, tok.col)
            return _FUNCS[name](self.scalar(args[0]))
        if name in ("dot", "norm"):
            want = 2 if name == "dot" else 1
            if len(args) != want:
                raise DslError(f"{name} takes {want} argument(s)", tok.line, tok.col)
            vecs = []
            for a in args:
                comps = self.vector(a)
                if comps is None:
                    raise DslError(f"{name} expects q, v or a slice name",
                                   a[1].line, a[1].col)
                vecs.append(comps)
            if name == "norm":
                vecs.append(vecs[0])
            a, b = vecs
            if len(a) != len(b):
                raise DslError(f"dot of vectors of lengths {len(a)} and {len(b)}",
                               tok.line, tok.col)
            s = ex.add(*(ex.mul(x, y) for x, y in zip(a, b)))
            return ex.sqrt(s) if name == "norm" else s
        raise DslError(f"unknown function {name!r}", tok.line, tok.col)


def _header(text: str):
    """First pass: collect headers so expressions can be resolved in any order."""
    stmts = list(_Parser(tokenize(text)).statements())
    D = None
    params: dict[str, float] = {}
    slices: dict[str, tuple[str, int, int]] = {}
    for st in stmts:
        tag, head = st[0], st[1]
        if tag == "dim":
            if D is not None:
                raise DslError("dim declared twice", head.line, head.col)
            D = _int(st[2])
            if D < 1:
                raise DslError("dim must be positive", st[2].line, st[2].col)
    if D is None:
        tok = stmts[0][1] if stmts else Token("eof", "", 1, 1)
        raise DslError("missing 'dim' declaration", tok.line, tok.col)
    reserved = {"q", "v", "L", "dot", "norm", *_FUNCS}
    for st in stmts:
        tag, head = st[0], st[1]
        if tag == "param":
            name, (value, _) = st[2], st[3]
            if name.text in reserved or name.text in params or name.text in slices:
                raise DslError(f"name {name.text!r} already in use", name.line, name.col)
            params[name.text] = float(value)
        elif tag == "slice":
            name, base, lo_t, hi_t = st[2], st[3], st[4], st[5]
            if name.text in reserved or name.text in params or name.text in slices:
                raise DslError(f"name {name.text!r} already in use", name.line, name.col)
            lo, hi = _int(lo_t), _int(hi_t)
            if not 1 <= lo <= hi <= D:
                raise DslError(f"slice range {lo}..{hi} outside 1..{D}", lo_t.line, lo_t.col)
            slices[name.text] = (base.text, lo, hi)
    return stmts, D, params, slices


def parse_spec(text: str) -> SystemSpec:
    """Parse and resolve a full specification."""
    stmts, D, params, slices = _header(text)
    res = _Resolver(D, params, slices)
    lagrangian = None
    guards = []
    q_box = [(-1.0, 1.0)] * D
    v_box = [(-1.0, 1.0)] * D
    for st in stmts:
        tag, head = st[0], st[1]
        if tag == "L":
            if lagrangian is not None:
                raise DslError("L defined twice", head.line, head.col)
            lagrangian = res.scalar(st[2])
        elif tag == "guard":
            guards.append(res.scalar(st[2]))
        elif tag == "box":
            name, (lo, lo_tok), (hi, _), idx_tok = st[2], st[3], st[4], st[5]
            if lo >= hi:
                raise DslError("box needs lo < hi", lo_tok.line, lo_tok.col)
            if idx_tok is not None:
                if name.text not in ("q", "v"):
                    raise DslError("only q[i] or v[i] may be indexed in a box",
                                   name.line, name.col)
                i = _int(idx_tok)
                if not 1 <= i <= D:
                    raise DslError(f"index {name.text}[{i}] out of range 1..{D}",
                                   idx_tok.line, idx_tok.col)
                idx = [(name.text, i)]
            elif name.text == "q":
                idx = [("q", i) for i in range(1, D + 1)]
            elif name.text == "v":
                idx = [("v", i) for i in range(1, D + 1)]
            elif name.text in slices:
                base, a, b = slices[name.text]
                idx = [(base, i) for i in range(a, b + 1)]
            else:
                raise DslError(f"unbound name {name.text!r}", name.line, name.col)
            for base, i in idx:
                target = q_box if base == "q" else v_box
                target[i - 1] = (float(lo), float(hi))
    if lagrangian is None:
        last = stmts[-1][1] if stmts else Token("eof", "", 1, 1)
        raise DslError("missing 'L = ...' statement", last.line, last.col)
    return SystemSpec(D=D, params=params, slices=slices, lagrangian=lagrangian,
                      guards=tuple(guards), q_box=tuple(q_box), v_box=tuple(v_box),
                      source=text)


def parse_expression(text: str, spec: SystemSpec) -> Expr:
    """Parse a standalone expression in the namespace of an existing spec."""
    p = _Parser(tokenize(text))
    node = p.expr()
    if p.tok.kind != "eof":
        p.error("unexpected trailing input")
    return _Resolver(spec.D, spec.params, spec.slices).scalar(node)


def _num(x: float) -> str:
    return repr(float(x)) if x != int(x) else str(int(x))


def print_spec(spec: SystemSpec) -> str:
    """Canonical text for a spec; parsing it reproduces the same trees."""
    lines = [f"dim {spec.D};"]
    for name, value in spec.params.items():
        lines.append(f"param {name} = {_num(value)};")
    for name, (base, lo, hi) in spec.slices.items():
        lines.append(f"slice {name} = {base}[{lo}..{hi}];")
    for g in spec.guards:
        lines.append(f"guard {ex.to_text(g)};")
    for kind, box in (("q", spec.q_box), ("v", spec.v_box)):
        for i, (lo, hi) in enumerate(box, start=1):
            if (lo, hi) != (-1.0, 1.0):
                lines.append(f"box {kind}[{i}] {_num(lo)} {_num(hi)};")
    lines.append(f"L = {ex.to_text(spec.lagrangian)};")
    return "\n".join(lines) + "\n"
