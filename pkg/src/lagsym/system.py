"""Symbolic derivatives of a Lagrangian and their compiled evaluators."""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import expr as ex
from .codegen import EvaluationError, compile_exprs
from .expr import Expr
from .parser import SystemSpec

__all__ = [
    "CompiledLagrangian",
    "GuardViolation",
    "compile_system",
    "sample_points",
    "GUARD_MIN",
]

GUARD_MIN = 1e-3


class GuardViolation(ValueError):
    """A phase point lies too close to a singular set of the spec."""


def _simp(e: Expr, memo: dict) -> Expr:
    return ex.simplify(e, memo)


@dataclass(frozen=True, eq=False)
class CompiledLagrangian:
    spec: SystemSpec
    dL_dq: tuple[Expr, ...]
    dL_dv: tuple[Expr, ...]
    energy: Expr
    dE_dq: tuple[Expr, ...]
    dE_dv: tuple[Expr, ...]
    M: tuple[tuple[Expr, ...], ...]
    F: tuple[tuple[Expr, ...], ...]
    # g = dE/dq + F v, the right-hand side of the energy equation M a = -g
    g: tuple[Expr, ...]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def D(self) -> int:
        return self.spec.D

    # compiled evaluators ---------------------------------------------------

    def _fn(self, key: str, builder: Callable[[], list[Expr]]):
        fn = self._cache.get(key)
        if fn is None:
            fn = compile_exprs(builder(), self.D, self.spec.params, name=key)
            self._cache[key] = fn
        return fn

    def _upper(self, mat) -> list[Expr]:
        D = self.D
        return [mat[a][b] for a in range(D) for b in range(a, D)]

    def _unpack_sym(self, flat: np.ndarray, sign: float) -> np.ndarray:
        key = ("gather", sign)
        plan = self._cache.get(key)
        if plan is None:
            D = self.D
            idx = np.zeros((D, D), dtype=int)
            sgn = np.zeros((D, D))
            k = 0
            for a in range(D):
                for b in range(a, D):
                    idx[a, b] = idx[b, a] = k
                    sgn[a, b] = 1.0
                    sgn[b, a] = sign if a != b else (1.0 if sign > 0 else 0.0)
                    k += 1
            plan = (idx, sgn)
            self._cache[key] = plan
        idx, sgn = plan
        return flat[idx] * sgn

    def core(self, q, v) -> tuple[float, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(E, dE/dq, dE/dv, M, F, g) at one point."""
        D = self.D
        nsym = D * (D + 1) // 2
        fn = self._fn("core", lambda: [self.energy, *self.dE_dq, *self.dE_dv,
                                       *self._upper(self.M), *self._upper(self.F), *self.g])
        out = fn(q, v)
        i = 0
        E = out[0]
        i = 1
        dEq = out[i:i + D]; i += D
        dEv = out[i:i + D]; i += D
        M = self._unpack_sym(out[i:i + nsym], 1.0); i += nsym
        F = self._unpack_sym(out[i:i + nsym], -1.0); i += nsym
        g = out[i:i + D]
        return float(E), dEq, dEv, M, F, g

    def lagrangian_value(self, q, v) -> float:
        return float(self._fn("lag", lambda: [self.spec.lagrangian])(q, v)[0])

    def gradients(self, q, v) -> dict[str, np.ndarray]:
        """Symbolic first derivatives of L and E, for finite-difference audits."""
        D = self.D
        fn = self._fn("grad", lambda: [self.spec.lagrangian, self.energy, *self.dL_dq,
                                       *self.dL_dv, *self.dE_dq, *self.dE_dv])
        out = fn(q, v)
        return {"L": out[0], "E": out[1], "dL_dq": out[2:2 + D], "dL_dv": out[2 + D:2 + 2 * D],
                "dE_dq": out[2 + 2 * D:2 + 3 * D], "dE_dv": out[2 + 3 * D:2 + 4 * D]}

    @functools.cached_property
    def _jet_exprs(self) -> tuple[list[Expr], list[Expr]]:
        D = self.D
        memo: dict = {}
        wrt = [("q", i) for i in range(1, D + 1)] + [("v", i) for i in range(1, D + 1)]
        dg = []
        for a in range(D):
            for w in wrt:
                dg.append(_simp(ex.differentiate(self.g[a], w), memo))
        dM = []
        for w in wrt:
            for a in range(D):
                for b in range(a, D):
                    dM.append(_simp(ex.differentiate(self.M[a][b], w), memo))
        return dg, dM

    def jet(self, q, v) -> tuple[np.ndarray, np.ndarray]:
        """(dg, dM): dg[a, k] = dg_a/du_k; dM[k] = dM/du_k, u = (q, v)."""
        D = self.D
        dg_e, dM_e = self._jet_exprs
        fn = self._fn("jet", lambda: [*dg_e, *dM_e])
        out = fn(q, v)
        dg = out[:2 * D * D].reshape(D, 2 * D)
        flat = out[2 * D * D:]
        nsym = D * (D + 1) // 2
        self._unpack_sym(flat[:nsym], 1.0)  # builds the gather plan
        idx, sgn = self._cache[("gather", 1.0)]
        dM = flat.reshape(2 * D, nsym)[:, idx]
        return dg, dM

    def guard_values(self, q, v) -> np.ndarray:
        if not self.spec.guards:
            return np.zeros(0)
        return self._fn("guards", lambda: list(self.spec.guards))(q, v)

    def check_point(self, q, v, minimum: float = GUARD_MIN) -> None:
        """Raise GuardViolation unless every guard has magnitude >= minimum."""
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
            raise GuardViolation("non-finite phase point")
        try:
            vals = self.guard_values(q, v)
        except EvaluationError as err:
            raise GuardViolation(str(err)) from None
        bad = np.flatnonzero(np.abs(vals) < minimum)
        if bad.size:
            i = int(bad[0])
            raise GuardViolation(
                f"guard {ex.to_text(self.spec.guards[i])} = {vals[i]:.3g} below {minimum:g}")

    def admissible(self, q, v, minimum: float = GUARD_MIN) -> bool:
        try:
            self.check_point(q, v, minimum)
        except GuardViolation:
            return False
        return True


def compile_system(spec: SystemSpec) -> CompiledLagrangian:
    """Differentiate L into E, M, F and the energy-equation force g."""
    D = spec.D
    L = spec.lagrangian
    memo: dict = {}
    dmemo: dict = {}

    def d(e, kind, i):
        return _simp(ex.differentiate(e, (kind, i), dmemo.setdefault((kind, i), {})), memo)

    dL_dq = tuple(d(L, "q", i) for i in range(1, D + 1))
    dL_dv = tuple(d(L, "v", i) for i in range(1, D + 1))
    energy = _simp(ex.sub(ex.add(*(ex.mul(ex.vel(i + 1), dL_dv[i]) for i in range(D))), L), memo)
    dE_dq = tuple(d(energy, "q", i) for i in range(1, D + 1))
    dE_dv = tuple(d(energy, "v", i) for i in range(1, D + 1))
    M = [[ex.ZERO] * D for _ in range(D)]
    F = [[ex.ZERO] * D for _ in range(D)]
    mixed = [[d(dL_dv[a], "q", b + 1) for b in range(D)] for a in range(D)]
    for a in range(D):
        for b in range(a, D):
            M[a][b] = M[b][a] = d(dL_dv[a], "v", b + 1)
            if a != b:
                F[a][b] = _simp(ex.sub(mixed[a][b], mixed[b][a]), memo)
                F[b][a] = ex.neg(F[a][b])
    g = tuple(_simp(ex.add(dE_dq[a], *(ex.mul(F[a][b], ex.vel(b + 1)) for b in range(D))), memo)
              for a in range(D))
    return CompiledLagrangian(spec=spec, dL_dq=dL_dq, dL_dv=dL_dv, energy=energy,
                              dE_dq=dE_dq, dE_dv=dE_dv,
                              M=tuple(map(tuple, M)), F=tuple(map(tuple, F)), g=g)


def _draw(rng: np.random.Generator, box) -> np.ndarray:
    out = np.empty(len(box))
    for i, (lo, hi) in enumerate(box):
        x = rng.uniform(lo, hi)
        if 0 < lo < hi and rng.random() < 0.5:
            x = -x
        out[i] = x
    return out


def sample_points(sys: CompiledLagrangian, n: int, rng: np.random.Generator,
                  max_tries: int | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
    """Draw n admissible (q, v) pairs from the spec's box by rejection."""
    spec = sys.spec
    max_tries = max_tries or 200 * n + 1000
    out = []
    tries = 0
    while len(out) < n:
        if tries >= max_tries:
            raise GuardViolation(f"only {len(out)} admissible points after {tries} draws")
        tries += 1
        q = _draw(rng, spec.q_box)
        v = _draw(rng, spec.v_box)
        if sys.admissible(q, v):
            out.append((q, v))
    return out
