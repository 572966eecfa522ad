"""Lagrangian constraints and the order-by-order stabilisation algorithm.

Constraints are handled as frame-free vectors.  At order one the constraint
vector is ``c1 = Pi0 g`` where ``Pi0`` projects onto ker M and ``g`` is the
energy-equation force; its components in any orthonormal null basis Z are
the usual first-order constraint functions ``gamma_n = z_n . g``.  Because
``Pi0`` is a smooth function of the point (constant rank), derivatives of
``c1`` need no basis alignment.  The Jacobian of ``c1`` is computed from
symbolic third derivatives of L; higher orders use finite differences.

At order l the state carries

* ``X_l``  the field built so far (starts as ``(v, -M^+ g)``),
* ``K_l``  the kernel directions whose multipliers are still free,
* ``Q_l``  the constraint directions not yet used to fix a multiplier,

and one step solves ``Gamma u = -b`` with ``Gamma = Q^T J K`` and
``b = Q^T J X`` in the minimum-norm sense, carrying the null directions of
Gamma forward as free multipliers and its left null directions forward as
the next order's constraints.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .codegen import EvaluationError
from .geometry import PhasePoint, TensorEval, eval_tensors, scale_of
from .kernel import TOL_RANK, KernelData, RankInstability, ker_omega_basis
from .numdiff import jacobian
from .system import CompiledLagrangian, GuardViolation, sample_points

__all__ = [
    "ConstraintError",
    "SurfaceNotFound",
    "OffSurface",
    "BetaEval",
    "LevelRecord",
    "ConstraintLedger",
    "ConstraintEngine",
    "first_order_constraints",
    "beta_form",
    "gamma_matrix",
    "project_to_constraint_surface",
    "run_constraint_algorithm",
    "numerical_rank",
    "RANK_TOL",
    "PROJECT_TOL",
]

RANK_TOL = 1e-6
PROJECT_TOL = 1e-10
MAX_NEWTON = 50


class ConstraintError(RuntimeError):
    pass


class SurfaceNotFound(ConstraintError):
    """Newton projection failed; the constraint surface may be empty."""


class OffSurface(ConstraintError):
    """An on-shell quantity was requested at a point off the surface."""


def numerical_rank(A: np.ndarray, rel_tol: float = RANK_TOL) -> int:
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.count_nonzero(s > rel_tol * scale_of(A)))


def _majority(values: list[int]) -> tuple[int, dict[int, int]]:
    counts = Counter(values)
    best = max(counts.items(), key=lambda kv: (kv[1], kv[0]))[0]
    return best, dict(sorted(counts.items()))


class PointState:
    """Order-by-order constraint data at one phase point."""

    def __init__(self, engine: "ConstraintEngine", u: np.ndarray):
        self.engine = engine
        self.u = np.asarray(u, dtype=float)
        sys = engine.sys
        self.point = PhasePoint.from_u(self.u)
        try:
            self.tensors: TensorEval = eval_tensors(sys, self.point)
        except EvaluationError as err:
            raise GuardViolation(str(err)) from None
        self.kd: KernelData = ker_omega_basis(self.tensors, engine.tol_rank)
        Z = self.kd.Z
        g = self.tensors.g
        self.c = [Z @ (Z.T @ g)]
        self.X = [np.concatenate([self.point.v, -self.kd.Mpinv @ g])]
        self.K = [self.kd.P_reps]
        self.Q = [Z]
        self.determined: list[np.ndarray] = []
        self._J: dict[int, np.ndarray] = {}
        self._gamma: dict[int, np.ndarray] = {}

    @property
    def order(self) -> int:
        return len(self.c)

    def jac(self, l: int) -> np.ndarray:
        """Jacobian (D x 2D) of the order-l constraint vector."""
        J = self._J.get(l)
        if J is not None:
            return J
        if l == 1:
            J = self._jac1()
        else:
            engine = self.engine
            J = jacobian(lambda w: engine.state(w, l).c[l - 1], self.u)
        self._J[l] = J
        return J

    def _jac1(self) -> np.ndarray:
        sys = self.engine.sys
        dg, dM = sys.jet(self.point.q, self.point.v)
        Z = self.kd.Z
        Pi0 = Z @ Z.T
        Mp = self.kd.Mpinv
        g = self.tensors.g
        # d(Pi0) = -(Pi0 dM M^+ + M^+ dM Pi0) for a constant-rank symmetric M
        t1 = np.einsum("ab,kbc,c->ak", Pi0, dM, Mp @ g)
        t2 = np.einsum("ab,kbc,c->ak", Mp, dM, self.c[0])
        return Pi0 @ dg - t1 - t2

    def gamma(self, l: int) -> np.ndarray:
        G = self._gamma.get(l)
        if G is None:
            G = self.Q[l - 1].T @ self.jac(l) @ self.K[l - 1]
            self._gamma[l] = G
        return G

    def advance(self, rank: int) -> None:
        """Fix `rank` multipliers at the current order and form the next one."""
        l = self.order
        X, K, Q = self.X[l - 1], self.K[l - 1], self.Q[l - 1]
        D = self.point.D
        if K.shape[1] == 0:
            self.determined.append(np.zeros(0))
            self.X.append(X)
            self.K.append(K)
            self.Q.append(Q)
            self.c.append(np.zeros(D))
            return
        J = self.jac(l)
        G = self.gamma(l)
        U, s, vt = np.linalg.svd(G)
        b = Q.T @ (J @ X)
        coeff = vt[:rank].T @ ((U[:, :rank].T @ b) / s[:rank])
        Xn = X - K @ coeff
        Qn = Q @ U[:, rank:]
        self.determined.append(coeff)
        self.X.append(Xn)
        self.K.append(K @ vt[rank:].T)
        self.Q.append(Qn)
        self.c.append(Qn @ (Qn.T @ (J @ Xn)))

    def stacked(self, upto: int) -> tuple[np.ndarray, np.ndarray]:
        c = np.concatenate(self.c[:upto])
        J = np.vstack([self.jac(i) for i in range(1, upto + 1)])
        return c, J


class ConstraintEngine:
    """Evaluates constraint data at arbitrary points given the ledger's ranks."""

    def __init__(self, sys: CompiledLagrangian, tol_rank: float = TOL_RANK,
                 ranks: list[int] | None = None):
        self.sys = sys
        self.tol_rank = tol_rank
        self.ranks: list[int] = list(ranks or [])

    def state(self, u, order: int) -> PointState:
        if order - 1 > len(self.ranks):
            raise ConstraintError(f"order {order} needs ranks through order {order - 1}")
        st = PointState(self, u)
        while st.order < order:
            st.advance(self.ranks[st.order - 1])
        return st

    def project(self, u0, order: int, tol: float = PROJECT_TOL,
                max_iter: int = MAX_NEWTON) -> np.ndarray:
        """Gauss-Newton onto the surface where constraints of orders 1..order vanish.

        Orders are added one at a time.  Higher-order vectors typically vanish
        on the lower-order surface, so a joint solve from far away can chase
        spurious zeros (e.g. along a scaling direction towards infinity).
        """
        u = np.asarray(u0, dtype=float).copy()
        for k in range(1, order + 1):
            u = self._newton(u, k, tol, max_iter)
        return u

    def _newton(self, u: np.ndarray, order: int, tol: float, max_iter: int) -> np.ndarray:
        for _ in range(max_iter):
            try:
                st = self.state(u, order)
                c, J = st.stacked(order)
            except (GuardViolation, RankInstability) as err:
                raise SurfaceNotFound(f"projection left the admissible region: {err}") from None
            if np.max(np.abs(c), initial=0.0) <= tol * scale_of(u):
                return u
            du = np.linalg.lstsq(J, -c, rcond=1e-8)[0]
            cap = 0.25 * (1.0 + np.linalg.norm(u))
            n = np.linalg.norm(du)
            if n > cap:
                du *= cap / n
            u = u + du
        raise SurfaceNotFound(f"no convergence in {max_iter} Newton iterations")


@dataclass
class LevelRecord:
    order: int
    N0: int
    rank: int
    independent: int
    rank_votes: dict[int, int]
    independent_votes: dict[int, int]
    gamma_symmetry: float
    gamma_max: float
    n_points: int

    @property
    def constant_rank(self) -> bool:
        return len(self.rank_votes) <= 1 and len(self.independent_votes) <= 1

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "undetermined_in": self.N0,
            "rank": self.rank,
            "independent": self.independent,
            "rank_votes": {str(k): v for k, v in self.rank_votes.items()},
            "independent_votes": {str(k): v for k, v in self.independent_votes.items()},
            "gamma_symmetry_defect": self.gamma_symmetry,
            "gamma_max": self.gamma_max,
            "points": self.n_points,
            "constant_rank": self.constant_rank,
        }


@dataclass
class ConstraintLedger:
    D: int
    N0: int
    levels: list[LevelRecord]
    n_F: int
    termination_reason: str
    engine: ConstraintEngine = field(repr=False)
    points: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def ranks(self) -> list[int]:
        return [lv.rank for lv in self.levels]

    @property
    def I1(self) -> int:
        return self.levels[0].independent

    @property
    def free_count(self) -> int:
        last = self.levels[-1]
        return last.N0 - last.rank

    @property
    def constraint_count(self) -> int:
        return self.levels[-1].independent

    @property
    def is_empty(self) -> bool:
        """No constraint functions at any order."""
        return all(lv.independent == 0 for lv in self.levels)

    def state(self, u, order: int | None = None) -> PointState:
        return self.engine.state(u, order or self.n_F)

    def constraint_values(self, u) -> np.ndarray:
        """Stacked constraint vectors of orders 1..n_F at u."""
        st = self.engine.state(u, self.n_F)
        return np.concatenate(st.c[:self.n_F])

    def project(self, u, order: int | None = None) -> np.ndarray:
        return self.engine.project(u, order or self.n_F)

    def to_dict(self) -> dict:
        return {
            "orders": [lv.to_dict() for lv in self.levels],
            "ranks": self.ranks,
            "independent": [lv.independent for lv in self.levels],
            "n_F": self.n_F,
            "termination_reason": self.termination_reason,
            "free_multipliers": self.free_count,
            "constraint_count": self.constraint_count,
            "empty": self.is_empty,
        }


# ---------------------------------------------------------------------------
# pointwise operations


def first_order_constraints(sys: CompiledLagrangian, u: PhasePoint,
                            kd: KernelData | None = None) -> tuple[np.ndarray, float]:
    """(gamma, alt_residual): gamma_n = z_n.(dE/dq + F v).

    The residual compares against the pairing of dE with the quotient
    representatives, which must agree wherever the lift is exact.
    """
    t = eval_tensors(sys, u)
    kd = kd or ker_omega_basis(t)
    gamma = kd.Z.T @ t.g
    alt = kd.P_reps.T @ t.dE
    return gamma, float(np.max(np.abs(gamma - alt), initial=0.0))


@dataclass(frozen=True)
class BetaEval:
    gamma1: np.ndarray
    theta_q: np.ndarray
    beta: np.ndarray


def beta_form(sys: CompiledLagrangian, u: PhasePoint, kd: KernelData | None = None) -> BetaEval:
    t = eval_tensors(sys, u)
    kd = kd or ker_omega_basis(t)
    gamma = kd.Z.T @ t.g
    return BetaEval(gamma1=gamma, theta_q=kd.theta_q, beta=kd.theta_q.T @ gamma)


def gamma_matrix(sys: CompiledLagrangian, u: PhasePoint, order: int = 1,
                 engine: ConstraintEngine | None = None,
                 tol: float = 1e-8) -> tuple[np.ndarray, float]:
    """(Gamma, symmetry defect) at an on-shell point."""
    engine = engine or ConstraintEngine(sys)
    st = engine.state(u.u, order)
    c = np.concatenate(st.c[:order])
    if np.max(np.abs(c), initial=0.0) > tol * scale_of(u.u):
        raise OffSurface(f"constraint value {np.max(np.abs(c)):.3g} at requested point")
    G = st.gamma(order)
    return G, _sym_defect(G)


def _sym_defect(G: np.ndarray) -> float:
    if G.size == 0:
        return 0.0
    return float(np.linalg.norm(G - G.T, 2) / (1.0 + np.linalg.norm(G, 2)))


def project_to_constraint_surface(sys: CompiledLagrangian, guess: PhasePoint, order: int,
                                  ledger: ConstraintLedger | None = None) -> PhasePoint:
    engine = ledger.engine if ledger is not None else ConstraintEngine(sys)
    return PhasePoint.from_u(engine.project(guess.u, order))


# ---------------------------------------------------------------------------
# the algorithm


def run_constraint_algorithm(sys: CompiledLagrangian, seed_points=None, max_order: int = 10,
                             n_points: int = 8, rng: np.random.Generator | None = None,
                             tol_rank: float = TOL_RANK) -> ConstraintLedger:
    """Build the ledger, order by order, until the independent count settles."""
    D = sys.D
    engine = ConstraintEngine(sys, tol_rank)
    if seed_points is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        seed_points = [np.concatenate(p) for p in sample_points(sys, 4 * n_points, rng)]
    seeds = [p.u if isinstance(p, PhasePoint) else np.asarray(p, dtype=float)
             for p in seed_points]
    N0 = engine.state(seeds[0], 1).kd.N0
    levels: list[LevelRecord] = []
    I_prev = 0
    reason = "max-order-exceeded"
    n_F = max_order
    for l in range(1, max_order + 1):
        pts = []
        for s in seeds:
            try:
                pts.append(engine.project(s, l))
            except SurfaceNotFound:
                continue
        if len(pts) < n_points:
            raise SurfaceNotFound(f"order {l}: only {len(pts)} of {len(seeds)} seeds reached "
                                  f"the constraint surface (need {n_points})")
        I_votes, r_votes = [], []
        sym, gmax = 0.0, 0.0
        n_in = None
        for p in pts:
            st = engine.state(p, l)
            _, J = st.stacked(l)
            I_votes.append(numerical_rank(J))
            n_in = st.K[l - 1].shape[1]
            if n_in:
                G = st.gamma(l)
                r_votes.append(numerical_rank(G))
                sym = max(sym, _sym_defect(G))
                gmax = max(gmax, float(np.max(np.abs(G))))
            else:
                r_votes.append(0)
        I_l, I_counts = _majority(I_votes)
        r_l, r_counts = _majority(r_votes)
        engine.ranks.append(r_l)
        levels.append(LevelRecord(order=l, N0=int(n_in), rank=r_l, independent=I_l,
                                  rank_votes=r_counts, independent_votes=I_counts,
                                  gamma_symmetry=sym, gamma_max=gmax, n_points=len(pts)))
        seeds = pts
        if I_l == I_prev:
            reason, n_F = "fixed-point", l
            break
        if I_l == 2 * D:
            reason, n_F = "full-rank", l
            break
        I_prev = I_l
    return ConstraintLedger(D=D, N0=N0, levels=levels, n_F=n_F, termination_reason=reason,
                            engine=engine, points=seeds)
