"""Second-order Euler-Lagrange vector fields and their flows."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import RK45, solve_ivp

from .codegen import EvaluationError, compile_exprs
from .constraints import ConstraintLedger, SurfaceNotFound
from .expr import Expr
from .geometry import PhasePoint, energy_equation_residual, eval_tensors, scale_of
from .kernel import RankInstability
from .numdiff import directional
from .parser import parse_expression
from .system import CompiledLagrangian, GuardViolation

__all__ = [
    "GaugeError",
    "IntegrationError",
    "GaugeChoice",
    "Soelvf",
    "Trajectory",
    "assemble_soelvf",
    "integrate_flow",
    "symmetry_flow",
    "lie_bracket",
    "bracket_residual",
    "orbit_map_check",
    "kernel_direction_field",
    "RTOL",
]

RTOL = 1e-9
GAUGE_TOL = 1e-8


class GaugeError(ValueError):
    """A gauge choice touches a multiplier fixed by the constraint algorithm."""


class IntegrationError(RuntimeError):
    pass


@dataclass
class GaugeChoice:
    """Free multipliers given as a horizontal direction field h(q, v).

    The field contributes the quotient representative lifting the part of
    h that lies in the free kernel directions.  Because h is a plain vector
    field, the choice does not depend on how the kernel basis is oriented.
    """

    direction: Callable[[np.ndarray], np.ndarray] | None = None
    description: str = "zero"

    @classmethod
    def zero(cls) -> "GaugeChoice":
        return cls()

    @classmethod
    def from_exprs(cls, sys: CompiledLagrangian, exprs: Sequence[Expr],
                   description: str = "") -> "GaugeChoice":
        if len(exprs) != sys.D:
            raise GaugeError(f"gauge direction needs {sys.D} components, got {len(exprs)}")
        fn = compile_exprs(list(exprs), sys.D, sys.spec.params, name="gauge")
        D = sys.D
        return cls(lambda u: fn(u[:D], u[D:]), description or "expression")

    @classmethod
    def from_text(cls, sys: CompiledLagrangian, text: str) -> "GaugeChoice":
        """D component expressions separated by ';', e.g. 'q[1]/norm(q); q[2]/norm(q)'."""
        parts = [p.strip() for p in text.split(";") if p.strip()]
        exprs = [parse_expression(p, sys.spec) for p in parts]
        return cls.from_exprs(sys, exprs, description=text.strip())


@dataclass
class Soelvf:
    sys: CompiledLagrangian
    ledger: ConstraintLedger
    gauge: GaugeChoice = field(default_factory=GaugeChoice.zero)
    reduced_base: bool = False

    def parts(self, u) -> dict[str, np.ndarray]:
        """Base field, determined corrections, free directions and gauge term at u."""
        u = np.asarray(u, dtype=float)
        led = self.ledger
        nF = led.n_F
        st = led.engine.state(u, nF)
        last_rank = led.ranks[nF - 1] if len(led.ranks) >= nF else 0
        if last_rank > 0:
            st.advance(last_rank)
        X = st.X[-1]
        K = st.K[-1]
        D = self.sys.D
        H = K[:D]  # horizontal parts of free directions, orthonormal
        out = {"base": st.X[0], "determined": X - st.X[0], "free": K}
        if self.reduced_base and K.shape[1]:
            X = X - K @ (H.T @ X[:D])
        gterm = np.zeros(2 * D)
        if self.gauge.direction is not None:
            h = np.asarray(self.gauge.direction(u), dtype=float)
            Z = st.kd.Z
            inside = Z @ (Z.T @ h)
            coeff = H.T @ h
            leak = inside - H @ coeff
            if np.linalg.norm(leak) > GAUGE_TOL * (1.0 + np.linalg.norm(h)):
                raise GaugeError("gauge direction has a component along a determined multiplier "
                                 f"(size {np.linalg.norm(leak):.3g})")
            gterm = K @ coeff
        out["gauge"] = gterm
        out["field"] = X + gterm
        out["state"] = st
        return out

    def __call__(self, u) -> np.ndarray:
        return self.parts(u)["field"]


def assemble_soelvf(sys: CompiledLagrangian, ledger: ConstraintLedger,
                    gauge_choice: GaugeChoice | None = None,
                    reduced_base: bool = False) -> Soelvf:
    return Soelvf(sys, ledger, gauge_choice or GaugeChoice.zero(), reduced_base)


def kernel_direction_field(sys: CompiledLagrangian, ledger: ConstraintLedger,
                           direction: Callable[[np.ndarray], np.ndarray]):
    """u -> quotient representative lifting Pi0 h(u); frame independent."""
    engine = ledger.engine

    def field(u):
        st = engine.state(u, 1)
        Z = st.kd.Z
        return st.K[0] @ (Z.T @ np.asarray(direction(u), dtype=float))

    return field


@dataclass
class Trajectory:
    times: np.ndarray
    points: np.ndarray                 # n x 2D
    energy: np.ndarray
    energy_drift: np.ndarray           # |E - E0| / (1 + |E0|)
    constraint_max: np.ndarray         # max |c| over all orders
    basis_overlap: np.ndarray          # smallest principal cosine between successive ker M

    @property
    def final(self) -> PhasePoint:
        return PhasePoint.from_u(self.points[-1])

    def summary(self) -> dict:
        return {
            "steps": int(self.times.size),
            "t_end": float(self.times[-1]),
            "max_energy_drift": float(np.max(self.energy_drift)),
            "max_constraint": float(np.max(self.constraint_max)),
            "min_basis_overlap": float(np.min(self.basis_overlap)),
        }

    def rows(self) -> tuple[list[str], list[list[float]]]:
        D = self.points.shape[1] // 2
        header = ["t", *[f"q{i}" for i in range(1, D + 1)], *[f"v{i}" for i in range(1, D + 1)],
                  "E", "E_drift", "constraint_max"]
        rows = [[float(t), *map(float, p), float(e), float(d), float(c)]
                for t, p, e, d, c in zip(self.times, self.points, self.energy,
                                         self.energy_drift, self.constraint_max)]
        return header, rows

    def to_csv(self) -> str:
        header, rows = self.rows()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows([[repr(x) for x in r] for r in rows])
        return buf.getvalue()

    def to_json(self) -> str:
        header, rows = self.rows()
        return json.dumps({"columns": header, "rows": rows, "summary": self.summary()},
                          indent=1) + "\n"


def _monitor(sv: Soelvf, times, points) -> Trajectory:
    energies, cmax, overlaps = [], [], []
    prevZ = None
    for u in points:
        st = sv.ledger.engine.state(u, sv.ledger.n_F)
        energies.append(st.tensors.E)
        c = np.concatenate(st.c[:sv.ledger.n_F])
        cmax.append(float(np.max(np.abs(c), initial=0.0)))
        Z = st.kd.Z
        if prevZ is None or Z.shape[1] == 0:
            overlaps.append(1.0)
        else:
            overlaps.append(float(np.min(np.linalg.svd(prevZ.T @ Z, compute_uv=False))))
        prevZ = Z
    energies = np.array(energies)
    drift = np.abs(energies - energies[0]) / (1.0 + abs(energies[0]))
    return Trajectory(np.asarray(times), np.asarray(points), energies, drift,
                      np.array(cmax), np.array(overlaps))


def _rhs(f: Callable[[np.ndarray], np.ndarray]):
    def rhs(_t, y):
        try:
            return f(y)
        except (GuardViolation, EvaluationError, RankInstability) as err:
            raise IntegrationError(f"field evaluation failed: {err}") from None
    return rhs


def integrate_flow(sv: Soelvf, u0: PhasePoint, t_end: float, dt: float | None = None,
                   project_each_step: bool = False, rtol: float = RTOL,
                   atol: float = RTOL) -> Trajectory:
    """Adaptive RK45 integration of the field with constraint and energy monitors."""
    y0 = u0.u if isinstance(u0, PhasePoint) else np.asarray(u0, dtype=float)
    rhs = _rhs(sv)
    if not project_each_step:
        grid = None if dt is None else _grid(t_end, dt)
        sol = solve_ivp(rhs, (0.0, t_end), y0, method="RK45", rtol=rtol, atol=atol,
                        t_eval=grid)
        if sol.status < 0:
            raise IntegrationError(sol.message)
        return _monitor(sv, sol.t, sol.y.T)
    times, points = [0.0], [y0.copy()]
    t, y = 0.0, y0.copy()
    max_step = np.inf if dt is None else dt
    while t < t_end - 1e-14 * max(1.0, t_end):
        solver = RK45(rhs, t, y, t_end, rtol=rtol, atol=atol, max_step=max_step)
        solver.step()
        if solver.status == "failed":
            raise IntegrationError("step size collapsed")
        try:
            y = sv.ledger.project(solver.y)
        except SurfaceNotFound as err:
            raise IntegrationError(f"projection failed at t={solver.t:.6g}: {err}") from None
        t = solver.t
        times.append(t)
        points.append(y.copy())
    return _monitor(sv, times, points)


def _grid(t_end: float, dt: float) -> np.ndarray:
    n = max(1, int(round(t_end / dt)))
    return np.linspace(0.0, t_end, n + 1)


def symmetry_flow(sys: CompiledLagrangian, P: Callable[[np.ndarray], np.ndarray], eps: float,
                  u0, rtol: float = 1e-11) -> PhasePoint:
    """sigma_P(eps, u0): the flow of the generator P for group parameter eps."""
    y0 = u0.u if isinstance(u0, PhasePoint) else np.asarray(u0, dtype=float)
    if eps == 0:
        return PhasePoint.from_u(y0)

    def rhs(_e, y):
        try:
            sys.check_point(y[:sys.D], y[sys.D:])
            return np.asarray(P(y), dtype=float)
        except (GuardViolation, EvaluationError, RankInstability) as err:
            raise IntegrationError(f"symmetry flow left the admissible region: {err}") from None

    sol = solve_ivp(rhs, (0.0, eps), y0, method="RK45", rtol=rtol, atol=rtol)
    if sol.status < 0:
        raise IntegrationError(sol.message)
    return PhasePoint.from_u(sol.y[:, -1])


def lie_bracket(X: Callable, P: Callable, u) -> np.ndarray:
    """[X, P] = DP.X - DX.P by differences along the two fields."""
    u = np.asarray(u, dtype=float)
    return directional(P, u, X(u)) - directional(X, u, P(u))


def bracket_residual(sys: CompiledLagrangian, sv: Soelvf, P: Callable, points) -> float:
    """Largest ||Omega [X, P]|| / (1 + ||Omega||) over the points (0 for no points)."""
    worst = 0.0
    for u in points:
        br = lie_bracket(sv, P, u)
        t = eval_tensors(sys, PhasePoint.from_u(u))
        worst = max(worst, float(np.linalg.norm(t.omega.T @ br)) / (1.0 + np.linalg.norm(t.omega, 2)))
    return worst


def orbit_map_check(sys: CompiledLagrangian, sv: Soelvf, P: Callable, eps: float, u0,
                    t_end: float, other: Soelvf | None = None) -> dict:
    """Transport u0 by sigma_P, flow both points, and test the image endpoint.

    The image endpoint must lie on the constraint surface and satisfy the
    energy equation for the (possibly different-gauge) field used on it.
    """
    other = other or sv
    y0 = u0.u if isinstance(u0, PhasePoint) else np.asarray(u0, dtype=float)
    a = integrate_flow(sv, PhasePoint.from_u(y0), t_end)
    w0 = symmetry_flow(sys, P, eps, y0)
    b = integrate_flow(other, w0, t_end)
    end = b.points[-1]
    c = other.ledger.constraint_values(end)
    t = eval_tensors(sys, PhasePoint.from_u(end))
    ee = energy_equation_residual(t, other(end))
    return {
        "constraint": float(np.max(np.abs(c), initial=0.0)),
        "energy_equation": float(np.linalg.norm(ee)) / scale_of(t.dE, t.omega),
        "start_constraint": float(np.max(np.abs(other.ledger.constraint_values(w0.u)), initial=0.0)),
        "reference_end": a.points[-1].tolist(),
        "image_end": end.tolist(),
    }
