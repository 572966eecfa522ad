"""Phase-space tensors of a compiled system at concrete points."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codegen import EvaluationError
from .system import CompiledLagrangian, GuardViolation

__all__ = ["PhasePoint", "TensorEval", "eval_tensors", "el_residual", "assemble_omega",
           "energy_equation_residual", "scale_of"]


@dataclass(frozen=True, eq=False)
class PhasePoint:
    q: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).copy())
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).copy())
        if self.q.shape != self.v.shape or self.q.ndim != 1:
            raise ValueError("q and v must be vectors of equal length")

    @classmethod
    def from_u(cls, u) -> "PhasePoint":
        u = np.asarray(u, dtype=float)
        D = u.size // 2
        return cls(u[:D], u[D:])

    @property
    def u(self) -> np.ndarray:
        return np.concatenate([self.q, self.v])

    @property
    def D(self) -> int:
        return self.q.size


@dataclass(frozen=True, eq=False)
class TensorEval:
    M: np.ndarray
    F: np.ndarray
    E: float
    dE_dq: np.ndarray
    dE_dv: np.ndarray
    g: np.ndarray
    omega: np.ndarray

    @property
    def dE(self) -> np.ndarray:
        return np.concatenate([self.dE_dq, self.dE_dv])


def scale_of(*arrays) -> float:
    """1 + largest magnitude among the given arrays or scalars."""
    m = 0.0
    for a in arrays:
        a = np.asarray(a, dtype=float)
        if a.size:
            m = max(m, float(np.max(np.abs(a))))
    return 1.0 + m


def assemble_omega(M: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Block matrix W with Omega(X, Y) = X^T W Y."""
    D = M.shape[0]
    W = np.zeros((2 * D, 2 * D))
    W[:D, :D] = F
    W[:D, D:] = M
    W[D:, :D] = -M.T
    return W


def eval_tensors(sys: CompiledLagrangian, u: PhasePoint, check: bool = True) -> TensorEval:
    if check:
        sys.check_point(u.q, u.v)
    try:
        E, dEq, dEv, M, F, g = sys.core(u.q, u.v)
    except EvaluationError as err:
        raise GuardViolation(str(err)) from None
    return TensorEval(M=M, F=F, E=E, dE_dq=dEq, dE_dv=dEv, g=g, omega=assemble_omega(M, F))


def el_residual(sys: CompiledLagrangian, u: PhasePoint, accel) -> np.ndarray:
    """dE/dq + F v + M a; zero exactly on the Euler-Lagrange surface."""
    t = eval_tensors(sys, u)
    return t.dE_dq + t.F @ u.v + t.M @ np.asarray(accel, dtype=float)


def energy_equation_residual(t: TensorEval, X: np.ndarray) -> np.ndarray:
    """dE - i_X Omega as a 2D covector."""
    return t.dE - t.omega.T @ X
