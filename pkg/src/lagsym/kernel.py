"""Null spaces of the mass matrix and of the Lagrangian two-form."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import TensorEval, scale_of

__all__ = [
    "RankInstability",
    "KernelData",
    "null_basis",
    "reduced_force",
    "truncated_pinv",
    "ker_omega_basis",
    "align_basis",
    "procrustes",
    "spectral_cut",
    "GAP_MIN",
    "TOL_RANK",
]

TOL_RANK = 1e-9
GAP_MIN = 1e3


class RankInstability(ArithmeticError):
    """No clean gap in a singular spectrum at the rank cut."""


def spectral_cut(s: np.ndarray, tol_rank: float) -> tuple[int, float]:
    """(rank, gap) for descending singular values s.

    rank counts values above tol_rank * s_max; gap is the ratio across the
    cut (inf when the cut is at either end of a clean spectrum).
    """
    if s.size == 0 or s[0] == 0.0:
        return 0, float("inf")
    rank = int(np.count_nonzero(s > tol_rank * s[0]))
    if rank == s.size:
        return rank, float("inf")
    below = s[rank]
    gap = float("inf") if below == 0.0 else float(s[rank - 1] / below)
    return rank, gap


def _sign_fix(vectors: np.ndarray) -> np.ndarray:
    out = vectors.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            out[:, j] = -col
    return out


def _mass_split(M: np.ndarray, tol_rank: float, check_gap: bool):
    """One SVD of M giving (Z, N0, truncated pseudo-inverse, gap)."""
    D = M.shape[0]
    U, s, vt = np.linalg.svd(M)
    rank, gap = spectral_cut(s, tol_rank)
    if check_gap and gap < GAP_MIN:
        raise RankInstability(f"mass matrix spectrum has no gap at rank {rank}: ratio {gap:.3g}")
    Z = vt[rank:].T
    # descending residual singular value, then a sign convention
    order = np.argsort(-s[rank:], kind="stable")
    Z = _sign_fix(Z[:, order])
    Mp = (vt[:rank].T / s[:rank]) @ U[:, :rank].T
    return Z, D - rank, Mp, gap


def null_basis(M: np.ndarray, tol_rank: float = TOL_RANK,
               check_gap: bool = True) -> tuple[np.ndarray, int]:
    """Orthonormal columns spanning the numerical null space of symmetric M."""
    if M.shape[0] == 0:
        return np.zeros((0, 0)), 0
    Z, N0, _, _ = _mass_split(M, tol_rank, check_gap)
    return Z, N0


def reduced_force(F: np.ndarray, Z: np.ndarray) -> np.ndarray:
    return Z.T @ F @ Z


def truncated_pinv(M: np.ndarray, rank: int) -> np.ndarray:
    """Pseudo-inverse of symmetric M keeping exactly `rank` singular values."""
    U, s, vt = np.linalg.svd(M)
    if rank == 0:
        return np.zeros_like(M.T)
    return (vt[:rank].T / s[:rank]) @ U[:, :rank].T


@dataclass(frozen=True, eq=False)
class KernelData:
    Z: np.ndarray            # D x N0, orthonormal null basis of M
    N0: int
    Fbar: np.ndarray         # N0 x N0
    kerOmega: np.ndarray     # 2D x k, SVD null basis of the two-form
    G_basis: np.ndarray      # 2D x N0, vertical lifts (0, z)
    P_reps: np.ndarray       # 2D x N0, (z, w) with M w = -F z and w orthogonal to Z
    theta_q: np.ndarray      # N0 x 2D, covectors (z, 0)
    Mpinv: np.ndarray        # rank-truncated pseudo-inverse of M
    lift_defect: np.ndarray  # D x N0 columns M w + F z
    omega_gap: float
    mass_gap: float

    @property
    def D(self) -> int:
        return self.Z.shape[0]

    @property
    def lift_residuals(self) -> np.ndarray:
        return np.linalg.norm(self.lift_defect, axis=0)

    @property
    def dim_ker_omega(self) -> int:
        return self.kerOmega.shape[1]

    @property
    def predicted_lift_count(self) -> int:
        """2 N0, the count implied by lifting every null vector of M."""
        return 2 * self.N0

    @property
    def predicted_reduced_count(self) -> int:
        """N0 + nullity of the reduced force matrix."""
        if self.N0 == 0:
            return 0
        s = np.linalg.svd(self.Fbar, compute_uv=False)
        tol = 1e-8 * scale_of(self.Fbar)
        return self.N0 + int(np.count_nonzero(s <= tol))

    @property
    def Pi0(self) -> np.ndarray:
        return self.Z @ self.Z.T


def ker_omega_basis(t: TensorEval, tol_rank: float = TOL_RANK,
                    check_gap: bool = True) -> KernelData:
    Z, N0, Mp, mass_gap = _mass_split(t.M, tol_rank, check_gap)
    _, so, vto = np.linalg.svd(t.omega)
    orank, omega_gap = spectral_cut(so, tol_rank)
    if check_gap and omega_gap < GAP_MIN:
        raise RankInstability(f"two-form spectrum has no gap at rank {orank}: ratio {omega_gap:.3g}")
    kerO = vto[orank:].T
    W = -Mp @ (t.F @ Z)
    W = W - Z @ (Z.T @ W)
    P = np.vstack([Z, W])
    G = np.vstack([np.zeros_like(Z), Z])
    theta = np.hstack([Z.T, np.zeros_like(Z.T)])
    return KernelData(Z=Z, N0=N0, Fbar=reduced_force(t.F, Z), kerOmega=kerO, G_basis=G,
                      P_reps=P, theta_q=theta, Mpinv=Mp, lift_defect=t.M @ W + t.F @ Z,
                      omega_gap=omega_gap, mass_gap=mass_gap)


def procrustes(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Orthogonal R minimising ||A R - B||_F."""
    U, _, vt = np.linalg.svd(A.T @ B)
    return U @ vt


def align_basis(prev: KernelData, cur: KernelData) -> KernelData:
    """Re-mix cur's null basis to best match prev's (continuity along flows)."""
    if prev.N0 != cur.N0:
        raise RankInstability(f"null space dimension changed from {prev.N0} to {cur.N0}")
    if cur.N0 == 0:
        return cur
    R = procrustes(cur.Z, prev.Z)
    return replace(cur, Z=cur.Z @ R, Fbar=R.T @ cur.Fbar @ R, G_basis=cur.G_basis @ R,
                   P_reps=cur.P_reps @ R, theta_q=R.T @ cur.theta_q,
                   lift_defect=cur.lift_defect @ R)
