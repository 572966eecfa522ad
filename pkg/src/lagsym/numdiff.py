"""Central differences with one Richardson extrapolation step."""

from __future__ import annotations

from typing import Callable

import numpy as np

__all__ = ["step_for", "directional", "jacobian", "STEP"]

STEP = 1e-5


def step_for(u: np.ndarray, base: float = STEP) -> float:
    return base * (1.0 + float(np.linalg.norm(u)))


def directional(f: Callable[[np.ndarray], np.ndarray], u: np.ndarray, d: np.ndarray,
                h: float | None = None) -> np.ndarray:
    """Derivative of f at u along d (d need not be normalised)."""
    u = np.asarray(u, dtype=float)
    d = np.asarray(d, dtype=float)
    nd = float(np.linalg.norm(d))
    if nd == 0.0:
        return np.zeros_like(np.asarray(f(u), dtype=float))
    e = d / nd
    h = step_for(u) if h is None else h

    def central(s):
        return (np.asarray(f(u + s * e)) - np.asarray(f(u - s * e))) / (2.0 * s)

    coarse = central(h)
    fine = central(h / 2.0)
    return nd * (4.0 * fine - coarse) / 3.0


def jacobian(f: Callable[[np.ndarray], np.ndarray], u: np.ndarray,
             h: float | None = None) -> np.ndarray:
    """Columns are derivatives along the coordinate axes."""
    u = np.asarray(u, dtype=float)
    cols = []
    for k in range(u.size):
        e = np.zeros_like(u)
        e[k] = 1.0
        cols.append(np.atleast_1d(directional(f, u, e, h)))
    return np.column_stack(cols) if cols else np.zeros((0, 0))
