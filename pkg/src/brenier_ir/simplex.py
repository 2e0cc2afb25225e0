"""Euclidean projection onto the probability simplex."""

from __future__ import annotations

import numpy as np

__all__ = ["project_row_to_simplex", "project_rows_to_simplex", "on_simplex"]


def project_row_to_simplex(v) -> np.ndarray:
    """Project ``v`` onto ``{x >= 0, sum(x) = 1}`` by sorting and thresholding."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("project_row_to_simplex expects a 1-D vector")
    return project_rows_to_simplex(v[None, :])[0]


def project_rows_to_simplex(V) -> np.ndarray:
    """Row-wise simplex projection of a 2-D array."""
    V = np.asarray(V, dtype=np.float64)
    if V.ndim != 2:
        raise ValueError("project_rows_to_simplex expects a 2-D array")
    if not np.all(np.isfinite(V)):
        raise ValueError("cannot project non-finite values onto the simplex")
    m, d = V.shape
    S = -np.sort(-V, axis=1)
    css = np.cumsum(S, axis=1) - 1.0
    idx = np.arange(1, d + 1)
    # rho = largest index with S[rho] - css[rho] / (rho + 1) > 0
    cond = S - css / idx > 0
    rho = d - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(m), rho] / (rho + 1)
    X = np.maximum(V - theta[:, None], 0.0)
    # Re-normalise to absorb rounding in the cumulative sum.
    return X / X.sum(axis=1, keepdims=True)


def on_simplex(X, tol: float = 1e-9) -> bool:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return bool(np.all(X >= -tol) and np.allclose(X.sum(axis=1), 1.0, rtol=0, atol=tol))
