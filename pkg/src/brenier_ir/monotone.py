"""Verifiers for cyclic monotonicity and weak intra-order preservation.

A finite graph ``{(z_i, u_i)}`` is cyclically monotone for the squared
Euclidean cost when every cycle ``i_1 -> ... -> i_m -> i_1`` satisfies

    sum_t ||z_t - u_t||^2 <= sum_t ||z_t - u_{t+1}||^2.

Checking all cycles is exponential, so :func:`check_cyclic_monotone`
enumerates cycles up to a fixed length. Graphs with at most
:data:`EXHAUSTIVE_MAX` pairs are always checked at every length, which makes
the check complete for them.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CycleCheck",
    "IopCheck",
    "check_cyclic_monotone",
    "check_weak_iop",
    "EXHAUSTIVE_MAX",
]

EXHAUSTIVE_MAX = 5
MAX_PAIRS_DEEP = 30


@dataclass(frozen=True)
class CycleCheck:
    holds: bool
    witness: tuple[int, ...] | None
    margin: float
    depth: int
    exhaustive: bool

    def __bool__(self) -> bool:
        return self.holds


@dataclass(frozen=True)
class IopCheck:
    holds: bool
    witness: tuple[int, int, int] | None
    margin: float

    def __bool__(self) -> bool:
        return self.holds


@functools.lru_cache(maxsize=64)
def _cycles(m: int, length: int) -> np.ndarray:
    """Ordered cycles of distinct indices, one rotation each (smallest first)."""
    if length == 2:
        a, b = np.triu_indices(m, k=1)
        return _frozen(np.stack([a, b], axis=1))
    out = []
    for first in range(m - length + 1):
        rest = range(first + 1, m)
        for tail in itertools.permutations(rest, length - 1):
            out.append((first,) + tail)
    if not out:
        return _frozen(np.empty((0, length), dtype=np.intp))
    return _frozen(np.array(out, dtype=np.intp))


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def check_cyclic_monotone(
    Z,
    U,
    max_cycle_len: int | None = 4,
    tol: float = 1e-8,
) -> CycleCheck:
    """Check cyclic monotonicity of the graph ``{(Z[i], U[i])}``.

    Parameters
    ----------
    Z, U : array_like, shape (m, d)
        Paired input and output points (1-D arrays are scalar points).
    max_cycle_len : int or None
        Longest cycle enumerated. ``None`` means all lengths up to ``m``.
        Graphs with ``m <= EXHAUSTIVE_MAX`` are always checked exhaustively.
    tol : float
        A cycle counts as a violation only if its margin exceeds ``tol``.

    Returns
    -------
    CycleCheck
        ``witness`` is the first violating cycle in enumeration order
        (by length, then lexicographically), as a tuple of pair indices.
    """
    Z = _points(Z, "Z")
    U = _points(U, "U")
    if Z.shape != U.shape:
        raise ValueError(f"graph inputs and outputs differ in shape: {Z.shape} vs {U.shape}")
    m = Z.shape[0]
    exhaustive = max_cycle_len is None or m <= EXHAUSTIVE_MAX or max_cycle_len >= m
    depth = m if exhaustive else int(max_cycle_len)
    if max_cycle_len is not None and max_cycle_len < 2:
        raise ValueError("max_cycle_len must be at least 2")
    if depth > 3 and m > MAX_PAIRS_DEEP:
        raise ValueError(
            f"cycle enumeration beyond length 3 is limited to {MAX_PAIRS_DEEP} pairs, got {m}"
        )

    diff = Z[:, None, :] - U[None, :, :]
    D = np.einsum("ijl,ijl->ij", diff, diff)
    worst = -np.inf
    for length in range(2, depth + 1):
        cyc = _cycles(m, length)
        if cyc.size == 0:
            continue
        shifted = np.roll(cyc, -1, axis=1)
        margin = D[cyc, cyc].sum(axis=1) - D[cyc, shifted].sum(axis=1)
        worst = max(worst, float(margin.max()))
        bad = np.flatnonzero(margin > tol)
        if bad.size:
            first = bad[0]
            return CycleCheck(
                holds=False,
                witness=tuple(int(i) for i in cyc[first]),
                margin=float(margin[first]),
                depth=depth,
                exhaustive=exhaustive,
            )
    return CycleCheck(holds=True, witness=None, margin=worst, depth=depth, exhaustive=exhaustive)


def check_weak_iop(X, F, tol: float = 1e-8) -> IopCheck:
    """Check ``(x_i - x_j) * (f_i(x) - f_j(x)) >= -tol`` at every point.

    ``X[p]`` is an evaluation point and ``F[p]`` the map's output there.
    The witness is ``(p, i, j)`` with 0-based coordinates ``i < j``.
    """
    X = _points(X, "X")
    F = _points(F, "F")
    if X.shape != F.shape:
        raise ValueError(f"inputs and outputs differ in shape: {X.shape} vs {F.shape}")
    dx = X[:, :, None] - X[:, None, :]
    df = F[:, :, None] - F[:, None, :]
    prod = dx * df
    worst = float(prod.min()) if prod.size else 0.0
    bad = np.argwhere(prod < -tol)
    if bad.size:
        # argwhere is row-major; keep the (i < j) orientation for reporting.
        bad = bad[bad[:, 1] < bad[:, 2]]
        p, i, j = (int(v) for v in bad[0])
        return IopCheck(holds=False, witness=(p, i, j), margin=float(prod[p, i, j]))
    return IopCheck(holds=True, witness=None, margin=worst)


def _points(X, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"{name} must be 1-D or 2-D, got ndim={X.ndim}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X
