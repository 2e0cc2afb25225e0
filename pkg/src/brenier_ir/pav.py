"""Univariate isotonic regression by pool adjacent violators."""

from __future__ import annotations

import numpy as np

__all__ = ["pav_fit", "isotonic_mse"]


def pav_fit(z, y) -> np.ndarray:
    """Least-squares nondecreasing fit of ``y`` against ``z``.

    Points sharing a ``z`` value are collapsed into one weighted point before
    pooling, and receive the same fitted value. The result is returned in the
    original index order.

    Parameters
    ----------
    z, y : array_like, shape (n,)
        Inputs and responses, finite, of equal length.

    Returns
    -------
    numpy.ndarray, shape (n,)
    """
    z = np.asarray(z, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if z.shape != y.shape:
        raise ValueError(f"z and y lengths differ: {z.size} != {y.size}")
    if z.size == 0:
        raise ValueError("pav_fit needs at least one point")
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(y))):
        raise ValueError("pav_fit inputs must be finite")

    levels, inverse, counts = np.unique(z, return_inverse=True, return_counts=True)
    sums = np.bincount(inverse, weights=y, minlength=levels.size)
    fitted = _pool(sums / counts, counts.astype(np.float64))
    return fitted[inverse]


def _pool(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    # Stack of blocks: (weighted mean, weight, length).
    means: list[float] = []
    wts: list[float] = []
    lens: list[int] = []
    for v, w in zip(values, weights):
        means.append(float(v))
        wts.append(float(w))
        lens.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            w_new = wts[-2] + wts[-1]
            m_new = (means[-2] * wts[-2] + means[-1] * wts[-1]) / w_new
            l_new = lens[-2] + lens[-1]
            del means[-1], wts[-1], lens[-1]
            means[-1], wts[-1], lens[-1] = m_new, w_new, l_new
    return np.repeat(np.array(means), lens)


def isotonic_mse(z, y) -> float:
    """Mean squared residual of the isotonic fit."""
    y = np.asarray(y, dtype=np.float64).ravel()
    return float(np.mean((y - pav_fit(z, y)) ** 2))
