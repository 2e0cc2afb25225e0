"""Multiclass recalibration with Brenier isotonic regression, and metrics.

The recalibrator is fitted on the pushforward calibration set
``{(p_hat(x_i), y_i)}`` and applied through the Laguerre map, so every
recalibrated vector is one of the fitted quantile rows.

Binned metrics share one interval convention: ``[0, 1]`` is split into
``bins`` equal intervals that are closed on the right, so a value lying on
an interior edge belongs to the lower interval and ``0`` joins the first.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import BrenierModel, FitConfig, LabeledDataset, fit, laguerre_predict

__all__ = [
    "CalibrationSet",
    "SimplexBinning",
    "fit_recalibrator",
    "recalibrate",
    "l1_calibration_error",
    "classwise_ce",
    "confidence_ce",
    "accuracy",
    "all_metrics",
    "calibration_map_grid",
    "simplex_grid",
]

PROB_TOL = 1e-6


@dataclass(frozen=True)
class CalibrationSet:
    """Base-model probabilities (n x d, rows on the simplex) with one-hot labels."""

    probs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        probs, labels = _check_pair(self.probs, self.labels)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_class_indices(cls, probs, classes) -> "CalibrationSet":
        probs = np.asarray(probs, dtype=np.float64)
        classes = np.asarray(classes)
        return cls(probs, _one_hot(classes, probs.shape[1]))

    @property
    def n(self) -> int:
        return self.probs.shape[0]

    @property
    def d(self) -> int:
        return self.probs.shape[1]


def _interval_index(values: np.ndarray, bins: int) -> np.ndarray:
    idx = np.ceil(np.asarray(values, dtype=np.float64) * bins).astype(np.int64) - 1
    return np.clip(idx, 0, bins - 1)


@dataclass(frozen=True)
class SimplexBinning:
    """Uniform grid on the first ``d - 1`` coordinates of the simplex."""

    bins_per_axis: int = 15

    def __post_init__(self):
        if int(self.bins_per_axis) != self.bins_per_axis or self.bins_per_axis < 1:
            raise ValueError(f"bins_per_axis must be a positive integer, got {self.bins_per_axis}")

    def bin_ids(self, probs) -> np.ndarray:
        """Per-axis interval indices, shape ``(n, max(d - 1, 1))``."""
        probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
        coords = probs[:, :-1] if probs.shape[1] > 1 else probs
        return _interval_index(coords, self.bins_per_axis)

    def bin_of(self, q) -> tuple[int, ...]:
        return tuple(int(i) for i in self.bin_ids(np.asarray(q)[None, :])[0])


def fit_recalibrator(cal: CalibrationSet, config: FitConfig | None = None) -> BrenierModel:
    """Fit simplex-constrained quantiles mapping base probabilities to labels."""
    config = FitConfig() if config is None else config
    if not config.simplex_constrained:
        raise ValueError("recalibration requires simplex_constrained=True")
    data = LabeledDataset(cal.probs, cal.labels, "one_hot")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = fit(data, config)
    if config.k < cal.d:
        warnings.warn(
            f"k={config.k} is below the number of classes d={cal.d}; predictions cannot cover every class",
            stacklevel=2,
        )
    return model


def recalibrate(model: BrenierModel, probs) -> np.ndarray:
    """Recalibrated probability vectors (rows of ``model.quantiles``)."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    out, _ = laguerre_predict(model, probs)
    return out


def l1_calibration_error(probs, labels, binning: SimplexBinning | None = None) -> float:
    """Bin-weighted L1 distance between label means and probability means.

    Points are grouped by :class:`SimplexBinning`; each non-empty bin
    contributes ``(n_b / n) * ||mean(labels_b) - mean(probs_b)||_1``.
    """
    probs, labels = _check_pair(probs, labels)
    binning = SimplexBinning() if binning is None else binning
    _, groups = np.unique(binning.bin_ids(probs), axis=0, return_inverse=True)
    groups = groups.ravel()
    return _binned_gap(groups, probs, labels) / probs.shape[0]


def _binned_gap(groups: np.ndarray, pred: np.ndarray, target: np.ndarray) -> float:
    """``sum_b || sum_{i in b} (target_i - pred_i) ||_1`` for 2-D arrays."""
    m = int(groups.max()) + 1
    diff = target - pred
    sums = np.zeros((m, diff.shape[1]))
    np.add.at(sums, groups, diff)
    return float(np.abs(sums).sum())


def classwise_ce(probs, labels, bins: int = 15) -> float:
    """Per-class binned ECE of the scores ``probs[:, c]``, averaged over classes."""
    probs, labels = _check_pair(probs, labels)
    _check_bins(bins)
    n, d = probs.shape
    total = 0.0
    for c in range(d):
        groups = _interval_index(probs[:, c], bins)
        total += _binned_gap(groups, probs[:, [c]], labels[:, [c]]) / n
    return total / d


def confidence_ce(probs, labels, bins: int = 15) -> float:
    """Binned ECE of the top-class confidence against top-class accuracy."""
    probs, labels = _check_pair(probs, labels)
    _check_bins(bins)
    top = np.argmax(probs, axis=1)
    conf = probs[np.arange(probs.shape[0]), top]
    correct = (top == np.argmax(labels, axis=1)).astype(np.float64)
    groups = _interval_index(conf, bins)
    return _binned_gap(groups, conf[:, None], correct[:, None]) / probs.shape[0]


def accuracy(probs, labels) -> float:
    """Fraction of rows whose argmax (lowest index on ties) hits the label."""
    probs, labels = _check_pair(probs, labels)
    return float(np.mean(np.argmax(probs, axis=1) == np.argmax(labels, axis=1)))


def all_metrics(probs, labels, bins_per_axis: int = 15) -> dict[str, float]:
    return {
        "l1_ce": l1_calibration_error(probs, labels, SimplexBinning(bins_per_axis)),
        "classwise_ce": classwise_ce(probs, labels, bins_per_axis),
        "confidence_ce": confidence_ce(probs, labels, bins_per_axis),
        "accuracy": accuracy(probs, labels),
    }


def simplex_grid(resolution: int) -> np.ndarray:
    """Barycentric grid ``{(a, b, c) / r : a + b + c = r}`` on the 2-simplex."""
    if int(resolution) != resolution or resolution < 1:
        raise ValueError(f"resolution must be a positive integer, got {resolution}")
    r = int(resolution)
    pts = [(a, b, r - a - b) for a in range(r, -1, -1) for b in range(r - a, -1, -1)]
    return np.array(pts, dtype=np.float64) / r


def calibration_map_grid(model: BrenierModel, resolution: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Laguerre-map values over a barycentric grid of the 2-simplex."""
    if model.d != 3:
        raise ValueError(f"calibration map grids need d = 3, model has d = {model.d}")
    grid = simplex_grid(resolution)
    out = recalibrate(model, grid)
    return [(q, o) for q, o in zip(grid, out)]


def _check_bins(bins: int) -> None:
    if int(bins) != bins or bins < 1:
        raise ValueError(f"bins must be a positive integer, got {bins}")


def _one_hot(classes: np.ndarray, d: int) -> np.ndarray:
    if classes.ndim != 1 or not np.issubdtype(classes.dtype, np.integer):
        raise ValueError("class indices must be a 1-D integer array")
    if classes.size and (classes.min() < 0 or classes.max() >= d):
        bad = int(np.flatnonzero((classes < 0) | (classes >= d))[0])
        raise ValueError(f"label {classes[bad]} at row {bad} is outside [0, {d - 1}]")
    return np.eye(d)[classes]


def _check_pair(probs, labels) -> tuple[np.ndarray, np.ndarray]:
    probs = np.array(probs, dtype=np.float64)
    labels = np.array(labels, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise ValueError("probs must be a non-empty n x d array")
    if labels.shape != probs.shape:
        raise ValueError(f"labels shape {labels.shape} does not match probs shape {probs.shape}")
    if not np.all(np.isfinite(probs)):
        raise ValueError("probs contain non-finite values")
    if np.any(probs < -PROB_TOL) or np.any(np.abs(probs.sum(axis=1) - 1.0) > PROB_TOL):
        bad = int(np.flatnonzero(np.any(probs < -PROB_TOL, axis=1) | (np.abs(probs.sum(axis=1) - 1.0) > PROB_TOL))[0])
        raise ValueError(f"probs row {bad} is not on the probability simplex")
    onehot = np.all((labels == 0) | (labels == 1), axis=1) & (labels.sum(axis=1) == 1)
    if not np.all(onehot):
        raise ValueError(f"labels row {int(np.flatnonzero(~onehot)[0])} is not one-hot")
    return probs, labels
