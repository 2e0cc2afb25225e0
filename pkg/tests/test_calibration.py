import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from brenier_ir.calibration import (
    CalibrationSet,
    SimplexBinning,
    accuracy,
    all_metrics,
    calibration_map_grid,
    classwise_ce,
    confidence_ce,
    fit_recalibrator,
    l1_calibration_error,
    recalibrate,
    simplex_grid,
)
from brenier_ir.core import BrenierModel, FitConfig, QuantileSet
from generators import sharpened_scores
from oracles import binary_ece


@st.composite
def prob_label_sets(draw, max_n=40, d=3):
    n = draw(st.integers(1, max_n))
    seed = draw(st.integers(0, 2**16))
    rng = np.random.default_rng(seed)
    probs = rng.dirichlet(np.ones(d), size=n)
    labels = np.eye(d)[rng.integers(0, d, n)]
    return probs, labels


class TestTypes:
    def test_from_class_indices(self):
        cal = CalibrationSet.from_class_indices([[0.2, 0.8], [0.6, 0.4]], np.array([1, 0]))
        np.testing.assert_array_equal(cal.labels, [[0, 1], [1, 0]])
        assert cal.n == 2 and cal.d == 2

    def test_rejects_off_simplex_row(self):
        with pytest.raises(ValueError, match="row 1"):
            CalibrationSet([[0.5, 0.5], [0.5, 0.48]], [[1, 0], [0, 1]])

    def test_accepts_within_tolerance(self):
        CalibrationSet([[0.5, 0.5 + 5e-7]], [[1, 0]])

    def test_rejects_bad_labels(self):
        with pytest.raises(ValueError, match="one-hot"):
            CalibrationSet([[0.5, 0.5]], [[1, 1]])
        with pytest.raises(ValueError, match="row 0"):
            CalibrationSet.from_class_indices([[0.5, 0.5]], np.array([2]))


class TestBinning:
    @pytest.mark.parametrize(
        "value, expected",
        [(0.0, 0), (1 / 15 - 1e-12, 0), (1 / 15, 0), (1 / 15 + 1e-12, 1), (0.5, 7), (1.0, 14)],
    )
    def test_interval_edges(self, value, expected):
        assert SimplexBinning(15).bin_of(np.array([value, 1 - value])) == (expected,)

    def test_ignores_last_coordinate(self):
        b = SimplexBinning(4)
        assert b.bin_of(np.array([0.1, 0.3, 0.6])) == (0, 1)

    def test_every_grid_point_has_one_bin(self):
        grid = simplex_grid(30)
        ids = SimplexBinning(15).bin_ids(grid)
        assert ids.shape == (len(grid), 2)
        assert ids.min() >= 0 and ids.max() <= 14

    def test_invalid(self):
        with pytest.raises(ValueError):
            SimplexBinning(0)


class TestL1CalibrationError:
    def test_correct_one_hot_is_zero(self):
        labels = np.eye(3)[[0, 1, 2, 1]]
        assert l1_calibration_error(labels, labels) == 0.0

    def test_two_point_bin(self):
        probs = [[0.6, 0.4], [0.6, 0.4]]
        labels = [[1, 0], [0, 1]]
        assert l1_calibration_error(probs, labels) == pytest.approx(0.2, abs=1e-15)

    def test_zero_when_bin_means_agree(self):
        probs = np.array([[0.5, 0.5]] * 4 + [[0.25, 0.75]] * 4)
        labels = np.eye(2)[[0, 1, 0, 1, 0, 1, 1, 1]]
        assert l1_calibration_error(probs, labels) == pytest.approx(0.0, abs=1e-15)

    @given(prob_label_sets(), st.randoms(use_true_random=False))
    def test_sample_order_invariant(self, pl, rnd):
        probs, labels = pl
        perm = list(range(len(probs)))
        rnd.shuffle(perm)
        assert l1_calibration_error(probs[perm], labels[perm]) == pytest.approx(
            l1_calibration_error(probs, labels), abs=1e-12
        )

    @given(prob_label_sets())
    def test_bounded(self, pl):
        assert 0 <= l1_calibration_error(*pl) <= 2 + 1e-12


class TestOtherMetrics:
    def test_classwise_perfect(self):
        labels = np.eye(3)[[2, 0, 1]]
        assert classwise_ce(labels, labels) == 0.0

    def test_classwise_one_bin(self):
        probs = np.array([[0.7, 0.3]] * 4)
        labels = np.eye(2)[[0, 1, 0, 1]]
        assert classwise_ce(probs, labels) == pytest.approx(0.2, abs=1e-15)

    @given(prob_label_sets(d=2), st.integers(1, 20))
    def test_classwise_binary_matches_scalar_oracle(self, pl, bins):
        probs, labels = pl
        expected = np.mean([binary_ece(probs[:, c], labels[:, c], bins) for c in range(2)])
        assert classwise_ce(probs, labels, bins) == pytest.approx(expected, abs=1e-12)

    def test_confidence_perfect(self):
        labels = np.eye(3)[[0, 1, 2]]
        assert confidence_ce(labels, labels) == 0.0

    def test_confidence_one_bin(self):
        probs = np.array([[0.9, 0.1]] * 10)
        labels = np.eye(2)[[0] * 6 + [1] * 4]
        assert confidence_ce(probs, labels) == pytest.approx(0.3, abs=1e-15)

    def test_confidence_random_labels(self):
        rng = np.random.default_rng(11)
        n = 20000
        base = np.array([0.5, 0.25, 0.25])
        probs = np.array([np.roll(base, s) for s in rng.integers(0, 3, n)])
        labels = np.eye(3)[rng.integers(0, 3, n)]
        # Standard error of the accuracy is about 0.0033.
        assert confidence_ce(probs, labels) == pytest.approx(0.5 - 1 / 3, abs=0.015)

    @pytest.mark.parametrize("probs, expected", [("labels", 1.0), ("wrong", 0.0)])
    def test_accuracy_extremes(self, probs, expected):
        labels = np.eye(3)[[0, 1, 2, 0]]
        P = labels if probs == "labels" else np.roll(labels, 1, axis=1)
        assert accuracy(P, labels) == expected

    def test_accuracy_tie_lowest_index(self):
        probs = [[0.5, 0.5, 0.0], [0.2, 0.3, 0.5], [0.4, 0.4, 0.2], [1.0, 0.0, 0.0]]
        labels = np.eye(3)[[0, 2, 1, 0]]
        assert accuracy(probs, labels) == 0.75

    def test_all_metrics_keys(self):
        labels = np.eye(3)[[0, 1]]
        assert list(all_metrics(labels, labels)) == ["l1_ce", "classwise_ce", "confidence_ce", "accuracy"]

    @given(prob_label_sets(), st.permutations([0, 1, 2]))
    def test_class_relabeling(self, pl, perm):
        probs, labels = pl
        perm = list(perm)
        a = all_metrics(probs, labels)
        b = all_metrics(probs[:, perm], labels[:, perm])
        for key in ("classwise_ce", "confidence_ce", "accuracy"):
            assert b[key] == pytest.approx(a[key], abs=1e-12)
        if perm[-1] == 2:
            # Binning uses the first d - 1 axes, so only relabelings that fix
            # the last class map bins onto bins.
            assert b["l1_ce"] == pytest.approx(a["l1_ce"], abs=1e-12)


class TestRecalibrator:
    def test_calibrated_input_stays_calibrated(self):
        rng = np.random.default_rng(0)
        values = np.array([[0.7, 0.2, 0.1], [0.1, 0.6, 0.3], [0.2, 0.2, 0.6], [0.4, 0.4, 0.2]])
        probs = values[rng.integers(0, 4, 2000)]
        labels = (rng.random(2000)[:, None] > np.cumsum(probs, axis=1)).sum(axis=1)
        cal = CalibrationSet.from_class_indices(probs, labels)
        model = fit_recalibrator(cal, FitConfig(k=4, max_outer_iters=50))
        before = l1_calibration_error(probs, cal.labels)
        after = l1_calibration_error(recalibrate(model, probs), cal.labels)
        assert after <= before + 0.02

    def test_binary_is_monotone(self):
        rng = np.random.default_rng(1)
        p = rng.random(200)
        labels = (rng.random(200) < p**2).astype(int)
        cal = CalibrationSet.from_class_indices(np.stack([p, 1 - p], axis=1), labels)
        model = fit_recalibrator(cal, FitConfig(k=8, max_outer_iters=30))
        q = np.linspace(0, 1, 101)
        out = recalibrate(model, np.stack([q, 1 - q], axis=1))
        assert np.all(np.diff(out[:, 0]) >= 0)

    def test_overconfident_improves(self):
        s, y, _ = sharpened_scores(300, seed=5)
        st_, yt, _ = sharpened_scores(3000, seed=105)
        model = fit_recalibrator(CalibrationSet(s, y), FitConfig(k=15, max_outer_iters=40, seed=5))
        assert l1_calibration_error(recalibrate(model, st_), yt) < l1_calibration_error(st_, yt)

    def test_outputs_are_quantile_rows(self, rng):
        s, y, _ = sharpened_scores(100, seed=2)
        model = fit_recalibrator(CalibrationSet(s, y), FitConfig(k=6, max_outer_iters=10))
        out = recalibrate(model, rng.dirichlet(np.ones(3), size=300))
        rows = {tuple(r) for r in model.quantiles.points}
        assert {tuple(r) for r in out} <= rows
        assert len({tuple(r) for r in out}) <= model.k

    def test_requires_simplex(self):
        s, y, _ = sharpened_scores(20, seed=0)
        with pytest.raises(ValueError, match="simplex"):
            fit_recalibrator(CalibrationSet(s, y), FitConfig(k=4, simplex_constrained=False))

    def test_warns_below_class_count(self):
        s, y, _ = sharpened_scores(20, seed=0)
        with pytest.warns(UserWarning, match="below the number of classes"):
            fit_recalibrator(CalibrationSet(s, y), FitConfig(k=2, max_outer_iters=1))

    def test_quantile_column_relabeling(self):
        s, y, _ = sharpened_scores(120, seed=3)
        perm = [1, 0, 2]
        cfg = FitConfig(k=6, max_outer_iters=10)
        model = fit_recalibrator(CalibrationSet(s, y), cfg)
        out = recalibrate(model, s)
        # Reusing the model with permuted columns permutes its outputs.
        permuted = BrenierModel(
            QuantileSet(model.quantiles.points[:, perm]), model.dual_g, model.train_objective, 0, cfg, 3
        )
        out_p = recalibrate(permuted, s[:, perm])
        np.testing.assert_array_equal(out_p, out[:, perm])
        a, b = all_metrics(out, y), all_metrics(out_p, y[:, perm])
        for key in ("classwise_ce", "confidence_ce", "l1_ce"):
            assert b[key] == pytest.approx(a[key], abs=1e-12)


class TestMapGrid:
    def test_grid_size(self):
        assert len(simplex_grid(2)) == 6
        assert len(simplex_grid(10)) == 66
        np.testing.assert_allclose(simplex_grid(4).sum(axis=1), 1.0)

    def test_resolution_2(self):
        s, y, _ = sharpened_scores(60, seed=4)
        model = fit_recalibrator(CalibrationSet(s, y), FitConfig(k=5, max_outer_iters=5))
        rows = calibration_map_grid(model, 2)
        assert len(rows) == 6
        quantiles = {tuple(r) for r in model.quantiles.points}
        assert all(tuple(out) in quantiles for _, out in rows)

    def test_separable_model_maps_to_vertices(self):
        rng = np.random.default_rng(6)
        probs = rng.dirichlet(np.full(3, 0.2), size=300)
        labels = np.argmax(probs, axis=1)
        model = fit_recalibrator(CalibrationSet.from_class_indices(probs, labels), FitConfig(k=6, max_outer_iters=60))
        outs = np.array([out for _, out in calibration_map_grid(model, 10)])
        assert np.median(outs.max(axis=1)) >= 0.9

    def test_requires_three_classes(self):
        s = np.array([[0.4, 0.6], [0.7, 0.3]])
        model = fit_recalibrator(CalibrationSet.from_class_indices(s, np.array([0, 1])), FitConfig(k=2, max_outer_iters=1))
        with pytest.raises(ValueError, match="d = 3"):
            calibration_map_grid(model, 3)


def test_binary_oracle_edges():
    # The scalar oracle and the vectorised binning agree on exact edges.
    scores = np.array([0.0, 0.2, 0.4, 1.0])
    for bins in (1, 5, 10):
        ids = np.clip(np.ceil(scores * bins).astype(int) - 1, 0, bins - 1)
        for s, b in zip(scores, ids):
            lo, hi = b / bins, (b + 1) / bins
            assert (lo < s <= hi) or (b == 0 and s <= lo)

