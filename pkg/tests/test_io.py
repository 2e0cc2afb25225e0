import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from brenier_ir import io
from brenier_ir.calibration import CalibrationSet
from brenier_ir.core import BrenierModel, FitConfig, LabeledDataset, fit, laguerre_predict
from brenier_ir.sim import SimModel, fit_sim, sim_predict
from generators import gaussian_blobs


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


@pytest.fixture(scope="module")
def brenier_model():
    rng = np.random.default_rng(7)
    Z = rng.normal(size=(40, 2))
    Y = Z + 0.1 * rng.normal(size=(40, 2))
    return fit(LabeledDataset(Z, Y, "real"), FitConfig(k=5, max_outer_iters=15, simplex_constrained=False))


class TestLoadDataset:
    def test_zy_pairs(self, tmp_path):
        path = write(tmp_path, "d.csv", "z0,z1,y0,y1\n0.1,0.2,1,0\n0.3,0.4,0,1\n-1,2e-3,0.5,0.5\n")
        data = io.load_dataset(path, "zy_pairs")
        assert isinstance(data, LabeledDataset)
        np.testing.assert_array_equal(data.Z, [[0.1, 0.2], [0.3, 0.4], [-1, 0.002]])
        np.testing.assert_array_equal(data.Y[2], [0.5, 0.5])

    def test_column_order_follows_index(self, tmp_path):
        path = write(tmp_path, "d.csv", "y0,z1,z0,y1\n1,2,3,4\n")
        data = io.load_dataset(path, "zy_pairs")
        np.testing.assert_array_equal(data.Z, [[3, 2]])
        np.testing.assert_array_equal(data.Y, [[1, 4]])

    def test_probs_labels(self, tmp_path):
        path = write(tmp_path, "p.csv", "p0,p1,p2,label\n0.2,0.3,0.5,2\n1,0,0,0\n")
        cal = io.load_dataset(path, "probs_labels")
        assert isinstance(cal, CalibrationSet)
        np.testing.assert_array_equal(cal.labels, [[0, 0, 1], [1, 0, 0]])

    def test_covariates_labels(self, tmp_path):
        path = write(tmp_path, "x.csv", "x0,x1,label\n1,2,0\n3,4,1\n")
        data = io.load_dataset(path, "covariates_labels", n_classes=3)
        assert data.n_classes == 3
        np.testing.assert_array_equal(data.labels, [0, 1])
        assert io.load_dataset(path, "covariates_labels").n_classes == 2

    def test_label_out_of_range_names_row(self, tmp_path):
        path = write(tmp_path, "p.csv", "p0,p1,label\n0.5,0.5,0\n0.5,0.5,1\n0.5,0.5,2\n")
        with pytest.raises(io.DataFormatError, match=r"row 2, column 'label'"):
            io.load_dataset(path, "probs_labels")

    def test_probabilities_off_simplex(self, tmp_path):
        path = write(tmp_path, "p.csv", "p0,p1,label\n0.5,0.5,0\n0.49,0.49,1\n")
        with pytest.raises(io.DataFormatError, match="row 1"):
            io.load_dataset(path, "probs_labels")

    @pytest.mark.parametrize(
        "text, match",
        [
            ("z0,y0\n1,abc\n", r"row 0, column 'y0'"),
            ("z0,y0\n1,nan\n", "non-finite"),
            ("z0,y0\n1\n", "row 0 has 1 cells"),
            ("z0,z2,y0,y1\n1,2,3,4\n", "missing column z1"),
            ("z0,z1,y0\n1,2,3\n", "2 z columns but 1 y"),
            ("z0,y0,w\n1,2,3\n", "unexpected column 'w'"),
            ("z0,y0\n", "no data rows"),
            ("", "empty file"),
        ],
    )
    def test_malformed(self, tmp_path, text, match):
        with pytest.raises(io.DataFormatError, match=match):
            io.load_dataset(write(tmp_path, "bad.csv", text), "zy_pairs")

    def test_unknown_schema(self, tmp_path):
        with pytest.raises(ValueError, match="unknown schema"):
            io.load_dataset(write(tmp_path, "a.csv", "z0\n1\n"), "pairs")

    def test_read_points_ignores_other_columns(self, tmp_path):
        path = write(tmp_path, "zu.csv", "u0,z0,u1,z1\n1,2,3,4\n")
        np.testing.assert_array_equal(io.read_points(path, "z"), [[2, 4]])
        np.testing.assert_array_equal(io.read_points(path, "u"), [[1, 3]])


class TestFloats:
    @given(st.floats(allow_nan=False, allow_infinity=False))
    def test_round_trip(self, x):
        s = io.format_float(x)
        assert float(s) == x
        assert isinstance(json.loads(s), float)

    @pytest.mark.parametrize("x, text", [(1.0, "1.0"), (0.1, "0.10000000000000001"), (1e300, "1.0000000000000001e+300")])
    def test_examples(self, x, text):
        assert io.format_float(x) == text

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            io.format_float(float("inf"))


class TestModelFiles:
    def test_brenier_round_trip(self, tmp_path, brenier_model, rng):
        path = tmp_path / "m.json"
        io.save_model(brenier_model, path)
        loaded = io.load_model(path)
        assert isinstance(loaded, BrenierModel)
        np.testing.assert_array_equal(loaded.quantiles.points, brenier_model.quantiles.points)
        np.testing.assert_array_equal(loaded.dual_g, brenier_model.dual_g)
        assert loaded.config == brenier_model.config
        assert loaded.history == brenier_model.history
        Zq = rng.normal(size=(100, 2)) * 2
        a, ia = laguerre_predict(brenier_model, Zq)
        b, ib = laguerre_predict(loaded, Zq)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(ia, ib)
        assert io.dumps_model(loaded) == path.read_text()

    def test_sim_round_trip(self, tmp_path, rng):
        X, Y, _ = gaussian_blobs(40, seed=0)
        model = fit_sim(X, Y, FitConfig(k=3, seed=0), T_max=2)
        path = tmp_path / "s.json"
        io.save_model(model, path)
        loaded = io.load_model(path)
        assert isinstance(loaded, SimModel)
        np.testing.assert_array_equal(loaded.W, model.W)
        assert loaded.j_history == model.j_history
        Xq = rng.normal(size=(50, 2)) * 3
        np.testing.assert_array_equal(sim_predict(loaded, Xq), sim_predict(model, Xq))

    def test_document_fields(self, brenier_model):
        doc = json.loads(io.dumps_model(brenier_model))
        assert doc["version"] == 1 and doc["kind"] == "brenier"
        assert doc["d"] == 2 and doc["k"] == 5
        assert len(doc["quantiles"]) == 5 and len(doc["dual_g"]) == 5
        assert doc["config"]["k"] == 5

    @pytest.mark.parametrize(
        "mutate, match",
        [
            (lambda d: d.update(version=2), "unsupported model version 2"),
            (lambda d: d.update(format="other"), "not a brenier-ir model"),
            (lambda d: d.update(kind="forest"), "unknown model kind"),
            (lambda d: d.update(k=4), "declared k and d"),
            (lambda d: d.pop("dual_g"), "invalid model document"),
            (lambda d: d.update(dual_g=[0.0]), "invalid model document"),
        ],
    )
    def test_tampered(self, brenier_model, mutate, match):
        doc = json.loads(io.dumps_model(brenier_model))
        mutate(doc)
        with pytest.raises(io.ModelFormatError, match=match):
            io.loads_model(json.dumps(doc))

    def test_truncated(self, brenier_model):
        text = io.dumps_model(brenier_model)
        with pytest.raises(io.ModelFormatError, match="malformed"):
            io.loads_model(text[: len(text) // 2])

    def test_unserialisable(self):
        with pytest.raises(TypeError):
            io.dumps_model(object())
        with pytest.raises(TypeError):
            io.dumps_json({"a": object()})
