"""CSV ingestion and JSON model persistence.

CSV files carry a header row. Column families are named with a prefix and a
0-based index (``z0, z1, ...``); class labels live in an integer ``label``
column. Models are written as versioned JSON with every float printed to 17
significant digits, which round-trips IEEE doubles bitwise.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calibration import PROB_TOL, CalibrationSet
from .core import BrenierModel, FitConfig, LabeledDataset, QuantileSet
from .sim import SimModel

__all__ = [
    "CovariateSet",
    "DataFormatError",
    "ModelFormatError",
    "SCHEMAS",
    "load_dataset",
    "read_points",
    "read_matrix",
    "save_model",
    "load_model",
    "dumps_model",
    "dumps_json",
    "loads_model",
    "format_float",
    "write_csv",
]

MODEL_FORMAT = "brenier-ir-model"
MODEL_VERSION = 1
SCHEMAS = ("zy_pairs", "probs_labels", "covariates_labels")


class DataFormatError(ValueError):
    """Malformed or invalid CSV input."""


class ModelFormatError(ValueError):
    """Malformed, truncated or incompatible model file."""


@dataclass(frozen=True)
class CovariateSet:
    X: np.ndarray
    Y: np.ndarray
    labels: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.Y.shape[1]


# ---------------------------------------------------------------------------
# CSV


def _read_table(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"{path}: empty file, a header row is required")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if any(cell.strip() for cell in r)]
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise DataFormatError(f"{path}: row {i} has {len(r)} cells, header has {len(header)}")
    if not body:
        raise DataFormatError(f"{path}: no data rows")
    return header, body


def _family(header: list[str], prefix: str, path) -> list[int]:
    pattern = re.compile(rf"^{re.escape(prefix)}(\d+)$")
    found = {}
    for col, name in enumerate(header):
        m = pattern.match(name)
        if m:
            found[int(m.group(1))] = col
    if not found:
        raise DataFormatError(f"{path}: missing columns {prefix}0..{prefix}<d-1>")
    expected = list(range(len(found)))
    if sorted(found) != expected:
        missing = sorted(set(range(max(found) + 1)) - set(found))
        raise DataFormatError(f"{path}: missing column {prefix}{missing[0]}")
    return [found[i] for i in expected]


def _numeric(body: list[list[str]], cols: list[int], header: list[str], path) -> np.ndarray:
    out = np.empty((len(body), len(cols)))
    for i, row in enumerate(body):
        for j, c in enumerate(cols):
            cell = row[c].strip()
            try:
                value = float(cell)
            except ValueError:
                raise DataFormatError(f"{path}: row {i}, column {header[c]!r}: {cell!r} is not a number") from None
            if not math.isfinite(value):
                raise DataFormatError(f"{path}: row {i}, column {header[c]!r}: non-finite value")
            out[i, j] = value
    return out


def _labels(body, header, path, n_classes: int | None) -> np.ndarray:
    if "label" not in header:
        raise DataFormatError(f"{path}: missing column 'label'")
    c = header.index("label")
    raw = _numeric(body, [c], header, path)[:, 0]
    for i, v in enumerate(raw):
        if v != int(v):
            raise DataFormatError(f"{path}: row {i}, column 'label': {v!r} is not an integer")
    labels = raw.astype(np.int64)
    if n_classes is not None:
        bad = np.flatnonzero((labels < 0) | (labels >= n_classes))
        if bad.size:
            i = int(bad[0])
            raise DataFormatError(
                f"{path}: row {i}, column 'label': {labels[i]} is out of range for {n_classes} classes"
            )
    elif labels.min() < 0:
        i = int(np.flatnonzero(labels < 0)[0])
        raise DataFormatError(f"{path}: row {i}, column 'label': negative label")
    return labels


def _reject_extra(header, used: set[int], path) -> None:
    extra = [header[i] for i in range(len(header)) if i not in used]
    if extra:
        raise DataFormatError(f"{path}: unexpected column {extra[0]!r}")


def load_dataset(path, schema: str, n_classes: int | None = None):
    """Parse a CSV file according to ``schema``.

    ``zy_pairs``
        Columns ``z0..z{d-1}, y0..y{d-1}``; returns a real-response
        :class:`~brenier_ir.core.LabeledDataset`.
    ``probs_labels``
        Columns ``p0..p{d-1}, label``; rows must lie on the simplex within
        1e-6. Returns a :class:`~brenier_ir.calibration.CalibrationSet`.
    ``covariates_labels``
        Columns ``x0..x{D-1}, label``; returns a :class:`CovariateSet` with
        one-hot labels over ``n_classes`` (default: largest label + 1).
    """
    if schema not in SCHEMAS:
        raise ValueError(f"unknown schema {schema!r}; expected one of {SCHEMAS}")
    header, body = _read_table(path)
    if schema == "zy_pairs":
        zc = _family(header, "z", path)
        yc = _family(header, "y", path)
        if len(zc) != len(yc):
            raise DataFormatError(f"{path}: {len(zc)} z columns but {len(yc)} y columns")
        _reject_extra(header, set(zc) | set(yc), path)
        return LabeledDataset(_numeric(body, zc, header, path), _numeric(body, yc, header, path), "real")

    lc = header.index("label") if "label" in header else None
    if schema == "probs_labels":
        pc = _family(header, "p", path)
        _reject_extra(header, set(pc) | ({lc} if lc is not None else set()), path)
        probs = _numeric(body, pc, header, path)
        d = probs.shape[1]
        labels = _labels(body, header, path, d)
        for i, row in enumerate(probs):
            if np.any(row < -PROB_TOL) or abs(row.sum() - 1.0) > PROB_TOL:
                raise DataFormatError(f"{path}: row {i}: probabilities sum to {row.sum()!r}, not 1")
        return CalibrationSet(probs, np.eye(d)[labels])

    xc = _family(header, "x", path)
    _reject_extra(header, set(xc) | ({lc} if lc is not None else set()), path)
    X = _numeric(body, xc, header, path)
    labels = _labels(body, header, path, n_classes)
    d = int(labels.max()) + 1 if n_classes is None else int(n_classes)
    return CovariateSet(X=X, Y=np.eye(d)[labels], labels=labels)


def read_points(path, prefix: str) -> np.ndarray:
    """Columns ``{prefix}0..`` of a CSV file as an (n, d) array; others ignored."""
    header, body = _read_table(path)
    return _numeric(body, _family(header, prefix, path), header, path)


def read_matrix(path) -> np.ndarray:
    """A numeric CSV with a header row, all columns used."""
    header, body = _read_table(path)
    return _numeric(body, list(range(len(header))), header, path)


def write_csv(fh, header: list[str], rows) -> None:
    fh.write(",".join(header) + "\n")
    for row in rows:
        fh.write(",".join(_cell(v) for v in row) + "\n")


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(float(v))
    return str(v)


# ---------------------------------------------------------------------------
# JSON models


def format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialise non-finite number {x!r}")
    s = format(x, ".17g")
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def _encode(obj, indent: int = 0) -> str:
    if isinstance(obj, dict):
        pad = " " * (indent + 2)
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent + 2)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + " " * indent + "}"
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent)
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_encode(v, indent) for v in obj) + "]"
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _model_document(model) -> dict:
    if isinstance(model, BrenierModel):
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": "brenier",
            "d": model.d,
            "k": model.k,
            "simplex_constrained": model.quantiles.simplex_constrained,
            "quantiles": model.quantiles.points,
            "dual_g": model.dual_g,
            "config": model.config.to_dict(),
            "train_objective": model.train_objective,
            "iterations_used": model.iterations_used,
            "status": model.status,
            "history": list(model.history),
        }
    if isinstance(model, SimModel):
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": "sim",
            "d": model.d,
            "D": model.D,
            "k": model.quantiles.k,
            "simplex_constrained": model.quantiles.simplex_constrained,
            "W": model.W,
            "quantiles": model.quantiles.points,
            "dual_g": model.dual_g,
            "lambda_W": model.lambda_W,
            "T_max": model.T_max,
            "rounds_used": model.rounds_used,
            "config": model.config.to_dict(),
            "history": list(model.history),
            "j_history": list(model.j_history),
        }
    raise TypeError(f"cannot serialise model of type {type(model).__name__}")


def dumps_json(obj) -> str:
    """JSON text with full-precision floats, arrays inline and a trailing newline."""
    return _encode(obj) + "\n"


def dumps_model(model) -> str:
    return _encode(_model_document(model)) + "\n"


def save_model(model, path) -> None:
    Path(path).write_text(dumps_model(model))


def loads_model(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"malformed model JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a brenier-ir model document")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {doc.get('version')!r}, expected {MODEL_VERSION}")
    try:
        config = FitConfig.from_dict(doc["config"])
        quantiles = QuantileSet(np.array(doc["quantiles"], dtype=np.float64), bool(doc["simplex_constrained"]))
        if quantiles.k != doc["k"] or quantiles.d != doc["d"]:
            raise ModelFormatError("quantile shape disagrees with the declared k and d")
        if doc["kind"] == "brenier":
            return BrenierModel(
                quantiles=quantiles,
                dual_g=np.array(doc["dual_g"], dtype=np.float64),
                train_objective=float(doc["train_objective"]),
                iterations_used=int(doc["iterations_used"]),
                config=config,
                input_dim=int(doc["d"]),
                status=str(doc["status"]),
                history=tuple(doc["history"]),
            )
        if doc["kind"] == "sim":
            W = np.array(doc["W"], dtype=np.float64)
            if W.shape != (doc["d"], doc["D"]):
                raise ModelFormatError("W shape disagrees with the declared d and D")
            return SimModel(
                W=W,
                quantiles=quantiles,
                dual_g=np.array(doc["dual_g"], dtype=np.float64),
                lambda_W=float(doc["lambda_W"]),
                history=tuple(doc["history"]),
                j_history=tuple(doc["j_history"]),
                config=config,
                T_max=int(doc["T_max"]),
                rounds_used=int(doc["rounds_used"]),
            )
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"invalid model document: {exc}") from None
    raise ModelFormatError(f"unknown model kind {doc.get('kind')!r}")


def load_model(path):
    """Read a model written by :func:`save_model`."""
    return loads_model(Path(path).read_text())
