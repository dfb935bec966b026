"""Plain-text file formats.

* dataset CSV: ``id,y,x_1,...,x_d``
* probability CSV: ``id,p_0,...,p_{K-1}``
* model file: versioned header plus one comma-separated coefficient row per class
* calibration file: versioned ``key: value`` lines
* prediction CSV: ``id,forecast,set,set_size,gamma_used``

Floats are written with ``repr`` so every file round-trips exactly.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .conformal import LOCALIZED, NESTED, CalibrationModel
from .core import Dataset, ValidationError, validate_probabilities
from .localized import LocalizedCalibration
from .models import EXTERNAL, ProbabilityTable, SoftmaxModel

MODEL_MAGIC = "nestedcp-softmax-model"
CALIBRATION_MAGIC = "nestedcp-calibration"
FORMAT_VERSION = 1


class FormatError(ValidationError):
    """A file does not follow its expected layout."""


def fnum(x: float) -> str:
    return repr(float(x))


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise FormatError(f"{path}: missing header line")
    return [h.strip() for h in rows[0]], rows[1:]


def _float(text: str, path, lineno: int, col: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise FormatError(f"{path}: row {lineno}: column {col!r} is not a number: {text!r}") from None


def read_dataset_csv(path, K: int | None = None, require_features: bool = True) -> Dataset:
    """Read a dataset CSV. With ``require_features=False`` an outcome-only
    file (``id,y``) is accepted, yielding a zero-width feature matrix."""
    header, rows = _read_rows(path)
    for col in ("id", "y"):
        if col not in header:
            raise FormatError(f"{path}: missing required column {col!r}")
    xcols = [h for h in header if h not in ("id", "y")]
    if not xcols and require_features:
        raise FormatError(f"{path}: no feature columns (expected x_1, ..., x_d)")
    i_id, i_y = header.index("id"), header.index("y")
    i_x = [header.index(c) for c in xcols]
    ids, ys, X = [], [], []
    for n, r in enumerate(rows, start=1):
        if len(r) != len(header):
            raise FormatError(f"{path}: row {n}: expected {len(header)} fields, got {len(r)}")
        try:
            y = int(r[i_y])
        except ValueError:
            raise FormatError(f"{path}: row {n}: outcome {r[i_y]!r} is not an integer class index") from None
        if y < 0 or (K is not None and y >= K):
            raise FormatError(f"{path}: row {n}: outcome {y} out of range")
        ids.append(r[i_id].strip())
        ys.append(y)
        X.append([_float(r[i], path, n, c) for i, c in zip(i_x, xcols)])
    X = np.array(X, dtype=np.float64).reshape(len(rows), len(xcols))
    try:
        return Dataset(np.array(ids, dtype=str), X, np.array(ys, dtype=np.int64), K)
    except ValidationError as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_dataset_csv(path, data: Dataset) -> None:
    d = data.d
    buf = io.StringIO()
    buf.write("id,y," + ",".join(f"x_{j + 1}" for j in range(d)) + "\n")
    for i, y, row in zip(data.ids.tolist(), data.y.tolist(), data.X):
        buf.write(f"{i},{y}," + ",".join(fnum(v) for v in row) + "\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_probability_csv(path, K: int | None = None, source: str = EXTERNAL) -> ProbabilityTable:
    header, rows = _read_rows(path)
    if not header or header[0] != "id":
        raise FormatError(f"{path}: header must start with 'id'")
    pcols = header[1:]
    expected = [f"p_{j}" for j in range(len(pcols))]
    if pcols != expected:
        raise FormatError(f"{path}: probability columns must be {','.join(expected) or 'p_0,...'}, got {','.join(pcols)}")
    if K is not None and len(pcols) != K:
        raise FormatError(f"{path}: file has {len(pcols)} classes, expected K={K}")
    if len(pcols) < 2:
        raise FormatError(f"{path}: need at least two probability columns")
    ids, P, seen = [], [], set()
    for n, r in enumerate(rows, start=1):
        if len(r) != len(header):
            raise FormatError(f"{path}: row {n}: expected {len(header)} fields, got {len(r)}")
        rid = r[0].strip()
        if rid in seen:
            raise FormatError(f"{path}: row {n}: duplicate id {rid!r}")
        seen.add(rid)
        vals = [_float(v, path, n, c) for v, c in zip(r[1:], pcols)]
        try:
            vals = validate_probabilities(vals).tolist()
        except ValidationError as exc:
            raise FormatError(f"{path}: row {n}: {exc}") from None
        ids.append(rid)
        P.append(vals)
    probs = np.array(P, dtype=np.float64).reshape(len(rows), len(pcols))
    return ProbabilityTable(np.array(ids, dtype=str), probs, source)


def write_probability_csv(path, table: ProbabilityTable) -> None:
    buf = io.StringIO()
    buf.write("id," + ",".join(f"p_{j}" for j in range(table.K)) + "\n")
    for i, row in zip(table.ids.tolist(), table.probs):
        buf.write(f"{i}," + ",".join(fnum(v) for v in row) + "\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_model(path, model: SoftmaxModel) -> None:
    lines = [f"{MODEL_MAGIC} version={FORMAT_VERSION} K={model.K} d={model.d}"]
    lines += [",".join(fnum(v) for v in row) for row in model.coef]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_model(path) -> SoftmaxModel:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path}: no such file")
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines or not lines[0].startswith(MODEL_MAGIC):
        raise FormatError(f"{path}: not a model file")
    head = dict(kv.split("=", 1) for kv in lines[0].split()[1:])
    if int(head.get("version", -1)) != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported model format version {head.get('version')}")
    K, d = int(head["K"]), int(head["d"])
    rows = [[_float(v, path, n, "coef") for v in ln.split(",")] for n, ln in enumerate(lines[1:], start=1)]
    if len(rows) != K or any(len(r) != d + 1 for r in rows):
        raise FormatError(f"{path}: expected {K} rows of {d + 1} coefficients")
    return SoftmaxModel(np.array(rows), trained=True)


def calibration_lines(cal: CalibrationModel | LocalizedCalibration, K: int) -> list[str]:
    lines = [f"format: {CALIBRATION_MAGIC}/{FORMAT_VERSION}"]
    if isinstance(cal, LocalizedCalibration):
        lines += [f"method: {LOCALIZED}", f"alpha: {fnum(cal.alpha)}", f"K: {cal.K}", f"n_cal: {cal.n_cal}"]
        for j, m in enumerate(cal.models):
            lines += [
                f"partition.{j}.n: {m.n_cal}",
                f"partition.{j}.k: {m.k}",
                f"partition.{j}.gamma_hat: {fnum(m.gamma_hat)}",
                f"partition.{j}.warning: {m.warning or 'none'}",
            ]
    else:
        lines += [
            f"method: {NESTED}",
            f"alpha: {fnum(cal.alpha)}",
            f"K: {K}",
            f"n_cal: {cal.n_cal}",
            f"k: {cal.k}",
            f"gamma_hat: {fnum(cal.gamma_hat)}",
            f"warning: {cal.warning or 'none'}",
        ]
    return lines


def write_calibration(path, cal: CalibrationModel | LocalizedCalibration, K: int) -> None:
    Path(path).write_text("\n".join(calibration_lines(cal, K)) + "\n", encoding="utf-8")


def read_calibration(path) -> tuple[CalibrationModel | LocalizedCalibration, int]:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path}: no such file")
    kv = {}
    for n, ln in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not ln.strip() or ln.startswith("#"):
            continue
        if ":" not in ln:
            raise FormatError(f"{path}: line {n}: expected 'key: value'")
        k, v = ln.split(":", 1)
        kv[k.strip()] = v.strip()
    if kv.get("format") != f"{CALIBRATION_MAGIC}/{FORMAT_VERSION}":
        raise FormatError(f"{path}: not a calibration file (format {kv.get('format')!r})")
    try:
        K = int(kv["K"])
        alpha = float(kv["alpha"])
        if kv["method"] == NESTED:
            cal = CalibrationModel(float(kv["gamma_hat"]), alpha, int(kv["n_cal"]), int(kv["k"]))
        elif kv["method"] == LOCALIZED:
            models = tuple(
                CalibrationModel(
                    float(kv[f"partition.{j}.gamma_hat"]), alpha, int(kv[f"partition.{j}.n"]), int(kv[f"partition.{j}.k"])
                )
                for j in range(K)
            )
            cal = LocalizedCalibration(models, alpha)
        else:
            raise FormatError(f"{path}: unknown method {kv['method']!r}")
    except KeyError as exc:
        raise FormatError(f"{path}: missing key {exc.args[0]!r}") from None
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return cal, K


PREDICTION_HEADER = ("id", "forecast", "set", "set_size", "gamma_used")


def write_predictions(path, ids, forecast, mask, gamma_used) -> None:
    buf = io.StringIO()
    buf.write(",".join(PREDICTION_HEADER) + "\n")
    for i, f, row, g in zip(np.asarray(ids).tolist(), np.asarray(forecast).tolist(), mask, np.asarray(gamma_used).tolist()):
        members = np.flatnonzero(row)
        buf.write(f"{i},{f},{';'.join(str(m) for m in members)},{len(members)},{fnum(g)}\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_predictions(path, K: int | None = None):
    """Returns ``(ids, forecast, mask)`` with ``mask`` a boolean ``(n, K)`` matrix."""
    header, rows = _read_rows(path)
    if tuple(header) != PREDICTION_HEADER:
        raise FormatError(f"{path}: header must be {','.join(PREDICTION_HEADER)}")
    ids, fc, members = [], [], []
    for n, r in enumerate(rows, start=1):
        if len(r) != len(header):
            raise FormatError(f"{path}: row {n}: expected {len(header)} fields, got {len(r)}")
        try:
            ids.append(r[0].strip())
            fc.append(int(r[1]))
            members.append([int(m) for m in r[2].split(";") if m != ""])
        except ValueError:
            raise FormatError(f"{path}: row {n}: malformed forecast or set") from None
    if K is None:
        K = max([max(m, default=0) for m in members] + fc + [1]) + 1
    mask = np.zeros((len(rows), K), dtype=bool)
    for i, m in enumerate(members):
        if any(x < 0 or x >= K for x in m):
            raise FormatError(f"{path}: row {i + 1}: set member out of range for K={K}")
        mask[i, m] = True
    return np.array(ids, dtype=str), np.array(fc, dtype=np.int64), mask


def read_config(path) -> dict[str, str]:
    """Flat ``key=value`` file; ``#`` starts a comment line."""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path}: no such file")
    out = {}
    for n, ln in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        if "=" not in ln:
            raise FormatError(f"{path}: line {n}: expected key=value")
        k, v = ln.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out
