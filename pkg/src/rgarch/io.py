"""File formats: rankings CSV, tidy result tables and JSON documents.

Numbers are written with 17 significant digits so a write/read cycle is
exact and reruns are byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .inference import FitResult
from .perms import as_distance
from .process import Coefficients, ConditionalMeanPath, ModelOrder, RankingSeries
from .validation import check_rankings

__all__ = [
    "read_rankings_csv",
    "write_rankings_csv",
    "format_number",
    "dumps_json",
    "write_json",
    "read_json",
    "write_table",
    "fit_to_dict",
    "fit_from_dict",
]

NA = "NA"


def format_number(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def read_rankings_csv(path) -> RankingSeries:
    """Read ``item_1,...,item_k`` rows of 1-based ranks; ``NA`` marks a missing entry."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        k = len(header)
        expected = [f"item_{i}" for i in range(1, k + 1)]
        if [h.strip() for h in header] != expected:
            raise ValueError(f"{path}, line 1: header must be {','.join(expected)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != k:
                raise ValueError(f"{path}, line {lineno}: expected {k} fields, got {len(row)}")
            vals = []
            for cell in row:
                cell = cell.strip()
                if cell == NA:
                    vals.append(np.nan)
                    continue
                try:
                    v = int(cell)
                except ValueError:
                    raise ValueError(f"{path}, line {lineno}: {cell!r} is not an integer rank or NA") from None
                vals.append(float(v))
            try:
                check_rankings([vals])
            except ValueError as exc:
                raise ValueError(f"{path}, line {lineno}: {exc}") from None
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no rankings")
    return RankingSeries(np.array(rows))


def write_rankings_csv(series, path) -> None:
    series = series if isinstance(series, RankingSeries) else RankingSeries(series)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"item_{i}" for i in range(1, series.k + 1)])
        for row in series.data:
            w.writerow([NA if np.isnan(v) else str(int(v)) for v in row])


def write_table(path, columns: dict) -> None:
    """Write equal-length columns as a tidy CSV."""
    names = list(columns)
    cols = [list(np.ravel(columns[c])) if not isinstance(columns[c], list) else columns[c] for c in names]
    lengths = {len(c) for c in cols}
    if len(lengths) > 1:
        raise ValueError("columns differ in length")
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([v if isinstance(v, str) else ("" if v is None else format_number(v)) for v in row])


def dumps_json(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with floats at 17 significant digits and stable key order."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (bool, np.bool_, int, np.integer, float, np.floating)):
        return format_number(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{dumps_json(str(k))}: {dumps_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(dumps_json(v, indent, _level + 1) for v in obj) + "]"
        items = [pad + dumps_json(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_json(obj, path) -> None:
    Path(path).write_text(dumps_json(obj) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def fit_to_dict(fit: FitResult) -> dict:
    out = fit.summary()
    out["coefficients"] = fit.coef_hat.to_array().tolist()
    out["std_error_vector"] = fit.std_errors.tolist()
    out["mu_presample"] = np.asarray(fit.mu_path.presample).tolist()
    out["mu_path"] = np.asarray(fit.mu_path.mu).tolist()
    out["information"] = np.asarray(fit.information).tolist()
    return out


def fit_from_dict(doc: dict) -> FitResult:
    """Rebuild a :class:`FitResult` written by :func:`fit_to_dict`."""
    order = ModelOrder(*doc["order"])
    coef = Coefficients.from_array(doc["coefficients"], order)
    mu = np.asarray(doc.get("mu_path", []), dtype=float)
    path = ConditionalMeanPath(mu=mu, theta=np.full(len(mu), np.nan), start=order.m,
                               presample=np.asarray(doc.get("mu_presample", []), dtype=float))
    return FitResult(
        coef_hat=coef, order=order, distance=as_distance(doc["distance"]), k=int(doc["k"]),
        std_errors=np.asarray(doc["std_error_vector"], dtype=float), loglik=float(doc["loglik"]),
        aic=float(doc["aic"]), bic=float(doc["bic"]), mu_path=path, residuals=np.array([]),
        converged=bool(doc["converged"]), n_used=int(doc["n_used"]),
        information=np.asarray(doc.get("information", np.eye(order.dim)), dtype=float),
        singular_information=bool(doc.get("singular_information", False)),
        message=str(doc.get("message", "")),
    )
