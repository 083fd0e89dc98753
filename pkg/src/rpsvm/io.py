"""LIBSVM sparse text and dense CSV readers/writers.

LIBSVM lines look like ``<label> <index>:<value> <index>:<value> ...`` with
1-based, strictly increasing indices.  Blank lines are skipped; anything else
that does not match the grammar raises ``ParseError`` with its line number.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgumentError, ParseError


def _parse_float(tok, lineno, what):
    try:
        val = float(tok)
    except ValueError:
        raise ParseError(f"malformed {what} {tok!r}", lineno) from None
    if not math.isfinite(val):
        raise ParseError(f"non-finite {what} {tok!r}", lineno)
    return val


def parse_libsvm_lines(lines, n_features=None):
    labels = []
    indptr = [0]
    indices = []
    values = []
    max_index = 0
    for lineno, raw in enumerate(lines, start=1):
        tokens = raw.split()
        if not tokens:
            continue
        labels.append(_parse_float(tokens[0], lineno, "label"))
        prev = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep or not idx_s.isdigit():
                raise ParseError(f"malformed token {tok!r}", lineno)
            idx = int(idx_s)
            if idx < 1:
                raise ParseError(f"feature indices are 1-based, got {idx}", lineno)
            if idx <= prev:
                raise ParseError(f"indices must be strictly increasing ({prev} then {idx})", lineno)
            if n_features is not None and idx > n_features:
                raise ParseError(f"index {idx} exceeds the declared {n_features} features", lineno)
            prev = idx
            val = _parse_float(val_s, lineno, "value")
            if val != 0.0:
                indices.append(idx - 1)
                values.append(val)
        max_index = max(max_index, prev)
        indptr.append(len(indices))
    if not labels:
        raise ParseError("no data lines: empty matrix")
    d = n_features if n_features is not None else max_index
    X = sp.csr_matrix(
        (np.asarray(values, dtype=np.float64), np.asarray(indices, dtype=np.int64),
         np.asarray(indptr, dtype=np.int64)),
        shape=(len(labels), d),
    )
    return X, np.asarray(labels, dtype=np.float64)


def parse_libsvm(path, n_features=None):
    """Read a LIBSVM file into ``(csr_matrix, labels)``."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_libsvm_lines(fh, n_features)


def _format_number(x):
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def format_libsvm(X, y):
    X = sp.csr_matrix(X)
    X.sort_indices()
    y = np.asarray(y).ravel()
    if X.shape[0] != y.shape[0]:
        raise InvalidArgumentError("X and y disagree on the number of rows")
    out = []
    for i in range(X.shape[0]):
        lo, hi = X.indptr[i], X.indptr[i + 1]
        parts = [_format_number(y[i])]
        for j, v in zip(X.indices[lo:hi], X.data[lo:hi]):
            if v != 0.0:
                parts.append(f"{j + 1}:{repr(float(v))}")
        out.append(" ".join(parts))
    return "\n".join(out) + "\n"


def write_libsvm(path, X, y):
    Path(path).write_text(format_libsvm(X, y), encoding="utf-8")


def read_dense_csv(path):
    """Dense CSV with the label/target in the first column; a non-numeric first row is a header."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            try:
                rows.append([float(c) for c in rec])
            except ValueError:
                if lineno == 1 and not rows:
                    continue
                raise ParseError(f"non-numeric field in {rec!r}", lineno) from None
    if not rows:
        raise ParseError("no data rows: empty matrix")
    width = {len(r) for r in rows}
    if len(width) != 1 or width.pop() < 2:
        raise ParseError("rows must all have a label plus at least one feature")
    A = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(A)):
        raise ParseError("CSV contains non-finite values")
    return np.ascontiguousarray(A[:, 1:]), A[:, 0].copy()


def write_dense_csv(path, X, y):
    X = X.toarray() if sp.issparse(X) else np.asarray(X)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for label, row in zip(np.asarray(y).ravel(), X):
            w.writerow([repr(float(label))] + [repr(float(v)) for v in row])


def load_dataset(path, fmt=None, n_features=None):
    """Load LIBSVM (default) or dense CSV (``fmt='csv'`` or a ``.csv`` suffix)."""
    if fmt is None:
        fmt = "csv" if str(path).lower().endswith(".csv") else "libsvm"
    if fmt == "csv":
        return read_dense_csv(path)
    if fmt == "libsvm":
        return parse_libsvm(path, n_features)
    raise InvalidArgumentError(f"unknown dataset format {fmt!r}")
