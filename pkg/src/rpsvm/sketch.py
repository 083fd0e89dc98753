"""Oblivious random projections R (d x r) applied as X -> X R.

Four constructions are provided:

* ``SRHT``: sqrt(d/r) * D H S with D a random sign diagonal, H the
  normalized Walsh-Hadamard matrix and S a uniform column sampler (with
  replacement).  Inputs are zero-padded to the next power of two and the
  scale uses the padded dimension.
* ``CW``: sparse embeddings.  ``COUNTSKETCH`` mode hashes every input
  coordinate to one output column with a random sign.  ``BLOCK`` mode is the
  generalized construction built from ``a`` independent copies of a
  ``v``-row hashing block inside each of ``q = r / (a v)`` buckets (see
  ``_block_columns`` for the exact layout used).
* ``SIGN``: i.i.d. entries +-1/sqrt(r).
* ``GAUSSIAN``: i.i.d. entries N(0, 1/r).

All randomness comes from counter-based Philox streams keyed by the operator
seed, so every entry of R is a pure function of ``(kind, d, r, seed)`` and the
entry position; nothing depends on how rows are batched or scheduled.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import CapacityError, InvalidArgumentError
from .linalg import as_csr, check_finite, fwht_rows_inplace, next_power_of_two

MATERIALIZE_CAP = 1 << 24
# rows of a dense SIGN/GAUSSIAN operator generated per random stream
ROW_BLOCK = 256
# padded rows pushed through the FWHT at once are capped at this many entries
SRHT_CHUNK_ENTRIES = 1 << 22


class SketchKind(str, enum.Enum):
    SRHT = "srht"
    CW = "cw"
    SIGN = "sign"
    GAUSSIAN = "gaussian"


class CwMode(str, enum.Enum):
    COUNTSKETCH = "countsketch"
    BLOCK = "block"


_STREAM_TAGS = {
    SketchKind.SRHT: 1,
    SketchKind.CW: 2,
    SketchKind.SIGN: 3,
    SketchKind.GAUSSIAN: 4,
}


def parse_kind(kind):
    if isinstance(kind, SketchKind):
        return kind
    try:
        return SketchKind(str(kind).lower())
    except ValueError:
        names = ", ".join(k.value for k in SketchKind)
        raise InvalidArgumentError(f"unknown sketch kind {kind!r}; expected one of {names}") from None


def _stream(seed, *key):
    ss = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1), spawn_key=tuple(key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SketchReport:
    kind: str
    r: int
    t_rp: float
    input_nnz: int
    output_nnz: int


@dataclass(frozen=True)
class SketchOperator:
    """Immutable description of one projection; derived state is rebuilt from the seed."""

    kind: SketchKind
    d: int
    r: int
    seed: int
    mode: CwMode | None = None
    replace: bool = True
    block_a: int | None = None
    block_v: int | None = None
    _state: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", parse_kind(self.kind))
        if self.d < 1 or self.r < 1:
            raise InvalidArgumentError(f"need d >= 1 and r >= 1, got d={self.d}, r={self.r}")
        if self.kind is SketchKind.CW:
            object.__setattr__(self, "mode", CwMode(self.mode or CwMode.COUNTSKETCH))
        elif self.mode is not None:
            raise InvalidArgumentError("mode only applies to CW sketches")
        if not self.replace and self.kind is not SketchKind.SRHT:
            raise InvalidArgumentError("sampling without replacement only exists for SRHT")
        self._build_state()

    # -- derived state -------------------------------------------------
    def _build_state(self):
        tag = _STREAM_TAGS[self.kind]
        st = self._state
        if self.kind is SketchKind.SRHT:
            d_pad = next_power_of_two(self.d)
            rng = _stream(self.seed, tag, 0)
            st["d_pad"] = d_pad
            st["signs"] = rng.choice(np.array([-1.0, 1.0]), size=d_pad)
            if self.replace:
                st["samples"] = rng.integers(0, d_pad, size=self.r)
            else:
                if self.r > d_pad:
                    raise InvalidArgumentError(
                        f"sampling without replacement needs r <= {d_pad}, got {self.r}"
                    )
                st["samples"] = rng.permutation(d_pad)[: self.r]
            st["scale"] = math.sqrt(d_pad / self.r)
        elif self.kind is SketchKind.CW and self.mode is CwMode.COUNTSKETCH:
            rng = _stream(self.seed, tag, 0)
            st["buckets"] = rng.integers(0, self.r, size=self.d)
            st["signs"] = rng.choice(np.array([-1.0, 1.0]), size=self.d)
        elif self.kind is SketchKind.CW:
            self._build_block_state(_stream(self.seed, tag, 1))

    def _build_block_state(self, rng):
        a, v = _block_shape(self.r, self.block_a, self.block_v)
        object.__setattr__(self, "block_a", a)
        object.__setattr__(self, "block_v", v)
        q = self.r // (a * v)
        st = self._state
        st["q"] = q
        st["hash"] = rng.integers(0, q, size=self.d)
        st["rows"] = rng.integers(0, v, size=(a, self.d))
        st["signs"] = rng.choice(np.array([-1.0, 1.0]), size=(a, self.d))
        # P groups coordinates by bucket; within a bucket keep index order
        st["perm"] = np.argsort(st["hash"], kind="stable")

    @property
    def padded_d(self):
        return self._state.get("d_pad", self.d)

    # -- serialisation -------------------------------------------------
    def to_dict(self):
        out = {
            "kind": self.kind.value,
            "d": int(self.d),
            "r": int(self.r),
            "seed": int(self.seed),
            "mode": self.mode.value if self.mode is not None else None,
        }
        if self.mode is CwMode.BLOCK:
            out["block_a"] = int(self.block_a)
            out["block_v"] = int(self.block_v)
        if not self.replace:
            out["replace"] = False
        return out

    @classmethod
    def from_dict(cls, desc):
        try:
            return cls(
                kind=desc["kind"],
                d=int(desc["d"]),
                r=int(desc["r"]),
                seed=int(desc["seed"]),
                mode=desc.get("mode"),
                replace=bool(desc.get("replace", True)),
                block_a=desc.get("block_a"),
                block_v=desc.get("block_v"),
            )
        except KeyError as exc:
            raise InvalidArgumentError(f"sketch descriptor is missing {exc}") from None


def _block_shape(r, a, v):
    """Pick (a, v) with a*v dividing r; defaults a=2, v=4 reduced by gcd."""
    if a is not None and v is not None:
        if a < 1 or v < 1 or r % (a * v):
            raise InvalidArgumentError(f"block_a*block_v must divide r (a={a}, v={v}, r={r})")
        return int(a), int(v)
    a = math.gcd(2 if a is None else int(a), r)
    v = math.gcd(4 if v is None else int(v), r // a)
    return a, v


def build_sketch(kind, d, r, seed, mode=None, replace=True, block_a=None, block_v=None):
    return SketchOperator(
        kind=parse_kind(kind), d=int(d), r=int(r), seed=int(seed), mode=mode,
        replace=replace, block_a=block_a, block_v=block_v,
    )


# -- sparse embedding layout ------------------------------------------------
def _sparse_entries(op):
    """(row, col, value) triplets of R for the CW constructions."""
    st = op._state
    if op.mode is CwMode.COUNTSKETCH:
        rows = np.arange(op.d)
        return rows, st["buckets"], st["signs"]
    return _block_columns(op)


def _block_columns(op):
    # Bucket i owns columns [i*a*v, (i+1)*a*v); copy k of the hashing block
    # occupies the v columns starting at i*a*v + k*v.  Coordinate j receives
    # one +-1/sqrt(a) entry per copy, in row rows[k, j] of that block.  This is
    # (S P)^T with S = blockdiag(B_1..B_q) acting on bucket-sorted coordinates.
    st = op._state
    a, v = op.block_a, op.block_v
    j = np.arange(op.d)
    k = np.arange(a)[:, None]
    cols = st["hash"][None, :] * (a * v) + k * v + st["rows"]
    vals = st["signs"] / math.sqrt(a)
    rows = np.broadcast_to(j, (a, op.d))
    return rows.ravel(), cols.ravel(), vals.ravel()


def sparse_operator(op):
    """R as a CSR matrix (CW kinds only)."""
    if op.kind is not SketchKind.CW:
        raise InvalidArgumentError("only CW sketches have a sparse operator")
    rows, cols, vals = _sparse_entries(op)
    R = sp.csr_matrix((vals, (rows, cols)), shape=(op.d, op.r))
    R.sort_indices()
    return R


def _dense_block(op, start, stop):
    """Rows [start, stop) of a SIGN or GAUSSIAN operator.

    Streams are keyed by ROW_BLOCK-aligned block index, so callers must ask
    for aligned ranges (every internal caller does).
    """
    tag = _STREAM_TAGS[op.kind]
    rng = _stream(op.seed, tag, start // ROW_BLOCK)
    shape = (stop - start, op.r)
    if op.kind is SketchKind.GAUSSIAN:
        return rng.standard_normal(shape) / math.sqrt(op.r)
    return rng.choice(np.array([-1.0, 1.0]), size=shape) / math.sqrt(op.r)


# -- application -------------------------------------------------------------
def _apply_dense_random(op, X):
    n = X.shape[0]
    out = np.zeros((n, op.r))
    Xc = X.tocsc() if sp.issparse(X) else X
    for start in range(0, op.d, ROW_BLOCK):
        stop = min(start + ROW_BLOCK, op.d)
        R_blk = _dense_block(op, start, stop)
        part = Xc[:, start:stop]
        if sp.issparse(part):
            if part.nnz == 0:
                continue
            out += np.asarray(part @ R_blk)
        else:
            out += part @ R_blk
    return out


def _apply_srht(op, X):
    st = op._state
    n = X.shape[0]
    d_pad = st["d_pad"]
    signs, samples, scale = st["signs"], st["samples"], st["scale"]
    out = np.empty((n, op.r))
    step = max(1, SRHT_CHUNK_ENTRIES // d_pad)
    for start in range(0, n, step):
        stop = min(start + step, n)
        buf = np.zeros((stop - start, d_pad))
        rows = X[start:stop]
        buf[:, : op.d] = rows.toarray() if sp.issparse(rows) else rows
        buf *= signs
        fwht_rows_inplace(buf)
        np.multiply(buf[:, samples], scale, out=out[start:stop])
    return out


def _apply_sparse_embedding(op, X):
    rows_R, cols_R, vals_R = _sparse_entries(op)
    if op.mode is CwMode.COUNTSKETCH and sp.issparse(X):
        # one scatter per stored nonzero of X
        Xc = X.tocoo()
        M = sp.coo_matrix(
            (Xc.data * vals_R[Xc.col], (Xc.row, cols_R[Xc.col])), shape=(X.shape[0], op.r)
        )
        return M.toarray()
    R = sp.csr_matrix((vals_R, (rows_R, cols_R)), shape=(op.d, op.r))
    if sp.issparse(X):
        return (X @ R).toarray()
    return np.asarray((R.T @ np.asarray(X).T).T)


def apply_sketch(op, X):
    """Return ``(X @ R, SketchReport)`` without materialising R when avoidable.

    ``X`` may be a dense array or any scipy sparse matrix with ``op.d``
    columns.  The report's ``t_rp`` covers generating the operator entries
    and the product itself.
    """
    if X.ndim != 2 or X.shape[1] != op.d:
        raise InvalidArgumentError(f"sketch expects {op.d} columns, got shape {X.shape}")
    if sp.issparse(X):
        X = as_csr(X)
        in_nnz = int(X.nnz)
    else:
        X = np.ascontiguousarray(X, dtype=np.float64)
        in_nnz = int(np.count_nonzero(X))
    check_finite(X, "X")
    t0 = time.perf_counter()
    if op.kind is SketchKind.SRHT:
        out = _apply_srht(op, X)
    elif op.kind is SketchKind.CW:
        out = _apply_sparse_embedding(op, X)
    else:
        out = _apply_dense_random(op, X)
    t_rp = time.perf_counter() - t0
    report = SketchReport(op.kind.value, op.r, t_rp, in_nnz, int(np.count_nonzero(out)))
    return out, report


def _hadamard_entries(rows, cols, d_pad):
    """Entries of the normalized Hadamard matrix: (-1)^popcount(i & j) / sqrt(d)."""
    bits = np.bitwise_and(rows[:, None], cols[None, :])
    parity = np.zeros(bits.shape, dtype=np.int64)
    while np.any(bits):
        parity ^= bits & 1
        bits = bits >> 1
    return (1.0 - 2.0 * parity) / math.sqrt(d_pad)


def materialize(op, cap=MATERIALIZE_CAP):
    """Explicit d x r matrix R, built entry-wise from the construction."""
    if op.d * op.r > cap:
        raise CapacityError(f"materialize is capped at {cap} entries (d*r = {op.d * op.r})")
    st = op._state
    if op.kind is SketchKind.SRHT:
        i = np.arange(op.d)
        H_cols = _hadamard_entries(i, st["samples"], st["d_pad"])
        return st["scale"] * st["signs"][: op.d, None] * H_cols
    if op.kind is SketchKind.CW:
        R = np.zeros((op.d, op.r))
        rows, cols, vals = _sparse_entries(op)
        for i, j, v in zip(rows.tolist(), cols.tolist(), vals.tolist()):
            R[i, j] += v
        return R
    blocks = [
        _dense_block(op, start, min(start + ROW_BLOCK, op.d))
        for start in range(0, op.d, ROW_BLOCK)
    ]
    return np.vstack(blocks)


# -- sampling complexity -----------------------------------------------------
def recommend_r(kind, rho, d, epsilon, delta=None):
    """Projection dimension from the sampling-complexity formulas, constants set to 1.

    Natural logarithms throughout; the result is rounded up and clamped to at
    least 1.  ``delta`` is ignored for SIGN, whose guarantee has no explicit
    failure probability.
    """
    kind = parse_kind(kind)
    if rho < 1:
        raise InvalidArgumentError(f"rho must be >= 1, got {rho}")
    if d < 1:
        raise InvalidArgumentError(f"d must be >= 1, got {d}")
    eps_hi = 1.0 if kind is SketchKind.CW else 0.5
    if not (0.0 < epsilon <= eps_hi) or (kind is SketchKind.CW and epsilon >= 1.0):
        raise InvalidArgumentError(f"epsilon out of range for {kind.value}: {epsilon}")
    if kind is not SketchKind.SIGN or delta is not None:
        if delta is None or not (0.0 < delta < 1.0):
            raise InvalidArgumentError(f"delta must lie in (0, 1), got {delta}")
    rho = float(rho)
    log = math.log
    if kind is SketchKind.SRHT:
        inner = log(rho * d / delta)
        value = rho * epsilon**-2 * inner * log(rho * epsilon**-2 / delta * inner)
    elif kind is SketchKind.CW:
        value = rho * epsilon**-4 * log(rho / (delta * epsilon)) * (rho + log(1.0 / (delta * epsilon)))
    elif kind is SketchKind.SIGN:
        value = rho * epsilon**-2 * log(rho) * log(d)
    else:
        value = rho * epsilon**-2 * log(rho / delta)
    return max(1, math.ceil(value - 1e-9))
