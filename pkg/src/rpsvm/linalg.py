"""Dense/sparse kernels, the fast Walsh-Hadamard transform and SVD helpers.

Dense matrices are plain ``float64`` numpy arrays (C order); sparse matrices
are canonical ``scipy.sparse.csr_matrix`` objects (sorted column indices, no
stored zeros).  Every function here is pure apart from ``fwht_inplace`` and
``fwht_rows_inplace``, which overwrite their argument.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import CapacityError, InvalidArgumentError

SVD_DIM_CAP = 4096
POWER_MAX_ITER = 1000
POWER_RTOL = 1e-9
RANK_TOLERANCE = 1e-10


def is_power_of_two(d):
    return d >= 1 and (d & (d - 1)) == 0


def next_power_of_two(d):
    if d < 1:
        raise InvalidArgumentError(f"dimension must be positive, got {d}")
    return 1 << (int(d) - 1).bit_length()


def fwht_inplace(v, d=None):
    """Apply the normalized Walsh-Hadamard matrix to ``v`` in place.

    ``v`` must be a contiguous float64 vector whose length is a power of two.
    Runs ``log2(d)`` vectorised butterfly passes and returns ``v``.
    """
    if d is None:
        d = v.shape[0]
    if v.ndim != 1 or v.shape[0] != d:
        raise InvalidArgumentError(f"expected a vector of length {d}, got shape {v.shape}")
    fwht_rows_inplace(v.reshape(1, d))
    return v


def fwht_rows_inplace(A):
    """Transform every row of the C-contiguous 2-D array ``A`` in place."""
    if A.ndim != 2:
        raise InvalidArgumentError("fwht_rows_inplace expects a 2-D array")
    if not A.flags.c_contiguous or A.dtype != np.float64:
        raise InvalidArgumentError("fwht_rows_inplace needs a C-contiguous float64 array")
    n, d = A.shape
    if not is_power_of_two(d):
        raise InvalidArgumentError(f"FWHT length must be a power of two, got {d}")
    h = 1
    while h < d:
        blocks = A.reshape(n, d // (2 * h), 2, h)
        top = blocks[:, :, 0, :].copy()
        blocks[:, :, 0, :] += blocks[:, :, 1, :]
        np.subtract(top, blocks[:, :, 1, :], out=blocks[:, :, 1, :])
        h *= 2
    if d > 1:
        A *= 1.0 / np.sqrt(d)
    return A


def hadamard(d, normalized=True):
    """Explicit Hadamard matrix built by the block recursion (O(d^2) memory)."""
    if not is_power_of_two(d):
        raise InvalidArgumentError(f"Hadamard order must be a power of two, got {d}")
    H = np.ones((1, 1))
    while H.shape[0] < d:
        H = np.block([[H, H], [H, -H]])
    if normalized:
        H = H / np.sqrt(d)
    return H


def as_csr(X):
    """Canonical CSR copy of ``X``: float64, sorted indices, no stored zeros."""
    A = sp.csr_matrix(X, dtype=np.float64, copy=True)
    A.eliminate_zeros()
    A.sort_indices()
    A.sum_duplicates()
    return A


def check_finite(X, name="matrix"):
    data = X.data if sp.issparse(X) else np.asarray(X)
    if not np.all(np.isfinite(data)):
        raise InvalidArgumentError(f"{name} contains NaN or Inf")


def to_dense(X):
    if sp.issparse(X):
        return X.toarray()
    return np.ascontiguousarray(X, dtype=np.float64)


def _check_inner(a_shape, b_rows):
    if a_shape[1] != b_rows:
        raise InvalidArgumentError(
            f"dimension mismatch: {a_shape[0]}x{a_shape[1]} times {b_rows}x..."
        )


def matmul(A, B):
    """Dense result of ``A @ B`` for any mix of dense and CSR operands."""
    _check_inner(A.shape, B.shape[0])
    out = A @ B
    return to_dense(out)


def matvec(A, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidArgumentError("matvec expects a 1-D vector")
    _check_inner(A.shape, x.shape[0])
    return np.asarray(A @ x, dtype=np.float64).ravel()


def gram(A):
    """Row Gram matrix ``A A^T`` as a dense symmetric array."""
    G = to_dense(A @ A.T)
    return 0.5 * (G + G.T)


def _power_start(n):
    i = np.arange(n, dtype=np.float64)
    x = 1.0 + 1e-3 * np.sin(1.0 + i)
    return x / np.linalg.norm(x)


def spectral_norm(A, max_iter=POWER_MAX_ITER, rtol=POWER_RTOL):
    """Largest singular value of ``A`` by power iteration on ``A^T A``.

    The start vector is deterministic, so repeated calls agree bit for bit.
    Returns exactly 0.0 for an all-zero matrix.
    """
    if sp.issparse(A):
        if A.nnz == 0 or not np.any(A.data):
            return 0.0
    else:
        A = np.asarray(A, dtype=np.float64)
        if A.ndim == 1:
            A = A.reshape(1, -1)
        if A.size == 0 or not np.any(A):
            return 0.0
    check_finite(A, "A")
    x = _power_start(A.shape[1])
    prev = None
    rq = 0.0
    for _ in range(max_iter):
        y = A @ x
        rq = float(y @ y)
        z = np.asarray(A.T @ y).ravel()
        nz = np.linalg.norm(z)
        if nz == 0.0:
            break
        x = z / nz
        if prev is not None and abs(rq - prev) <= rtol * rq:
            break
        prev = rq
    y = A @ x
    return float(np.sqrt(max(rq, float(y @ y))))


@dataclass
class SvdFactors:
    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray

    @property
    def rank(self):
        return int(self.singular_values.shape[0])


def svd_thin(A, rank_tolerance=RANK_TOLERANCE, cap=SVD_DIM_CAP):
    """Thin SVD truncated to the numerical rank.

    Singular values at or below ``rank_tolerance * sigma_1`` are discarded.
    Raises ``CapacityError`` if ``min(n, d)`` exceeds ``cap``; callers with
    bigger inputs should work with the Gram matrix instead.
    """
    if rank_tolerance <= 0:
        raise InvalidArgumentError("rank_tolerance must be positive")
    n, d = A.shape
    if min(n, d) > cap:
        raise CapacityError(
            f"svd_thin is capped at min(n, d) <= {cap} (got {min(n, d)}); "
            "use the Gram-matrix path for larger inputs"
        )
    M = to_dense(A)
    check_finite(M, "A")
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return SvdFactors(np.zeros((n, 0)), np.zeros(0), np.zeros((d, 0)))
    keep = int(np.count_nonzero(s > rank_tolerance * s[0]))
    U, s, V = U[:, :keep], s[:keep], Vt[:keep].T
    # fix signs so the factorisation is reproducible across LAPACK builds
    flip = np.sign(V[np.argmax(np.abs(V), axis=0), np.arange(keep)])
    flip[flip == 0] = 1.0
    return SvdFactors(np.ascontiguousarray(U * flip), s, np.ascontiguousarray(V * flip))


def numerical_rank(A, rank_tolerance=RANK_TOLERANCE):
    return svd_thin(A, rank_tolerance).rank
