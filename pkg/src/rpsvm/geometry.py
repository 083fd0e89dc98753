"""Minimum enclosing balls, spectral discrepancy and the margin/radius bound checks.

The bound checks are deterministic: rather than the with-high-probability
epsilon, they take the discrepancy ``||V^T V - V^T R R^T V||_2`` measured on
the very sketch that produced the reduced problem, so any failure points to
a solver or implementation defect.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from numba import njit

from .errors import BoundVacuousError, InvalidArgumentError, UndefinedMarginError
from .linalg import gram, spectral_norm, svd_thin, to_dense, SVD_DIM_CAP, RANK_TOLERANCE
from .sketch import apply_sketch

DEFAULT_APPROX_DELTA = 0.01
BOUND_RTOL = 1e-9
ORTHONORMAL_TOL = 1e-6


@dataclass
class MebResult:
    center: np.ndarray
    radius: float
    iterations: int
    approx_delta: float
    weights: np.ndarray = field(repr=False, default=None)


@dataclass
class DiscrepancyResult:
    e_norm: float
    rho: int
    r: int
    kind: str
    seed: int


@dataclass
class BoundCheck:
    bound_name: str
    lhs: float
    rhs: float
    satisfied: bool
    slack: float
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _check(name, lhs, rhs, **details):
    lhs, rhs = float(lhs), float(rhs)
    tol = BOUND_RTOL * max(abs(lhs), abs(rhs))
    return BoundCheck(name, lhs, rhs, bool(lhs <= rhs + tol), rhs - lhs, details)


@njit(cache=True)
def _badoiu_clarkson(K, rounds):
    n = K.shape[0]
    lam = np.zeros(n)
    lam[0] = 1.0
    Kl = K[:, 0].copy()
    cc = K[0, 0]
    best_r2 = np.inf
    best_lam = lam.copy()
    for k in range(1, rounds + 1):
        far = 0
        far_d = -np.inf
        for i in range(n):
            di = K[i, i] - 2.0 * Kl[i] + cc
            if di > far_d:
                far_d = di
                far = i
        if far_d < best_r2:
            best_r2 = far_d
            best_lam[:] = lam
        t = 1.0 / (k + 1.0)
        cc = (1.0 - t) ** 2 * cc + 2.0 * t * (1.0 - t) * Kl[far] + t * t * K[far, far]
        for i in range(n):
            Kl[i] = (1.0 - t) * Kl[i] + t * K[i, far]
            lam[i] *= 1.0 - t
        lam[far] += t
    far_d = -np.inf
    for i in range(n):
        di = K[i, i] - 2.0 * Kl[i] + cc
        if di > far_d:
            far_d = di
    if far_d < best_r2:
        best_lam[:] = lam
    return best_lam


def min_enclosing_ball(X, approx_delta=DEFAULT_APPROX_DELTA):
    """Approximate minimum enclosing ball by the Badoiu-Clarkson core-set iteration.

    Runs ``ceil(1/approx_delta^2) + 1`` farthest-point rounds on the Gram
    matrix, so the cost per round is O(n) regardless of dimension.  The
    returned radius is the exact maximum distance from the returned center,
    hence ``B <= radius <= (1 + approx_delta) B`` for the optimal radius B.
    """
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidArgumentError("min_enclosing_ball needs at least one point")
    if not (0.0 < approx_delta <= 0.5):
        raise InvalidArgumentError(f"approx_delta must lie in (0, 0.5], got {approx_delta}")
    rounds = math.ceil(1.0 / approx_delta**2) + 1
    K = gram(X)
    lam = _badoiu_clarkson(K, rounds)
    if sp.issparse(X):
        center = np.asarray(X.T @ lam).ravel()
        diffs = X.toarray() - center
    else:
        X = np.asarray(X, dtype=np.float64)
        center = lam @ X
        diffs = X - center
    radius = float(np.sqrt(np.max(np.einsum("ij,ij->i", diffs, diffs))))
    return MebResult(center, radius, rounds, float(approx_delta), lam)


def row_space_basis(X, rank_tolerance=RANK_TOLERANCE):
    """Orthonormal d x rho basis V of the row space of X."""
    if min(X.shape) <= SVD_DIM_CAP:
        return svd_thin(X, rank_tolerance).V
    # tall-and-wide fallback through the n x n Gram matrix
    evals, evecs = np.linalg.eigh(gram(X))
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    if evals[0] <= 0:
        return np.zeros((X.shape[1], 0))
    keep = evals > (rank_tolerance * math.sqrt(evals[0])) ** 2
    s = np.sqrt(evals[keep])
    V = np.asarray(X.T @ evecs[:, keep]) / s
    Q, _ = np.linalg.qr(V)
    return Q


def spectral_discrepancy(V, op):
    """||V^T V - (V^T R)(V^T R)^T||_2 with V^T R formed by sketching the rows of V^T."""
    V = np.asarray(V, dtype=np.float64)
    if V.ndim != 2 or V.shape[0] != op.d:
        raise InvalidArgumentError(f"V must have {op.d} rows, got shape {V.shape}")
    rho = V.shape[1]
    if rho == 0:
        return DiscrepancyResult(0.0, 0, op.r, op.kind.value, op.seed)
    VtV = V.T @ V
    if np.max(np.abs(VtV - np.eye(rho))) > ORTHONORMAL_TOL:
        raise InvalidArgumentError("V does not have orthonormal columns")
    VtR, _ = apply_sketch(op, np.ascontiguousarray(V.T))
    E = VtV - VtR @ VtR.T
    return DiscrepancyResult(spectral_norm(0.5 * (E + E.T)), rho, op.r, op.kind.value, op.seed)


def data_discrepancy(X, op, rank_tolerance=RANK_TOLERANCE):
    return spectral_discrepancy(row_space_basis(X, rank_tolerance), op)


def _require_converged(*models):
    for m in models:
        if not m.converged:
            raise InvalidArgumentError(
                f"{m.kind} model did not converge (kkt violation {m.kkt_violation:.3g})"
            )


def margin_multiplier(e_norm):
    """Factor f with gamma_sketched^2 >= f * gamma^2 implied by ||E||_2 = e_norm."""
    if not (0.0 <= e_norm < 1.0):
        raise BoundVacuousError(f"||E||_2 = {e_norm:.4g} >= 1: the margin bound is vacuous")
    return 1.0 - e_norm / (1.0 - e_norm)


def verify_margin_bound(full, sketched, e_norm):
    """Check gamma~^2 >= (1 - e/(1-e)) gamma^2 for two converged models."""
    _require_converged(full, sketched)
    factor = margin_multiplier(e_norm)
    nw2 = float(full.w @ full.w)
    nw2_t = float(sketched.w @ sketched.w)
    if nw2 == 0.0 or nw2_t == 0.0:
        raise UndefinedMarginError("margin check needs nonzero weight vectors")
    gamma2, gamma2_t = 1.0 / nw2, 1.0 / nw2_t
    return _check(
        "margin", factor * gamma2, gamma2_t,
        e_norm=float(e_norm), multiplier=factor, gamma=math.sqrt(gamma2),
        gamma_sketched=math.sqrt(gamma2_t), task=full.kind,
    )


def verify_objective_chain(full, sketched, e_norm, X, y=None):
    """Check Z_opt >= Z~_opt - e/2 * ||X^T c~||^2 with c~ the sketched dual coefficients.

    This intermediate step of the margin argument holds for any value of
    ``e_norm``, so it stays informative when the margin bound is vacuous.
    """
    _require_converged(full, sketched)
    coef = sketched.alphas if y is None else np.asarray(y, dtype=np.float64) * sketched.alphas
    u = np.asarray(X.T @ coef).ravel()
    rhs = full.objective
    lhs = sketched.objective - 0.5 * e_norm * float(u @ u)
    return _check("objective_chain", lhs, rhs, e_norm=float(e_norm), task=full.kind)


def verify_radius_bound(X, op, approx_delta=DEFAULT_APPROX_DELTA, rank_tolerance=RANK_TOLERANCE):
    """Check B~^2 <= (1 + ||E_B||_2) B^2 (1 + delta)^3 for the sketched point cloud.

    E_B is measured on the row space of X stacked with the (approximate) MEB
    center.  ``details`` also carries the slack-free intermediate claim: the
    ball around the projected center with squared radius (1 + ||E_B||) B^2
    covers every projected point.
    """
    meb = min_enclosing_ball(X, approx_delta)
    XB = np.vstack([to_dense(X), meb.center[None, :]])
    disc = spectral_discrepancy(row_space_basis(XB, rank_tolerance), op)
    XB_t, _ = apply_sketch(op, XB)
    X_t, c_t = XB_t[:-1], XB_t[-1]
    meb_t = min_enclosing_ball(X_t, approx_delta)
    e_b = disc.e_norm
    B2, B2_t = meb.radius**2, meb_t.radius**2
    centered = X_t - c_t
    center_r2 = float(np.max(np.einsum("ij,ij->i", centered, centered)))
    center_ok = center_r2 <= (1.0 + e_b) * B2 * (1.0 + BOUND_RTOL) + 1e-300
    return _check(
        "radius", B2_t, (1.0 + e_b) * B2 * (1.0 + approx_delta) ** 3,
        e_b_norm=e_b, rho_b=disc.rho, radius=meb.radius, radius_sketched=meb_t.radius,
        projected_center_radius_sq=center_r2, projected_center_satisfied=bool(center_ok),
        approx_delta=approx_delta,
    )


def verify_combined_bound(full, sketched, meb_full, meb_sketched, e_norm, e_b_norm, form="stated"):
    """Check B~^2/gamma~^2 <= M * B^2/gamma^2 with eps = max(e_norm, e_b_norm).

    ``form="stated"`` uses M = (1+eps)/(1-eps); ``form="chained"`` chains the
    margin and radius bounds, M = (1+eps)/(1 - eps/(1-eps)).  Both are scaled
    by (1+delta)^3 to absorb the approximate enclosing balls.
    """
    nw2 = float(full.w @ full.w)
    nw2_t = float(sketched.w @ sketched.w)
    if nw2 == 0.0 or nw2_t == 0.0:
        raise UndefinedMarginError("combined bound needs nonzero weight vectors")
    eps = max(float(e_norm), float(e_b_norm))
    if form == "stated":
        if eps >= 1.0:
            raise BoundVacuousError(f"eps = {eps:.4g} >= 1: the combined bound is vacuous")
        multiplier = (1.0 + eps) / (1.0 - eps)
    elif form == "chained":
        factor = margin_multiplier(eps)
        if factor <= 0.0:
            raise BoundVacuousError(f"eps = {eps:.4g} >= 1/2: the combined bound is vacuous")
        multiplier = (1.0 + eps) / factor
    else:
        raise InvalidArgumentError(f"form must be 'stated' or 'chained', got {form!r}")
    delta = max(meb_full.approx_delta, meb_sketched.approx_delta)
    meb_slack = (1.0 + delta) ** 3
    ratio = meb_full.radius**2 * nw2
    ratio_t = meb_sketched.radius**2 * nw2_t
    return _check(
        "combined", ratio_t, multiplier * meb_slack * ratio,
        eps=eps, multiplier=multiplier, meb_slack=meb_slack, form=form,
    )
