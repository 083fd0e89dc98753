"""Linear SVM duals solved by SMO-style pairwise coordinate descent.

Both problems are reduced to the common form

    min_b  1/2 b^T Q b + p^T b    s.t.  z^T b = 0,  0 <= b <= C

with ``Q[s, t] = z_s z_t K[m_s, m_t]`` for the linear kernel ``K = X X^T``.
Classification uses ``b = alpha``, ``z = y``, ``p = -1``.  Regression splits
``alpha = alpha+ - alpha-`` into 2n variables with ``z = (+1, -1)`` and
``p = (eps - y, eps + y)``; at the optimum at most one half of each pair is
nonzero so the split objective equals the |alpha| form.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numba import njit

from .errors import DegenerateProblemError, InvalidArgumentError, UndefinedMarginError
from .linalg import check_finite, gram

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 10_000_000
TAU = 1e-12

# C presets used by the experiment drivers
C_SYNTHETIC = 1000.0
C_TEXT = 500.0
C_REGRESSION = 1.0


@njit(cache=True, nogil=True)
def _smo(K, m, z, p, C, tol, max_iter, beta, G):
    nvar = z.shape[0]
    diag = np.empty(nvar)
    for t in range(nvar):
        diag[t] = K[m[t], m[t]]
    hist = [0.0]
    hist.pop()
    it = 0
    gap = np.inf
    while True:
        # i: maximal violator in I_up (lowest index on ties)
        gmax = -np.inf
        i = -1
        for t in range(nvar):
            if (z[t] > 0 and beta[t] < C) or (z[t] < 0 and beta[t] > 0):
                v = -z[t] * G[t]
                if v > gmax:
                    gmax = v
                    i = t
        gmin = np.inf
        j = -1
        Ki = K[m[i]] if i >= 0 else K[0]
        best = np.inf
        for t in range(nvar):
            if (z[t] > 0 and beta[t] > 0) or (z[t] < 0 and beta[t] < C):
                v = -z[t] * G[t]
                if v < gmin:
                    gmin = v
                if i >= 0:
                    b = gmax - v
                    if b > 0:
                        a = diag[i] + diag[t] - 2.0 * Ki[m[t]]
                        if a <= 0:
                            a = TAU
                        score = -(b * b) / a
                        if score < best:
                            best = score
                            j = t
        gap = gmax - gmin
        if i < 0 or j < 0 or gap <= tol or it >= max_iter:
            break

        if it % nvar == 0:
            f = 0.0
            for t in range(nvar):
                f += 0.5 * beta[t] * (G[t] + p[t])
            hist.append(f)

        Kii = diag[i]
        Kjj = diag[j]
        Kij = K[m[i], m[j]]
        old_i = beta[i]
        old_j = beta[j]
        if z[i] != z[j]:
            quad = Kii + Kjj - 2.0 * Kij
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = beta[i] - beta[j]
            beta[i] += delta
            beta[j] += delta
            if diff > 0:
                if beta[j] < 0:
                    beta[j] = 0.0
                    beta[i] = diff
            else:
                if beta[i] < 0:
                    beta[i] = 0.0
                    beta[j] = -diff
            if diff > 0:
                if beta[i] > C:
                    beta[i] = C
                    beta[j] = C - diff
            else:
                if beta[j] > C:
                    beta[j] = C
                    beta[i] = C + diff
        else:
            quad = Kii + Kjj - 2.0 * Kij
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            total = beta[i] + beta[j]
            beta[i] -= delta
            beta[j] += delta
            if total > C:
                if beta[i] > C:
                    beta[i] = C
                    beta[j] = total - C
            else:
                if beta[j] < 0:
                    beta[j] = 0.0
                    beta[i] = total
            if total > C:
                if beta[j] > C:
                    beta[j] = C
                    beta[i] = total - C
            else:
                if beta[i] < 0:
                    beta[i] = 0.0
                    beta[j] = total

        di = beta[i] - old_i
        dj = beta[j] - old_j
        ci = z[i] * di
        cj = z[j] * dj
        Kj = K[m[j]]
        # K is symmetric, so read rows i and j contiguously
        for t in range(nvar):
            G[t] += z[t] * (ci * Ki[m[t]] + cj * Kj[m[t]])
        it += 1

    f = 0.0
    for t in range(nvar):
        f += 0.5 * beta[t] * (G[t] + p[t])
    hist.append(f)
    return it, gap, hist


def _intercept(beta, G, z, C):
    """Offset b of the decision function ``x.w + b`` from the KKT conditions."""
    yG = z * G
    upper = beta >= C
    lower = beta <= 0
    free = ~(upper | lower)
    if np.any(free):
        rho = float(np.mean(yG[free]))
    else:
        ub_mask = (upper & (z < 0)) | (lower & (z > 0))
        lb_mask = (upper & (z > 0)) | (lower & (z < 0))
        ub = float(np.min(yG[ub_mask])) if np.any(ub_mask) else np.inf
        lb = float(np.max(yG[lb_mask])) if np.any(lb_mask) else -np.inf
        if np.isfinite(ub) and np.isfinite(lb):
            rho = 0.5 * (ub + lb)
        elif np.isfinite(ub):
            rho = ub
        elif np.isfinite(lb):
            rho = lb
        else:
            rho = 0.0
    return -rho


@dataclass
class SvmModel:
    kind: str
    C: float
    alphas: np.ndarray
    w: np.ndarray
    objective: float
    kkt_violation: float = 0.0
    bias: float = 0.0
    tube_epsilon: float | None = None
    iterations: int = 0
    converged: bool = True
    train_time: float = 0.0
    objective_history: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    @property
    def gamma(self):
        nw = float(np.linalg.norm(self.w))
        return 1.0 / nw if nw > 0 else None

    @property
    def support_indices(self):
        return np.flatnonzero(self.alphas != 0)

    def to_dict(self):
        out = {
            "kind": self.kind,
            "C": float(self.C),
            "alphas": [float(a) for a in self.alphas],
            "w": [float(v) for v in self.w],
            "gamma": self.gamma,
            "objective": float(self.objective),
            "bias": float(self.bias),
            "kkt_violation": float(self.kkt_violation),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "support_indices": [int(i) for i in self.support_indices],
            "train_time": float(self.train_time),
        }
        if self.tube_epsilon is not None:
            out["tube_epsilon"] = float(self.tube_epsilon)
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(
            kind=d["kind"],
            C=float(d["C"]),
            alphas=np.asarray(d["alphas"], dtype=np.float64),
            w=np.asarray(d["w"], dtype=np.float64),
            objective=float(d["objective"]),
            kkt_violation=float(d.get("kkt_violation", 0.0)),
            bias=float(d.get("bias", 0.0)),
            tube_epsilon=d.get("tube_epsilon"),
            iterations=int(d.get("iterations", 0)),
            converged=bool(d.get("converged", True)),
            train_time=float(d.get("train_time", 0.0)),
        )


def _prepare(X, y, C, tol, gram_matrix):
    if not C > 0:
        raise InvalidArgumentError(f"C must be positive, got {C}")
    if not tol > 0:
        raise InvalidArgumentError(f"tol must be positive, got {tol}")
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] != y.shape[0]:
        raise InvalidArgumentError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
    check_finite(X, "X")
    if not np.all(np.isfinite(y)):
        raise InvalidArgumentError("targets contain NaN or Inf")
    if gram_matrix is None:
        K = gram(X)
    else:
        K = np.ascontiguousarray(gram_matrix, dtype=np.float64)
        if K.shape != (X.shape[0], X.shape[0]):
            raise InvalidArgumentError("precomputed Gram matrix has the wrong shape")
    return y, K


def _primal(X, coef):
    if sp.issparse(X):
        return np.asarray(X.T @ coef).ravel()
    return np.asarray(X).T @ coef


def train_svc(X, y, C=C_SYNTHETIC, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, gram_matrix=None):
    """Soft-margin classification dual; labels must be -1/+1 with both present."""
    y, K = _prepare(X, y, C, tol, gram_matrix)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise InvalidArgumentError("classification labels must be -1 or +1")
    if np.all(y == y[0]):
        raise DegenerateProblemError("classification needs both classes present")
    n = y.shape[0]
    t0 = time.perf_counter()
    beta = np.zeros(n)
    G = -np.ones(n)
    m = np.arange(n)
    it, gap, hist = _smo(K, m, y, -np.ones(n), float(C), float(tol), int(max_iter), beta, G)
    elapsed = time.perf_counter() - t0
    w = _primal(X, y * beta)
    # maximisation form: 1^T a - 1/2 a^T Y K Y a
    ya = y * beta
    objective = float(beta.sum() - 0.5 * ya @ K @ ya)
    return SvmModel(
        kind="svc", C=float(C), alphas=beta, w=w, objective=objective,
        kkt_violation=float(max(gap, 0.0)), bias=_intercept(beta, G, y, C),
        iterations=int(it), converged=bool(gap <= tol), train_time=elapsed,
        objective_history=-np.asarray(hist),
    )


def train_svr(X, y, C=C_REGRESSION, tube_epsilon=0.1, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
              gram_matrix=None):
    """Epsilon-insensitive regression dual; returns net multipliers in [-C, C]."""
    if tube_epsilon < 0:
        raise InvalidArgumentError(f"tube_epsilon must be nonnegative, got {tube_epsilon}")
    y, K = _prepare(X, y, C, tol, gram_matrix)
    n = y.shape[0]
    if n < 1:
        raise DegenerateProblemError("regression needs at least one sample")
    t0 = time.perf_counter()
    z = np.concatenate([np.ones(n), -np.ones(n)])
    p = np.concatenate([tube_epsilon - y, tube_epsilon + y])
    m = np.concatenate([np.arange(n), np.arange(n)])
    beta = np.zeros(2 * n)
    G = p.copy()
    it, gap, hist = _smo(K, m, z, p, float(C), float(tol), int(max_iter), beta, G)
    elapsed = time.perf_counter() - t0
    alphas = beta[:n] - beta[n:]
    w = _primal(X, alphas)
    objective = float(y @ alphas - tube_epsilon * np.abs(alphas).sum() - 0.5 * alphas @ K @ alphas)
    return SvmModel(
        kind="svr", C=float(C), alphas=alphas, w=w, objective=objective,
        kkt_violation=float(max(gap, 0.0)), bias=_intercept(beta, G, z, C),
        tube_epsilon=float(tube_epsilon), iterations=int(it), converged=bool(gap <= tol),
        train_time=elapsed, objective_history=-np.asarray(hist),
    )


def predict(model, X_new):
    """Decision values (classification) or fitted values (regression): X w + b."""
    if X_new.ndim != 2 or X_new.shape[1] != model.w.shape[0]:
        raise InvalidArgumentError(
            f"model expects {model.w.shape[0]} features, got shape {X_new.shape}"
        )
    return np.asarray(X_new @ model.w).ravel() + model.bias


def margin(model):
    nw = float(np.linalg.norm(model.w))
    if nw == 0.0 or not math.isfinite(nw):
        raise UndefinedMarginError("margin is undefined for a zero weight vector")
    return 1.0 / nw
