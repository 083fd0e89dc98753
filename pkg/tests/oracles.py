"""Slow, independent reference implementations used only by the tests."""

import itertools

import numpy as np
from scipy.optimize import minimize


def naive_hadamard(d):
    """Normalized Hadamard from the entry formula H[i, j] = (-1)^popcount(i & j) / sqrt(d)."""
    idx = np.arange(d)
    parity = np.vectorize(lambda v: bin(v).count("1") & 1)(np.bitwise_and.outer(idx, idx))
    return (1.0 - 2.0 * parity) / np.sqrt(d)


def jacobi_singular_values(A, sweeps=60, tol=1e-15):
    """One-sided Jacobi SVD; returns singular values in decreasing order."""
    U = np.array(A, dtype=np.float64, copy=True)
    if U.shape[0] < U.shape[1]:
        U = U.T.copy()
    n = U.shape[1]
    for _ in range(sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                a = U[:, p] @ U[:, p]
                b = U[:, q] @ U[:, q]
                c = U[:, p] @ U[:, q]
                if abs(c) <= tol * np.sqrt(a * b) or c == 0.0:
                    continue
                rotated = True
                zeta = (b - a) / (2.0 * c)
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta)) if zeta != 0 else 1.0
                cs = 1.0 / np.sqrt(1.0 + t * t)
                sn = cs * t
                up = U[:, p].copy()
                U[:, p] = cs * up - sn * U[:, q]
                U[:, q] = sn * up + cs * U[:, q]
        if not rotated:
            break
    return np.sort(np.linalg.norm(U, axis=0))[::-1]


def _project(v, z, C):
    """Euclidean projection onto {b : z^T b = 0, 0 <= b <= C} for z in {-1, +1}^m."""
    breaks = np.unique(np.concatenate([v * z, (v - C) * z]))
    lam = breaks[:, None]
    vals = (np.clip(v[None, :] - lam * z[None, :], 0.0, C) * z[None, :]).sum(axis=1)
    # vals is non-increasing in lambda
    k = int(np.searchsorted(-vals, 0.0))
    if k == 0:
        lam_star = breaks[0]
    elif k >= len(breaks):
        lam_star = breaks[-1]
    else:
        l0, l1, f0, f1 = breaks[k - 1], breaks[k], vals[k - 1], vals[k]
        lam_star = l0 if f0 == f1 else l0 + (l1 - l0) * f0 / (f0 - f1)
    return np.clip(v - lam_star * z, 0.0, C)


def _objective(Q, p, b):
    return 0.5 * b @ Q @ b + p @ b


def _nu_for_bounded(g, z, at_lo):
    """Multiplier making every bounded coordinate KKT-consistent, or None."""
    # at_lo needs g + nu z >= 0, at_hi needs g + nu z <= 0
    need_ge = np.where(at_lo, 1.0, -1.0)
    coef, rhs = need_ge * z, -need_ge * g
    lo = max((rhs[coef > 0] / coef[coef > 0]).max(initial=-np.inf), -np.inf)
    hi = min((rhs[coef < 0] / coef[coef < 0]).min(initial=np.inf), np.inf)
    if lo > hi + 1e-12 * max(1.0, abs(lo), abs(hi)):
        return None
    if np.isfinite(lo) and np.isfinite(hi):
        return 0.5 * (lo + hi)
    return lo if np.isfinite(lo) else (hi if np.isfinite(hi) else 0.0)


def _polish(Q, p, z, C, b, tol=1e-9):
    """Solve the KKT system on the free set nearest to ``b``; None unless certified optimal."""
    for thresh in (1e-9, 1e-7, 1e-5, 1e-3):
        cand = _polish_at(Q, p, z, C, b, thresh * max(C, 1.0), tol)
        if cand is not None:
            return cand
    return None


def _polish_at(Q, p, z, C, b, thresh, tol):
    lo = b <= thresh
    hi = b >= C - thresh
    free = ~(lo | hi)
    base = np.where(hi, C, 0.0)
    if not free.any():
        cand = base
        nu = _nu_for_bounded(Q @ cand + p, z, cand <= 0.0)
        if nu is None:
            return None
    else:
        F = np.flatnonzero(free)
        g = Q @ b + p
        nu0 = -float(np.mean(z[F] * g[F]))
        m = len(F)
        A = np.zeros((m + 1, m + 1))
        A[:m, :m] = Q[np.ix_(F, F)]
        A[:m, m] = z[F]
        A[m, :m] = z[F]
        bF = b[F]
        rhs = np.zeros(m + 1)
        full = base.copy()
        full[F] = bF
        rhs[:m] = -(Q[F] @ full + p[F] + nu0 * z[F])
        rhs[m] = -(z @ full)
        sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
        cand = full.copy()
        cand[F] = bF + sol[:m]
        nu = nu0 + sol[m]
    if np.any(cand < -1e-10) or np.any(cand > C + 1e-10) or abs(z @ cand) > 1e-9:
        return None
    cand = np.clip(cand, 0.0, C)
    g = Q @ cand + p + nu * z
    scale = max(1.0, float(np.max(np.abs(Q))), float(np.max(np.abs(p))))
    at_lo = cand <= 0.0
    at_hi = cand >= C
    mid = ~(at_lo | at_hi)
    ok = (np.all(g[at_lo] >= -tol * scale) and np.all(g[at_hi] <= tol * scale)
          and np.all(np.abs(g[mid]) <= tol * scale))
    return cand if ok else None


def box_qp(Q, p, z, C, rounds=400, steps=50):
    """min 1/2 b^T Q b + p^T b  s.t.  z^T b = 0, 0 <= b <= C.

    Warm start from an SLSQP solve, then accelerated projected gradient,
    with a KKT-certified active-set polish attempted after every batch of
    steps.  Returns (b, certified).
    """
    Q = np.asarray(Q, dtype=np.float64)
    m = Q.shape[0]
    L = max(float(np.linalg.eigvalsh(Q)[-1]), 1e-12)
    res = minimize(
        lambda b: _objective(Q, p, b), np.zeros(m), jac=lambda b: Q @ b + p, method="SLSQP",
        bounds=[(0.0, C)] * m, constraints=[{"type": "eq", "fun": lambda b: z @ b, "jac": lambda b: z}],
        options={"ftol": 1e-15, "maxiter": 1000},
    )
    b = _project(np.asarray(res.x, dtype=np.float64), z, C)
    polished = _polish(Q, p, z, C, b)
    if polished is not None:
        return polished, True
    yk, t = b.copy(), 1.0
    for _ in range(rounds):
        for _ in range(steps):
            nb = _project(yk - (Q @ yk + p) / L, z, C)
            nt = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            yk = nb + ((t - 1.0) / nt) * (nb - b)
            if _objective(Q, p, nb) > _objective(Q, p, b):
                yk, nt = nb.copy(), 1.0
            b, t = nb, nt
        polished = _polish(Q, p, z, C, b)
        if polished is not None:
            return polished, True
    return b, False


def svc_dual_objective(X, y, C):
    """Maximised classification dual 1^T a - 1/2 a^T YKY a, via box_qp."""
    K = X @ X.T
    Q = (y[:, None] * y[None, :]) * K
    b, certified = box_qp(Q, -np.ones(len(y)), y.astype(float), C)
    return -_objective(Q, -np.ones(len(y)), b), certified


def svr_dual_objective(X, y, C, tube_epsilon):
    """Maximised regression dual y^T a - eps |a|_1 - 1/2 a^T K a on the split variables."""
    n = len(y)
    K = X @ X.T
    Q = np.block([[K, -K], [-K, K]])
    p = np.concatenate([tube_epsilon - y, tube_epsilon + y])
    z = np.concatenate([np.ones(n), -np.ones(n)])
    b, certified = box_qp(Q, p, z, C)
    return -_objective(Q, p, b), certified


def exact_meb_2d(P):
    """Smallest enclosing circle by enumerating pair and triple supports."""
    best = None
    pts = [np.asarray(q, dtype=np.float64) for q in P]

    def consider(c):
        nonlocal best
        r = max(np.linalg.norm(q - c) for q in pts)
        if best is None or r < best[1]:
            best = (c, r)

    if len(pts) == 1:
        return pts[0], 0.0
    for a, b in itertools.combinations(pts, 2):
        consider(0.5 * (a + b))
    for a, b, c in itertools.combinations(pts, 3):
        M = 2.0 * np.array([b - a, c - a])
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        rhs = np.array([b @ b - a @ a, c @ c - a @ a])
        consider(np.linalg.solve(M, rhs))
    return best
