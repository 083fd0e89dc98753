"""Synthetic data, repeated cross-validation over sketches, PCA baseline and metrics."""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgumentError
from .linalg import gram, svd_thin, to_dense
from .sketch import apply_sketch, build_sketch, parse_kind
from .svm import C_SYNTHETIC, DEFAULT_TOL, DEFAULT_MAX_ITER, predict, train_svc, train_svr

FULL = "full"
CLASSIFY = "classify"
REGRESS = "regress"
TIMING_METRICS = ("t_rp", "t_train", "t_run")
THREADS_ENV = "RPSVM_THREADS"


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    d: int
    mu: float = 0.0
    sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma <= 0:
            raise InvalidArgumentError(f"sigma must be positive, got {self.sigma}")
        if self.n < 1 or self.d < 1:
            raise InvalidArgumentError("n and d must be positive")


# desk-scale versions of the 200x5000, 250x10000 and 300x20000 families
PRESETS = {
    "D1": (200, 2048),
    "D2": (250, 4096),
    "D3": (300, 8192),
}
# weight distributions N(mu, sigma) used when generating the hyperplane
WEIGHT_DISTRIBUTIONS = ((0.0, 1.0), (1.0, 1.5), (2.0, 2.0))


def preset(name, seed=0, mu=0.0, sigma=1.0):
    key = name.upper().rstrip("'")
    if key not in PRESETS:
        raise InvalidArgumentError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    n, d = PRESETS[key]
    return SyntheticSpec(n, d, mu, sigma, seed)


def _rng(*key):
    return np.random.default_rng(np.random.SeedSequence([int(k) & 0xFFFFFFFF for k in key]))


def _unit_hyperplane(spec, rng):
    w = rng.normal(spec.mu, spec.sigma, size=spec.d)
    return w / np.linalg.norm(w)


def generate_synthetic(spec):
    """Linearly separable data: X ~ N(0,1), y = sign(X w_hat) with sign(0) = +1."""
    rng = _rng(spec.seed, 0)
    w_hat = _unit_hyperplane(spec, rng)
    X = rng.standard_normal((spec.n, spec.d))
    y = np.where(X @ w_hat >= 0, 1.0, -1.0)
    return X, y


def generate_regression(spec, tube_epsilon=0.1, noise=0.5):
    """Targets y = X w_hat + u with u uniform in +-noise*tube_epsilon (inside the tube)."""
    if not (0.0 <= noise <= 1.0):
        raise InvalidArgumentError("noise is a fraction of the tube width and must lie in [0, 1]")
    rng = _rng(spec.seed, 1)
    w_hat = _unit_hyperplane(spec, rng)
    X = rng.standard_normal((spec.n, spec.d))
    u = rng.uniform(-noise * tube_epsilon, noise * tube_epsilon, size=spec.n)
    return X, X @ w_hat + u


# -- metrics -------------------------------------------------------------------
def classification_error(predictions, truth):
    predictions = np.asarray(predictions, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if predictions.shape != truth.shape:
        raise InvalidArgumentError("predictions and truth differ in length")
    if truth.size == 0:
        return 0.0
    labels = np.where(predictions >= 0, 1.0, -1.0)
    return 100.0 * float(np.mean(labels != truth))


def squared_correlation(predictions, truth):
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    tc = t - t.mean()
    pc = p - p.mean()
    tt = float(tc @ tc)
    if tt == 0.0:
        raise InvalidArgumentError("squared correlation is undefined for zero-variance targets")
    pp = float(pc @ pc)
    if pp == 0.0:
        return 0.0
    return min(1.0, float(pc @ tc) ** 2 / (pp * tt))


def metrics(predictions, truth, task):
    """Percent error for classification; mse and squared correlation for regression."""
    predictions = np.asarray(predictions, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if predictions.shape != truth.shape:
        raise InvalidArgumentError("predictions and truth differ in length")
    if task == CLASSIFY:
        return {"error": classification_error(predictions, truth)}
    if task == REGRESS:
        resid = predictions - truth
        return {
            "mse": float(np.mean(resid * resid)),
            "beta": squared_correlation(predictions, truth),
        }
    raise InvalidArgumentError(f"unknown task {task!r}")


# -- PCA baseline ----------------------------------------------------------------
def pca_features(X, k, rank_tolerance=1e-10):
    """Z = X_c V_k with X_c the column-centered data and V_k its top-k right singular vectors."""
    Xd = to_dense(X)
    Xc = Xd - Xd.mean(axis=0)
    factors = svd_thin(Xc, rank_tolerance)
    if not (1 <= k <= factors.rank):
        raise InvalidArgumentError(
            f"k={k} exceeds the numerical rank {factors.rank} of the centered data"
        )
    return Xc @ factors.V[:, :k]


# -- cross-validation harness ---------------------------------------------------------
@dataclass
class ExperimentConfig:
    kinds: list = field(default_factory=lambda: ["none", "cw", "sign", "srht", "gaussian"])
    r_values: list = field(default_factory=lambda: [256, 512, 1024])
    C: float = C_SYNTHETIC
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    folds: int = 10
    cv_reps: int = 10
    seed_reps: int = 10
    task: str = CLASSIFY
    tube_epsilon: float = 0.1
    seed: int = 0
    cw_mode: str = "countsketch"
    n_jobs: int | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.folds < 2:
            raise InvalidArgumentError("folds must be at least 2")
        if self.cv_reps < 1 or self.seed_reps < 1:
            raise InvalidArgumentError("repetition counts must be positive")
        if any(int(r) < 1 for r in self.r_values):
            raise InvalidArgumentError("r values must be positive")
        if self.task not in (CLASSIFY, REGRESS):
            raise InvalidArgumentError(f"task must be {CLASSIFY!r} or {REGRESS!r}")
        if not self.C > 0 or not self.tol > 0:
            raise InvalidArgumentError("C and tol must be positive")
        for k in self.kinds:
            if str(k).lower() not in ("none", FULL):
                parse_kind(k)

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise InvalidArgumentError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


@dataclass
class ExperimentReport:
    task: str
    rows: list
    records: list

    def cell(self, kind, r=None):
        out = {}
        for row in self.rows:
            if row["kind"] == kind and (r is None or row["r"] == r):
                out[row["metric"]] = (row["mean"], row["std"])
        return out

    def to_csv(self, include_timing=False):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "r", "metric", "mean", "std"])
        for row in self.rows:
            if not include_timing and row["metric"] in TIMING_METRICS:
                continue
            w.writerow([row["kind"], row["r"], row["metric"], repr(row["mean"]), repr(row["std"])])
        return buf.getvalue()

    def timing_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "r", "metric", "mean", "std"])
        for row in self.rows:
            if row["metric"] in TIMING_METRICS:
                w.writerow([row["kind"], row["r"], row["metric"], repr(row["mean"]), repr(row["std"])])
        return buf.getvalue()

    def to_json(self):
        return json.dumps({"task": self.task, "rows": self.rows}, indent=2, sort_keys=True)

    def records_jsonl(self):
        return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in self.records)


def fold_partitions(n, folds, cv_rep, seed):
    """Seeded shuffle followed by contiguous slicing into ``folds`` test sets."""
    perm = _rng(seed, 2, cv_rep).permutation(n)
    return np.array_split(perm, folds)


def sketch_seed(seed, kind, r, rep):
    tags = {"srht": 1, "cw": 2, "sign": 3, "gaussian": 4}
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 3, tags[kind], int(r), int(rep)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _fold_run(K, Xt, y, train, test, config):
    Xtr, Xte = Xt[train], Xt[test]
    Ktr = K[np.ix_(train, train)]
    if config.task == CLASSIFY:
        if np.all(y[train] == y[train][0]):
            return None
        model = train_svc(Xtr, y[train], C=config.C, tol=config.tol,
                          max_iter=config.max_iter, gram_matrix=Ktr)
    else:
        model = train_svr(Xtr, y[train], C=config.C, tube_epsilon=config.tube_epsilon,
                          tol=config.tol, max_iter=config.max_iter, gram_matrix=Ktr)
    p_in = predict(model, Xtr)
    p_out = predict(model, Xte)
    rec = {
        "gamma": model.gamma if model.gamma is not None else 0.0,
        "t_train": model.train_time,
        "converged": model.converged,
    }
    if config.task == CLASSIFY:
        rec["eps_in"] = classification_error(p_in, y[train])
        rec["eps_out"] = classification_error(p_out, y[test])
    else:
        m_in = metrics(p_in, y[train], REGRESS)
        rec["mse"] = m_in["mse"]
        rec["beta"] = m_in["beta"]
        rec["mse_out"] = float(np.mean((p_out - y[test]) ** 2))
    return rec


def _cell_runs(X, y, config, kind, r, rep):
    """All cv_reps x folds runs for one (kind, r, sketch seed)."""
    n = X.shape[0]
    if kind == FULL:
        Xt = to_dense(X) if not sp.issparse(X) else X
        t_rp = 0.0
        sseed = None
    else:
        sseed = sketch_seed(config.seed, kind, r, rep)
        mode = config.cw_mode if kind == "cw" else None
        op = build_sketch(kind, X.shape[1], r, sseed, mode=mode)
        Xt, rep_info = apply_sketch(op, X)
        t_rp = rep_info.t_rp
    K = gram(Xt)
    out = []
    for c in range(config.cv_reps):
        for f, test in enumerate(fold_partitions(n, config.folds, c, config.seed)):
            train = np.setdiff1d(np.arange(n), test, assume_unique=True)
            rec = _fold_run(K, Xt, y, train, test, config)
            base = {"kind": kind, "r": int(r), "seed_rep": int(rep), "cv_rep": c, "fold": f,
                    "sketch_seed": sseed}
            if rec is None:
                base["skipped"] = True
            else:
                base.update(rec)
                base["skipped"] = False
                base["t_rp"] = t_rp
                base["t_run"] = t_rp + rec["t_train"]
            out.append(base)
    return out


def _metric_names(task):
    if task == CLASSIFY:
        return ("eps_in", "eps_out", "gamma", "t_rp", "t_train", "t_run")
    return ("mse", "beta", "mse_out", "gamma", "t_rp", "t_train", "t_run")


def aggregate(records, task):
    """Mean and (population) standard deviation per (kind, r, metric), in first-seen cell order."""
    order = []
    groups = {}
    for rec in records:
        key = (rec["kind"], rec["r"])
        if key not in groups:
            groups[key] = []
            order.append(key)
        if not rec.get("skipped"):
            groups[key].append(rec)
    rows = []
    for kind, r in order:
        recs = groups[(kind, r)]
        for name in _metric_names(task):
            vals = np.array([rec[name] for rec in recs], dtype=np.float64)
            mean = float(vals.mean()) if vals.size else float("nan")
            std = float(vals.std()) if vals.size else float("nan")
            rows.append({"kind": kind, "r": r, "metric": name, "mean": mean, "std": std,
                         "runs": int(vals.size)})
    return rows


def _n_jobs(config):
    if config.n_jobs is not None:
        return max(1, int(config.n_jobs))
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def run_experiment(X, y, config):
    """Repeated k-fold cross-validation for every (kind, r) cell plus the full-data row.

    Each sketch is applied once to the whole data set (the operator is
    oblivious, so this equals sketching train and test folds separately) and
    then the cv_reps x folds splits are trained on the projected Gram matrix.
    The full-data cell runs cv_reps x folds times; sketched cells run
    seed_reps x cv_reps x folds times.  Records are assembled in a fixed order
    regardless of ``n_jobs``.
    """
    config.validate()
    y = np.asarray(y, dtype=np.float64).ravel()
    n, d = X.shape
    if y.shape[0] != n:
        raise InvalidArgumentError("X and y disagree on the number of samples")
    if n < config.folds:
        raise InvalidArgumentError(f"need at least {config.folds} samples, got {n}")
    cells = []
    kinds = [str(k).lower() for k in config.kinds]
    if any(k in ("none", FULL) for k in kinds):
        cells.append((FULL, d, 0))
    for k in kinds:
        if k in ("none", FULL):
            continue
        kind = parse_kind(k).value
        for r in config.r_values:
            for rep in range(config.seed_reps):
                cells.append((kind, int(r), rep))
    jobs = _n_jobs(config)
    if jobs == 1:
        chunks = [_cell_runs(X, y, config, *cell) for cell in cells]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(lambda cell: _cell_runs(X, y, config, *cell), cells))
    records = [rec for chunk in chunks for rec in chunk]
    return ExperimentReport(config.task, aggregate(records, config.task), records)
