"""Detection metrics, Monte Carlo replication, timing, and the exact kernel-PCA baseline."""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .config import MAP, TEST, TRAIN, RunConfig, derive_seed
from .datasets import FAULTS, gen_numerical_example, zscore_apply, zscore_fit
from .dynamic import (
    LaggedMonitor,
    MovingWindowState,
    TwoDModel,
    TwoDMonitor,
    dynamic_scores,
    fit_2d,
    fit_dynamic,
    mw_fit,
)
from .exceptions import DataError, ParameterError
from .features import resolve_width
from .pca import Detector, average_eigenvalue_cutoff, fit_static, kde_threshold, symmetric_eig

METRICS = ("fdr", "far", "fit_seconds", "online_seconds")


def fdr_far(alarms, labels, warming_count=0):
    """Fault detection rate and false alarm rate.

    The first ``warming_count`` samples are ignored. A rate whose denominator
    is empty is returned as ``None``.
    """
    alarms = np.asarray(alarms, dtype=bool)
    labels = np.asarray(labels, dtype=bool)
    if alarms.shape != labels.shape or alarms.ndim != 1:
        raise DataError(f"{alarms.size} alarms for {labels.size} labels")
    if not 0 <= warming_count <= alarms.size:
        raise ParameterError(f"warming_count must be in [0, {alarms.size}], got {warming_count}")
    alarms = alarms[warming_count:]
    labels = labels[warming_count:]
    n_fault = int(labels.sum())
    n_normal = labels.size - n_fault
    fdr = float(np.count_nonzero(alarms & labels)) / n_fault if n_fault else None
    far = float(np.count_nonzero(alarms & ~labels)) / n_normal if n_normal else None
    return fdr, far


@dataclass
class MonitoringReport:
    """Per-sample outcome of one monitored stream plus aggregate rates."""

    method: str
    params: dict
    seed: int | None
    q: np.ndarray
    threshold: np.ndarray
    alarm: np.ndarray
    warming: np.ndarray
    labels: np.ndarray | None = None
    updated: np.ndarray | None = None
    fit_seconds: float | None = None
    online_seconds: float | None = None
    fdr: float | None = field(init=False, default=None)
    far: float | None = field(init=False, default=None)

    def __post_init__(self):
        if self.labels is not None:
            n_warm = int(np.count_nonzero(self.warming))
            # warming samples always form a prefix of the stream
            self.fdr, self.far = fdr_far(self.alarm, self.labels, n_warm)

    @property
    def n(self):
        return len(self.q)

    @property
    def update_count(self):
        return None if self.updated is None else int(np.count_nonzero(self.updated))

    def metric(self, name):
        return getattr(self, name)

    def rows(self):
        for k in range(self.n):
            row = {"index": k + 1, "q": self.q[k], "threshold": self.threshold[k],
                   "alarm": int(self.alarm[k]), "warming": int(self.warming[k])}
            if self.labels is not None:
                row["label"] = int(self.labels[k])
            if self.updated is not None:
                row["updated"] = int(self.updated[k])
            yield row


class KernelPCADetector:
    """Exact kernel PCA with a Q statistic, used only as a baseline.

    The Gram matrix of the z-scored training data is double-centred and fully
    eigendecomposed. Q of a sample is the squared norm of its centred
    feature-space image minus its squared projection on the retained
    components.
    """

    def __init__(self, X, c, alpha, n_components=None, cap=3000):
        X = np.asarray(X, dtype=float)
        n = X.shape[0]
        if n > cap:
            raise ParameterError(f"exact kernel PCA is capped at n={cap}, got {n}")
        self.data_mean, self.data_std = zscore_fit(X)
        self.Xn = zscore_apply(X, self.data_mean, self.data_std)
        self.c = resolve_width(c, self.Xn)
        self.alpha = float(alpha)
        K = np.exp(-cdist(self.Xn, self.Xn, "sqeuclidean") / self.c)
        self.k_colmean = K.mean(axis=0)
        self.k_mean = float(self.k_colmean.mean())
        Kc = K - self.k_colmean[None, :] - self.k_colmean[:, None] + self.k_mean
        lam, vecs = symmetric_eig(0.5 * (Kc + Kc.T), "centred kernel matrix")
        positive = lam[lam > 0]
        a = average_eigenvalue_cutoff(positive) if n_components is None else int(n_components)
        if not 1 <= a <= positive.size:
            raise ParameterError(f"n_components must be in [1, {positive.size}], got {a}")
        self.eigenvalues = lam
        self.coef = vecs[:, :a] / np.sqrt(lam[:a])
        self.train_q = self._q_from_kernel(K)
        self.q_ucl = kde_threshold(self.train_q, alpha)
        self.lag = 0

    @property
    def n_components(self):
        return self.coef.shape[1]

    def _q_from_kernel(self, Kt):
        row_mean = Kt.mean(axis=1, keepdims=True)
        Kt_c = Kt - row_mean - self.k_colmean[None, :] + self.k_mean
        T = Kt_c @ self.coef
        self_sim = 1.0 - 2.0 * row_mean[:, 0] + self.k_mean
        return np.maximum(self_sim - np.einsum("ij,ij->i", T, T), 0.0)

    def score(self, X):
        Xn = zscore_apply(np.atleast_2d(X), self.data_mean, self.data_std)
        return self._q_from_kernel(np.exp(-cdist(Xn, self.Xn, "sqeuclidean") / self.c))

    def score_online(self, x):
        q = float(self.score(np.asarray(x, dtype=float)[None])[0])
        return q, q > self.q_ucl


def exact_kpca_baseline(X, c, alpha, n_components=None, cap=3000):
    return KernelPCADetector(X, c, alpha, n_components, cap)


def fit_model(config, X, seed=None):
    """Fit the monitor named by ``config.method`` on raw training rows ``X``.

    ``seed`` seeds the feature map; it defaults to ``config.seed``.
    """
    seed = config.seed if seed is None else seed
    cfg = config
    common = dict(m=cfg.m, p=cfg.p, alpha=cfg.alpha, seed=seed, c=cfg.c,
                  n_components=cfg.n_components)
    if cfg.method == "static":
        return fit_static(X, **common)
    if cfg.method == "rpca-fourier":
        return fit_static(X, feature="fourier", **common)
    if cfg.method == "dynamic":
        return fit_dynamic(X, l=cfg.lag, **common)
    if cfg.method == "2d":
        return fit_2d(X, l=cfg.lag, **common)
    if cfg.method == "moving-window":
        if cfg.w > np.asarray(X).shape[0]:
            raise ParameterError(f"invalid w={cfg.w}: window larger than the training set")
        return mw_fit(X, w=cfg.w, delta_level=cfg.delta_level, screening=cfg.screening, **common)
    if cfg.method == "kpca-baseline":
        return exact_kpca_baseline(X, cfg.c, cfg.alpha, cfg.n_components, cfg.kpca_cap)
    raise ParameterError(f"unknown method {cfg.method!r}")


def make_monitor(model):
    """Stateful per-sample monitor exposing ``step(x) -> Verdict``."""
    if isinstance(model, MovingWindowState):
        return model
    if isinstance(model, TwoDModel):
        return TwoDMonitor(model)
    if isinstance(model, (Detector, KernelPCADetector)):
        return LaggedMonitor(lambda y: model.score_online(y)[0], model.lag, model.q_ucl)
    raise ParameterError(f"cannot monitor an object of type {type(model).__name__}")


def model_lag(model):
    return 0 if isinstance(model, MovingWindowState) else model.lag


def input_dim(model):
    """Number of variables in one raw sample of the monitored stream."""
    if isinstance(model, MovingWindowState):
        return model.detector.D
    if isinstance(model, KernelPCADetector):
        return model.Xn.shape[1]
    if isinstance(model, TwoDModel):
        return model.feature_map.D
    return model.feature_map.D // (model.lag + 1)


def monitor_stream(model, X, labels=None, method=None, params=None, seed=None):
    """Run a fitted model over the rows of ``X`` and build a report.

    Fixed models are scored in one batch, which gives the same values as the
    per-sample monitor; the moving window is stepped sample by sample.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    updated = None
    t0 = time.perf_counter()
    if isinstance(model, MovingWindowState):
        q = np.empty(n)
        thr = np.empty(n)
        alarm = np.zeros(n, dtype=bool)
        updated = np.zeros(n, dtype=bool)
        for k in range(n):
            v = model.step(X[k])
            q[k], thr[k], alarm[k], updated[k] = v.q, v.threshold, v.alarm, v.updated
    else:
        if isinstance(model, Detector) and model.lag:
            q = dynamic_scores(model, X)
        else:
            q = model.score(X)
        thr = np.full(n, model.q_ucl)
        alarm = q > model.q_ucl
    online = (time.perf_counter() - t0) / max(n, 1)
    warming = np.zeros(n, dtype=bool)
    warming[:min(model_lag(model), n)] = True
    alarm &= ~warming
    return MonitoringReport(method or type(model).__name__, dict(params or {}), seed, q, thr,
                            alarm, warming, None if labels is None else np.asarray(labels, bool),
                            updated, None, online)


def numerical_streams(config, seed):
    """Training samples and a labelled test stream for one replicate."""
    train = gen_numerical_example(config.n_train, derive_seed(seed, TRAIN))
    test = gen_numerical_example(config.n_test, derive_seed(seed, TEST))
    if config.fault is not None:
        test = FAULTS[config.fault](test, start=config.fault_start)
    return train, test


def run_replicate(config, seed):
    """Generate, fit and monitor one replicate of the numerical example."""
    train, test = numerical_streams(config, seed)
    t0 = time.perf_counter()
    model = fit_model(config, train.X, seed=derive_seed(seed, MAP))
    fit_seconds = time.perf_counter() - t0
    report = monitor_stream(model, test.X, test.labels, config.method, config.to_dict(), seed)
    report.fit_seconds = fit_seconds
    return report


@dataclass
class Summary:
    """Mean, standard deviation and standard error of each metric over replicates."""

    method: str
    replicates: int
    mean: dict
    std: dict
    sem: dict
    reports: list = field(repr=False, default_factory=list)

    def rows(self):
        for name in self.mean:
            yield {"method": self.method, "metric": name, "replicates": self.replicates,
                   "mean": self.mean[name], "std": self.std[name], "sem": self.sem[name]}


def summarize(reports, method=None):
    reports = sorted(reports, key=lambda r: (r.seed is None, r.seed))
    mean, std, sem = {}, {}, {}
    for name in METRICS:
        values = [r.metric(name) for r in reports if r.metric(name) is not None]
        if not values:
            mean[name] = std[name] = sem[name] = None
            continue
        values = np.array(values, dtype=float)
        mean[name] = float(values.mean())
        std[name] = float(values.std(ddof=1)) if values.size > 1 else 0.0
        sem[name] = std[name] / np.sqrt(values.size)
    return Summary(method or (reports[0].method if reports else ""), len(reports), mean, std,
                   sem, reports)


def monte_carlo(config, replicates=50, seed_base=None):
    """Run ``replicates`` independent replicates with seeds ``seed_base + i``."""
    if int(replicates) != replicates or replicates < 1:
        raise ParameterError(f"replicates must be a positive integer, got {replicates!r}")
    seed_base = config.seed if seed_base is None else seed_base
    reports = []
    for i in range(replicates):
        try:
            reports.append(run_replicate(config, seed_base + i))
        except Exception as exc:
            raise type(exc)(f"replicate {i} (seed {seed_base + i}): {exc}") from exc
    return summarize(reports, config.method)


def _median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), out


def bench_modeling(methods, X_train, X_test, config=None, repeats=5, n_online=200):
    """Modeling time and mean per-sample online time, each the median of ``repeats`` runs.

    Timing covers fitting and per-sample scoring only, never data generation.
    """
    config = config or RunConfig()
    X_test = np.asarray(X_test, dtype=float)[:n_online]
    rows = []
    for method in methods:
        cfg = config.replace(method=method)
        fit_t, model = _median_time(lambda: fit_model(cfg, X_train), repeats)

        def online():
            monitor = make_monitor(fit_model(cfg, X_train)) \
                if isinstance(model, MovingWindowState) else make_monitor(model)
            t0 = time.perf_counter()
            for x in X_test:
                monitor.step(x)
            return (time.perf_counter() - t0) / len(X_test)

        if isinstance(model, (Detector, KernelPCADetector)) and model.lag == 0:
            def online():
                score = model.score_online
                t0 = time.perf_counter()
                for x in X_test:
                    score(x)
                return (time.perf_counter() - t0) / len(X_test)
            online()  # compile and warm caches before timing

        per_sample = statistics.median(online() for _ in range(repeats))
        rows.append({"method": method, "n_train": int(np.shape(X_train)[0]),
                     "modeling_seconds": fit_t, "online_seconds": per_sample})
    return rows


def write_rows_csv(rows, path, columns=None):
    rows = list(rows)
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})
    return path


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return v


def format_summary(summaries):
    """Plain-text table of mean (std) per metric."""
    lines = [f"{'method':<16}{'reps':>6}{'FDR':>18}{'FAR':>18}{'fit s':>12}{'online s':>12}"]
    for s in summaries:
        def cell(name, width, prec):
            if s.mean[name] is None:
                return f"{'-':>{width}}"
            return f"{s.mean[name]:>{width - 9}.{prec}f} ({s.std[name]:.4f})"
        lines.append(f"{s.method:<16}{s.replicates:>6}{cell('fdr', 18, 4)}{cell('far', 18, 4)}"
                     f"{s.mean['fit_seconds']:>12.4g}{s.mean['online_seconds']:>12.3g}")
    return "\n".join(lines)
