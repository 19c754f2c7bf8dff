"""Dynamic, two-dimensional and moving-window monitors.

* Dynamic: the static monitor applied to time-lagged vectors
  ``y_t = (x_{t-l}, ..., x_t)``.
* Two-dimensional: features of the last ``l + 1`` samples are stacked into an
  ``(l + 1, m)`` matrix; an image-covariance PCA over these matrices gives a
  trace-form Q statistic.
* Moving window: a static monitor fitted on ``w`` screened samples and refitted
  whenever a normal sample carries new information.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .datasets import zscore_apply, zscore_fit
from .exceptions import DataError, ParameterError
from .features import new_bernoulli_map, resolve_width
from .pca import (
    _make_map,
    average_eigenvalue_cutoff,
    fit_detector,
    kde_threshold,
    symmetric_eig,
)


class Verdict(NamedTuple):
    """Outcome of monitoring one sample."""

    q: float
    threshold: float
    alarm: bool
    warming: bool = False
    updated: bool = False


def lag_embed(X, l):
    """Time-lagged vectors of the rows of ``X``.

    Row ``k`` of the result is ``(x_k, x_{k+1}, ..., x_{k+l})`` flattened, oldest
    sample first, so the output has shape ``(n - l, D * (l + 1))``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DataError(f"X must be 2-D, got shape {X.shape}")
    n, D = X.shape
    if int(l) != l or l < 0:
        raise ParameterError(f"lag must be a non-negative integer, got {l!r}")
    if n <= l:
        raise DataError(f"{n} samples are too few for lag {l}")
    return sliding_window_view(X, (l + 1, D))[:, 0].reshape(n - l, D * (l + 1)).copy()


class LaggedMonitor:
    """Online wrapper that buffers the last ``lag`` samples.

    ``score_one`` maps a lagged vector to Q. The first ``lag`` samples of a
    stream only fill the buffer and are reported as warming.
    """

    def __init__(self, score_one, lag, threshold):
        self.score_one = score_one
        self.lag = lag
        self.threshold = threshold
        self._buffer = deque(maxlen=lag + 1)

    def step(self, x):
        self._buffer.append(np.asarray(x, dtype=float))
        if len(self._buffer) <= self.lag:
            return Verdict(float("nan"), self.threshold, False, warming=True)
        y = self._buffer[0] if self.lag == 0 else np.concatenate(self._buffer)
        q = self.score_one(y)
        return Verdict(q, self.threshold, q > self.threshold)


def fit_dynamic(X, l=2, m=150, p=0.05, alpha=0.99, seed=0, c="scaled-dimension",
                feature="bernoulli", n_components=None):
    """Static monitor on the lag-``l`` embedding of ``X``.

    With ``c="scaled-dimension"`` the width follows the lagged dimension
    ``D * (l + 1)``.
    """
    if X is not None and np.asarray(X).shape[0] <= l + 1:
        raise DataError(f"need more than {l + 1} samples for lag {l}")
    Y = lag_embed(X, l)
    mean, std = zscore_fit(Y)
    width = resolve_width(c, zscore_apply(Y, mean, std), seed=seed)
    fmap = _make_map(feature, Y.shape[1], m, p, width, seed)
    return fit_detector(Y, fmap, alpha, n_components, lag=l)


def detector_monitor(detector):
    """Online monitor for a static or dynamic :class:`~rbpca.pca.Detector`."""
    return LaggedMonitor(lambda y: detector.score_online(y)[0], detector.lag, detector.q_ucl)


def dynamic_scores(detector, X):
    """Q per row of a raw stream; the first ``lag`` entries are NaN (warming)."""
    X = np.asarray(X, dtype=float)
    q = np.full(X.shape[0], np.nan)
    if X.shape[0] > detector.lag:
        q[detector.lag:] = detector.score(lag_embed(X, detector.lag))
    return q


def lagged_feature_matrices(Z, l):
    """Stack ``l + 1`` consecutive feature rows: shape ``(n - l, l + 1, m)``."""
    Z = np.asarray(Z, dtype=float)
    n, m = Z.shape
    if n <= l:
        raise DataError(f"{n} samples are too few for lag {l}")
    return sliding_window_view(Z, (l + 1, m))[:, 0]


@dataclass(frozen=True, eq=False)
class TwoDModel:
    """Image-covariance PCA over time-lagged feature matrices.

    Attributes
    ----------
    A_mean : ndarray of shape (l + 1, m)
        Elementwise mean of the training lagged matrices.
    G : ndarray of shape (m, m)
        Average of ``Abar^T Abar`` over the training matrices.
    eigenvalues : ndarray of shape (m,)
    P : ndarray of shape (m, a)
    """

    feature_map: object
    data_mean: np.ndarray
    data_std: np.ndarray
    lag: int
    A_mean: np.ndarray
    G: np.ndarray
    eigenvalues: np.ndarray
    P: np.ndarray
    q_ucl: float
    alpha: float
    train_q: np.ndarray

    @property
    def n_components(self):
        return self.P.shape[1]

    def features(self, X):
        return self.feature_map.embed_batch(zscore_apply(X, self.data_mean, self.data_std))

    def score_matrices(self, A):
        """Q2D for a stack of raw lagged matrices of shape (k, l + 1, m)."""
        Abar = np.asarray(A, dtype=float) - self.A_mean
        C = Abar @ self.P
        q = np.einsum("kij,kij->k", Abar, Abar) - np.einsum("kij,kij->k", C, C)
        return np.maximum(q, 0.0)

    def score(self, X):
        """Q2D per row of a raw stream; the first ``lag`` entries are NaN."""
        X = np.asarray(X, dtype=float)
        q = np.full(X.shape[0], np.nan)
        if X.shape[0] > self.lag:
            q[self.lag:] = self.score_matrices(lagged_feature_matrices(self.features(X), self.lag))
        return q


def q2d_statistic(model, A_t):
    """``tr(Abar (I - P P^T) Abar^T)`` for one raw lagged matrix, in Frobenius form."""
    A_t = np.asarray(A_t, dtype=float)
    if A_t.shape != model.A_mean.shape:
        raise DataError(f"expected a matrix of shape {model.A_mean.shape}, got {A_t.shape}")
    return float(model.score_matrices(A_t[None])[0])


def fit_2d(X, l=10, m=150, p=0.05, alpha=0.99, seed=0, c="scaled-dimension",
           feature="bernoulli", n_components=None):
    """Fit the two-dimensional monitor on normal-operation samples."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] <= l + 1:
        raise DataError(f"need more than {l + 1} samples for lag {l}")
    mean, std = zscore_fit(X)
    Xn = zscore_apply(X, mean, std)
    width = resolve_width(c, Xn, seed=seed)
    fmap = _make_map(feature, X.shape[1], m, p, width, seed)
    A = lagged_feature_matrices(fmap.embed_batch(Xn), l)
    A_mean = A.mean(axis=0)
    Abar = A - A_mean
    G = np.einsum("kij,kil->jl", Abar, Abar) / A.shape[0]
    G = 0.5 * (G + G.T)
    lam, vecs = symmetric_eig(G, "lagged-feature covariance")
    a = average_eigenvalue_cutoff(lam) if n_components is None else int(n_components)
    if not 1 <= a <= fmap.m:
        raise ParameterError(f"n_components must be in [1, {fmap.m}], got {a}")
    P = np.ascontiguousarray(vecs[:, :a])
    C = Abar @ P
    q = np.maximum(np.einsum("kij,kij->k", Abar, Abar) - np.einsum("kij,kij->k", C, C), 0.0)
    return TwoDModel(fmap, mean, std, int(l), A_mean, G, lam, P,
                     kde_threshold(q, alpha), float(alpha), q)


class TwoDMonitor:
    """Online 2D monitor keeping the last ``l + 1`` feature vectors."""

    def __init__(self, model):
        self.model = model
        self.threshold = model.q_ucl
        self._buffer = deque(maxlen=model.lag + 1)

    def step(self, x):
        x = np.asarray(x, dtype=float)
        self._buffer.append(self.model.features(x[None])[0])
        if len(self._buffer) <= self.model.lag:
            return Verdict(float("nan"), self.threshold, False, warming=True)
        q = q2d_statistic(self.model, np.stack(self._buffer))
        return Verdict(q, self.threshold, q > self.threshold)


def _unit_rows(X):
    X = np.asarray(X, dtype=float)
    norms = np.linalg.norm(X, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DataError(f"sample {int(zero[0])} has zero norm; cosine similarity undefined")
    return X / norms[:, None]


def cosine_similarity(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(x @ y / (np.linalg.norm(x) * np.linalg.norm(y)))


def screen_dissimilar(X, w):
    """Greedy farthest-point selection of ``w`` rows under cosine similarity.

    Starts from the least similar pair, then repeatedly adds the row whose
    largest cosine to the selected set is smallest. Ties go to the lowest
    index. Indices are returned in time order.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if int(w) != w or not 1 <= w <= n:
        raise ParameterError(f"window width must be in [1, {n}], got {w!r}")
    U = _unit_rows(X)
    if w == n:
        return np.arange(n)
    if n == 1:
        return np.array([0])
    C = U @ U.T
    iu = np.triu_indices(n, 1)
    k = int(np.argmin(C[iu]))
    i, j = int(iu[0][k]), int(iu[1][k])
    if w == 1:
        return np.array([i])
    selected = [i, j]
    worst = np.maximum(C[i], C[j])
    worst[selected] = np.inf
    while len(selected) < w:
        k = int(np.argmin(worst))
        selected.append(k)
        worst = np.maximum(worst, C[k])
        worst[selected] = np.inf
    return np.sort(np.array(selected))


def screen_successive(X, w):
    """Keep the ``w`` rows least similar to their immediate predecessor.

    The first row has no predecessor and is always kept. Ties go to the
    lowest index; indices are returned in time order.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if int(w) != w or not 1 <= w <= n:
        raise ParameterError(f"window width must be in [1, {n}], got {w!r}")
    U = _unit_rows(X)
    sim = np.empty(n)
    sim[0] = -np.inf
    sim[1:] = np.einsum("ij,ij->i", U[1:], U[:-1])
    return np.sort(np.argsort(sim, kind="stable")[:w])


SCREENING = {"successive": screen_successive, "greedy": screen_dissimilar}


class MovingWindowState:
    """Adaptive monitor refitted on a sliding set of ``w`` samples.

    A sample that raises no alarm but fails the novelty test
    ``| ||Z_s z|| - ||z|| | < delta`` replaces the oldest window sample and
    triggers a refit (normalization, centring, eigenvectors and limit). The
    feature map itself is never redrawn. Not safe for concurrent use.
    """

    def __init__(self, window, feature_map, alpha, delta_level=0.8, delta=None,
                 n_components=None):
        self.window = np.array(window, dtype=float)
        self.w = self.window.shape[0]
        self.feature_map = feature_map
        self.alpha = float(alpha)
        self.delta_level = float(delta_level)
        self.n_components = n_components
        self.update_count = 0
        self.detector = fit_detector(self.window, feature_map, alpha, n_components)
        if delta is None:
            if not 0.0 < delta_level < 1.0:
                raise ParameterError(f"delta_level must lie in (0, 1), got {delta_level!r}")
            delta = float(np.quantile(self.novelty(self.detector.train_features, raw=False),
                                      delta_level))
        self.delta = float(delta)

    @property
    def threshold(self):
        return self.detector.q_ucl

    def novelty(self, X, raw=True):
        """``| ||Z_s z|| - ||z|| |`` per row; ``raw=False`` means rows are features."""
        det = self.detector
        Z = det.feature_map.embed_batch(zscore_apply(X, det.data_mean, det.data_std)) if raw \
            else np.asarray(X, dtype=float)
        proj = Z @ det.train_features.T
        return np.abs(np.linalg.norm(proj, axis=1) - np.linalg.norm(Z, axis=1))

    def step(self, x):
        x = np.asarray(x, dtype=float)
        q, alarm = self.detector.score_online(x)
        threshold = self.detector.q_ucl
        updated = False
        if not alarm and not self.novelty(x[None])[0] < self.delta:
            self.window = np.vstack([self.window[1:], x])
            self.detector = fit_detector(self.window, self.feature_map, self.alpha,
                                         self.n_components)
            self.update_count += 1
            updated = True
        return Verdict(q, threshold, bool(alarm), updated=updated)


def mw_fit(X, w=500, m=150, p=0.05, alpha=0.99, delta_level=0.8, seed=0,
           c="scaled-dimension", screening="successive", delta=None, n_components=None):
    """Screen ``w`` samples from ``X`` and fit the moving-window monitor.

    Screening runs on the z-scored data. ``screening`` is ``"successive"``
    (least similar to the preceding sample) or ``"greedy"``
    (:func:`screen_dissimilar`). ``delta`` overrides the quantile rule.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DataError(f"X must be 2-D, got shape {X.shape}")
    if not 1 <= w <= X.shape[0]:
        raise ParameterError(f"window width must be in [1, {X.shape[0]}], got {w!r}")
    if screening not in SCREENING:
        raise ParameterError(f"unknown screening rule {screening!r}")
    mean, std = zscore_fit(X)
    Xn = zscore_apply(X, mean, std)
    idx = SCREENING[screening](Xn, w)
    width = resolve_width(c, Xn, seed=seed)
    fmap = new_bernoulli_map(X.shape[1], m, p, width, seed)
    return MovingWindowState(X[idx], fmap, alpha, delta_level, delta, n_components)


def mw_step(state, x_new):
    return state.step(x_new)
