"""PCA in a random feature space and the static Q-statistic monitor.

The modelling stage z-scores the normal-operation data, embeds it with a
random feature map, centres the features, keeps the principal directions
whose eigenvalue exceeds the average eigenvalue, and places the control
limit at a kernel-density quantile of the training Q values. The online
stage repeats normalization, embedding and centring with the stored
parameters and compares Q with the limit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from . import _kernels
from .datasets import zscore_apply, zscore_fit
from .exceptions import DataError, NumericalError, ParameterError
from .features import (
    BernoulliFeatureMap,
    new_bernoulli_map,
    new_fourier_map,
    resolve_width,
)

EIG_CLAMP = 1e-10
KDE_MIN_SAMPLES = 30


def center(Z):
    """Subtract the column means of ``Z``; returns ``(Zbar, mean)``."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[0] < 2:
        raise DataError(f"centering needs at least two rows, got shape {Z.shape}")
    mean = Z.mean(axis=0)
    return Z - mean, mean


@dataclass(frozen=True, eq=False)
class PcaModel:
    """Eigensystem of the feature covariance and the retained directions.

    Attributes
    ----------
    feature_mean : ndarray of shape (m,)
        Training mean of the uncentred features.
    eigenvalues : ndarray of shape (m,)
        All eigenvalues of the covariance, descending, clamped at zero.
    components : ndarray of shape (m, a)
        Retained orthonormal eigenvectors, largest-magnitude entry positive.
    """

    feature_mean: np.ndarray
    eigenvalues: np.ndarray
    components: np.ndarray

    def __post_init__(self):
        V = np.ascontiguousarray(self.components, dtype=float)
        V.setflags(write=False)
        object.__setattr__(self, "components", V)

    @property
    def n_components(self):
        return self.components.shape[1]

    @property
    def m(self):
        return self.components.shape[0]


def average_eigenvalue_cutoff(eigenvalues):
    """Number of eigenvalues strictly above their mean, at least one."""
    lam = np.asarray(eigenvalues)
    return max(1, int(np.count_nonzero(lam > lam.mean())))


def symmetric_eig(S, what="covariance"):
    """Descending eigenpairs of a symmetric PSD matrix with sign normalization."""
    try:
        lam, vecs = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition of the {what} failed: {exc}") from exc
    lam = lam[::-1].copy()
    vecs = vecs[:, ::-1].copy()
    top = max(lam[0], 0.0)
    if lam[-1] < -EIG_CLAMP * max(top, 1e-300):
        raise NumericalError(
            f"{what} has eigenvalue {lam[-1]:.3e} below -{EIG_CLAMP:g} * {top:.3e}; "
            "matrix is not positive semidefinite")
    lam[lam < 0] = 0.0
    pivot = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivot, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return lam, vecs * signs


def fit_pca(Zbar, feature_mean=None, n_components=None):
    """PCA of a centred (n, m) feature matrix.

    ``n_components`` overrides the average-eigenvalue cut-off.
    """
    Zbar = np.asarray(Zbar, dtype=float)
    n, m = Zbar.shape
    if n < 2:
        raise DataError("PCA needs at least two samples")
    R = Zbar.T @ Zbar / (n - 1)
    R = 0.5 * (R + R.T)
    lam, vecs = symmetric_eig(R)
    a = average_eigenvalue_cutoff(lam) if n_components is None else int(n_components)
    if not 1 <= a <= m:
        raise ParameterError(f"n_components must be in [1, {m}], got {a}")
    if feature_mean is None:
        feature_mean = np.zeros(m)
    return PcaModel(np.asarray(feature_mean, dtype=float), lam, vecs[:, :a])


def q_statistic(model, zbar):
    """Squared residual of one centred feature vector outside the PC subspace."""
    zbar = np.asarray(zbar, dtype=float)
    if zbar.shape != (model.m,):
        raise DataError(f"expected a feature vector of length {model.m}, got {zbar.shape}")
    t = model.components.T @ zbar
    return max(float(zbar @ zbar - t @ t), 0.0)


def q_statistics(model, Zbar):
    """Row-wise :func:`q_statistic` for an (n, m) centred feature matrix."""
    Zbar = np.asarray(Zbar, dtype=float)
    T = Zbar @ model.components
    q = np.einsum("ij,ij->i", Zbar, Zbar) - np.einsum("ij,ij->i", T, T)
    return np.maximum(q, 0.0)


def silverman_bandwidth(values):
    values = np.asarray(values, dtype=float)
    n = len(values)
    std = values.std(ddof=1)
    iqr = np.subtract(*np.percentile(values, [75, 25]))
    spread = min(std, iqr / 1.34) if iqr > 0 else std
    return 0.9 * spread * n ** (-0.2)


def kde_threshold(values, alpha):
    """Upper control limit from a Gaussian kernel density estimate.

    Returns ``q`` with ``F(q) = alpha`` where ``F`` is the KDE distribution
    function (Silverman bandwidth); ``alpha`` is the confidence level, so
    0.99 leaves a 1% upper tail.
    """
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha!r}")
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0 or not np.all(np.isfinite(values)):
        raise DataError("control limit needs finite values")
    if values.size < KDE_MIN_SAMPLES:
        warnings.warn(f"only {values.size} values; using the empirical quantile instead of a KDE",
                      RuntimeWarning, stacklevel=2)
        return float(np.quantile(values, alpha))
    h = silverman_bandwidth(values)
    if not h > 0:
        v = float(values[0])
        # zero spread: inflate by a bandwidth relative to the value itself
        return v + 0.9 * max(abs(v), 1.0) * values.size ** (-0.2) * 1e-6

    def excess(q):
        return special.ndtr((q - values) / h).mean() - alpha

    lo, hi = values.min(), values.max() + 3.0 * h
    while excess(lo) > 0:
        lo -= 3.0 * h
    while excess(hi) < 0:
        hi += 3.0 * h
    return float(optimize.bisect(excess, lo, hi, xtol=1e-12 * max(abs(hi), 1.0), rtol=1e-6))


def _make_map(feature, D, m, p, c, seed):
    if feature == "bernoulli":
        return new_bernoulli_map(D, m, p, c, seed)
    if feature == "fourier":
        return new_fourier_map(D, m, c, seed)
    raise ParameterError(f"unknown feature type {feature!r}")


@dataclass(frozen=True, eq=False)
class Detector:
    """A fitted Q-statistic monitor.

    Inputs to :meth:`score` are vectors of the map's input dimension; for the
    dynamic monitor (``lag > 0``) these are time-lagged vectors.
    """

    feature_map: object
    pca: PcaModel
    data_mean: np.ndarray
    data_std: np.ndarray
    q_ucl: float
    alpha: float
    train_features: np.ndarray
    train_q: np.ndarray
    lag: int = 0
    _fast: tuple | None = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if not self.q_ucl > 0:
            raise NumericalError(f"control limit must be positive, got {self.q_ucl!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        fmap = self.feature_map
        if isinstance(fmap, BernoulliFeatureMap):
            indptr, indices, groups, phases, grouped = fmap._tables
            fast = _kernels.pack_online(self.data_mean, self.data_std, indptr, indices, fmap.p,
                                        fmap.scale, groups, phases, grouped,
                                        self.pca.feature_mean, self.pca.components)
            object.__setattr__(self, "_fast", fast)

    @property
    def D(self):
        return self.feature_map.D

    @property
    def n_components(self):
        return self.pca.n_components

    def features(self, X):
        """Centred features of raw samples (rows of ``X``)."""
        Xn = zscore_apply(X, self.data_mean, self.data_std)
        return self.feature_map.embed_batch(Xn) - self.pca.feature_mean

    def score(self, X):
        """Q values for the rows of ``X``."""
        return q_statistics(self.pca, self.features(X))

    def score_online(self, x):
        """Q and alarm flag for a single raw sample."""
        if self._fast is not None:
            x = np.asarray(x, dtype=float)
            if x.shape != (self.D,):
                raise DataError(f"expected a sample of length {self.D}, got shape {x.shape}")
            q = _kernels.q_packed(x, *self._fast)
            if q < 0.0:
                raise DataError("sample contains a non-finite value")
        else:
            q = float(self.score(x)[0])
        return q, q > self.q_ucl


def score_online(detector, x):
    return detector.score_online(x)


def fit_detector(X, feature_map, alpha, n_components=None, lag=0):
    """Fit a monitor on raw samples with an already drawn feature map."""
    X = np.asarray(X, dtype=float)
    mean, std = zscore_fit(X)
    Z = feature_map.embed_batch(zscore_apply(X, mean, std))
    Zbar, feature_mean = center(Z)
    pca = fit_pca(Zbar, feature_mean, n_components)
    q = q_statistics(pca, Zbar)
    return Detector(feature_map, pca, mean, std, kde_threshold(q, alpha), float(alpha),
                    Z, q, lag)


def fit_static(X, m=150, p=0.05, alpha=0.99, seed=0, c="scaled-dimension",
               feature="bernoulli", n_components=None):
    """Fit the static monitor on normal-operation samples (rows of ``X``).

    Parameters
    ----------
    X : array_like of shape (n, D)
    m : int
        Number of random features.
    p : float
        Bernoulli probability (ignored for Fourier features).
    alpha : float
        Confidence level of the control limit.
    seed : int
        Seed for the feature map.
    c : float or str
        Kernel width or a rule understood by :func:`rbpca.features.resolve_width`,
        evaluated on the z-scored data.
    feature : {"bernoulli", "fourier"}
    n_components : int, optional
        Fixed number of retained components instead of the cut-off rule.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError(f"need at least two samples in rows, got shape {X.shape}")
    mean, std = zscore_fit(X)
    width = resolve_width(c, zscore_apply(X, mean, std), seed=seed)
    fmap = _make_map(feature, X.shape[1], m, p, width, seed)
    return fit_detector(X, fmap, alpha, n_components)
