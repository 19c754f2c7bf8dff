"""Random feature maps for the Gaussian kernel and kernel-matrix diagnostics.

Two maps approximate ``k(x, y) = exp(-||x - y||^2 / c)`` through
``z(x) . z(y) / m``:

* :class:`BernoulliFeatureMap` draws each direction from a 0/1 Bernoulli(p)
  vector, recentred by ``p`` and rescaled to the variance of the Gaussian
  spectral measure. Only the support of each direction is stored.
* :class:`FourierFeatureMap` is the classical dense random Fourier map with
  ``N(0, 2/c)`` directions, used as a baseline.

Arrays are laid out with samples as rows: ``X`` has shape ``(n, D)`` and a
feature matrix has shape ``(n, m)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, cdist

from . import _kernels
from .exceptions import DataError, NumericalError, ParameterError

TWO_PI = 2.0 * np.pi

#: Default multiplier for the scaled-dimension kernel width ``c = factor * D``.
WIDTH_FACTOR = 30.0


@dataclass(frozen=True)
class GaussianKernelParams:
    """Width of the Gaussian kernel ``exp(-||x - y||^2 / c)``."""

    c: float

    def __post_init__(self):
        if not (np.isfinite(self.c) and self.c > 0):
            raise ParameterError(f"kernel width c must be positive, got {self.c!r}")


def _check_common(D, m, c):
    if int(D) != D or D < 1:
        raise ParameterError(f"D must be a positive integer, got {D!r}")
    if int(m) != m or m < 1:
        raise ParameterError(f"m must be a positive integer, got {m!r}")
    GaussianKernelParams(c)


def _draw_phases(rng, m):
    u = rng.random(m) * TWO_PI
    # keep the interval half-open even if the product rounds up
    return np.where(u >= TWO_PI, np.nextafter(TWO_PI, 0.0), u)


def _as_rows(X, D, name="X"):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != D:
        raise DataError(f"{name} must have {D} columns, got shape {np.shape(X)}")
    return X


@dataclass(frozen=True, eq=False)
class BernoulliFeatureMap:
    """Sparse random Bernoulli features.

    Feature ``j`` of a sample ``x`` is::

        sqrt(2) * cos((sum_{i in S_j} x_i - p * sum_i x_i) / sqrt(c p (1-p) / 2) + u_j)

    where ``S_j`` is the support of the j-th Bernoulli direction.

    Parameters
    ----------
    D : int
        Input dimension.
    p : float
        Bernoulli probability in (0, 1).
    c : float
        Gaussian kernel width.
    indptr, indices : ndarray of int64
        CSR encoding of the supports (0-based, sorted, no duplicates).
    u : ndarray of shape (m,)
        Phase offsets in ``[0, 2*pi)``.
    seed : int or None
        Seed the map was drawn from; ``None`` for hand-built maps.
    """

    D: int
    p: float
    c: float
    indptr: np.ndarray
    indices: np.ndarray
    u: np.ndarray
    seed: int | None = None
    _tables: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        m = len(self.u)
        _check_common(self.D, m, self.c)
        if not (0.0 < self.p < 1.0):
            raise ParameterError(f"p must lie in (0, 1), got {self.p!r}")
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        u = np.ascontiguousarray(self.u, dtype=float)
        if indptr.shape != (m + 1,) or indptr[0] != 0 or indptr[-1] != len(indices):
            raise ParameterError("indptr does not match the number of phases")
        if np.any((indices < 0) | (indices >= self.D)):
            raise ParameterError("support index outside [0, D)")
        if np.any((u < 0) | (u >= TWO_PI)):
            raise ParameterError("phases must lie in [0, 2*pi)")
        for j in range(m):
            s = indices[indptr[j]:indptr[j + 1]]
            if np.any(np.diff(s) <= 0):
                raise ParameterError(f"support {j} is not strictly increasing")
        for name, arr in (("indptr", indptr), ("indices", indices), ("u", u)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "_tables", self._build_tables())

    @classmethod
    def from_supports(cls, D, supports, u, p, c, seed=None):
        """Build a map from explicit supports (iterables of 0-based indices)."""
        supports = [sorted(int(i) for i in s) for s in supports]
        if any(len(set(s)) != len(s) for s in supports):
            raise ParameterError("support sets may not contain duplicates")
        indptr = np.zeros(len(supports) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(s) for s in supports])
        indices = np.array([i for s in supports for i in s], dtype=np.int64)
        return cls(D=D, p=float(p), c=float(c), indptr=indptr, indices=indices,
                   u=np.asarray(u, dtype=float), seed=seed)

    @property
    def m(self):
        return len(self.u)

    @property
    def scale(self):
        return math.sqrt(self.c * self.p * (1.0 - self.p) / 2.0)

    @property
    def supports(self):
        """Supports as a list of tuples of 0-based coordinates."""
        return [tuple(self.indices[self.indptr[j]:self.indptr[j + 1]].tolist())
                for j in range(self.m)]

    def dense_directions(self):
        """The 0/1 direction matrix ``B`` of shape (m, D)."""
        B = np.zeros((self.m, self.D))
        for j, s in enumerate(self.supports):
            B[j, list(s)] = 1.0
        return B

    def _build_tables(self):
        keys = self.supports
        distinct = sorted(set(keys))
        grouped = 2 * len(distinct) < self.m
        if grouped:
            lookup = {s: g for g, s in enumerate(distinct)}
            groups = np.array([lookup[s] for s in keys], dtype=np.int64)
            g_indptr = np.zeros(len(distinct) + 1, dtype=np.int64)
            g_indptr[1:] = np.cumsum([len(s) for s in distinct])
            g_indices = np.array([i for s in distinct for i in s], dtype=np.int64)
        else:
            groups = np.zeros(self.m, dtype=np.int64)
            g_indptr, g_indices = self.indptr, self.indices
        phases = np.vstack([self.u, np.cos(self.u), np.sin(self.u)])
        return g_indptr, g_indices, groups, phases, grouped

    def embed(self, x):
        """Feature vector of one sample, shape (m,)."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.D,):
            raise DataError(f"expected a vector of length {self.D}, got shape {x.shape}")
        return self.embed_batch(x[None, :])[0]

    def embed_batch(self, X):
        """Feature matrix of shape (n, m) for samples in the rows of ``X``."""
        X = np.ascontiguousarray(_as_rows(X, self.D))
        g_indptr, g_indices, groups, phases, grouped = self._tables
        return _kernels.embed_rows(X, g_indptr, g_indices, self.p, self.scale,
                                   groups, phases, grouped)

    def __eq__(self, other):
        if not isinstance(other, BernoulliFeatureMap):
            return NotImplemented
        return (self.D == other.D and self.p == other.p and self.c == other.c
                and self.seed == other.seed
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.u, other.u))

    __hash__ = None


def new_bernoulli_map(D, m, p, c, seed):
    """Draw a Bernoulli feature map.

    Supports are drawn first, as an ``(m, D)`` block of Bernoulli(p) trials,
    then the phases, all from ``numpy.random.default_rng(seed)``.
    """
    _check_common(D, m, c)
    if not (0.0 < p < 1.0):
        raise ParameterError(f"p must lie in (0, 1), got {p!r}")
    rng = np.random.default_rng(seed)
    B = rng.random((m, D)) < p
    u = _draw_phases(rng, m)
    indptr = np.zeros(m + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(B.sum(axis=1))
    indices = np.nonzero(B)[1].astype(np.int64)
    return BernoulliFeatureMap(D=D, p=float(p), c=float(c), indptr=indptr,
                               indices=indices, u=u, seed=seed)


@dataclass(frozen=True, eq=False)
class FourierFeatureMap:
    """Dense random Fourier features with ``N(0, 2/c)`` directions."""

    D: int
    c: float
    W: np.ndarray
    u: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        W = np.ascontiguousarray(self.W, dtype=float)
        _check_common(self.D, len(self.u), self.c)
        if W.shape != (len(self.u), self.D):
            raise ParameterError(f"W must have shape (m, D), got {W.shape}")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))

    @property
    def m(self):
        return len(self.u)

    def embed(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.D,):
            raise DataError(f"expected a vector of length {self.D}, got shape {x.shape}")
        return np.sqrt(2.0) * np.cos(self.W @ x + self.u)

    def embed_batch(self, X):
        X = _as_rows(X, self.D)
        return np.sqrt(2.0) * np.cos(X @ self.W.T + self.u)

    def __eq__(self, other):
        if not isinstance(other, FourierFeatureMap):
            return NotImplemented
        return (self.D == other.D and self.c == other.c and self.seed == other.seed
                and np.array_equal(self.W, other.W) and np.array_equal(self.u, other.u))

    __hash__ = None


def new_fourier_map(D, m, c, seed):
    """Draw a random Fourier feature map for the width-``c`` Gaussian kernel."""
    _check_common(D, m, c)
    rng = np.random.default_rng(seed)
    W = rng.normal(0.0, np.sqrt(2.0 / c), size=(m, D))
    u = _draw_phases(rng, m)
    return FourierFeatureMap(D=D, c=float(c), W=W, u=u, seed=seed)


def embed_batch(feature_map, X):
    """Row ``k`` of the result is the feature vector of sample ``X[k]``."""
    return feature_map.embed_batch(X)


def exact_gaussian_kernel(X, c):
    """Dense Gaussian kernel matrix ``K[i, j] = exp(-||x_i - x_j||^2 / c)``."""
    c = GaussianKernelParams(float(c)).c
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise DataError(f"X must be a non-empty 2-D array, got shape {X.shape}")
    K = np.exp(-cdist(X, X, "sqeuclidean") / c)
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, 1.0)
    return K


def approx_kernel(Z):
    """Approximate kernel ``Z Z^T / m`` from an (n, m) feature matrix."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.size == 0:
        raise DataError("feature matrix must be non-empty and 2-D")
    K = Z @ Z.T / Z.shape[1]
    return 0.5 * (K + K.T)


def spectral_error(Ka, Kb, rtol=1e-8, max_iter=10_000):
    """Spectral norm of ``Ka - Kb`` for symmetric matrices, by power iteration.

    The iteration runs on the square of the difference so that eigenvalues
    of equal magnitude and opposite sign do not make it oscillate.
    """
    Ka = np.asarray(Ka, dtype=float)
    Kb = np.asarray(Kb, dtype=float)
    if Ka.shape != Kb.shape or Ka.ndim != 2 or Ka.shape[0] != Ka.shape[1]:
        raise DataError(f"need two square matrices of equal size, got {Ka.shape} and {Kb.shape}")
    E = Ka - Kb
    E = 0.5 * (E + E.T)
    if not np.any(E):
        return 0.0
    v = np.random.default_rng(0).standard_normal(E.shape[0])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        w = E @ v
        new_sigma = np.linalg.norm(w)
        if new_sigma == 0.0:
            return 0.0
        w = E @ (w / new_sigma)
        v = w / np.linalg.norm(w)
        if abs(new_sigma - sigma) <= rtol * new_sigma:
            return float(np.linalg.norm(E @ v))
        sigma = new_sigma
    warnings.warn("power iteration hit the iteration cap before converging",
                  RuntimeWarning, stacklevel=2)
    return float(np.linalg.norm(E @ v))


def spectral_error_bound(n, m):
    """Upper bound on ``E||K_hat - K||`` for ``m`` Bernoulli features on ``n`` points."""
    if n < 2:
        raise ParameterError(f"n must be at least 2, got {n!r}")
    if m < 2:
        raise ParameterError(f"m must be at least 2, got {m!r}")
    n = float(n)
    m = float(m)
    log_n = math.log(n)
    first = math.sqrt(2.0) * n * (m + 1) * log_n / (m * (m - 1))
    second = 4.0 * math.sqrt(2.0) * n**2 * (m + 1) ** 2 / (m * (m - 1) ** 2)
    third = math.sqrt(6.0 * n**2 * log_n / m + 12.0 * n**3 * (m + 1) / (m * (m - 1)))
    return first + second + third


def median_heuristic(X, subsample=500, seed=0):
    """Median pairwise squared distance over at most ``subsample`` rows of ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError("median heuristic needs at least two samples")
    if X.shape[0] > subsample:
        idx = np.sort(np.random.default_rng(seed).choice(X.shape[0], subsample, replace=False))
        X = X[idx]
    c = float(np.median(pdist(X, "sqeuclidean")))
    if not c > 0:
        raise NumericalError("all sampled points coincide; median heuristic gives c = 0")
    return c


def resolve_width(c, X, seed=0):
    """Turn a width specification into a number.

    ``c`` may be a positive number, ``"scaled-dimension"`` (``30 * D``, which on
    z-scored data equals 30 times the total variance) or ``"median-heuristic"``.
    """
    if isinstance(c, str):
        if c == "scaled-dimension":
            return WIDTH_FACTOR * np.asarray(X).shape[1]
        if c == "median-heuristic":
            return median_heuristic(X, seed=seed)
        raise ParameterError(f"unknown kernel width rule {c!r}")
    return GaussianKernelParams(float(c)).c


def bernoulli_kernel_expectation(delta, p, c):
    """Exact ``E[z(x) z(y)]`` for Bernoulli features, with ``delta = x - y``.

    The expectation is the real part of the product over coordinates of the
    characteristic function of a centred, rescaled Bernoulli(p) variable. It
    approaches the Gaussian kernel only when every ``|delta_i|`` is small
    against ``sqrt(c p (1-p) / 2)``.
    """
    delta = np.asarray(delta, dtype=float)
    theta = delta / math.sqrt(c * p * (1.0 - p) / 2.0)
    phi = (1.0 - p) * np.exp(-1j * p * theta) + p * np.exp(1j * (1.0 - p) * theta)
    return np.real(np.prod(phi, axis=-1))
