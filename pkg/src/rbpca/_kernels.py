"""Compiled inner loops for the sparse Bernoulli embedding.

Supports are stored in CSR form: the nonzero coordinates of row ``r`` are
``indices[indptr[r]:indptr[r + 1]]``. When many features share a support
(small ``D``), the map is evaluated per distinct support and expanded with
the angle-addition identity, which needs two trig calls per group instead
of one per feature.
"""

import numpy as np
from numba import njit

SQRT2 = np.sqrt(2.0)


@njit(cache=True)
def _embed_into(xn, indptr, indices, p, scale, groups, phases, grouped, out):
    # phases rows: u, cos(u), sin(u)
    total = 0.0
    for i in range(xn.shape[0]):
        total += xn[i]
    offset = p * total
    m = out.shape[0]
    if grouped:
        n_groups = indptr.shape[0] - 1
        cg = np.empty(n_groups)
        sg = np.empty(n_groups)
        for g in range(n_groups):
            s = 0.0
            for k in range(indptr[g], indptr[g + 1]):
                s += xn[indices[k]]
            theta = (s - offset) / scale
            cg[g] = np.cos(theta)
            sg[g] = np.sin(theta)
        for j in range(m):
            g = groups[j]
            v = SQRT2 * (cg[g] * phases[1, j] - sg[g] * phases[2, j])
            # angle addition can overshoot the cosine bound by an ulp
            if v > SQRT2:
                v = SQRT2
            elif v < -SQRT2:
                v = -SQRT2
            out[j] = v
    else:
        for j in range(m):
            s = 0.0
            for k in range(indptr[j], indptr[j + 1]):
                s += xn[indices[k]]
            out[j] = SQRT2 * np.cos((s - offset) / scale + phases[0, j])


@njit(cache=True)
def embed_rows(X, indptr, indices, p, scale, groups, phases, grouped):
    n = X.shape[0]
    m = phases.shape[1]
    out = np.empty((n, m))
    for r in range(n):
        _embed_into(X[r], indptr, indices, p, scale, groups, phases, grouped, out[r])
    return out


def pack_online(mean, std, indptr, indices, p, scale, groups, phases, grouped,
                feature_mean, V):
    """Flatten everything :func:`q_packed` needs into one int and one float buffer.

    Fewer arguments make the compiled call noticeably cheaper to dispatch.
    """
    D, m, a = len(mean), phases.shape[1], V.shape[1]
    n_rows = len(indptr) - 1
    ints = np.concatenate([[int(grouped), D, m, a, n_rows, len(indices)],
                           indptr, indices, groups]).astype(np.int64)
    flts = np.concatenate([[p, scale], mean, std, np.ravel(phases), feature_mean,
                           np.ravel(np.ascontiguousarray(V.T))]).astype(float)
    return ints, flts


@njit(cache=True, fastmath={"reassoc", "contract", "arcp"})
def q_packed(x, ints, flts):
    """Q of one raw sample: normalize, embed, center, project out ``V``.

    Returns -1 if the sample holds a non-finite value.
    """
    grouped = ints[0] == 1
    D, m, a, n_rows, nnz = ints[1], ints[2], ints[3], ints[4], ints[5]
    o = 6
    indptr = ints[o:o + n_rows + 1]
    o += n_rows + 1
    indices = ints[o:o + nnz]
    groups = ints[o + nnz:o + nnz + m]
    p, scale = flts[0], flts[1]
    f = 2
    xn = np.empty(D)
    for i in range(D):
        if not np.isfinite(x[i]):
            return -1.0
        xn[i] = (x[i] - flts[f + i]) / flts[f + D + i]
    f += 2 * D
    phases = flts[f:f + 3 * m].reshape(3, m)
    f += 3 * m
    z = np.empty(m)
    _embed_into(xn, indptr, indices, p, scale, groups, phases, grouped, z)
    q = 0.0
    for j in range(m):
        z[j] -= flts[f + j]
        q += z[j] * z[j]
    f += m
    for k in range(a):
        t = 0.0
        row = f + k * m
        for j in range(m):
            t += flts[row + j] * z[j]
        q -= t * t
    if q < 0.0:
        q = 0.0
    return q
