"""Half-vectorization helpers and the dense elimination/commutation matrices.

vech packs the lower triangle (diagonal included) columnwise left to
right; vech_u packs the strictly upper triangle columnwise. The dense
matrices are only used by the brute-force Fisher assembly, so the O(d^4)
memory is acceptable there.
"""

import numpy as np


def vech(x):
    x = np.asarray(x)
    d = x.shape[0]
    rows, cols = np.tril_indices(d)
    order = np.lexsort((rows, cols))
    return x[rows[order], cols[order]]


def vech_u(x):
    x = np.asarray(x)
    d = x.shape[0]
    rows, cols = np.triu_indices(d, k=1)
    order = np.lexsort((rows, cols))
    return x[rows[order], cols[order]]


def vech_inv(s, d):
    out = np.zeros((d, d))
    rows, cols = np.tril_indices(d)
    order = np.lexsort((rows, cols))
    out[rows[order], cols[order]] = s
    return out


def vech_u_inv(t, d):
    out = np.zeros((d, d))
    rows, cols = np.triu_indices(d, k=1)
    order = np.lexsort((rows, cols))
    out[rows[order], cols[order]] = t
    return out


def lower_part(x):
    """Zero out everything above the diagonal."""
    return np.tril(np.asarray(x))


def upper_part(x):
    """Zero out everything on and below the diagonal."""
    return np.triu(np.asarray(x), k=1)


def _selection_matrix(index_fn, d):
    rows, cols = index_fn(d)
    order = np.lexsort((rows, cols))
    rows, cols = rows[order], cols[order]
    e = np.zeros((rows.size, d * d))
    # vec() is columnwise: entry (i, j) sits at position j*d + i.
    e[np.arange(rows.size), cols * d + rows] = 1.0
    return e


def elimination_lower(d):
    """E_l with E_l vec(X) = vech(X)."""
    return _selection_matrix(np.tril_indices, d)


def elimination_upper(d):
    """E_u with E_u vec(X) = vech_u(X)."""
    return _selection_matrix(lambda n: np.triu_indices(n, k=1), d)


def elimination_diag(d):
    """E_d with E_d vec(X) = diag(X)."""
    return _selection_matrix(lambda n: np.diag_indices(n), d)


def commutation(d):
    """K with K vec(X) = vec(X^T)."""
    k = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            k[i * d + j, j * d + i] = 1.0
    return k
