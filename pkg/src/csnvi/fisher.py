"""Brute-force Fisher information assembly and the joint score.

The closed-form natural gradients are cross-checked against
inv(fisher_oracle) @ grad, so this module keeps everything explicit:
dense elimination matrices, Kronecker products, no shortcuts. The cost
is O(d^6) and the assembly is capped at d <= 6.
"""

import numpy as np
from scipy.linalg import solve_triangular

from .distribution import _solve_ct, standardized_residual
from .params import SkewParams
from .special import B
from .vechops import (
    commutation,
    elimination_diag,
    elimination_lower,
    elimination_upper,
    vech,
    vech_u,
)

FISHER_DIM_CAP = 6


def score_logq_joint(params: SkewParams, theta, w1):
    """Score of log q(theta, w1) in the (mu, lambda, vech L[, vech_u U]) layout.

    A single (theta, w1) pair yields a ParamGradient; batched inputs of
    shape (n, d) yield the n stacked flat scores as an (n, p) matrix.
    """
    single = np.asarray(theta).ndim == 1
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    w1 = np.atleast_2d(np.asarray(w1, dtype=float))
    d = params.d
    aux = params.aux
    lam = params.lam
    kappa = aux.kappa
    z = standardized_residual(params, theta)
    wt = np.abs(w1) - B

    inner = z / kappa**2 - (lam / kappa) * wt
    g_mu = _solve_ct(params.factor, inner.T).T
    g_lam = (
        (1.0 - B**2) * aux.alpha * kappa
        - lam * ((1.0 - B**2) * z**2 + wt**2)
        + (2.0 / kappa - kappa) * z * wt
    )

    outer = np.einsum("ni,nj->nij", g_mu, z)
    rows_l, cols_l = np.tril_indices(d)
    order_l = np.lexsort((rows_l, cols_l))
    rows_l, cols_l = rows_l[order_l], cols_l[order_l]
    if params.factor.is_lu:
        l_mat, u_mat = params.factor.l, params.factor.u
        l_inv_t = solve_triangular(l_mat.T, np.eye(d), lower=False)
        mat_l = outer @ u_mat.T - l_inv_t
        mat_u = np.einsum("ji,njk->nik", l_mat, outer)
        rows_u, cols_u = np.triu_indices(d, k=1)
        order_u = np.lexsort((rows_u, cols_u))
        g_l = mat_l[:, rows_l, cols_l]
        g_u = mat_u[:, rows_u[order_u], cols_u[order_u]]
        out = np.hstack([g_mu, g_lam, g_l, g_u])
    else:
        c_inv_t = _solve_ct(params.factor, np.eye(d))
        mat_l = outer - c_inv_t
        g_l = mat_l[:, rows_l, cols_l]
        out = np.hstack([g_mu, g_lam, g_l])
    if single:
        from .gradients import ParamGradient

        return ParamGradient.unflatten(out[0], d, params.factor.is_lu)
    return out


def fisher_oracle(params: SkewParams):
    """Exact Fisher information of the joint (theta, w1) parametrization.

    Block order matches score_logq_joint. The matrix is assembled from
    closed-form blocks using dense elimination matrices.
    """
    d = params.d
    if d > FISHER_DIM_CAP:
        raise ValueError(f"fisher_oracle supports d <= {FISHER_DIM_CAP} (got d={d})")
    aux = params.aux
    kappa = aux.kappa
    alpha = aux.alpha
    c = params.c

    e_l = elimination_lower(d)
    e_d = elimination_diag(d)
    k_comm = commutation(d)
    eye = np.eye(d)
    c_inv = np.linalg.inv(c)
    d_kinv2 = np.diag(1.0 / kappa**2)

    i_mumu = np.linalg.inv((c * kappa**2) @ c.T)
    i_lamlam = (1.0 - B**2) * np.diag(2.0 * kappa**2 - kappa**4)

    if not params.factor.is_lu:
        i_llam = -(1.0 - B**2) * e_l @ np.kron(eye, c_inv.T) @ e_d.T @ np.diag(alpha * kappa)
        i_ll = (
            e_l
            @ np.kron(eye, c_inv.T)
            @ (k_comm + np.kron(eye, d_kinv2))
            @ np.kron(eye, c_inv)
            @ e_l.T
        )
        n_l = d * (d + 1) // 2
        p = 2 * d + n_l
        fim = np.zeros((p, p))
        fim[:d, :d] = i_mumu
        fim[d : 2 * d, d : 2 * d] = i_lamlam
        fim[2 * d :, d : 2 * d] = i_llam
        fim[d : 2 * d, 2 * d :] = i_llam.T
        fim[2 * d :, 2 * d :] = i_ll
        return fim

    u_mat = params.factor.u
    e_u = elimination_upper(d)
    u_inv = np.linalg.inv(u_mat)
    mid = k_comm + np.kron(eye, d_kinv2)

    i_llam = -(1.0 - B**2) * e_l @ np.kron(u_mat, c_inv.T) @ e_d.T @ np.diag(alpha * kappa)
    s_ll = e_l @ np.kron(u_mat, c_inv.T) @ mid @ np.kron(u_mat.T, c_inv) @ e_l.T
    s_lu = e_l @ np.kron(u_mat, c_inv.T) @ mid @ np.kron(eye, u_inv) @ e_u.T
    s_uu = e_u @ np.kron(eye, u_inv.T) @ np.kron(eye, d_kinv2) @ np.kron(eye, u_inv) @ e_u.T

    n_l = d * (d + 1) // 2
    n_u = d * (d - 1) // 2
    p = 2 * d + n_l + n_u
    fim = np.zeros((p, p))
    fim[:d, :d] = i_mumu
    fim[d : 2 * d, d : 2 * d] = i_lamlam
    fim[2 * d : 2 * d + n_l, d : 2 * d] = i_llam
    fim[d : 2 * d, 2 * d : 2 * d + n_l] = i_llam.T
    fim[2 * d : 2 * d + n_l, 2 * d : 2 * d + n_l] = s_ll
    fim[2 * d : 2 * d + n_l, 2 * d + n_l :] = s_lu
    fim[2 * d + n_l :, 2 * d : 2 * d + n_l] = s_lu.T
    fim[2 * d + n_l :, 2 * d + n_l :] = s_uu
    return fim
