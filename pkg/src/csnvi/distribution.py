"""Density, sampling, entropy and moment operations for the CSN subclass.

The family is built by affine-transforming d independent standardized
univariate skew normals: theta = mu + C z. All operations work from the
(mu, C, lambda) parametrization held in SkewParams.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import ndtr
from scipy.stats import multivariate_normal

from .params import SkewParams
from .special import B, gauss_hermite_standard_normal, log_norm_cdf, zeta

# Exact Phi_d evaluation for marginals is capped here; beyond it callers
# should fall back to sample-based KDE.
MARGINAL_EXACT_DIM_CAP = 12

_LOG_2PI = np.log(2.0 * np.pi)


class UnsupportedDimensionError(ValueError):
    pass


@dataclass(frozen=True)
class CanonicalCsn:
    """CSN_{d,d}(mu_star, sigma_star, d_star, 0, I_d) form of the family."""

    mu_star: np.ndarray
    sigma_star: np.ndarray
    d_star: np.ndarray


@dataclass(frozen=True)
class TiltedMoments:
    """Normalizer and moments of exp(s^T theta) q(theta) = M qtilde(theta)."""

    log_m: float
    mean: np.ndarray
    cov: np.ndarray


def _solve_c(factor, x):
    """C^{-1} x for x of shape (d,) or (d, n)."""
    y = solve_triangular(factor.l, x, lower=True)
    if factor.is_lu:
        y = solve_triangular(factor.u, y, lower=False)
    return y


def _solve_ct(factor, x):
    """C^{-T} x for x of shape (d,) or (d, n)."""
    if factor.is_lu:
        x = solve_triangular(factor.u.T, x, lower=True)
    return solve_triangular(factor.l.T, x, lower=False)


def standardized_residual(params: SkewParams, theta):
    """z = C^{-1}(theta - mu) for theta of shape (d,) or (n, d)."""
    theta = np.asarray(theta, dtype=float)
    diff = (theta - params.mu).T
    return _solve_c(params.factor, diff).T


def log_density(params: SkewParams, theta):
    """Log pdf of the CSN subclass; accepts theta of shape (d,) or (n, d)."""
    d = params.d
    aux = params.aux
    lam = params.lam
    z = standardized_residual(params, theta)
    v = z * aux.tau + B * aux.delta
    quad = np.sum(v * v, axis=-1)
    skew_term = np.sum(log_norm_cdf(lam * v) + np.log(aux.tau), axis=-1)
    return (
        d * np.log(2.0)
        - 0.5 * d * _LOG_2PI
        - 0.5 * quad
        - params.factor.log_abs_det()
        + skew_term
    )


def grad_theta_log_density(params: SkewParams, theta):
    """d/dtheta of log_density; shape matches theta."""
    aux = params.aux
    lam = params.lam
    z = standardized_residual(params, theta)
    v = z * aux.tau + B * aux.delta
    inner = (lam * zeta(1, lam * v) - v) * aux.tau
    return _solve_ct(params.factor, inner.T).T


def sample(params: SkewParams, rng: np.random.Generator, n: int):
    """n draws via the stochastic representation theta = C(D_k w2 + D_a |w1|~) + mu."""
    if n < 1:
        raise ValueError("n must be >= 1")
    w1 = rng.standard_normal((n, params.d))
    w2 = rng.standard_normal((n, params.d))
    w1t = np.abs(w1) - B
    z = w2 * params.aux.kappa + w1t * params.aux.alpha
    return z @ params.c.T + params.mu


def mean_cov(params: SkewParams):
    return params.mu.copy(), params.sigma


def entropy(params: SkewParams, n_nodes: int = 200):
    """Closed-form entropy with the 1-D expectation by Gauss-Hermite quadrature."""
    d = params.d
    lam = params.lam
    nodes, weights = gauss_hermite_standard_normal(n_nodes)
    arg = lam[:, None] * nodes[None, :]
    # Phi log Phi -> 0 in the deep lower tail; ndtr * log_ndtr is stable there.
    integrand = ndtr(arg) * log_norm_cdf(arg)
    expectations = integrand @ weights
    return (
        0.5 * d * (np.log(np.pi / 2.0) + 1.0)
        + params.factor.log_abs_det()
        - float(np.sum(2.0 * expectations + np.log(params.aux.tau)))
    )


def entropy_grad_lambda(params: SkewParams, n_nodes: int = 200):
    """d/dlambda of the entropy, also by Gauss-Hermite quadrature."""
    lam = params.lam
    kappa = params.aux.kappa
    nodes, weights = gauss_hermite_standard_normal(n_nodes)
    scale = np.sqrt(1.0 + lam**2)
    arg = (lam / scale)[:, None] * nodes[None, :]
    expectation = (nodes[None, :] * log_norm_cdf(arg)) @ weights
    return B**2 * kappa**2 * lam / (1.0 + lam**2) - B * expectation / (1.0 + lam**2)


def cgf(params: SkewParams, t):
    """Cumulant generating function of theta at t."""
    t = np.asarray(t, dtype=float)
    can = to_canonical(params)
    proj = params.aux.alpha * (params.c.T @ t)
    return float(t @ can.mu_star + 0.5 * t @ can.sigma_star @ t + np.sum(zeta(0, proj)))


def to_canonical(params: SkewParams) -> CanonicalCsn:
    c = params.c
    aux = params.aux
    mu_star = params.mu - B * c @ aux.alpha
    sigma_star = (c / aux.tau**2) @ c.T
    c_inv = _solve_c(params.factor, np.eye(params.d))
    d_star = (params.lam * aux.tau)[:, None] * c_inv
    return CanonicalCsn(mu_star=mu_star, sigma_star=sigma_star, d_star=d_star)


def canonical_log_density(can: CanonicalCsn, theta):
    """Log pdf through the canonical CSN_{d,d}(mu*, Sigma*, D*, 0, I) formula."""
    theta = np.asarray(theta, dtype=float)
    d = can.mu_star.shape[0]
    diff = theta - can.mu_star
    chol = np.linalg.cholesky(can.sigma_star)
    white = solve_triangular(chol, diff.T, lower=True).T
    log_phi = (
        -0.5 * d * _LOG_2PI
        - np.sum(np.log(np.diag(chol)))
        - 0.5 * np.sum(white * white, axis=-1)
    )
    arg = diff @ can.d_star.T
    return d * np.log(2.0) + log_phi + np.sum(log_norm_cdf(arg), axis=-1)


def tilted_moments(params: SkewParams, s) -> TiltedMoments:
    """Lemma-style identity exp(s^T theta) q(theta) = M qtilde(theta)."""
    s = np.asarray(s, dtype=float)
    c = params.c
    aux = params.aux
    can = to_canonical(params)
    proj = aux.alpha * (c.T @ s)
    log_m = float(
        params.d * np.log(2.0)
        + np.sum(log_norm_cdf(proj))
        + s @ can.mu_star
        + 0.5 * s @ can.sigma_star @ s
    )
    mean = can.mu_star + can.sigma_star @ s + c @ (aux.alpha * zeta(1, proj))
    cov = can.sigma_star + (c * (aux.alpha**2 * zeta(2, proj))) @ c.T
    return TiltedMoments(log_m=log_m, mean=mean, cov=cov)


def marginal_skewness(params: SkewParams, i: int):
    """Pearson's index of skewness of theta_i."""
    c = params.c
    alpha = params.aux.alpha
    sigma_ii = float(np.sum(c[i] ** 2))
    num = float(np.sum(alpha**3 * c[i] ** 3))
    return B * (2.0 * B**2 - 1.0) * num / sigma_ii**1.5


def marginal_log_density(params: SkewParams, i: int, theta_i):
    """Log marginal pdf of theta_i via the exact one-dimensional CSN_{1,d} form.

    Requires evaluating a d-dimensional Gaussian cdf, which is only done
    exactly up to MARGINAL_EXACT_DIM_CAP dimensions.
    """
    d = params.d
    if d > MARGINAL_EXACT_DIM_CAP:
        raise UnsupportedDimensionError(
            f"exact marginal density supports d <= {MARGINAL_EXACT_DIM_CAP} (got d={d}); "
            "draw samples and use metrics.kde_1d instead"
        )
    if not 0 <= i < d:
        raise IndexError(f"coordinate {i} out of range for d={d}")
    theta_i = np.atleast_1d(np.asarray(theta_i, dtype=float))
    c = params.c
    aux = params.aux
    lam = params.lam
    mu_star_i = params.mu[i] - B * float(c[i] @ aux.alpha)
    b_i = c[i] / aux.tau
    sigma_star_ii = float(b_i @ b_i)
    d_i = lam * b_i / sigma_star_ii
    delta_i = np.eye(d) + (lam[:, None] * lam[None, :]) * (
        np.eye(d) - np.outer(b_i, b_i) / sigma_star_ii
    )
    diff = theta_i - mu_star_i
    log_phi = -0.5 * _LOG_2PI - 0.5 * np.log(sigma_star_ii) - 0.5 * diff**2 / sigma_star_ii
    if d == 1:
        cdf_vals = ndtr(d_i[0] * diff / np.sqrt(delta_i[0, 0]))
    else:
        cdf_vals = np.array(
            [
                multivariate_normal.cdf(
                    d_i * x, mean=np.zeros(d), cov=delta_i, abseps=1e-12, releps=0.0
                )
                for x in diff
            ]
        )
    out = d * np.log(2.0) + log_phi + np.log(np.maximum(cdf_vals, 1e-320))
    return out if out.size > 1 else float(out[0])
