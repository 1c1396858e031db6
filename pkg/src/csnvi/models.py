"""Target posteriors: log joints, theta-gradients and, where available,
closed-form expectations of log p(y, theta) under the variational family.

Every model exposes log_joint (vectorized over rows of theta where cheap)
and grad_log_joint at a single theta. closed_form_expected_logp returns
None unless an analytic E_q{log p} exists for the model.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, gammaln, log_ndtr

from .distribution import entropy, log_density, sample, tilted_moments, to_canonical
from .params import SkewParams
from .special import B
from .vechops import vech, vech_inv


@dataclass(frozen=True)
class Dataset:
    """Immutable data bundle; unused fields stay None."""

    y: np.ndarray | None = None
    x: np.ndarray | None = None
    z: np.ndarray | None = None
    offset: np.ndarray | None = None
    events: np.ndarray | None = None
    groups: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


class TargetModel:
    """Interface: dim, log_joint, grad_log_joint, closed_form_expected_logp."""

    dim: int

    def log_joint(self, theta):
        raise NotImplementedError

    def grad_log_joint(self, theta):
        raise NotImplementedError

    def closed_form_expected_logp(self, params: SkewParams):
        return None

    def init_location(self):
        """Rough center for cold-started fits; zero unless overridden."""
        return np.zeros(self.dim)


# ---------------------------------------------------------------------------
# normal sample, d = 2: y_i ~ N(theta1, exp(theta2))


class NormalSampleModel(TargetModel):
    dim = 2

    def __init__(self, y, a0=0.01, b0=0.01, sigma0_sq=1e4):
        y = np.asarray(y, dtype=float)
        if y.size == 0:
            raise ValueError("normal sample model needs at least one observation")
        self.y = y
        self.n = y.size
        self.a0, self.b0, self.sigma0_sq = float(a0), float(b0), float(sigma0_sq)
        self.c_star = (
            a0 * np.log(b0)
            - gammaln(a0)
            - 0.5 * np.log(sigma0_sq)
            - 0.5 * (self.n + 1) * np.log(2.0 * np.pi)
        )

    def log_joint(self, theta):
        theta = np.asarray(theta, dtype=float)
        single = theta.ndim == 1
        th = np.atleast_2d(theta)
        t1, t2 = th[:, 0], th[:, 1]
        sq = np.sum((self.y[None, :] - t1[:, None]) ** 2, axis=1)
        out = (
            self.c_star
            - (self.a0 + 0.5 * self.n) * t2
            - np.exp(-t2) * (self.b0 + 0.5 * sq)
            - t1**2 / (2.0 * self.sigma0_sq)
        )
        return out[0] if single else out

    def grad_log_joint(self, theta):
        t1, t2 = theta
        resid = self.y - t1
        return np.array(
            [
                np.exp(-t2) * np.sum(resid) - t1 / self.sigma0_sq,
                -(self.a0 + 0.5 * self.n) + np.exp(-t2) * (self.b0 + 0.5 * np.sum(resid**2)),
            ]
        )

    def closed_form_expected_logp(self, params: SkewParams):
        tm = tilted_moments(params, np.array([0.0, -1.0]))
        m = np.exp(tm.log_m)
        t_stat = float(np.sum((self.y - tm.mean[0]) ** 2) + self.n * tm.cov[0, 0])
        sigma11 = float(params.sigma[0, 0])
        return (
            self.c_star
            - (self.a0 + 0.5 * self.n) * params.mu[1]
            - m * (self.b0 + 0.5 * t_stat)
            - (sigma11 + params.mu[0] ** 2) / (2.0 * self.sigma0_sq)
        )

    def init_location(self):
        spread = max(float(np.var(self.y)), 1e-8)
        return np.array([float(np.mean(self.y)), np.log(spread)])


def normal_sample_model(y, a0=0.01, b0=0.01, sigma0_sq=1e4):
    return NormalSampleModel(y, a0=a0, b0=b0, sigma0_sq=sigma0_sq)


# ---------------------------------------------------------------------------
# normal variance, d = 1: y_i ~ N(0, exp(theta)), exact posterior available


class NormalVarianceModel(TargetModel):
    dim = 1

    def __init__(self, y, a0=0.01, b0=0.01):
        y = np.asarray(y, dtype=float)
        if y.size == 0:
            raise ValueError("normal variance model needs at least one observation")
        self.y = y
        self.n = y.size
        self.a0, self.b0 = float(a0), float(b0)
        self.a_post = self.a0 + 0.5 * self.n
        self.t_post = self.b0 + 0.5 * float(np.sum(y**2))
        self.c_star = a0 * np.log(b0) - gammaln(a0) - 0.5 * self.n * np.log(2.0 * np.pi)

    def log_joint(self, theta):
        theta = np.asarray(theta, dtype=float)
        t = theta[..., 0]
        return self.c_star - self.a_post * t - self.t_post * np.exp(-t)

    def grad_log_joint(self, theta):
        t = theta[0]
        return np.array([-self.a_post + self.t_post * np.exp(-t)])

    def closed_form_expected_logp(self, params: SkewParams):
        tm = tilted_moments(params, np.array([-1.0]))
        return self.c_star - self.a_post * params.mu[0] - self.t_post * np.exp(tm.log_m)

    def init_location(self):
        return np.array([np.log(max(float(np.mean(self.y**2)), 1e-8))])

    def log_evidence(self):
        """log p(y), exact: the theta integral is a gamma integral."""
        return self.c_star + gammaln(self.a_post) - self.a_post * np.log(self.t_post)

    def exact_log_posterior(self, theta):
        """Log posterior density of theta = log variance."""
        theta = np.asarray(theta, dtype=float)
        return (
            self.a_post * np.log(self.t_post)
            - gammaln(self.a_post)
            - self.a_post * theta
            - self.t_post * np.exp(-theta)
        )

    def profile_elbo(self, sigma, lam, params_out=False):
        """ELBO profiled over mu: mu is set to its closed-form maximizer.

        sigma is the (positive) scalar factor C and lam the skewness.
        """
        from .params import FactorForm, SkewParam

        aux_lam = np.asarray([lam], dtype=float)
        p0 = SkewParams(np.zeros(1), FactorForm(np.array([[sigma]])), SkewParam("lambda", aux_lam))
        aux = p0.aux
        alpha, tau = aux.alpha[0], aux.tau[0]
        mu_hat = (
            sigma**2 / (2.0 * tau**2)
            + B * sigma * alpha
            - np.log(self.a_post)
            + np.log(2.0 * self.t_post)
            + log_ndtr(-sigma * alpha)
        )
        p = SkewParams(np.array([mu_hat]), p0.factor, p0.skew)
        value = self.closed_form_expected_logp(p) + entropy(p)
        return (value, p) if params_out else value


def normal_variance_model(y, a0=0.01, b0=0.01):
    return NormalVarianceModel(y, a0=a0, b0=b0)


@dataclass(frozen=True)
class GriddedPosterior:
    theta1: np.ndarray
    theta2: np.ndarray
    density: np.ndarray  # shape (len(theta1), len(theta2))
    log_evidence: float


def exact_posterior_normalizer_2d(
    y, a0=0.01, b0=0.01, sigma0_sq=1e4, grid_size=(401, 401), theta1_range=None, theta2_range=None
):
    """Normalized joint posterior of the normal-sample model on a grid.

    theta1 is integrated out analytically; the remaining theta2 integral
    is done by quadrature on a wide grid of the integrand's log.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    ybar = float(np.mean(y)) if n else 0.0
    t0 = b0 + 0.5 * float(np.sum(y**2))
    a = a0 + 0.5 * n
    const = a0 * np.log(b0) - gammaln(a0) - 0.5 * n * np.log(2.0 * np.pi) - 0.5 * np.log(sigma0_sq)

    def log_integrand(t2):
        v = 1.0 / (n * np.exp(-t2) + 1.0 / sigma0_sq)
        m = v * n * ybar * np.exp(-t2)
        return const + m**2 / (2.0 * v) - a * t2 - t0 * np.exp(-t2) + 0.5 * np.log(v)

    # wide bracket around the integrand mode, then trapezoid in log space
    t2_mode = np.log(t0 / max(a, 1e-8)) if n else 0.0
    lo, hi = t2_mode - 25.0, t2_mode + 25.0
    tt = np.linspace(lo, hi, 20001)
    lv = log_integrand(tt)
    peak = np.max(lv)
    log_evidence = peak + np.log(np.trapezoid(np.exp(lv - peak), tt))

    model = NormalSampleModel(y, a0=a0, b0=b0, sigma0_sq=sigma0_sq) if n else None
    if theta2_range is None:
        keep = tt[lv > peak - 18.0]
        theta2_range = (float(keep[0]), float(keep[-1]))
    if theta1_range is None:
        if n:
            t2_hat = float(tt[np.argmax(lv)])
            v_hat = 1.0 / (n * np.exp(-t2_hat) + 1.0 / sigma0_sq)
            theta1_range = (ybar - 9.0 * np.sqrt(v_hat), ybar + 9.0 * np.sqrt(v_hat))
        else:
            theta1_range = (-3.0 * np.sqrt(sigma0_sq), 3.0 * np.sqrt(sigma0_sq))
    g1 = np.linspace(*theta1_range, grid_size[0])
    g2 = np.linspace(*theta2_range, grid_size[1])
    if n:
        t1m, t2m = np.meshgrid(g1, g2, indexing="ij")
        pts = np.column_stack([t1m.ravel(), t2m.ravel()])
        logpost = model.log_joint(pts).reshape(grid_size) - log_evidence
    else:
        lp1 = -0.5 * np.log(2.0 * np.pi * sigma0_sq) - g1**2 / (2.0 * sigma0_sq)
        lp2 = a0 * np.log(b0) - gammaln(a0) - a0 * g2 - b0 * np.exp(-g2)
        logpost = lp1[:, None] + lp2[None, :]
    return GriddedPosterior(theta1=g1, theta2=g2, density=np.exp(logpost), log_evidence=float(log_evidence))


# ---------------------------------------------------------------------------
# Poisson GLM with offset


class PoissonGlmModel(TargetModel):
    def __init__(self, y, x, offset=None, sigma0_sq=100.0):
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        if np.any(y < 0):
            raise ValueError("counts must be non-negative")
        self.y, self.x = y, x
        self.offset = np.zeros(y.size) if offset is None else np.asarray(offset, dtype=float)
        self.sigma0_sq = float(sigma0_sq)
        self.dim = x.shape[1]
        self.c_star = -0.5 * self.dim * np.log(2.0 * np.pi * self.sigma0_sq) + float(
            np.sum(y * self.offset - gammaln(y + 1.0))
        )

    def log_joint(self, theta):
        theta = np.asarray(theta, dtype=float)
        single = theta.ndim == 1
        th = np.atleast_2d(theta)
        eta = th @ self.x.T
        out = (
            self.c_star
            + eta @ self.y
            - np.sum(np.exp(eta + self.offset), axis=-1)
            - np.sum(th**2, axis=-1) / (2.0 * self.sigma0_sq)
        )
        return out[0] if single else out

    def grad_log_joint(self, theta):
        rate = np.exp(self.offset + self.x @ theta)
        return self.x.T @ (self.y - rate) - theta / self.sigma0_sq

    def closed_form_expected_logp(self, params: SkewParams):
        can = to_canonical(params)
        alpha = params.aux.alpha
        proj = self.x @ (params.c * alpha)  # row i: D_alpha C^T x_i
        log_m = (
            self.dim * np.log(2.0)
            + np.sum(log_ndtr(proj), axis=1)
            + self.x @ can.mu_star
            + 0.5 * np.einsum("ij,jk,ik->i", self.x, can.sigma_star, self.x)
        )
        mean_rates = np.exp(self.offset + log_m)
        sigma = params.sigma
        return (
            self.c_star
            + float(self.y @ (self.x @ params.mu))
            - (np.trace(sigma) + float(params.mu @ params.mu)) / (2.0 * self.sigma0_sq)
            - float(np.sum(mean_rates))
        )


def poisson_glm_model(y, x, offset=None, sigma0_sq=100.0):
    return PoissonGlmModel(y, x, offset=offset, sigma0_sq=sigma0_sq)


# ---------------------------------------------------------------------------
# logistic / binomial regression


class LogisticModel(TargetModel):
    def __init__(self, y, n_trials, x, sigma0_sq=100.0):
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        self.n_trials = np.broadcast_to(np.asarray(n_trials, dtype=float), y.shape).copy()
        if np.any(y > self.n_trials) or np.any(y < 0):
            raise ValueError("responses must satisfy 0 <= y <= n_trials")
        self.y, self.x = y, x
        self.sigma0_sq = float(sigma0_sq)
        self.dim = x.shape[1]
        self.log_binom = float(
            np.sum(gammaln(self.n_trials + 1) - gammaln(y + 1) - gammaln(self.n_trials - y + 1))
        )

    def log_joint(self, theta):
        theta = np.asarray(theta, dtype=float)
        single = theta.ndim == 1
        th = np.atleast_2d(theta)
        eta = th @ self.x.T
        out = (
            -0.5 * self.dim * np.log(2.0 * np.pi * self.sigma0_sq)
            - np.sum(th**2, axis=-1) / (2.0 * self.sigma0_sq)
            + eta @ self.y
            - np.logaddexp(0.0, eta) @ self.n_trials
            + self.log_binom
        )
        return out[0] if single else out

    def grad_log_joint(self, theta):
        eta = self.x @ theta
        p = 1.0 / (1.0 + np.exp(-eta))
        return self.x.T @ (self.y - self.n_trials * p) - theta / self.sigma0_sq


def logistic_model(y, n_trials, x, sigma0_sq=100.0):
    return LogisticModel(y, n_trials, x, sigma0_sq=sigma0_sq)


# ---------------------------------------------------------------------------
# zero-inflated negative binomial, theta = (beta, gamma, log alpha)


class ZinbModel(TargetModel):
    def __init__(self, y, x, z, sigma0_sq=100.0):
        y = np.asarray(y, dtype=float)
        if np.any(y < 0):
            raise ValueError("counts must be non-negative")
        self.y = y
        self.x = np.asarray(x, dtype=float)
        self.z = np.asarray(z, dtype=float)
        self.sigma0_sq = float(sigma0_sq)
        self.p = self.x.shape[1]
        self.q = self.z.shape[1]
        self.dim = self.p + self.q + 1
        self.zero = y == 0
        self.pos = ~self.zero

    def _split(self, theta):
        return theta[: self.p], theta[self.p : self.p + self.q], theta[-1]

    def log_joint(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.ndim == 2:
            return np.array([self.log_joint(t) for t in theta])
        beta, gamma, log_alpha = self._split(theta)
        alpha = np.exp(log_alpha)
        xb = self.x @ beta
        zg = self.z @ gamma
        inv_a = 1.0 / alpha
        # log{(alpha e^{xb} + 1)^{-1/alpha}} computed in log space
        log_nb0 = -inv_a * np.log1p(alpha * np.exp(xb))
        out = float(np.sum(np.logaddexp(zg[self.zero], log_nb0[self.zero])))
        out -= float(np.sum(np.logaddexp(0.0, zg)))
        yp = self.y[self.pos]
        out += float(
            np.sum(
                yp * xb[self.pos]
                - inv_a * log_alpha
                + gammaln(yp + inv_a)
                - gammaln(inv_a)
                - gammaln(yp + 1.0)
                - (yp + inv_a) * np.log(np.exp(xb[self.pos]) + inv_a)
            )
        )
        out += -0.5 * self.dim * np.log(2.0 * np.pi * self.sigma0_sq) - float(
            theta @ theta
        ) / (2.0 * self.sigma0_sq)
        return out

    def grad_log_joint(self, theta):
        beta, gamma, log_alpha = self._split(theta)
        alpha = np.exp(log_alpha)
        xb = self.x @ beta
        zg = self.z @ gamma
        inv_a = 1.0 / alpha
        exb = np.exp(xb)
        log_nb0 = -inv_a * np.log1p(alpha * exb)
        # zero-part mixture weight denominators, in a stable form
        denom0 = np.exp(zg) + np.exp(log_nb0)

        w_beta = np.where(
            self.pos,
            self.y - (alpha * self.y + 1.0) * exb / (alpha * exb + 1.0),
            -exb * np.exp(log_nb0) / (denom0 * (alpha * exb + 1.0)),
        )
        g_beta = self.x.T @ w_beta - beta / self.sigma0_sq

        w_gamma = np.where(self.zero, np.exp(zg) / denom0, 0.0) - np.exp(zg) / (1.0 + np.exp(zg))
        g_gamma = self.z.T @ w_gamma - gamma / self.sigma0_sq

        term_zero = (inv_a * np.log1p(alpha * exb) - exb / (alpha * exb + 1.0)) / (
            np.exp(zg - log_nb0) + 1.0
        )
        term_pos = inv_a * (
            digamma(inv_a)
            - digamma(self.y + inv_a)
            - 1.0
            + np.log1p(alpha * exb)
            + (alpha * self.y + 1.0) / (alpha * exb + 1.0)
        )
        g_log_alpha = (
            float(np.sum(np.where(self.zero, term_zero, term_pos))) - log_alpha / self.sigma0_sq
        )
        return np.concatenate([g_beta, g_gamma, [g_log_alpha]])


def zinb_model(y, x, z, sigma0_sq=100.0):
    return ZinbModel(y, x, z, sigma0_sq=sigma0_sq)


# ---------------------------------------------------------------------------
# Weibull proportional hazards with censoring, theta = (beta, gamma)


class WeibullSurvivalModel(TargetModel):
    def __init__(self, t, d_events, x, z, sigma0_sq=100.0):
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise ValueError("event/censoring times must be positive")
        self.t = t
        self.log_t = np.log(t)
        self.d_events = np.asarray(d_events, dtype=float)
        self.x = np.asarray(x, dtype=float)
        self.z = np.asarray(z, dtype=float)
        self.sigma0_sq = float(sigma0_sq)
        self.p = self.x.shape[1]
        self.q = self.z.shape[1]
        self.dim = self.p + self.q

    def _split(self, theta):
        return theta[: self.p], theta[self.p :]

    def log_joint(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.ndim == 2:
            return np.array([self.log_joint(t) for t in theta])
        beta, gamma = self._split(theta)
        xb = self.x @ beta
        rho = np.exp(self.z @ gamma)
        cum_hazard = np.exp(xb + rho * self.log_t)
        out = float(
            np.sum(self.d_events * (np.log(rho) + (rho - 1.0) * self.log_t + xb) - cum_hazard)
        )
        return out - 0.5 * self.dim * np.log(2.0 * np.pi * self.sigma0_sq) - float(
            theta @ theta
        ) / (2.0 * self.sigma0_sq)

    def grad_log_joint(self, theta):
        beta, gamma = self._split(theta)
        xb = self.x @ beta
        rho = np.exp(self.z @ gamma)
        cum_hazard = np.exp(xb + rho * self.log_t)
        resid = self.d_events - cum_hazard
        g_beta = self.x.T @ resid - beta / self.sigma0_sq
        g_gamma = self.z.T @ (self.d_events + rho * self.log_t * resid) - gamma / self.sigma0_sq
        return np.concatenate([g_beta, g_gamma])


def weibull_survival_model(t, d_events, x, z, sigma0_sq=100.0):
    return WeibullSurvivalModel(t, d_events, x, z, sigma0_sq=sigma0_sq)


# ---------------------------------------------------------------------------
# GLMM with canonical link, theta = (b_1..b_n, beta, zeta)


class GlmmModel(TargetModel):
    def __init__(self, y, x, z, groups, link="logit", sigma_beta=10.0, sigma_zeta=10.0):
        y = np.asarray(y, dtype=float)
        groups = np.asarray(groups)
        if np.any(np.diff(groups) < 0):
            raise ValueError("group indices must be contiguous and sorted")
        uniq, counts = np.unique(groups, return_counts=True)
        if not np.array_equal(uniq, np.arange(uniq.size)):
            raise ValueError("group indices must be 0..n-1 with every subject present")
        if link not in ("logit", "log"):
            raise ValueError(f"unknown link {link!r}")
        self.y = y
        self.x = np.asarray(x, dtype=float)
        self.z = np.asarray(z, dtype=float)
        self.groups = groups.astype(int)
        self.link = link
        self.n_subjects = uniq.size
        self.r = self.z.shape[1]
        self.p = self.x.shape[1]
        self.n_zeta = self.r * (self.r + 1) // 2
        self.dim = self.n_subjects * self.r + self.p + self.n_zeta
        self.sigma_beta_sq = float(sigma_beta) ** 2
        self.sigma_zeta_sq = float(sigma_zeta) ** 2
        self._diag_mask = vech(np.eye(self.r)).astype(bool)
        if link == "log":
            self._loglik_const = -float(np.sum(gammaln(y + 1.0)))
        else:
            self._loglik_const = 0.0

    def split(self, theta):
        nb = self.n_subjects * self.r
        b = np.asarray(theta[:nb]).reshape(self.n_subjects, self.r)
        beta = theta[nb : nb + self.p]
        zeta = theta[nb + self.p :]
        return b, beta, zeta

    def chol_factor(self, zeta):
        """W from zeta = vech(W*) with log-transformed diagonal."""
        w_star = vech_inv(zeta, self.r)
        w = w_star.copy()
        idx = np.diag_indices(self.r)
        w[idx] = np.exp(w_star[idx])
        return w

    def _a_prime(self, eta):
        if self.link == "logit":
            return 1.0 / (1.0 + np.exp(-eta))
        return np.exp(eta)

    def _a(self, eta):
        if self.link == "logit":
            return np.logaddexp(0.0, eta)
        return np.exp(eta)

    def log_joint(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.ndim == 2:
            return np.array([self.log_joint(t) for t in theta])
        b, beta, zeta = self.split(theta)
        w = self.chol_factor(zeta)
        eta = self.x @ beta + np.sum(self.z * b[self.groups], axis=1)
        log_det_w = float(np.sum(zeta[self._diag_mask]))
        wb = b @ w  # row i: b_i^T W
        return (
            float(np.sum(self.y * eta - self._a(eta)))
            + self._loglik_const
            - 0.5 * self.n_subjects * self.r * np.log(2.0 * np.pi)
            + self.n_subjects * log_det_w
            - 0.5 * float(np.sum(wb**2))
            - float(beta @ beta) / (2.0 * self.sigma_beta_sq)
            - 0.5 * self.p * np.log(2.0 * np.pi * self.sigma_beta_sq)
            - float(zeta @ zeta) / (2.0 * self.sigma_zeta_sq)
            - 0.5 * self.n_zeta * np.log(2.0 * np.pi * self.sigma_zeta_sq)
        )

    def grad_log_joint(self, theta):
        b, beta, zeta = self.split(theta)
        w = self.chol_factor(zeta)
        g_prec = w @ w.T
        eta = self.x @ beta + np.sum(self.z * b[self.groups], axis=1)
        resid = self.y - self._a_prime(eta)

        g_b = np.zeros_like(b)
        np.add.at(g_b, self.groups, resid[:, None] * self.z)
        g_b -= b @ g_prec.T

        g_beta = self.x.T @ resid - beta / self.sigma_beta_sq

        j_w = np.tril(np.ones((self.r, self.r)), -1) + np.diag(np.diag(w))
        d_w = vech(j_w)
        outer_sum = b.T @ (b @ w)  # sum_i b_i b_i^T W
        g_zeta = (
            -d_w * vech(outer_sum)
            + self.n_subjects * vech(np.eye(self.r))
            - zeta / self.sigma_zeta_sq
        )
        return np.concatenate([g_b.ravel(), g_beta, g_zeta])


def glmm_model(y, x, z, groups, link="logit", sigma_beta=10.0, sigma_zeta=10.0):
    return GlmmModel(y, x, z, groups, link=link, sigma_beta=sigma_beta, sigma_zeta=sigma_zeta)


# ---------------------------------------------------------------------------
# mean-field block structure


@dataclass(frozen=True)
class BlockStructure:
    """Block-diagonal layout: one independent factor per block."""

    block_dims: tuple

    @property
    def dim(self):
        return int(sum(self.block_dims))

    @property
    def slices(self):
        out = []
        start = 0
        for d in self.block_dims:
            out.append(slice(start, start + d))
            start += d
        return out


def meanfield_structure(n_subjects, r, global_dim):
    return BlockStructure(tuple([r] * n_subjects + [global_dim]))


def blockwise_log_density(blocks, structure: BlockStructure, theta):
    theta = np.asarray(theta, dtype=float)
    return sum(log_density(p, theta[..., s]) for p, s in zip(blocks, structure.slices))


def blockwise_entropy(blocks):
    return sum(entropy(p) for p in blocks)


def blockwise_sample(blocks, rng, n):
    return np.concatenate([sample(p, rng, n) for p in blocks], axis=1)


# ---------------------------------------------------------------------------
# synthetic data generators


def synthetic_generators(kind, seed):
    """Deterministic-by-seed test fixtures for each model family."""
    rng = np.random.default_rng(seed)
    if kind == "normal-sample":
        y = rng.normal(100.0, 15.0, size=6)
        return Dataset(y=y, meta={"theta1": 100.0, "var": 225.0})
    if kind == "normal-variance":
        y = rng.normal(0.0, 15.0, size=6)
        return Dataset(y=y, meta={"var": 225.0})
    if kind == "poisson-glmm":
        n_subjects = 50
        x = np.tile((np.arange(1, 8) - 4) / 10.0, n_subjects)
        groups = np.repeat(np.arange(n_subjects), 7)
        b = rng.normal(0.0, 1.0, size=n_subjects)
        mu = np.exp(-2.5 - 2.0 * x + b[groups])
        y = rng.poisson(mu).astype(float)
        return Dataset(
            y=y,
            x=np.column_stack([np.ones(x.size), x]),
            z=np.ones((x.size, 1)),
            groups=groups,
            meta={"beta": (-2.5, -2.0), "link": "log"},
        )
    if kind == "logistic":
        n, p = 60, 3
        x = np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])
        beta = np.array([-0.5, 1.0, -1.5])
        prob = 1.0 / (1.0 + np.exp(-x @ beta))
        y = (rng.random(n) < prob).astype(float)
        return Dataset(y=y, x=x, meta={"beta": beta, "n_trials": 1})
    if kind == "zinb":
        n = 80
        x = np.column_stack([np.ones(n), rng.standard_normal(n)])
        z = np.column_stack([np.ones(n), rng.standard_normal(n)])
        beta = np.array([1.0, 0.5])
        gamma = np.array([-1.0, 0.8])
        alpha = 0.5
        prob_zero = 1.0 / (1.0 + np.exp(-z @ gamma))
        mu = np.exp(x @ beta)
        nb = rng.negative_binomial(1.0 / alpha, 1.0 / (1.0 + alpha * mu))
        y = np.where(rng.random(n) < prob_zero, 0.0, nb.astype(float))
        return Dataset(y=y, x=x, z=z, meta={"beta": beta, "gamma": gamma, "alpha": alpha})
    if kind == "survival":
        n = 70
        x = np.column_stack([np.ones(n), rng.integers(0, 2, n), rng.standard_normal(n)])
        z = np.column_stack([np.ones(n), rng.integers(0, 2, n)])
        beta = np.array([-1.0, 0.6, 0.3])
        gamma = np.array([0.2, -0.3])
        rho = np.exp(z @ gamma)
        u = rng.random(n)
        t = (-np.log(u) / np.exp(x @ beta)) ** (1.0 / rho)
        censor = rng.exponential(np.median(t) * 2.0, n)
        events = (t <= censor).astype(float)
        return Dataset(
            y=None, x=x, z=z, offset=None, events=events, groups=None,
            meta={"t": np.minimum(t, censor), "beta": beta, "gamma": gamma},
        )
    raise ValueError(f"unknown synthetic dataset kind {kind!r}")
