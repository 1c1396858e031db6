"""Shared helpers for the test suite."""

import numpy as np

from csnvi.params import FactorForm, SkewParam, SkewParams


def random_params(rng, d, lu=False, lam_scale=1.5, lam=None):
    """A well-conditioned random parameter bundle in the lambda parametrization."""
    l_mat = np.tril(0.4 * rng.standard_normal((d, d))) + np.diag(0.8 + rng.random(d))
    u_mat = None
    if lu:
        u_mat = np.eye(d) + np.triu(0.3 * rng.standard_normal((d, d)), 1)
    if lam is None:
        lam = lam_scale * rng.uniform(-1.0, 1.0, size=d)
    return SkewParams(
        rng.standard_normal(d), FactorForm(l_mat, u_mat), SkewParam("lambda", np.asarray(lam))
    )


def finite_diff(f, x, eps=1e-6):
    """Central finite-difference gradient of a scalar function of a vector."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = eps * max(1.0, abs(x[i]))
        g[i] = (f(x + e) - f(x - e)) / (2.0 * e[i])
    return g


class QuadraticModel:
    """Gaussian target with known normalizer: log p = -(theta-m)^T A (theta-m)/2 + const."""

    def __init__(self, a_mat, m, const=0.0):
        self.a_mat = np.asarray(a_mat, dtype=float)
        self.m = np.asarray(m, dtype=float)
        self.const = float(const)
        self.dim = self.m.size

    def log_joint(self, theta):
        theta = np.asarray(theta, dtype=float)
        diff = theta - self.m
        quad = np.einsum("...i,ij,...j->...", diff, self.a_mat, diff)
        return self.const - 0.5 * quad

    def grad_log_joint(self, theta):
        return -self.a_mat @ (np.asarray(theta, dtype=float) - self.m)

    def closed_form_expected_logp(self, params):
        return None

    def init_location(self):
        return np.zeros(self.dim)

    def log_normalizer(self):
        d = self.dim
        sign, logdet = np.linalg.slogdet(self.a_mat)
        return self.const + 0.5 * d * np.log(2.0 * np.pi) - 0.5 * logdet
