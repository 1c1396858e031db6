import numpy as np
import pytest
from scipy.stats import multivariate_normal, norm

from csnvi.fisher import FISHER_DIM_CAP, fisher_oracle, score_logq_joint
from csnvi.params import FactorForm, SkewParam, SkewParams
from util import finite_diff, random_params

B = np.sqrt(2.0 / np.pi)


def _log_joint_theta_w1(flat, template, theta, w1):
    """log of the joint density of (theta, w1) as a function of the flat params.

    w1 is parameter free; theta | w1 is Gaussian with mean
    mu + C D_alpha (|w1| - b) and covariance C D_kappa^2 C^T.
    """
    from csnvi.vechops import vech_inv, vech_u_inv

    d = template.d
    lu = template.factor.is_lu
    mu = flat[:d]
    lam = flat[d : 2 * d]
    n_l = d * (d + 1) // 2
    l_mat = vech_inv(flat[2 * d : 2 * d + n_l], d)
    u_mat = vech_u_inv(flat[2 * d + n_l :], d) + np.eye(d) if lu else None
    p = SkewParams(mu, FactorForm(l_mat, u_mat), SkewParam("lambda", lam))
    c = p.c
    aux = p.aux
    mean = mu + c @ (aux.alpha * (np.abs(w1) - B))
    cov = (c * aux.kappa**2) @ c.T
    return multivariate_normal.logpdf(theta, mean=mean, cov=cov) + np.sum(norm.logpdf(w1))


def _flat_of(params):
    from csnvi.vechops import vech, vech_u

    blocks = [params.mu, params.lam, vech(params.factor.l)]
    if params.factor.is_lu:
        blocks.append(vech_u(params.factor.u))
    return np.concatenate(blocks)


@pytest.mark.parametrize("lu", [False, True])
def test_score_matches_finite_difference(lu):
    rng = np.random.default_rng(0)
    for d in (1, 2, 3):
        p = random_params(rng, d, lu=lu)
        for _ in range(3):
            w1 = rng.standard_normal(d)
            theta = p.mu + p.c @ rng.standard_normal(d)
            score = score_logq_joint(p, theta, w1).flatten()
            fd = finite_diff(lambda f: _log_joint_theta_w1(f, p, theta, w1), _flat_of(p))
            assert np.max(np.abs(score - fd)) < 1e-5 * max(1.0, np.max(np.abs(fd)))


def test_score_batched_matches_rows():
    rng = np.random.default_rng(1)
    p = random_params(rng, 2, lu=True)
    theta = p.mu + rng.standard_normal((6, 2))
    w1 = rng.standard_normal((6, 2))
    batch = score_logq_joint(p, theta, w1)
    assert batch.shape == (6, 8)
    for k in range(6):
        row = score_logq_joint(p, theta[k], w1[k]).flatten()
        assert np.allclose(batch[k], row, atol=1e-13)


def test_score_has_zero_mean():
    rng = np.random.default_rng(2)
    p = random_params(rng, 2, lam=np.array([1.5, -1.0]))
    n = 200000
    w1 = rng.standard_normal((n, 2))
    w2 = rng.standard_normal((n, 2))
    z = w2 * p.aux.kappa + (np.abs(w1) - B) * p.aux.alpha
    theta = z @ p.c.T + p.mu
    scores = score_logq_joint(p, theta, w1)
    se = scores.std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(scores.mean(axis=0)) < 6 * se)


def test_fisher_oracle_symmetric_positive_definite():
    rng = np.random.default_rng(3)
    for lu in (False, True):
        p = random_params(rng, 3, lu=lu)
        fim = fisher_oracle(p)
        assert np.allclose(fim, fim.T, atol=1e-10)
        assert np.min(np.linalg.eigvalsh(fim)) > 0.0


def test_fisher_oracle_frozen_d1():
    # d = 1, lambda = 0, C = [[1]]: diag(1, 1 - b^2, 2)
    p = SkewParams(np.zeros(1), FactorForm(np.eye(1)), SkewParam("lambda", np.zeros(1)))
    fim = fisher_oracle(p)
    ref = np.diag([1.0, 0.3633802276324186, 2.0])
    assert np.allclose(fim, ref, atol=1e-12)


def test_fisher_oracle_dimension_cap():
    rng = np.random.default_rng(4)
    p = random_params(rng, FISHER_DIM_CAP + 1)
    with pytest.raises(ValueError):
        fisher_oracle(p)


def test_score_covariance_matches_fisher_d1():
    rng = np.random.default_rng(5)
    p = SkewParams(
        np.array([0.2]), FactorForm(np.array([[1.1]])), SkewParam("lambda", np.array([1.3]))
    )
    n = 200000
    w1 = rng.standard_normal((n, 1))
    w2 = rng.standard_normal((n, 1))
    z = w2 * p.aux.kappa + (np.abs(w1) - B) * p.aux.alpha
    theta = z @ p.c.T + p.mu
    scores = score_logq_joint(p, theta, w1)
    centered = scores - scores.mean(axis=0)
    emp = centered.T @ centered / n
    prods = centered[:, :, None] * centered[:, None, :]
    se = prods.std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(emp - fisher_oracle(p)) < 6 * se)
