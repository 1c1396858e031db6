"""ELBO gradient machinery: reparametrized estimates, skewness chain rules
and closed-form natural gradients for both factor forms."""

from dataclasses import dataclass

import numpy as np

from .distribution import grad_theta_log_density
from .params import DomainError, SkewParams
from .special import B
from .vechops import lower_part, upper_part, vech, vech_inv, vech_u, vech_u_inv


@dataclass(frozen=True)
class NoisePair:
    """Base randomness for one reparametrized draw."""

    w1: np.ndarray
    w2: np.ndarray

    @classmethod
    def draw(cls, rng: np.random.Generator, d: int):
        return cls(w1=rng.standard_normal(d), w2=rng.standard_normal(d))

    @property
    def w1_tilde(self):
        return np.abs(self.w1) - B


@dataclass
class ParamGradient:
    """Gradient blocks aligned with the SkewParams layout.

    The skew block is always expressed with respect to lambda; chain
    rules map it into the cubed parametrizations.
    """

    d_mu: np.ndarray
    d_skew: np.ndarray
    d_vech_l: np.ndarray
    d_vech_u: np.ndarray | None = None

    def flatten(self):
        blocks = [self.d_mu, self.d_skew, self.d_vech_l]
        if self.d_vech_u is not None:
            blocks.append(self.d_vech_u)
        return np.concatenate(blocks)

    @classmethod
    def unflatten(cls, vec, d, lu):
        vec = np.asarray(vec, dtype=float)
        n_l = d * (d + 1) // 2
        n_u = d * (d - 1) // 2 if lu else 0
        if vec.size != 2 * d + n_l + n_u:
            raise ValueError(f"flat gradient has size {vec.size}, expected {2 * d + n_l + n_u}")
        mu, skew, rest = vec[:d], vec[d : 2 * d], vec[2 * d :]
        return cls(
            d_mu=np.asarray(mu, dtype=float),
            d_skew=np.asarray(skew, dtype=float),
            d_vech_l=np.asarray(rest[:n_l], dtype=float),
            d_vech_u=np.asarray(rest[n_l : n_l + n_u], dtype=float) if lu else None,
        )


def reparam_draw(params: SkewParams, noise: NoisePair):
    """theta = C(D_kappa w2 + D_alpha w1~) + mu."""
    z = params.aux.kappa * noise.w2 + params.aux.alpha * noise.w1_tilde
    return params.c @ z + params.mu


def euclidean_grad_estimate(params: SkewParams, model, noise: NoisePair) -> ParamGradient:
    """Single-draw unbiased reparametrization gradient of the ELBO.

    h(theta) = log p(y, theta) - log q(theta); only the pathwise term
    appears since the direct score has zero expectation.
    """
    aux = params.aux
    z = aux.kappa * noise.w2 + aux.alpha * noise.w1_tilde
    theta = params.c @ z + params.mu
    grad_h = model.grad_log_joint(theta) - grad_theta_log_density(params, theta)
    w3 = (noise.w1_tilde - (1.0 - B**2) * params.lam * noise.w2) * (params.c.T @ grad_h)
    d_lambda = aux.kappa**3 * w3
    if params.factor.is_lu:
        outer = np.outer(grad_h, z)
        return ParamGradient(
            d_mu=grad_h,
            d_skew=d_lambda,
            d_vech_l=vech(outer @ params.factor.u.T),
            d_vech_u=vech_u(params.factor.l.T @ outer),
        )
    return ParamGradient(d_mu=grad_h, d_skew=d_lambda, d_vech_l=vech(np.outer(grad_h, z)))


def chain_to_alpha_cubed(grad_lambda, aux):
    """Map a lambda-gradient to the cubed-alpha parametrization."""
    jac = 3.0 * aux.alpha**2 * aux.kappa**3
    if np.any(np.abs(aux.alpha) < 1e-12):
        bad = int(np.argmax(np.abs(aux.alpha) < 1e-12))
        raise DomainError(
            f"alpha component {bad} is zero: the cubed-alpha chain rule is singular there"
        )
    return np.asarray(grad_lambda, dtype=float) / jac


def chain_to_lambda_cubed(grad_lambda, lam):
    lam = np.asarray(lam, dtype=float)
    if np.any(np.abs(lam) < 1e-12):
        bad = int(np.argmax(np.abs(lam) < 1e-12))
        raise DomainError(
            f"lambda component {bad} is zero: the cubed-lambda chain rule is singular there"
        )
    return np.asarray(grad_lambda, dtype=float) / (3.0 * lam**2)


def natural_chain_alpha_cubed(nat_grad_lambda, aux):
    """Natural gradients transform covariantly: multiply by the Jacobian."""
    return 3.0 * aux.alpha**2 * aux.kappa**3 * np.asarray(nat_grad_lambda, dtype=float)


def natural_chain_lambda_cubed(nat_grad_lambda, lam):
    return 3.0 * np.asarray(lam, dtype=float) ** 2 * np.asarray(nat_grad_lambda, dtype=float)


def _kappa_sq_matrix(kappa, d):
    """K = kappa^2 1^T (column of kappa^2 copied across columns)."""
    return np.broadcast_to((kappa**2)[:, None], (d, d)).copy()


def natural_grad_cholesky(grad: ParamGradient, params: SkewParams) -> ParamGradient:
    if params.factor.is_lu:
        raise ValueError("params use the LU form; call natural_grad_lu")
    d = params.d
    c = params.factor.l
    aux = params.aux
    lam = params.lam
    kappa = aux.kappa
    k_mat = _kappa_sq_matrix(kappa, d)
    g = lower_part(c.T @ vech_inv(grad.d_vech_l, d))
    a1 = np.diag(0.5 * aux.alpha * kappa * grad.d_skew) + g * (k_mat - np.diag(0.5 * kappa**4))
    nat_mu = (c * kappa**2) @ (c.T @ grad.d_mu)
    nat_lambda = grad.d_skew / ((1.0 - B**2) * (2.0 * kappa**2 - kappa**4)) + (
        lam / (2.0 - kappa**2)
    ) * np.diag(a1)
    return ParamGradient(d_mu=nat_mu, d_skew=nat_lambda, d_vech_l=vech(c @ a1))


def natural_grad_lu(grad: ParamGradient, params: SkewParams) -> ParamGradient:
    if not params.factor.is_lu:
        raise ValueError("params use the Cholesky form; call natural_grad_cholesky")
    if grad.d_vech_u is None:
        raise ValueError("LU natural gradient needs the vech_u(U) block")
    d = params.d
    l_mat, u_mat = params.factor.l, params.factor.u
    c = params.c
    aux = params.aux
    lam = params.lam
    kappa = aux.kappa
    k_mat = _kappa_sq_matrix(kappa, d)
    u_inv = np.linalg.inv(u_mat)

    g = lower_part(l_mat.T @ vech_inv(grad.d_vech_l, d))
    f = upper_part(u_mat.T @ vech_u_inv(grad.d_vech_u, d))
    a_mat = np.diag(1.0 / (2.0 - kappa**2)) + lower_part(1.0 / k_mat) - upper_part(k_mat).T
    a2 = vech_inv(1.0 / vech(a_mat), d)

    lam_term = np.diag(lam / (2.0 - kappa**2) * grad.d_skew)
    h = a2 * (
        u_mat.T @ (g - lower_part(u_inv.T @ f @ u_mat.T)) @ u_inv.T
        + lam_term
        - (k_mat * f).T
    )
    script_g = u_mat @ h @ u_inv

    nat_mu = (c * kappa**2) @ (c.T @ grad.d_mu)
    nat_lambda = grad.d_skew / ((1.0 - B**2) * (2.0 * kappa**2 - kappa**4)) + (
        lam / (2.0 - kappa**2)
    ) * np.diag(h)
    nat_vech_l = vech(l_mat @ lower_part(script_g))
    nat_vech_u = vech_u(u_mat @ (upper_part(k_mat) * (f - h.T)) + upper_part(script_g) @ u_mat)
    return ParamGradient(d_mu=nat_mu, d_skew=nat_lambda, d_vech_l=nat_vech_l, d_vech_u=nat_vech_u)


def naturalize(grad: ParamGradient, params: SkewParams) -> ParamGradient:
    if params.factor.is_lu:
        return natural_grad_lu(grad, params)
    return natural_grad_cholesky(grad, params)


def euclidean_grad_blocks(blocks, model, noises):
    """Blockwise gradient estimate for a mean-field product of factors.

    blocks and noises are parallel lists; the joint draw is the
    concatenation of per-block draws, and each block's gradient uses its
    slice of grad h(theta) since log q separates over blocks.
    """
    zs = [
        p.aux.kappa * nz.w2 + p.aux.alpha * nz.w1_tilde for p, nz in zip(blocks, noises)
    ]
    theta = np.concatenate([p.c @ z + p.mu for p, z in zip(blocks, zs)])
    grad_full = model.grad_log_joint(theta)
    grads = []
    start = 0
    for p, z, nz in zip(blocks, zs, noises):
        sl = slice(start, start + p.d)
        start += p.d
        theta_k = p.c @ z + p.mu
        g = grad_full[sl] - grad_theta_log_density(p, theta_k)
        w3 = (nz.w1_tilde - (1.0 - B**2) * p.lam * nz.w2) * (p.c.T @ g)
        d_lambda = p.aux.kappa**3 * w3
        if p.factor.is_lu:
            outer = np.outer(g, z)
            grads.append(
                ParamGradient(
                    d_mu=g,
                    d_skew=d_lambda,
                    d_vech_l=vech(outer @ p.factor.u.T),
                    d_vech_u=vech_u(p.factor.l.T @ outer),
                )
            )
        else:
            grads.append(ParamGradient(d_mu=g, d_skew=d_lambda, d_vech_l=vech(np.outer(g, z))))
    return grads, theta
