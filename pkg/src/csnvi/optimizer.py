"""Stochastic gradient ascent on the ELBO.

Euclidean gradients are stepped with Adam; natural gradients use a
constant stepsize. Runs are deterministic given (config, seed): the
loop is single threaded and draws all randomness from one generator.
"""

import time
from dataclasses import dataclass

import numpy as np

from .distribution import entropy, log_density, sample
from .gradients import (
    NoisePair,
    chain_to_alpha_cubed,
    chain_to_lambda_cubed,
    euclidean_grad_blocks,
    natural_chain_alpha_cubed,
    natural_chain_lambda_cubed,
    naturalize,
)
from .models import blockwise_log_density, BlockStructure
from .params import (
    ALPHA_CUBED,
    LAMBDA,
    LAMBDA_CUBED,
    FactorForm,
    SkewParam,
    SkewParams,
    clip_alpha_cubed,
    lambda_from_skew,
    skew_from_lambda,
)
from .vechops import vech, vech_inv, vech_u, vech_u_inv

# coordinates closer to the origin than this use the plain-lambda chain
# because the cubed reparametrizations have a singular Jacobian there
SKEW_CHAIN_EPS = 1e-4


class NumericalAbort(RuntimeError):
    """Optimization hit a non-finite gradient; carries a parameter snapshot."""

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot


@dataclass(frozen=True)
class OptimizerConfig:
    mode: str = "euclidean-adam"  # or "natural-constant"
    step: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    iterations: int = 50000
    mc_samples_per_step: int = 1
    trace_window: int = 1000
    seed: int = 0
    skew_init: float = 1.0
    parametrization: str = LAMBDA
    plateau_stop: bool = False
    plateau_rel_tol: float = 1e-4
    plateau_windows: int = 5

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.trace_window < 1:
            raise ValueError("trace_window must be >= 1")
        if self.mode not in ("euclidean-adam", "natural-constant"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.parametrization not in (LAMBDA, LAMBDA_CUBED, ALPHA_CUBED):
            raise ValueError(f"unknown parametrization {self.parametrization!r}")


@dataclass(frozen=True)
class TraceRecord:
    window_index: int
    mean_elbo_estimate: float
    wall_time: float
    skew_snapshot: np.ndarray
    parameter_snapshot: object = None


@dataclass
class FitResult:
    params: object  # SkewParams, or list of SkewParams for mean-field fits
    final_elbo: float
    trace: list
    iterations: int
    converged: bool

    def to_dict(self):
        blocks = self.params if isinstance(self.params, list) else [self.params]
        return {
            "params": [p.to_dict() for p in blocks],
            "meanfield": isinstance(self.params, list),
            "final_elbo": self.final_elbo,
            "iterations": self.iterations,
            "converged": self.converged,
        }


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def adam_step(state: AdamState, grad, step, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns the new state and the update."""
    grad = np.asarray(grad, dtype=float)
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad**2
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    update = step * m_hat / (np.sqrt(v_hat) + eps)
    return AdamState(m=m, v=v, t=t), update


@dataclass
class _BlockState:
    mu: np.ndarray
    vech_l: np.ndarray
    vech_u: np.ndarray | None
    skew: np.ndarray  # values in the configured parametrization
    kind: str
    d: int

    def params(self):
        l_mat = vech_inv(self.vech_l, self.d)
        u_mat = None
        if self.vech_u is not None:
            u_mat = vech_u_inv(self.vech_u, self.d) + np.eye(self.d)
        return SkewParams(self.mu, FactorForm(l_mat, u_mat), SkewParam(self.kind, self.skew))

    @classmethod
    def from_params(cls, p: SkewParams):
        return cls(
            mu=p.mu.copy(),
            vech_l=vech(p.factor.l),
            vech_u=vech_u(p.factor.u) if p.factor.is_lu else None,
            skew=p.skew.values.copy(),
            kind=p.skew.kind,
            d=p.d,
        )


def _skew_grad_in_parametrization(d_lambda, params, kind, natural):
    """Map a lambda-block gradient into the update parametrization.

    Near-singular coordinates of the cubed chains fall back to a plain
    lambda update; the returned mask marks them.
    """
    lam = params.lam
    aux = params.aux
    if kind == LAMBDA:
        return d_lambda, np.zeros(lam.size, dtype=bool)
    if kind == LAMBDA_CUBED:
        singular = np.abs(lam) < SKEW_CHAIN_EPS
    else:
        singular = np.abs(aux.alpha) < SKEW_CHAIN_EPS
    out = np.empty_like(d_lambda)
    if kind == LAMBDA_CUBED:
        if natural:
            full = natural_chain_lambda_cubed(d_lambda, np.where(singular, 1.0, lam))
        else:
            full = chain_to_lambda_cubed(d_lambda, np.where(singular, 1.0, lam))
    else:
        safe_alpha = np.where(singular, 1.0, aux.alpha)
        safe_kappa = np.where(singular, 1.0, aux.kappa)
        jac = 3.0 * safe_alpha**2 * safe_kappa**3
        full = d_lambda * jac if natural else d_lambda / jac
    out[:] = np.where(singular, d_lambda, full)
    return out, singular


def _apply_skew_update(state: _BlockState, update, singular):
    """Step the skew block; singular coordinates move in lambda space."""
    new_vals = state.skew + update
    if np.any(singular):
        lam = lambda_from_skew(state.kind, state.skew)
        lam_stepped = lam + update
        converted = skew_from_lambda(state.kind, lam_stepped)
        new_vals = np.where(singular, converted, new_vals)
    if state.kind == ALPHA_CUBED:
        new_vals = clip_alpha_cubed(new_vals)
    state.skew = new_vals


def _fit_blocks(blocks, model, config: OptimizerConfig, update_skew, snapshot_every=None):
    rng = np.random.default_rng(config.seed)
    states = [_BlockState.from_params(p) for p in blocks]
    use_adam = config.mode == "euclidean-adam"
    natural = config.mode == "natural-constant"
    adam = None
    if use_adam:
        adam = []
        for st in states:
            n = st.mu.size + st.skew.size + st.vech_l.size + (
                st.vech_u.size if st.vech_u is not None else 0
            )
            adam.append(AdamState(m=np.zeros(n), v=np.zeros(n)))

    trace = []
    window_sum = 0.0
    window_count = 0
    t0 = time.perf_counter()
    converged = False
    iterations_run = 0

    for it in range(config.iterations):
        params = [st.params() for st in states]
        mu_updates = [np.zeros(st.mu.size) for st in states]
        skew_updates = [np.zeros(st.skew.size) for st in states]
        l_updates = [np.zeros(st.vech_l.size) for st in states]
        u_updates = [
            np.zeros(st.vech_u.size) if st.vech_u is not None else None for st in states
        ]
        singular_masks = [None] * len(states)
        elbo_acc = 0.0
        for _ in range(config.mc_samples_per_step):
            noises = [NoisePair.draw(rng, p.d) for p in params]
            grads, theta = euclidean_grad_blocks(params, model, noises)
            start = 0
            logq = 0.0
            for p in params:
                logq += log_density(p, theta[start : start + p.d])
                start += p.d
            elbo_acc += float(model.log_joint(theta)) - float(logq)
            for k, (p, g) in enumerate(zip(params, grads)):
                if not np.all(np.isfinite(g.flatten())):
                    raise NumericalAbort(
                        f"non-finite gradient at iteration {it}",
                        snapshot=[q.to_dict() for q in params],
                    )
                if natural:
                    g = naturalize(g, p)
                d_skew, singular = _skew_grad_in_parametrization(
                    g.d_skew, p, states[k].kind, natural
                )
                singular_masks[k] = singular
                mu_updates[k] += g.d_mu
                skew_updates[k] += d_skew
                l_updates[k] += g.d_vech_l
                if g.d_vech_u is not None:
                    u_updates[k] += g.d_vech_u
        scale = 1.0 / config.mc_samples_per_step
        elbo_est = elbo_acc * scale
        for k, st in enumerate(states):
            if not update_skew:
                skew_updates[k][:] = 0.0
            parts = [mu_updates[k] * scale, skew_updates[k] * scale, l_updates[k] * scale]
            if st.vech_u is not None:
                parts.append(u_updates[k] * scale)
            flat_grad = np.concatenate(parts)
            if use_adam:
                adam[k], upd = adam_step(
                    adam[k],
                    flat_grad,
                    config.step,
                    beta1=config.adam_beta1,
                    beta2=config.adam_beta2,
                    eps=config.adam_eps,
                )
            else:
                upd = config.step * flat_grad
            i0 = 0
            st.mu = st.mu + upd[i0 : i0 + st.mu.size]
            i0 += st.mu.size
            if update_skew:
                _apply_skew_update(st, upd[i0 : i0 + st.skew.size], singular_masks[k])
            i0 += st.skew.size
            st.vech_l = st.vech_l + upd[i0 : i0 + st.vech_l.size]
            i0 += st.vech_l.size
            if st.vech_u is not None:
                st.vech_u = st.vech_u + upd[i0:]

        window_sum += elbo_est
        window_count += 1
        iterations_run = it + 1
        if window_count == config.trace_window:
            idx = len(trace)
            snap = None
            if snapshot_every and (idx % snapshot_every == 0):
                snap = [st.params() for st in states]
            trace.append(
                TraceRecord(
                    window_index=idx,
                    mean_elbo_estimate=window_sum / window_count,
                    wall_time=time.perf_counter() - t0,
                    skew_snapshot=np.concatenate([st.skew for st in states]),
                    parameter_snapshot=snap,
                )
            )
            window_sum = 0.0
            window_count = 0
            if config.plateau_stop and len(trace) > config.plateau_windows:
                recent = [r.mean_elbo_estimate for r in trace[-config.plateau_windows - 1 :]]
                denom = max(1.0, abs(recent[0]))
                if abs(recent[-1] - recent[0]) / denom < config.plateau_rel_tol:
                    converged = True
                    break

    final_params = [st.params() for st in states]
    final_elbo = trace[-1].mean_elbo_estimate if trace else float("nan")
    return final_params, trace, final_elbo, iterations_run, converged


def _default_init(model, lu, parametrization):
    d = model.dim
    loc = model.init_location() if hasattr(model, "init_location") else np.zeros(d)
    return SkewParams(
        np.asarray(loc, dtype=float),
        FactorForm(np.eye(d), np.eye(d) if lu else None),
        SkewParam(parametrization, np.zeros(d)),
    )


def _warm_started_init(warm, config: OptimizerConfig, lu):
    """Take (mu, factor) from a previous fit; inject skew in lambda space."""
    base = warm.params if isinstance(warm, FitResult) else warm
    d = base.d
    skew_lam = np.broadcast_to(np.asarray(config.skew_init, dtype=float), (d,))
    skew = SkewParam(config.parametrization, skew_from_lambda(config.parametrization, skew_lam))
    if lu and not base.factor.is_lu:
        factor = FactorForm(base.factor.l.copy(), np.eye(d))
    elif not lu and base.factor.is_lu:
        factor = FactorForm(np.linalg.cholesky(base.sigma))
    else:
        factor = base.factor
    return SkewParams(base.mu.copy(), factor, skew)


def fit_csn(model, config: OptimizerConfig, warm_start=None, lu=False, init=None):
    """Fit the skew family to a target model by stochastic gradient ascent."""
    if init is not None:
        start = init
    elif warm_start is not None:
        start = _warm_started_init(warm_start, config, lu)
    else:
        base = _default_init(model, lu, config.parametrization)
        d = model.dim
        skew_lam = np.broadcast_to(np.asarray(config.skew_init, dtype=float), (d,))
        start = SkewParams(
            base.mu,
            base.factor,
            SkewParam(config.parametrization, skew_from_lambda(config.parametrization, skew_lam)),
        )
    params, trace, final_elbo, iters, converged = _fit_blocks(
        [start], model, config, update_skew=True
    )
    return FitResult(
        params=params[0], final_elbo=final_elbo, trace=trace, iterations=iters, converged=converged
    )


def fit_gaussian(model, config: OptimizerConfig, lu=False, init=None):
    """Same loop with the skew block pinned at zero."""
    if init is None:
        init = _default_init(model, lu, LAMBDA)
    params, trace, final_elbo, iters, converged = _fit_blocks(
        [init], model, config, update_skew=False
    )
    return FitResult(
        params=params[0], final_elbo=final_elbo, trace=trace, iterations=iters, converged=converged
    )


def fit_csn_meanfield(model, blocks, config: OptimizerConfig):
    """Blockwise fit for a mean-field product family; blocks give the init."""
    params, trace, final_elbo, iters, converged = _fit_blocks(
        list(blocks), model, config, update_skew=True
    )
    return FitResult(
        params=params, final_elbo=final_elbo, trace=trace, iterations=iters, converged=converged
    )


def elbo_estimate(params, model, n_samples, rng):
    """Monte Carlo ELBO: mean and standard error of h over fresh draws."""
    if isinstance(params, list):
        structure = BlockStructure(tuple(p.d for p in params))
        draws = np.concatenate([sample(p, rng, n_samples) for p in params], axis=1)
        h = model.log_joint(draws) - blockwise_log_density(params, structure, draws)
    else:
        draws = sample(params, rng, n_samples)
        h = model.log_joint(draws) - log_density(params, draws)
    return float(np.mean(h)), float(np.std(h, ddof=1) / np.sqrt(n_samples))


def closed_form_elbo(params, model):
    """Exact ELBO when the model has an analytic E_q{log p}; else None."""
    expected = model.closed_form_expected_logp(params)
    if expected is None:
        return None
    return expected + entropy(params)
