"""End-to-end acceptance checks.

Each test prints a single PASS/FAIL line for its criterion (bypassing
pytest capture) and then asserts, so the summary is visible in any run.
"""

import json

import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.special import log_ndtr
from scipy.stats import norm

from csnvi.cli import main as cli_main
from csnvi.distribution import (
    entropy,
    log_density,
    marginal_log_density,
    marginal_skewness,
    sample,
    tilted_moments,
)
from csnvi.fisher import fisher_oracle, score_logq_joint
from csnvi.gradients import (
    NoisePair,
    ParamGradient,
    chain_to_alpha_cubed,
    chain_to_lambda_cubed,
    euclidean_grad_estimate,
    naturalize,
)
from csnvi.metrics import DensityGrid, iae_accuracy, mmd_mstar, mmd_null_se
from csnvi.models import (
    normal_sample_model,
    normal_variance_model,
    poisson_glm_model,
    synthetic_generators,
)
from csnvi.optimizer import OptimizerConfig, closed_form_elbo, fit_csn, fit_gaussian
from csnvi.params import FactorForm, SkewParam, SkewParams, skew_from_lambda

B = np.sqrt(2.0 / np.pi)


def announce(capsys, num, name, ok, detail=""):
    tail = f" ({detail})" if detail else ""
    with capsys.disabled():
        print(f"criterion {num:02d} {'PASS' if ok else 'FAIL'}: {name}{tail}")


def _random_params(rng, d, lu, lam_cap=3.0):
    l_mat = np.tril(0.4 * rng.standard_normal((d, d))) + np.diag(0.8 + rng.random(d))
    u_mat = np.eye(d) + np.triu(0.3 * rng.standard_normal((d, d)), 1) if lu else None
    lam = rng.uniform(-lam_cap, lam_cap, size=d)
    return SkewParams(rng.standard_normal(d), FactorForm(l_mat, u_mat), SkewParam("lambda", lam))


def test_criterion_01_natural_gradient_oracle(capsys):
    rng = np.random.default_rng(101)
    worst = 0.0
    for d in (1, 2, 3, 4):
        for lu in (False, True):
            n = 2 * d + d * (d + 1) // 2 + (d * (d - 1) // 2 if lu else 0)
            for _ in range(20):
                p = _random_params(rng, d, lu)
                g = ParamGradient.unflatten(rng.standard_normal(n), d, lu)
                nat = naturalize(g, p).flatten()
                ref = np.linalg.solve(fisher_oracle(p), g.flatten())
                worst = max(worst, float(np.max(np.abs(nat - ref))))
    ok = worst < 1e-8
    announce(capsys, 1, "closed-form natural gradients match the Fisher-inverse oracle", ok,
             f"worst abs diff {worst:.2e}")
    assert ok


def test_criterion_02_score_covariance_matches_fisher(capsys):
    rng = np.random.default_rng(102)
    n = 1_000_000
    ok_all = True
    details = []
    for lu in (False, True):
        p = _random_params(rng, 2, lu, lam_cap=2.0)
        w1 = rng.standard_normal((n, 2))
        w2 = rng.standard_normal((n, 2))
        z = w2 * p.aux.kappa + (np.abs(w1) - B) * p.aux.alpha
        theta = z @ p.c.T + p.mu
        scores = score_logq_joint(p, theta, w1)
        centered = scores - scores.mean(axis=0)
        emp = centered.T @ centered / n
        prods = centered[:, :, None] * centered[:, None, :]
        se = prods.std(axis=0) / np.sqrt(n)
        gap = np.abs(emp - fisher_oracle(p)) / se
        ok_all &= bool(np.all(gap < 4.0))
        details.append(f"{'lu' if lu else 'chol'} max |z|={gap.max():.2f}")
    announce(capsys, 2, "Monte Carlo score covariance matches the Fisher oracle", ok_all,
             "; ".join(details))
    assert ok_all


def test_criterion_03_gradient_unbiasedness_all_parametrizations(capsys):
    model = normal_variance_model(synthetic_generators("normal-variance", 0).y)
    lam0 = -1.0
    p = SkewParams(
        np.array([5.4]), FactorForm(np.array([[0.6]])), SkewParam("lambda", np.array([lam0]))
    )

    def elbo_flat(flat, kind):
        q = SkewParams(
            np.array([flat[0]]),
            FactorForm(np.array([[flat[2]]])),
            SkewParam(kind, np.array([flat[1]])),
        )
        return closed_form_elbo(q, model)

    n = 100_000
    rng = np.random.default_rng(103)
    draws = np.empty((n, 3))
    for k in range(n):
        g = euclidean_grad_estimate(p, model, NoisePair.draw(rng, 1))
        draws[k] = [g.d_mu[0], g.d_skew[0], g.d_vech_l[0]]

    ok_all = True
    details = []
    for kind in ("lambda", "lambda-cubed", "alpha-cubed"):
        mapped = draws.copy()
        if kind == "lambda-cubed":
            mapped[:, 1] = chain_to_lambda_cubed(draws[:, 1], np.full(n, lam0))
        elif kind == "alpha-cubed":
            mapped[:, 1] = chain_to_alpha_cubed(draws[:, 1], p.aux)
        mean = mapped.mean(axis=0)
        se = mapped.std(axis=0, ddof=1) / np.sqrt(n)
        flat0 = np.array([p.mu[0], skew_from_lambda(kind, np.array([lam0]))[0], 0.6])
        fd = np.zeros(3)
        for i in range(3):
            e = np.zeros(3)
            e[i] = 1e-5
            fd[i] = (elbo_flat(flat0 + e, kind) - elbo_flat(flat0 - e, kind)) / 2e-5
        gap = np.abs(mean - fd) / se
        ok_all &= bool(np.all(gap < 4.0))
        details.append(f"{kind} max |z|={gap.max():.2f}")
    announce(capsys, 3, "reparametrization gradients are unbiased in every skew parametrization",
             ok_all, "; ".join(details))
    assert ok_all


def _polished_gaussian_fit(model):
    """Deterministically converged zero-skew fit of the bivariate model."""
    warm = fit_gaussian(
        model, OptimizerConfig(step=0.05, iterations=8000, trace_window=500, seed=0)
    )
    l0 = warm.params.factor.l

    def objective(x):
        l_mat = np.array([[x[2], 0.0], [x[3], x[4]]])
        if x[2] <= 0 or x[4] <= 0:
            return 1e12
        q = SkewParams(x[:2], FactorForm(l_mat), SkewParam("lambda", np.zeros(2)))
        return -closed_form_elbo(q, model)

    x0 = np.array([warm.params.mu[0], warm.params.mu[1], l0[0, 0], l0[1, 0], l0[1, 1]])
    res = minimize(objective, x0, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 5000})
    x = res.x
    return SkewParams(
        x[:2], FactorForm(np.array([[x[2], 0.0], [x[3], x[4]]])), SkewParam("lambda", np.zeros(2))
    )


def test_criterion_04_zero_skew_stationarity_at_gaussian_optimum(capsys):
    model = normal_sample_model(synthetic_generators("normal-sample", 0).y)
    p = _polished_gaussian_fit(model)
    rng = np.random.default_rng(104)
    n = 100_000
    skew_grads = np.empty((n, 2))
    for k in range(n):
        skew_grads[k] = euclidean_grad_estimate(p, model, NoisePair.draw(rng, 2)).d_skew
    mean = skew_grads.mean(axis=0)
    se = skew_grads.std(axis=0, ddof=1) / np.sqrt(n)
    gap = np.abs(mean) / se
    ok = bool(np.all(gap < 4.0))
    announce(capsys, 4, "the skew gradient vanishes at a converged zero-skew optimum", ok,
             f"max |z|={gap.max():.2f}")
    assert ok


def _quadrature_expected_logp(model, p, n_grid=801, span=10.0):
    sd = np.sqrt(np.diag(p.sigma))
    g1 = np.linspace(p.mu[0] - span * sd[0], p.mu[0] + span * sd[0], n_grid)
    g2 = np.linspace(p.mu[1] - span * sd[1], p.mu[1] + span * sd[1], n_grid)
    m1, m2 = np.meshgrid(g1, g2, indexing="ij")
    pts = np.column_stack([m1.ravel(), m2.ravel()])
    vals = np.exp(log_density(p, pts)) * model.log_joint(pts)
    return float(np.trapezoid(np.trapezoid(vals.reshape(m1.shape), g2, axis=1), g1))


def _mc_expected_logp(model, p, n, rng, chunk=100_000):
    total, total_sq, count = 0.0, 0.0, 0
    while count < n:
        m = min(chunk, n - count)
        vals = model.log_joint(sample(p, rng, m))
        total += float(vals.sum())
        total_sq += float((vals**2).sum())
        count += m
    mean = total / n
    var = total_sq / n - mean**2
    return mean, float(np.sqrt(var / n))


def test_criterion_05_closed_form_expected_logp(capsys):
    ns_model = normal_sample_model(synthetic_generators("normal-sample", 0).y)
    ns_params = SkewParams(
        np.array([100.0, 5.2]),
        FactorForm(np.array([[5.0, 0.0], [0.5, 0.6]])),
        SkewParam("lambda", np.array([0.8, -1.2])),
    )
    pg = synthetic_generators("poisson-glmm", 0)
    pois_model = poisson_glm_model(pg.y[:70], pg.x[:70], offset=0.1 * np.ones(70))
    pois_params = SkewParams(
        np.array([-2.0, -1.5]),
        FactorForm(np.array([[0.2, 0.0], [-0.05, 0.15]])),
        SkewParam("lambda", np.array([1.0, -0.7])),
    )
    rng = np.random.default_rng(105)
    ok_all = True
    details = []
    for name, model, p in (("normal-sample", ns_model, ns_params), ("poisson", pois_model, pois_params)):
        closed = model.closed_form_expected_logp(p)
        mc, se = _mc_expected_logp(model, p, 1_000_000, rng)
        quad = _quadrature_expected_logp(model, p)
        z = abs(closed - mc) / se
        qgap = abs(closed - quad)
        ok_all &= z < 4.0 and qgap < 1e-4
        details.append(f"{name} |z|={z:.2f} quad gap={qgap:.1e}")
    announce(capsys, 5, "closed-form expected log joints match Monte Carlo and quadrature",
             ok_all, "; ".join(details))
    assert ok_all


def test_criterion_06_entropy_closed_form(capsys):
    ok_all = True
    worst = 0.0
    for lam in (-3.0, -1.0, 0.0, 1.0, 3.0):
        p = SkewParams(
            np.zeros(1), FactorForm(np.array([[1.0]])), SkewParam("lambda", np.array([lam]))
        )
        x = np.linspace(-14.0, 14.0, 80001)
        lq = log_density(p, x[:, None])
        ref = -float(np.trapezoid(np.exp(lq) * lq, x))
        worst = max(worst, abs(entropy(p) - ref))
    ok_all &= worst < 1e-8
    sym = abs(
        entropy(SkewParams(np.zeros(1), FactorForm(np.eye(1)), SkewParam("lambda", np.array([2.0]))))
        - entropy(SkewParams(np.zeros(1), FactorForm(np.eye(1)), SkewParam("lambda", np.array([-2.0]))))
    )
    ok_all &= sym < 1e-12
    p0 = SkewParams(np.zeros(1), FactorForm(np.array([[1.7]])), SkewParam("lambda", np.zeros(1)))
    gauss_gap = abs(entropy(p0) - (0.5 * (1.0 + np.log(2.0 * np.pi)) + np.log(1.7)))
    ok_all &= gauss_gap < 1e-12
    announce(capsys, 6, "closed-form entropy matches quadrature, symmetry and the Gaussian limit",
             ok_all, f"worst quad gap {worst:.1e}")
    assert ok_all


def test_criterion_07_sampler_matches_closed_form_moments(capsys):
    rng = np.random.default_rng(107)
    p = SkewParams(
        np.array([0.3, -0.5]),
        FactorForm(np.array([[1.0, 0.0], [0.4, 0.8]]), np.array([[1.0, -0.3], [0.0, 1.0]])),
        SkewParam("lambda", np.array([2.0, -1.0])),
    )
    n = 1_000_000
    draws = sample(p, rng, n)
    ok_all = True

    mean = tilted_moments(p, np.zeros(2)).mean
    se_mean = draws.std(axis=0) / np.sqrt(n)
    ok_all &= bool(np.all(np.abs(draws.mean(axis=0) - mean) < 4 * se_mean))

    centered = draws - mean
    emp_cov = centered.T @ centered / n
    prods = centered[:, :, None] * centered[:, None, :]
    se_cov = prods.std(axis=0) / np.sqrt(n)
    ok_all &= bool(np.all(np.abs(emp_cov - p.sigma) < 4 * se_cov))

    for i in range(2):
        x = draws[:, i]
        std_x = x.std()
        scaled = ((x - x.mean()) / std_x) ** 3
        batches = scaled.reshape(100, -1).mean(axis=1)
        se_skew = batches.std(ddof=1) / 10.0
        ok_all &= abs(scaled.mean() - marginal_skewness(p, i)) < 4 * se_skew

    # d = 1 member coincides with the univariate skew normal density
    p1 = SkewParams(
        np.array([1.2]), FactorForm(np.array([[0.7]])), SkewParam("lambda", np.array([2.5]))
    )
    aux = p1.aux
    xi = 1.2 - B * 0.7 * aux.alpha[0]
    omega = 0.7 / aux.tau[0]
    slope = 2.5 * aux.tau[0] / 0.7
    x = np.linspace(-4.0, 6.0, 201)
    ref = np.log(2.0) + norm.logpdf(x, loc=xi, scale=omega) + log_ndtr(slope * (x - xi))
    sn_gap = float(np.max(np.abs(log_density(p1, x[:, None]) - ref)))
    ok_all &= sn_gap < 1e-12

    announce(capsys, 7, "sampler moments and the univariate skew-normal reduction", ok_all,
             f"SN density gap {sn_gap:.1e}")
    assert ok_all


def _posterior_accuracy(model, params):
    """IAE-based accuracy of a d=1 fit against the exact log-variance posterior."""
    center = np.log(model.t_post / model.a_post)
    x = np.linspace(center - 6.0, center + 5.0, 2001)
    gold = DensityGrid(x, np.exp(model.exact_log_posterior(x)))
    fit = DensityGrid(x, np.exp(marginal_log_density(params, 0, x)))
    return iae_accuracy(fit, gold)[1]


def test_criterion_08_skew_fit_beats_gaussian_fit(capsys):
    wins = 0
    details = []
    for seed in range(5):
        model = normal_variance_model(synthetic_generators("normal-variance", seed).y)
        gauss = fit_gaussian(
            model, OptimizerConfig(step=0.02, iterations=8000, trace_window=500, seed=seed)
        )
        csn = fit_csn(
            model,
            OptimizerConfig(step=0.01, iterations=20000, trace_window=500, seed=seed),
            warm_start=gauss,
        )
        e_gauss = closed_form_elbo(gauss.params, model)
        e_csn = closed_form_elbo(csn.params, model)
        acc_gauss = _posterior_accuracy(model, gauss.params)
        acc_csn = _posterior_accuracy(model, csn.params)
        win = e_csn >= e_gauss and acc_csn - acc_gauss >= 3.0
        wins += win
        details.append(f"s{seed}: dELBO={e_csn - e_gauss:+.3f} dacc={acc_csn - acc_gauss:+.1f}pp")
    ok = wins >= 4
    announce(capsys, 8, "the skew fit dominates the Gaussian fit on the variance posterior", ok,
             "; ".join(details))
    assert ok


def test_criterion_09_factor_form_ordering(capsys):
    e_gauss, e_chol, e_lu = [], [], []
    slacks = []
    for seed in range(3):
        model = normal_sample_model(synthetic_generators("normal-sample", seed).y)
        gauss = fit_gaussian(
            model, OptimizerConfig(step=0.05, iterations=8000, trace_window=500, seed=seed)
        )
        cfg = OptimizerConfig(step=0.02, iterations=20000, trace_window=500, seed=seed)
        chol = fit_csn(model, cfg, warm_start=gauss)
        lu = fit_csn(model, cfg, warm_start=gauss, lu=True)
        e_gauss.append(closed_form_elbo(gauss.params, model))
        e_chol.append(closed_form_elbo(chol.params, model))
        e_lu.append(closed_form_elbo(lu.params, model))
        tail = [r.mean_elbo_estimate for r in chol.trace[-10:]]
        slacks.append(np.std(tail))
    slack = float(np.median(slacks))
    med_g, med_c, med_lu = map(lambda v: float(np.median(v)), (e_gauss, e_chol, e_lu))
    ok = med_g <= med_c + slack and med_c <= med_lu + slack
    announce(capsys, 9, "median ELBO ordering Gaussian <= Cholesky skew <= LU skew", ok,
             f"medians {med_g:.4f} / {med_c:.4f} / {med_lu:.4f}, slack {slack:.4f}")
    assert ok


def test_criterion_10_alpha_cubed_recovers_from_adversarial_init(capsys):
    wins = 0
    details = []
    for seed in range(5):
        model = normal_sample_model(synthetic_generators("normal-sample", seed).y)
        gauss = fit_gaussian(
            model, OptimizerConfig(step=0.05, iterations=8000, trace_window=500, seed=seed)
        )
        finals = {}
        slack = 0.0
        for kind in ("alpha-cubed", "lambda"):
            # skew_init +1 points against the negatively skewed target
            cfg = OptimizerConfig(
                step=0.02, iterations=20000, trace_window=500, seed=seed,
                skew_init=1.0, parametrization=kind,
            )
            res = fit_csn(model, cfg, warm_start=gauss)
            finals[kind] = closed_form_elbo(res.params, model)
            if kind == "lambda":
                slack = float(np.std([r.mean_elbo_estimate for r in res.trace[-10:]]))
        win = finals["alpha-cubed"] >= finals["lambda"] - slack
        wins += win
        details.append(f"s{seed}: {finals['alpha-cubed'] - finals['lambda']:+.4f}")
    ok = wins >= 4
    announce(capsys, 10, "cubed-alpha updates escape an adversarial skew initialization", ok,
             "; ".join(details))
    assert ok


def test_criterion_11_metrics_oracles(capsys):
    x = np.linspace(-10.0, 10.0, 4001)
    g0 = DensityGrid(x, norm.pdf(x))
    g5 = DensityGrid(x, norm.pdf(x, loc=0.5))
    iae, _ = iae_accuracy(g0, g5)
    iae_gap = abs(iae - 2.0 * (2.0 * norm.cdf(0.25) - 1.0))
    ok_all = iae_gap < 1e-3

    rng = np.random.default_rng(111)
    a = rng.standard_normal((200, 2))
    _, m_star = mmd_mstar(a, a.copy())
    ok_all &= abs(m_star - (-np.log(1e-5))) < 1e-9

    violations = 0
    for _ in range(50):
        s1 = rng.standard_normal((200, 1))
        s2 = rng.standard_normal((200, 1))
        mmd, _ = mmd_mstar(s1, s2)
        if abs(mmd) >= 4.0 * mmd_null_se(s1, s2):
            violations += 1
    ok_all &= violations == 0
    announce(capsys, 11, "metric oracles: shifted-normal IAE, identical-set M*, null MMD", ok_all,
             f"IAE gap {iae_gap:.1e}, null violations {violations}/50")
    assert ok_all


def test_criterion_12_rerun_determinism(capsys, tmp_path):
    y = synthetic_generators("normal-variance", 0).y
    data = tmp_path / "data.csv"
    data.write_text("y\n" + "\n".join(f"{v:.17g}" for v in y) + "\n")
    config = tmp_path / "config.toml"
    config.write_text(
        f"""
seed = 5

[model]
kind = "normal-variance"
data = "{data}"

[fit]
family = "csn-cholesky"
step = 0.02
iterations = 3000
trace_window = 500
"""
    )
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    code1 = cli_main(["fit", "--config", str(config), "--out", str(out1)])
    code2 = cli_main(["fit", "--config", str(config), "--out", str(out2)])
    same_trace = (out1 / "trace.csv").read_bytes() == (out2 / "trace.csv").read_bytes()
    same_params = (out1 / "params.json").read_bytes() == (out2 / "params.json").read_bytes()
    ok = code1 == 0 and code2 == 0 and same_trace and same_params
    announce(capsys, 12, "identical configuration and seed reproduce byte-identical outputs", ok)
    assert ok
