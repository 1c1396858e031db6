"""Batch command-line front end.

Subcommands: fit, sample, density, metrics, check. Configuration is a
single TOML document; all data files are headered CSV with '.' decimals.
Exit codes: 0 ok, 2 config error, 3 data error, 4 numerical abort.
"""

import argparse
import json
import os
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import models as model_zoo
from .distribution import (
    MARGINAL_EXACT_DIM_CAP,
    UnsupportedDimensionError,
    entropy,
    marginal_log_density,
    sample,
    tilted_moments,
)
from .fisher import fisher_oracle
from .gradients import ParamGradient, naturalize
from .metrics import DensityGrid, iae_accuracy, mmd_mstar
from .optimizer import (
    NumericalAbort,
    OptimizerConfig,
    closed_form_elbo,
    fit_csn,
    fit_gaussian,
)
from .params import FactorForm, SkewParam, SkewParams

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

FAMILIES = ("gaussian", "csn-cholesky", "csn-lu")


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


def _fmt(x):
    return format(float(x), ".17g")


def _read_csv(path):
    if not os.path.exists(path):
        raise DataError(f"data file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header:
            raise DataError(f"empty data file: {path}")
        names = [c.strip() for c in header.split(",")]
        try:
            body = np.loadtxt(fh, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise DataError(f"malformed numeric data in {path}: {exc}") from None
    if body.size == 0:
        body = np.zeros((0, len(names)))
    if body.shape[1] != len(names):
        raise DataError(f"{path}: header lists {len(names)} columns, rows have {body.shape[1]}")
    return {name: body[:, j] for j, name in enumerate(names)}


def _cols(table, prefix):
    names = sorted(
        (n for n in table if n == prefix or (n.startswith(prefix) and n[len(prefix):].isdigit())),
        key=lambda n: (len(n), n),
    )
    if not names:
        return None
    return np.column_stack([table[n] for n in names])


def _build_model(cfg):
    try:
        kind = cfg["kind"]
        data_path = cfg["data"]
    except KeyError as exc:
        raise ConfigError(f"model section is missing key {exc}") from None
    table = _read_csv(data_path)

    def need(name):
        arr = _cols(table, name)
        if arr is None:
            raise DataError(f"{data_path} lacks required column(s) '{name}'")
        return arr

    if kind == "normal-sample":
        return model_zoo.normal_sample_model(
            need("y").ravel(),
            a0=cfg.get("a0", 0.01),
            b0=cfg.get("b0", 0.01),
            sigma0_sq=cfg.get("sigma0_sq", 1e4),
        )
    if kind == "normal-variance":
        return model_zoo.normal_variance_model(
            need("y").ravel(), a0=cfg.get("a0", 0.01), b0=cfg.get("b0", 0.01)
        )
    if kind == "poisson-glm":
        offset = _cols(table, "offset")
        return model_zoo.poisson_glm_model(
            need("y").ravel(),
            need("x"),
            offset=offset.ravel() if offset is not None else None,
            sigma0_sq=cfg.get("sigma0_sq", 100.0),
        )
    if kind == "logistic":
        n_trials = _cols(table, "n_trials")
        return model_zoo.logistic_model(
            need("y").ravel(),
            n_trials.ravel() if n_trials is not None else 1.0,
            need("x"),
            sigma0_sq=cfg.get("sigma0_sq", 100.0),
        )
    if kind == "zinb":
        return model_zoo.zinb_model(
            need("y").ravel(), need("x"), need("z"), sigma0_sq=cfg.get("sigma0_sq", 100.0)
        )
    if kind == "weibull":
        return model_zoo.weibull_survival_model(
            need("t").ravel(),
            need("event").ravel(),
            need("x"),
            need("z"),
            sigma0_sq=cfg.get("sigma0_sq", 100.0),
        )
    if kind == "glmm":
        return model_zoo.glmm_model(
            need("y").ravel(),
            need("x"),
            need("z"),
            need("group").ravel().astype(int),
            link=cfg.get("link", "logit"),
            sigma_beta=cfg.get("sigma_beta", 10.0),
            sigma_zeta=cfg.get("sigma_zeta", 10.0),
        )
    raise ConfigError(f"unknown model kind {kind!r}")


def _optimizer_config(section, seed):
    known = {
        "mode",
        "step",
        "adam_beta1",
        "adam_beta2",
        "adam_eps",
        "iterations",
        "mc_samples_per_step",
        "trace_window",
        "skew_init",
        "parametrization",
        "plateau_stop",
        "plateau_rel_tol",
        "plateau_windows",
    }
    extra = set(section) - known - {"family", "warm_start_iterations"}
    if extra:
        raise ConfigError(f"unknown optimizer option(s): {sorted(extra)}")
    kwargs = {k: v for k, v in section.items() if k in known}
    try:
        return OptimizerConfig(seed=seed, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def cmd_fit(args):
    with open(args.config, "rb") as fh:
        cfg = tomllib.load(fh)
    out_dir = args.out or cfg.get("output", {}).get("dir", ".")
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    fit_section = cfg.get("fit", {})
    family = fit_section.get("family", "csn-cholesky")
    if family not in FAMILIES:
        raise ConfigError(f"family must be one of {FAMILIES}, got {family!r}")
    model = _build_model(cfg.get("model", {}))
    opt = _optimizer_config(fit_section, seed)

    os.makedirs(out_dir, exist_ok=True)
    if family == "gaussian":
        result = fit_gaussian(model, opt)
    else:
        lu = family == "csn-lu"
        warm_iters = int(fit_section.get("warm_start_iterations", 0))
        warm = None
        if warm_iters > 0:
            warm_cfg = OptimizerConfig(
                mode=opt.mode,
                step=opt.step,
                iterations=warm_iters,
                trace_window=opt.trace_window,
                seed=seed,
            )
            warm = fit_gaussian(model, warm_cfg)
        result = fit_csn(model, opt, warm_start=warm, lu=lu)

    with open(os.path.join(out_dir, "params.json"), "w", encoding="utf-8") as fh:
        json.dump(result.to_dict(), fh, indent=2)
    with open(os.path.join(out_dir, "trace.csv"), "w", encoding="utf-8") as fh:
        fh.write("window,elbo,time,skew-norm\n")
        # the time column counts iterations so reruns with the same seed
        # produce byte-identical traces; wall time lives in meta.json
        for rec in result.trace:
            skew_norm = float(np.linalg.norm(rec.skew_snapshot))
            iters_done = (rec.window_index + 1) * opt.trace_window
            fh.write(
                f"{rec.window_index},{_fmt(rec.mean_elbo_estimate)},"
                f"{iters_done},{_fmt(skew_norm)}\n"
            )
    meta = {
        "config_file": os.path.abspath(args.config),
        "config": cfg,
        "seed": seed,
        "family": family,
        "versions": {
            "python": sys.version.split()[0],
            "numpy": np.__version__,
        },
        "threads": os.environ.get("CSNVI_THREADS", "1"),
        "elapsed_seconds": result.trace[-1].wall_time if result.trace else 0.0,
    }
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
    print(f"fit complete: final windowed ELBO {result.final_elbo:.6f}")
    return EXIT_OK


def _load_params(path):
    if not os.path.exists(path):
        raise DataError(f"params file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    blocks = [SkewParams.from_dict(p) for p in payload["params"]]
    return blocks if payload.get("meanfield") else blocks[0]


def cmd_sample(args):
    params = _load_params(args.params)
    blocks = params if isinstance(params, list) else [params]
    d = sum(p.d for p in blocks)
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    n = args.n
    if n < 0:
        raise ConfigError("n must be >= 0")
    draws = (
        np.concatenate([sample(p, rng, n) for p in blocks], axis=1)
        if n > 0
        else np.zeros((0, d))
    )
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "samples.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(f"theta{j + 1}" for j in range(d)) + "\n")
        for row in draws:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    print(f"wrote {n} draws to {path}")
    return EXIT_OK


def _parse_grid(spec):
    parts = spec.split(":")
    if len(parts) != 3:
        raise ConfigError("grid spec must be lo:hi:points")
    lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    if hi <= lo or n < 2:
        raise ConfigError("grid spec needs hi > lo and points >= 2")
    return np.linspace(lo, hi, n)


def cmd_density(args):
    params = _load_params(args.params)
    if isinstance(params, list):
        raise ConfigError("density grids are for dense fits; sample mean-field fits instead")
    if not 0 <= args.coordinate < params.d:
        raise ConfigError(f"coordinate {args.coordinate} out of range for d={params.d}")
    grid = _parse_grid(args.grid)
    try:
        values = np.exp(marginal_log_density(params, args.coordinate, grid))
    except UnsupportedDimensionError as exc:
        raise ConfigError(str(exc)) from None
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "density.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,density\n")
        for x, v in zip(grid, np.atleast_1d(values)):
            fh.write(f"{_fmt(x)},{_fmt(v)}\n")
    print(f"wrote density grid to {path}")
    return EXIT_OK


def _load_matrix(path):
    table = _read_csv(path)
    return np.column_stack(list(table.values()))


def cmd_metrics(args):
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "metrics.json")
    if args.samples_a and args.samples_b:
        a = _load_matrix(args.samples_a)
        b = _load_matrix(args.samples_b)
        if a.shape[1] != b.shape[1]:
            raise DataError(
                f"sample sets have {a.shape[1]} and {b.shape[1]} columns; they must match"
            )
        mmd, m_star = mmd_mstar(a, b, bandwidth=args.bandwidth)
        from .metrics import median_heuristic_bandwidth

        bw = args.bandwidth if args.bandwidth is not None else median_heuristic_bandwidth(a, b)
        payload = {"mmd": mmd, "m_star": m_star, "bandwidth": bw}
    elif args.grid_a and args.grid_b:
        ga = _load_matrix(args.grid_a)
        gb = _load_matrix(args.grid_b)
        if ga.shape[1] != 2 or gb.shape[1] != 2:
            raise DataError("grid files must have exactly two columns: x,density")
        iae, acc = iae_accuracy(
            DensityGrid(ga[:, 0], ga[:, 1]), DensityGrid(gb[:, 0], gb[:, 1])
        )
        payload = {"iae": iae, "accuracy_percent": acc}
    else:
        raise ConfigError("provide either --samples-a/--samples-b or --grid-a/--grid-b")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    print(json.dumps(payload))
    return EXIT_OK


def _check_battery(quick, seed):
    rng = np.random.default_rng(seed)
    rows = []

    def record(name, ok):
        rows.append((name, bool(ok)))

    dims = (1, 2) if quick else (1, 2, 3, 4)
    for d in dims:
        for lu in (False, True):
            l_mat = np.tril(rng.standard_normal((d, d))) + np.diag(1.5 + rng.random(d))
            u_mat = np.triu(rng.standard_normal((d, d)), 1) * 0.3 + np.eye(d) if lu else None
            p = SkewParams(
                rng.standard_normal(d),
                FactorForm(l_mat, u_mat),
                SkewParam("lambda", rng.standard_normal(d)),
            )
            n_par = 2 * d + d * (d + 1) // 2 + (d * (d - 1) // 2 if lu else 0)
            g = ParamGradient.unflatten(rng.standard_normal(n_par), d, lu)
            nat = naturalize(g, p).flatten()
            ref = np.linalg.solve(fisher_oracle(p), g.flatten())
            err = np.max(np.abs(nat - ref)) / max(1.0, np.max(np.abs(ref)))
            record(f"natural-gradient oracle d={d} {'lu' if lu else 'chol'}", err < 1e-8)

    ds = model_zoo.synthetic_generators("logistic", seed)
    model = model_zoo.logistic_model(ds.y, 1, ds.x)
    worst = 0.0
    for _ in range(5):
        th = rng.standard_normal(model.dim) * 0.3
        grad = model.grad_log_joint(th)
        for i in range(model.dim):
            e = np.zeros(model.dim)
            e[i] = 1e-6
            fd = (model.log_joint(th + e) - model.log_joint(th - e)) / 2e-6
            worst = max(worst, abs(grad[i] - fd) / max(1.0, abs(fd)))
    record("finite-difference gradient (logistic)", worst < 1e-6)

    p1 = SkewParams(np.zeros(1), FactorForm(np.array([[1.3]])), SkewParam("lambda", np.zeros(1)))
    gauss_h = 0.5 * (1.0 + np.log(2.0 * np.pi)) + np.log(1.3)
    record("entropy collapses to Gaussian at zero skew", abs(entropy(p1) - gauss_h) < 1e-10)

    d = 2
    p2 = SkewParams(
        np.array([0.3, -0.5]),
        FactorForm(np.array([[1.0, 0.0], [0.4, 0.8]])),
        SkewParam("lambda", np.array([1.5, -1.0])),
    )
    n = 50000 if quick else 200000
    draws = sample(p2, rng, n)
    s_vec = np.array([0.3, -0.2])
    tilt = tilted_moments(p2, s_vec)
    w = np.exp(draws @ s_vec)
    log_m_mc = np.log(np.mean(w))
    se = np.std(w) / np.mean(w) / np.sqrt(n)
    record("tilted normalizer vs Monte Carlo", abs(np.exp(tilt.log_m - log_m_mc) - 1.0) < 6 * se)

    mean_mc = draws.mean(axis=0)
    se_mean = draws.std(axis=0) / np.sqrt(n)
    tilt0 = tilted_moments(p2, np.zeros(2))
    record("sampling mean matches closed form", np.all(np.abs(mean_mc - tilt0.mean) < 6 * se_mean))

    width = max(len(name) for name, _ in rows)
    all_ok = True
    for name, ok in rows:
        all_ok &= ok
        print(f"{'PASS' if ok else 'FAIL'}  {name.ljust(width)}")
    return EXIT_OK if all_ok else 1


def cmd_check(args):
    return _check_battery(args.quick, args.seed if args.seed is not None else 0)


def build_parser():
    parser = argparse.ArgumentParser(prog="csnvi", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a variational approximation")
    p_fit.add_argument("--config", required=True)
    p_fit.add_argument("--seed", type=int)
    p_fit.add_argument("--out")
    p_fit.set_defaults(func=cmd_fit)

    p_sample = sub.add_parser("sample", help="draw from fitted parameters")
    p_sample.add_argument("--params", required=True)
    p_sample.add_argument("--n", type=int, required=True)
    p_sample.add_argument("--seed", type=int)
    p_sample.add_argument("--out")
    p_sample.set_defaults(func=cmd_sample)

    p_density = sub.add_parser("density", help="exact marginal density grid")
    p_density.add_argument("--params", required=True)
    p_density.add_argument("--coordinate", type=int, required=True)
    p_density.add_argument("--grid", required=True, help="lo:hi:points")
    p_density.add_argument("--out")
    p_density.set_defaults(func=cmd_density)

    p_metrics = sub.add_parser("metrics", help="two-sample or density metrics")
    p_metrics.add_argument("--samples-a")
    p_metrics.add_argument("--samples-b")
    p_metrics.add_argument("--grid-a")
    p_metrics.add_argument("--grid-b")
    p_metrics.add_argument("--bandwidth", type=float)
    p_metrics.add_argument("--out")
    p_metrics.set_defaults(func=cmd_metrics)

    p_check = sub.add_parser("check", help="run the built-in verification battery")
    p_check.add_argument("--quick", action="store_true")
    p_check.add_argument("--seed", type=int)
    p_check.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    os.environ.setdefault("CSNVI_THREADS", "1")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, os.environ["CSNVI_THREADS"])
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
