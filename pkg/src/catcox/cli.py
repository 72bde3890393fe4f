"""Command-line surface: fit / synth / sample / cv / simulate.

Every subcommand writes a ``summary.json`` (plus CSV tables where relevant) to
the output directory, exits 0 on success, and prints a machine-readable error
JSON to stderr on failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import io as cio
from .bayes import (
    GammaProcessConfig,
    GaussianCoefPrior,
    SamplerConfig,
    build_partition,
    fit_weibull_intercept,
    posterior_summary,
    potential_scale_reduction,
    sample_posterior,
)
from .cox import mple, wald_intervals
from .data import FitResult, SurvivalDataset
from .estimators import cre, lasso, ridge, wme
from .simlab import (
    SimulationConfig,
    consistency_demo,
    mple_bias_demo,
    run_study,
    stream_rng,
)
from .synthesis import build_catalytic_prior, default_synthetic_size
from .tuning import (
    CVConfig,
    cvpl,
    default_lambda_grid,
    default_tau_grid,
    make_cre_fit_fn,
    make_lasso_fit_fn,
    make_ridge_fit_fn,
    make_wme_fit_fn,
)

POINT_METHODS = ("mple", "cre", "wme", "ridge", "lasso")


class UsageError(Exception):
    pass


def _thread_budget(args) -> int:
    if getattr(args, "threads", None):
        return int(args.threads)
    return int(os.environ.get("CATCOX_THREADS", "1"))


def _load(args) -> SurvivalDataset:
    if getattr(args, "schema", None):
        schema = cio.schema_from_json(args.schema)
    else:
        columns = pd.read_csv(args.data, nrows=0).columns
        schema = cio.default_schema(columns, args.time_col, args.status_col)
    return cio.load_dataset(args.data, schema)


def _json_default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    raise TypeError(f"not serializable: {type(x)}")


def _write_summary(outdir: Path, payload: dict):
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "summary.json", "w") as fh:
        json.dump(payload, fh, indent=2, default=_json_default)


def _fit_summary(fit: FitResult, extra: dict) -> dict:
    payload = {
        "beta": fit.beta,
        "converged": bool(fit.converged),
        "diverged": bool(fit.diverged),
        "iterations": int(fit.iterations),
        "gradient_norm": float(fit.gradient_norm),
    }
    payload.update(extra)
    return payload


def cmd_fit(args) -> int:
    data = _load(args)
    method = args.method
    tau_given = args.tau is not None
    lam_given = args.lam is not None
    if method in ("mple",) and (tau_given or lam_given):
        raise UsageError("--tau/--lambda do not apply to mple")
    if method in ("cre", "wme") and lam_given:
        raise UsageError("--lambda does not apply to synthetic-data estimators")
    if method in ("ridge", "lasso") and tau_given:
        raise UsageError(f"--tau does not apply to --method {method}")
    extra: dict = {"method": method, "n": data.n, "p": data.p}
    if method == "mple":
        fit = mple(data)
        if fit.converged:
            extra["wald_95"] = wald_intervals(fit, 0.95)
    elif method in ("cre", "wme"):
        if args.seed is None:
            raise UsageError("--seed is required for synthetic-data estimators")
        M = args.synthetic_size or default_synthetic_size(data.p)
        rng = stream_rng(args.seed, 0)
        prior = build_catalytic_prior(data, tau=float(data.p), M=M, rng=rng)
        spec = args.tau if tau_given else "cv"
        if spec == "cv":
            grid = default_tau_grid(data.p)
            cfg = CVConfig(grid, K=args.k, seed=args.seed)
            fit_fn = make_cre_fit_fn(prior) if method == "cre" else make_wme_fit_fn(prior.synth)
            tau, scores = cvpl(data, fit_fn, cfg)
            extra["cv_scores"] = dict(zip(map(float, grid), map(float, scores)))
        else:
            tau = float(spec)
        extra["tau"] = tau
        extra["synthetic_size"] = M
        fit = (
            cre(data, prior.with_tau(tau))
            if method == "cre"
            else wme(data, prior.synth, tau)
        )
    else:  # ridge / lasso
        spec = args.lam if lam_given else "cv"
        fitter = ridge if method == "ridge" else lasso
        if spec == "cv":
            if args.seed is None:
                raise UsageError("--seed is required for cross-validation")
            grid = default_lambda_grid(data)
            cfg = CVConfig(grid, K=args.k, seed=args.seed)
            fit_fn = make_ridge_fit_fn() if method == "ridge" else make_lasso_fit_fn()
            lam, scores = cvpl(data, fit_fn, cfg)
            extra["cv_scores"] = dict(zip(map(float, grid), map(float, scores)))
        else:
            lam = float(spec)
        extra["lambda"] = lam
        fit = fitter(data, lam)
        if args.standardized_scale and fit.standardization is not None:
            fit.beta = fit.beta * fit.standardization["scale"]
            extra["coefficient_scale"] = "standardized"
    extra.setdefault("coefficient_scale", "original")
    extra["column_names"] = getattr(data, "load_info", {}).get("column_names")
    extra["dropped_rows"] = getattr(data, "load_info", {}).get("dropped_rows", 0)
    _write_summary(Path(args.out), _fit_summary(fit, extra))
    return 0


def cmd_synth(args) -> int:
    data = _load(args)
    M = args.M or default_synthetic_size(data.p)
    prior = build_catalytic_prior(data, tau=float(data.p), M=M, rng=stream_rng(args.seed, 0))
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    cio.write_synthetic_csv(prior.synth, outdir / "synthetic.csv")
    _write_summary(
        outdir,
        {
            "M": M,
            "p": data.p,
            "h0_plus": prior.h0_plus,
            "seed": args.seed,
            "meta": prior.synth.generator_meta,
        },
    )
    return 0


def cmd_sample(args) -> int:
    data = _load(args)
    grid = build_partition(data, args.intervals)
    eta0, kappa0 = fit_weibull_intercept(data)
    gp = GammaProcessConfig(c0=args.c0, weibull_eta0=eta0, weibull_kappa0=kappa0)
    tau = args.tau if args.tau is not None else float(data.p)
    rng = stream_rng(args.seed, 0)
    adaptive = args.prior == "adaptive"
    if args.prior in ("catalytic", "adaptive"):
        M = args.synthetic_size or default_synthetic_size(data.p)
        prior = build_catalytic_prior(
            data, tau=tau, M=M, rng=rng, adaptive_hyper=(2.0, 1.0) if adaptive else None
        )
    elif args.prior == "gaussian":
        cfg = CVConfig(default_lambda_grid(data), K=args.k, seed=args.seed)
        lam, _ = cvpl(data, make_ridge_fit_fn(), cfg)
        prior = GaussianCoefPrior(sigma2=1.0 / (2.0 * lam))
    else:
        raise UsageError(f"unknown prior {args.prior!r}")
    scfg = SamplerConfig(
        iterations=args.iters,
        burnin=args.burnin,
        chains=args.chains,
        adaptive_tau=adaptive,
        seed=args.seed,
    )
    samples = sample_posterior(data, grid, gp, prior, scfg)
    mean, intervals = posterior_summary(samples, 0.95)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    cols = {"iteration": np.arange(samples.S)}
    for j in range(data.p):
        cols[f"beta_{j + 1}"] = samples.beta_draws[:, j]
    for j in range(samples.h_draws.shape[1]):
        cols[f"h_{j + 1}"] = samples.h_draws[:, j]
    if samples.tau_draws is not None:
        cols["tau"] = samples.tau_draws
    pd.DataFrame(cols).to_csv(outdir / "chain.csv", index=False, float_format=cio.FLOAT_FMT)
    _write_summary(
        outdir,
        {
            "posterior_mean": mean,
            "credible_95": intervals,
            "acceptance": {
                "beta": samples.acceptance["beta"],
                "h": samples.acceptance["h"],
            },
            "split_rhat": potential_scale_reduction(samples),
            "intervals": grid.J,
            "prior": args.prior,
            "tau": None if adaptive else tau,
            "seed": args.seed,
            "column_names": getattr(data, "load_info", {}).get("column_names"),
        },
    )
    return 0


def cmd_cv(args) -> int:
    data = _load(args)
    method = args.method
    if method in ("cre", "wme"):
        M = args.synthetic_size or default_synthetic_size(data.p)
        prior = build_catalytic_prior(data, tau=float(data.p), M=M, rng=stream_rng(args.seed, 0))
        fit_fn = make_cre_fit_fn(prior) if method == "cre" else make_wme_fit_fn(prior.synth)
        grid = np.asarray(args.grid, float) if args.grid else default_tau_grid(data.p)
    elif method in ("ridge", "lasso"):
        fit_fn = make_ridge_fit_fn() if method == "ridge" else make_lasso_fit_fn()
        grid = np.asarray(args.grid, float) if args.grid else default_lambda_grid(data)
    else:
        raise UsageError("cv applies to cre|wme|ridge|lasso")
    cfg = CVConfig(np.sort(grid), K=args.k, seed=args.seed, estimator=method)
    best, scores = cvpl(data, fit_fn, cfg)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({"value": cfg.grid, "cvpl": scores}).to_csv(
        outdir / "scores.csv", index=False, float_format=cio.FLOAT_FMT
    )
    _write_summary(outdir, {"method": method, "best_value": best, "k": args.k, "seed": args.seed})
    return 0


def cmd_simulate(args) -> int:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.scenario == "table2":
        methods = tuple(args.methods.split(",")) if args.methods else (
            "mple", "cre", "wme-cv", "ridge-cv", "lasso-cv"
        )
        if args.bayes:
            methods = methods + ("cpm", "apm", "gpm")
        config = SimulationConfig(
            n=args.n,
            p=args.p,
            censor_rate=args.censor,
            replications=args.reps,
            methods=methods,
            M=args.synthetic_size or 1000,
            seed=args.seed,
        )
        report = run_study(config)
        rows = [
            {"scenario": "table2", "method": m, "metric": metric, "mean": mean, "se": se}
            for (m, metric, mean, se) in report.rows()
        ]
        pd.DataFrame(rows).to_csv(outdir / "table.csv", index=False)
        _write_summary(
            outdir,
            {
                "scenario": "table2",
                "n": args.n,
                "p": args.p,
                "censor_rate": args.censor,
                "replications": args.reps,
                "seed": args.seed,
                "realized_censor_rate": report.realized_censor_rate,
                "failures": {m: report.methods[m].n_failed for m in report.methods},
                "threads": _thread_budget(args),
            },
        )
    elif args.scenario == "bias":
        pairs = mple_bias_demo(args.p, args.n, stream_rng(args.seed, 0))
        pd.DataFrame(pairs, columns=["beta_true", "beta_hat"]).to_csv(
            outdir / "table.csv", index=False, float_format=cio.FLOAT_FMT
        )
        _write_summary(outdir, {"scenario": "bias", "p": args.p, "n": args.n, "seed": args.seed})
    elif args.scenario == "consistency":
        p_list = [int(v) for v in args.p_list.split(",")]
        n_list = [int(v) for v in args.n_list.split(",")]
        out = consistency_demo(p_list, n_list, M=args.synthetic_size or 400,
                               n_seeds=args.reps, seed=args.seed)
        rows = []
        for tag, table in out.items():
            for pi, p in enumerate(p_list):
                for ni, n in enumerate(n_list):
                    rows.append(
                        {"scenario": "consistency", "method": tag, "p": p, "n": n,
                         "metric": "sq_loss", "mean": table[pi, ni], "se": ""}
                    )
        pd.DataFrame(rows).to_csv(outdir / "table.csv", index=False)
        _write_summary(
            outdir,
            {"scenario": "consistency", "p_list": p_list, "n_list": n_list,
             "seeds": args.reps, "seed": args.seed},
        )
    else:
        raise UsageError(f"unknown scenario {args.scenario!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="catcox",
        description="Cox regression stabilized by synthetic-data priors",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_data_opts(p):
        p.add_argument("--data", required=True, help="input CSV")
        p.add_argument("--schema", help="JSON column schema")
        p.add_argument("--time-col", default="time")
        p.add_argument("--status-col", default="status")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=None)

    p_fit = sub.add_parser("fit", help="fit one estimator")
    add_data_opts(p_fit)
    p_fit.add_argument("--method", required=True, choices=POINT_METHODS)
    p_fit.add_argument("--tau", help="prior weight, or 'cv'")
    p_fit.add_argument("--lambda", dest="lam", help="penalty, or 'cv'")
    p_fit.add_argument("--synthetic-size", type=int, default=None)
    p_fit.add_argument("--seed", type=int, default=None)
    p_fit.add_argument("--k", type=int, default=10)
    p_fit.add_argument("--standardized-scale", action="store_true",
                       help="report ridge/lasso coefficients on the standardized scale")
    p_fit.set_defaults(func=cmd_fit)

    p_synth = sub.add_parser("synth", help="generate synthetic data")
    add_data_opts(p_synth)
    p_synth.add_argument("--M", type=int, default=None)
    p_synth.add_argument("--seed", type=int, required=True)
    p_synth.set_defaults(func=cmd_synth)

    p_sample = sub.add_parser("sample", help="posterior sampling")
    add_data_opts(p_sample)
    p_sample.add_argument("--prior", required=True, choices=("catalytic", "adaptive", "gaussian"))
    p_sample.add_argument("--tau", type=float, default=None)
    p_sample.add_argument("--iters", type=int, default=4000)
    p_sample.add_argument("--burnin", type=int, default=2000)
    p_sample.add_argument("--chains", type=int, default=1)
    p_sample.add_argument("--intervals", type=int, default=20)
    p_sample.add_argument("--c0", type=float, default=2.0)
    p_sample.add_argument("--synthetic-size", type=int, default=None)
    p_sample.add_argument("--k", type=int, default=10)
    p_sample.add_argument("--seed", type=int, required=True)
    p_sample.set_defaults(func=cmd_sample)

    p_cv = sub.add_parser("cv", help="cross-validated tuning")
    add_data_opts(p_cv)
    p_cv.add_argument("--method", required=True, choices=("cre", "wme", "ridge", "lasso"))
    p_cv.add_argument("--grid", type=float, nargs="+", default=None)
    p_cv.add_argument("--k", type=int, default=10)
    p_cv.add_argument("--synthetic-size", type=int, default=None)
    p_cv.add_argument("--seed", type=int, required=True)
    p_cv.set_defaults(func=cmd_cv)

    p_sim = sub.add_parser("simulate", help="run a simulation scenario")
    p_sim.add_argument("--scenario", required=True, choices=("table2", "bias", "consistency"))
    p_sim.add_argument("--p", type=int, default=20)
    p_sim.add_argument("--n", type=int, default=100)
    p_sim.add_argument("--censor", type=float, default=0.2)
    p_sim.add_argument("--reps", type=int, default=100)
    p_sim.add_argument("--seed", type=int, required=True)
    p_sim.add_argument("--bayes", action="store_true")
    p_sim.add_argument("--methods", default=None, help="comma-separated method tags")
    p_sim.add_argument("--synthetic-size", type=int, default=None)
    p_sim.add_argument("--p-list", default="5,20")
    p_sim.add_argument("--n-list", default="100,400,1600")
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--threads", type=int, default=None)
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def cli_dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(json.dumps({"error": "usage", "detail": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:
        print(
            json.dumps({"error": type(exc).__name__, "detail": str(exc)}),
            file=sys.stderr,
        )
        return 1


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))
