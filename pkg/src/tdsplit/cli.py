"""Command-line interface.

Subcommands: ``solve`` (fixed points and the true value function),
``spectra`` (stationary law, spectral constant, mixing-time table),
``verify`` (splitting-certificate residuals and the progress identity),
``run`` (one seeded experiment to CSV), ``sweep`` (discount sweep with
bound checks), ``bound`` (closed-form bound values and their constants).
JSON goes to stdout; exit status is 0 iff every requested check passed.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import bellman, bounds, geometry
from .features import features_from_spec
from .harness import (
    ExperimentConfig,
    compare_bound,
    parse_seeds,
    persist_report,
    sweep_gamma,
    write_run_csv,
)
from .learning import run_experiment
from .mdp import induce_chain, load_instance, mixing_profile


def _chain_and_features(args, need_features=True):
    mdp, policy = load_instance(args.instance)
    chain = induce_chain(mdp, policy)
    features = None
    if need_features:
        features = features_from_spec(args.features, chain.n_states)
    return chain, features


def _emit(doc: dict) -> None:
    json.dump(doc, sys.stdout, indent=1, default=_jsonable)
    sys.stdout.write("\n")


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not JSON serializable: {type(x)}")


def _cmd_solve(args) -> int:
    chain, features = _chain_and_features(args)
    V = bellman.true_value(chain)
    fp = bellman.td0_fixed_point(chain, features)
    summary = geometry.reversibilization(chain)
    doc = {
        "pi": chain.pi,
        "gamma": chain.gamma,
        "true_value": V,
        "value_mean": float(chain.pi @ V),
        "theta_star": fp.theta,
        "theta_star_residual": fp.residual,
        "r_P": summary.r_P,
        "lambda_second_smallest": summary.lambda_second_smallest,
    }
    if args.lam > 0:
        fpl = bellman.td_lambda_fixed_point(chain, features, args.lam)
        doc["theta_star_trace"] = fpl.theta
        doc["theta_star_trace_residual"] = fpl.residual
        doc["kappa"] = fpl.kappa
    _emit(doc)
    return 0


def _cmd_spectra(args) -> int:
    chain, _ = _chain_and_features(args, need_features=False)
    summary = geometry.reversibilization(chain)
    profile = mixing_profile(chain, min(args.eps), cap=args.cap)
    curve = profile.tv_curve
    tau_table = {}
    for eps in sorted(args.eps, reverse=True):
        idx = np.nonzero(curve <= eps)[0]
        tau_table[str(eps)] = int(max(idx[0], 1)) if idx.size else None
    _emit({
        "pi": chain.pi,
        "r_P": summary.r_P,
        "lambda_second_smallest": summary.lambda_second_smallest,
        "tau_mix": tau_table,
        "envelope": {"m": profile.m, "rho": profile.rho},
    })
    return 0


def _cmd_verify(args) -> int:
    chain, features = _chain_and_features(args)
    cert = bellman.splitting_certificate_td0(chain, features, tolerance=args.tol)
    fp = bellman.td0_fixed_point(chain, features)
    rng = np.random.default_rng(args.seed)
    worst_gap = 0.0
    for _ in range(args.n_theta):
        theta = rng.standard_normal(features.K)
        lhs, rhs = bellman.progress_identity(chain, features, theta, fixed_point=fp)
        worst_gap = max(worst_gap, abs(lhs - rhs) / (1.0 + abs(rhs)))
    doc = {
        "splitting_residual": cert.residual_inf,
        "splitting_tolerance": cert.tolerance,
        "progress_identity_worst_gap": worst_gap,
        "fixed_point_residual": fp.residual,
    }
    ok = cert.residual_inf <= cert.tolerance and worst_gap <= 1e-10
    if args.lam > 0:
        cert_l = bellman.splitting_certificate_td_lambda(chain, features, args.lam, tolerance=args.tol_trace)
        doc["trace_splitting_residual"] = cert_l.residual_inf
        doc["trace_tail_budget"] = cert_l.tail_budget
        doc["trace_series_depth"] = cert_l.truncation
        ok = ok and cert_l.residual_inf <= cert_l.tolerance + cert_l.tail_budget
    doc["passed"] = ok
    _emit(doc)
    return 0 if ok else 1


def _cmd_run(args) -> int:
    chain, features = _chain_and_features(args)
    start = "stationary" if args.start == "stationary" else int(args.start)
    run = run_experiment(
        chain, features, args.algo, args.T, parse_seeds(args.seeds),
        lam=args.lam, radius=args.radius, step_size=args.step_size, start=start,
    )
    write_run_csv(args.out, run)
    summary = {
        "algo": run.algo,
        "lam": run.lam,
        "gamma": run.gamma,
        "T": run.T,
        "n_seeds": len(run.seeds),
        "radius": run.radius,
        "step_size": run.step_size_desc,
        "start_mode": run.start_mode,
        "stationary_start": run.stationary_start,
        "final_f_mean_stderr": run.mean_stderr("f_value"),
        "out": str(args.out),
    }
    if not run.stationary_start:
        summary["warning"] = "fixed-state start: expectation bounds assume a stationary start"
    _emit(summary)
    return 0


def _cmd_sweep(args) -> int:
    config = ExperimentConfig.load(args.config)
    report, results = sweep_gamma(config)
    out_dir = Path(args.out_dir or config.out_dir or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    for run, comparison_gamma in zip(results, [c.gamma for c in report.comparisons[::2]]):
        write_run_csv(out_dir / f"sweep_gamma{comparison_gamma}_T{run.T}.csv", run)
    persist_report(out_dir / "sweep_report.json", report)
    _emit({
        "report": str(out_dir / "sweep_report.json"),
        "all_passed": report.all_passed,
        "comparisons": [asdict(c) for c in report.comparisons],
    })
    return 0 if report.all_passed else 1


def _cmd_compare(args) -> int:
    config = ExperimentConfig.load(args.config)
    report, results = compare_bound(config)
    out_dir = Path(args.out_dir or config.out_dir or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    for run in results:
        write_run_csv(out_dir / f"run_{run.algo}_gamma{run.gamma}_T{run.T}.csv", run)
    persist_report(out_dir / "compare_report.json", report)
    _emit({
        "report": str(out_dir / "compare_report.json"),
        "all_passed": report.all_passed,
        "comparisons": [asdict(c) for c in report.comparisons],
    })
    return 0 if report.all_passed else 1


def _cmd_bound(args) -> int:
    chain, features = _chain_and_features(args)
    theta0 = np.asarray(args.theta0, float) if args.theta0 else None
    inputs = bounds.prepare_bound_inputs(
        chain, features, T=args.T, lam=args.lam, radius=args.radius,
        theta0=theta0, include_mean_estimation=True,
    )
    doc = {
        "objective_bound": bounds.objective_bound_rhs(inputs),
        "d_norm_bound": bounds.d_norm_bound_rhs(inputs),
        "dirichlet_bound": bounds.dirichlet_bound_rhs(inputs),
        "mean_adjusted_bound_exact": bounds.mean_adjusted_bound_rhs(inputs, c_big="exact"),
        "trace_objective_bound": bounds.trace_objective_bound_rhs(inputs),
        "constants": {
            "G": inputs.G,
            "G_lambda": inputs.G_lambda,
            "R": inputs.R,
            "R_lambda": inputs.R_lambda,
            "tau_mix": inputs.tau_mix_at_inv_sqrtT,
            "tau_lambda_mix": inputs.tau_lambda_mix,
            "tau_mix_mean_est": inputs.tau_mix_mean_est,
            "t0": inputs.t0,
            "r_P": inputs.r_P,
        },
    }
    _emit(doc)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdsplit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_instance(p, features=True):
        p.add_argument("--instance", required=True, help="instance JSON file")
        if features:
            p.add_argument("--features", default="identity",
                           help="feature spec: identity | fourier(K) | random_unit_rows(K, seed) | path.json")

    p = sub.add_parser("solve", help="true value function and fixed points")
    add_instance(p)
    p.add_argument("--lam", type=float, default=0.0)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("spectra", help="stationary law, spectral constant, mixing table")
    add_instance(p, features=False)
    p.add_argument("--eps", type=float, nargs="+", default=[0.25, 0.1, 0.01, 0.001])
    p.add_argument("--cap", type=int, default=10**6)
    p.set_defaults(func=_cmd_spectra)

    p = sub.add_parser("verify", help="splitting certificates and the progress identity")
    add_instance(p)
    p.add_argument("--lam", type=float, default=0.0)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--tol-trace", type=float, default=1e-8)
    p.add_argument("--n-theta", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("run", help="one seeded Monte-Carlo experiment to CSV")
    add_instance(p)
    p.add_argument("--algo", choices=["td0", "td_lambda", "mean_adjusted"], default="td0")
    p.add_argument("--lam", type=float, default=0.0)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--seeds", default="0..99", help="inclusive range 'a..b' or single seed")
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--step-size", type=float, default=None, help="constant step size (default 1/sqrt(T))")
    p.add_argument("--start", default="stationary", help="'stationary' or a fixed start state index")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="discount-factor sweep with bound checks")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("compare", help="empirical mean vs matching bound for one algorithm")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("bound", help="closed-form bound values and constants")
    add_instance(p)
    p.add_argument("--lam", type=float, default=0.0)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--theta0", type=float, nargs="*", default=None)
    p.set_defaults(func=_cmd_bound)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
