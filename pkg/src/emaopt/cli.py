"""Command-line interface: run experiments, validate configs, print bounds,
and evaluate Moreau stationarity on saved traces.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .accumulators import DecaySchedule
from .errors import CapabilityError, ConfigError, DomainError, NonFiniteError
from .harness import (
    default_config_path,
    emit_csv,
    load_config,
    resolve_output_dir,
    run_experiment,
    save_traces,
    write_summary,
    problem_from_trace,
)
from .moreau import moreau_gradient, theory_bound
from .optimizers import StepsizeSchedule


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emaopt",
        description="Adaptive EMA subgradient methods for weakly convex problems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an experiment config")
    run_p.add_argument("config", help="path to the experiment config file")
    run_p.add_argument("--output-dir", default=None,
                       help="directory for results.csv, summary.csv, and figures")
    run_p.add_argument("--no-figures", action="store_true",
                       help="skip rendering the convergence figures")
    run_p.add_argument("--save-traces", action="store_true",
                       help="write one trace JSON per run (for `stationarity`)")

    val_p = sub.add_parser("validate", help="check a config file, run nothing")
    val_p.add_argument("config")

    bound_p = sub.add_parser("bound", help="print the a-priori stationarity bound")
    bound_p.add_argument("--variant", required=True,
                         choices=["projected_fema", "proximal_fema",
                                  "projected_zema", "proximal_zema"])
    bound_p.add_argument("--rho", type=float, required=True)
    bound_p.add_argument("--rho-bar", type=float, default=None,
                         help="defaults to 2*rho")
    bound_p.add_argument("--g-inf", type=float, required=True)
    bound_p.add_argument("--d-inf", type=float, required=True)
    bound_p.add_argument("--dim", type=int, required=True)
    bound_p.add_argument("--iterations", type=int, required=True, metavar="T")
    bound_p.add_argument("--alpha", type=float, required=True)
    bound_p.add_argument("--beta1", type=float, default=0.9)
    bound_p.add_argument("--beta2", type=float, default=0.999)
    bound_p.add_argument("--beta3", type=float, default=0.0)
    bound_p.add_argument("--pi", type=float, default=None,
                         help="geometric beta1 decay constant (< 1/2)")
    bound_p.add_argument("--delta-psi", type=float, default=0.0)
    bound_p.add_argument("--mu", type=float, default=None)
    bound_p.add_argument("--lipschitz", type=float, default=None)
    bound_p.add_argument("--lambda-min-q", type=float, default=None)

    st_p = sub.add_parser("stationarity", help="Moreau report for a saved trace")
    st_p.add_argument("trace", help="trace JSON written by `run --save-traces`")
    st_p.add_argument("zeta", type=float)
    st_p.add_argument("--metric", choices=["vhat", "identity"], default="vhat")
    st_p.add_argument("--tol", type=float, default=1e-9)
    st_p.add_argument("--max-iter", type=int, default=5000)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "bound":
            return _cmd_bound(args)
        if args.command == "stationarity":
            return _cmd_stationarity(args)
        return 2
    except ConfigError as exc:
        print(f"emaopt: config error: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        print(f"emaopt: domain error: {exc}", file=sys.stderr)
        return 2
    except (CapabilityError, NonFiniteError, OSError) as exc:
        print(f"emaopt: {exc}", file=sys.stderr)
        return 1


def _cmd_run(args) -> int:
    config = load_config(args.config)
    outdir = resolve_output_dir(args.output_dir, config)
    outdir.mkdir(parents=True, exist_ok=True)
    result = run_experiment(config, progress=True)
    for key, message in result.failures:
        print(f"emaopt: run failed ({key}): {message}", file=sys.stderr)
    if not result.records:
        print("emaopt: every run failed; nothing to write", file=sys.stderr)
        return 1
    csv_path = emit_csv(result, outdir / "results.csv")
    summary_path = write_summary(result, outdir / "summary.csv")
    written = [csv_path, summary_path]
    if args.save_traces:
        written += save_traces(result, outdir / "traces")
    if not args.no_figures:
        from .plots import render_figures

        written += render_figures(result, outdir)
    for p in written[:4]:
        print(p)
    if len(written) > 4:
        print(f"... and {len(written) - 4} more files under {outdir}")
    return 0


def _cmd_validate(args) -> int:
    load_config(args.config)
    print(f"{args.config}: ok")
    return 0


def _cmd_bound(args) -> int:
    schedule = DecaySchedule(args.beta1, args.beta2, args.beta3, pi=args.pi)
    rho_bar = args.rho_bar if args.rho_bar is not None else 2.0 * args.rho
    value = theory_bound(
        args.variant,
        rho=args.rho,
        rho_bar=rho_bar,
        g_inf=args.g_inf,
        d_inf=args.d_inf,
        dim=args.dim,
        T=args.iterations,
        schedule=schedule,
        steps=StepsizeSchedule.constant_over_sqrt(args.alpha),
        delta_psi=args.delta_psi,
        mu=args.mu,
        lipschitz=args.lipschitz,
        lambda_min_q=args.lambda_min_q,
    )
    print(repr(value))
    return 0


def _cmd_stationarity(args) -> int:
    path = Path(args.trace)
    if not path.exists():
        raise ConfigError(f"trace file not found: {path}")
    payload = json.loads(path.read_text(encoding="utf-8"))
    if payload.get("format") != "emaopt-trace v1":
        raise ConfigError(f"{path}: not an emaopt trace file")
    problem = problem_from_trace(payload["problem"])
    x = np.asarray(payload["x_tstar"], dtype=np.float64)
    if args.metric == "vhat":
        metric = np.sqrt(np.asarray(payload["vhat_tstar"], dtype=np.float64))
    else:
        metric = np.ones(problem.dim)
    report = moreau_gradient(problem, x, args.zeta, metric,
                             tol=args.tol, max_iter=args.max_iter)
    print(f"metric {args.metric}")
    print(f"zeta {report.zeta!r}")
    print(f"grad_norm_sq {report.grad_norm_sq!r}")
    print(f"psi_at_x {report.psi_at_x!r}")
    print(f"psi_at_prox {report.psi_at_prox!r}")
    print(f"envelope_value {report.envelope_value!r}")
    print(f"inner_iterations {report.inner.iterations}")
    print(f"inner_residual {report.inner.residual!r}")
    print(f"inner_converged {report.inner.converged}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
