"""Command-line entry point.

Subcommands: ``simulate`` (path generation to file), ``moments`` (kernel
moment table), ``estimate`` (single-path estimators), ``oracle``
(moment/threshold queries), ``experiment`` (run a config file), ``audit``
(covariance-bound and identity suites).

Exit codes: 0 success, 1 domain/config errors, 2 numerical-accuracy failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict

from .errors import DomainError, NumericalError
from .experiments import ExperimentConfig, emit, run_experiment
from .fbm import Hurst, TimeGrid, load_path, save_path, simulate
from .kernels import DEFAULT_KAPPAS, catalogue_kernel, compute_moments
from .local_time import StatisticSpec, fourier_dlt, g_statistic, mollified_dlt
from .oracles import (
    MomentQuery,
    covariance_bound_audit,
    divergence_probe,
    dlt_first_moment_detailed,
    dlt_second_moment_detailed,
    gaussian_pair_moment,
    identity_audit,
)

__all__ = ["main", "build_parser"]


class _Parser(argparse.ArgumentParser):
    """argparse parser that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _write_json(payload, out: "str | None") -> None:
    text = json.dumps(payload, sort_keys=True, indent=2, default=float)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _floats(text: str) -> list:
    return [float(x) for x in text.split(",") if x.strip()]


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def _cmd_simulate(args) -> int:
    grid = TimeGrid(args.n, args.horizon)
    path = simulate(grid, Hurst(args.hurst), args.seed, args.method)
    fmt = args.format or "binary"
    save_path(path, args.out, fmt)
    print(f"wrote {grid.num_nodes} nodes to {args.out} ({fmt})")
    return 0


def _cmd_moments(args) -> int:
    kernel = catalogue_kernel(args.kernel)
    kappas = _floats(args.kappas) if args.kappas else DEFAULT_KAPPAS
    ells = [int(x) for x in _floats(args.ells)] if args.ells else None
    moments = compute_moments(kernel, kappas=kappas, ells=ells)
    payload = asdict(moments)
    payload["kernel"] = kernel.name
    payload["weighted_l1"] = {str(k): v for k, v in payload["weighted_l1"].items()}
    payload["l2_of_deriv"] = {str(k): v for k, v in payload["l2_of_deriv"].items()}
    _write_json(payload, args.out)
    return 0


def _cmd_estimate(args) -> int:
    path = load_path(args.path)
    t = args.t if args.t is not None else path.grid.horizon
    a = args.a if args.a is not None else path.hurst.value
    records = []
    for lam in _floats(args.lam):
        spec = StatisticSpec(ell=args.ell, a=a, lam=lam, t=t)
        if args.route == "discrete":
            if not args.kernel:
                raise DomainError("route 'discrete' requires --kernel")
            est = g_statistic(path, catalogue_kernel(args.kernel), spec,
                              normalized=not args.raw)
        elif args.route == "mollified":
            if args.epsilon is None:
                raise DomainError("route 'mollified' requires --epsilon")
            est = mollified_dlt(path, spec, args.epsilon)
        elif args.route == "fourier":
            cutoff = args.xi_cutoff if args.xi_cutoff is not None else 40.0
            step = args.xi_step if args.xi_step is not None else cutoff / 2048.0
            est = fourier_dlt(path, spec, cutoff, step, damping=args.damping)
        else:
            raise DomainError(f"unknown route {args.route!r}")
        records.append(est.to_json())
    text = "\n".join(records)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def _cmd_oracle(args) -> int:
    if args.kind == "pair-moment":
        if None in (args.m11, args.m12, args.m22):
            raise DomainError("pair-moment needs --m11 --m12 --m22")
        value = gaussian_pair_moment(args.ell, args.m11, args.m12, args.m22)
        _write_json({"kind": args.kind, "ell": args.ell, "value": value}, args.out)
        return 0
    if args.hurst is None:
        raise DomainError(f"oracle kind {args.kind!r} needs --hurst")
    if args.kind == "first-moment":
        query = MomentQuery(ell=args.ell, hurst=Hurst(args.hurst), t=args.t,
                            eps=args.eps, lam=args.lam)
        res = dlt_first_moment_detailed(query)
        _write_json({"kind": args.kind, "value": res.value,
                     "error_bound": res.error_bound}, args.out)
    elif args.kind == "second-moment":
        query = MomentQuery(ell=args.ell, hurst=Hurst(args.hurst), t=args.t,
                            eps=args.eps, eta=args.eta, lam=args.lam)
        res = dlt_second_moment_detailed(query)
        _write_json({"kind": args.kind, "value": res.value,
                     "error_bound": res.error_bound, "mesh": res.mesh}, args.out)
    elif args.kind == "divergence":
        kwargs = {}
        if args.schedule:
            kwargs["eps_schedule"] = _floats(args.schedule)
        probe = divergence_probe(args.ell, Hurst(args.hurst), t=args.t, **kwargs)
        _write_json(probe.as_dict(), args.out)
    else:
        raise DomainError(f"unknown oracle kind {args.kind!r}")
    return 0


def _cmd_experiment(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        config = ExperimentConfig.from_dict(json.load(fh))
    report = run_experiment(config, threads=args.threads)
    out = args.out or config.output or (args.config + ".report.json")
    fmt = args.format or "json"
    written = emit(report, out, fmt)
    slope = None if report.rate is None else round(report.rate["slope"], 4)
    print(f"experiment {config.kind}: wrote {', '.join(written)} (slope={slope})")
    return 0


def _cmd_audit(args) -> int:
    hurst_set = _floats(args.hurst_set) if args.hurst_set else [0.2, 0.5, 0.8]
    bounds = covariance_bound_audit(args.samples, hurst_set=hurst_set,
                                    horizon=args.horizon, seed=args.seed)
    identities = identity_audit(args.identity_samples, hurst_set=hurst_set,
                                seed=args.seed)
    violations = []
    if bounds.max_ratio_pair > 1.0 + 1e-10:
        violations.append(f"pair bound ratio {bounds.max_ratio_pair:.6f} > 1")
    if bounds.max_ratio_window > 1.0 + 1e-10:
        violations.append(f"window bound ratio {bounds.max_ratio_window:.6f} > 1")
    if identities["cov_symmetry_max_abs"] > 0.0:
        violations.append("covariance symmetry broken")
    if identities["brownian_reduction_max_abs"] > 1e-12:
        violations.append("H=1/2 covariance does not reduce to min(s,t)")
    if identities["det_decomposition_max_rel"] > 1e-8:
        violations.append("determinant decomposition mismatch")
    if identities["conditional_variance_monotonicity_max_excess"] > 1e-10:
        violations.append("conditional variance not monotone")
    if identities["local_nondeterminism_min_ratio"] <= 0.0:
        violations.append("local nondeterminism ratio not positive")
    payload = {
        "bounds": {
            "samples": bounds.samples,
            "max_ratio_pair": bounds.max_ratio_pair,
            "max_ratio_window": bounds.max_ratio_window,
            "per_hurst": bounds.per_hurst,
            "worst_pair": bounds.worst_pair,
            "worst_window": bounds.worst_window,
        },
        "identities": identities,
        "violations": violations,
    }
    _write_json(payload, args.out)
    if violations:
        raise NumericalError("; ".join(violations))
    return 0


# ---------------------------------------------------------------------------
# Parser assembly
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(
        prog="fraclab",
        description="Simulate fractional Brownian motion and estimate the "
                    "spatial derivatives of its local time.",
    )
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="base RNG seed")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: FRACLAB_THREADS or 1)")
    common.add_argument("--out", default=None, help="output file (default: stdout)")
    common.add_argument("--format", default=None, help="output format where applicable")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="sample one path to a file")
    p.add_argument("--hurst", type=float, required=True)
    p.add_argument("--n", type=int, required=True, help="grid points per unit time")
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--method", choices=("cholesky", "circulant"), default="circulant")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("moments", parents=[common], help="kernel moment table")
    p.add_argument("--kernel", required=True, help="catalogue spec, e.g. 'gaussian_deriv(l=1,eps=1)'")
    p.add_argument("--kappas", default=None, help="comma-separated weight exponents")
    p.add_argument("--ells", default=None, help="comma-separated derivative orders")
    p.set_defaults(func=_cmd_moments)

    p = sub.add_parser("estimate", parents=[common], help="single-path estimators")
    p.add_argument("--path", required=True, help="path file from 'simulate'")
    p.add_argument("--route", choices=("discrete", "mollified", "fourier"), required=True)
    p.add_argument("--ell", type=int, default=0)
    p.add_argument("--lambda", dest="lam", default="0.0",
                   help="level(s), comma-separated")
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--a", type=float, default=None, help="scaling exponent (default: H)")
    p.add_argument("--kernel", default=None)
    p.add_argument("--raw", action="store_true", help="skip the n^{a(ell+1)-1} normalization")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--xi-cutoff", type=float, default=None)
    p.add_argument("--xi-step", type=float, default=None)
    p.add_argument("--damping", type=float, default=0.0)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("oracle", parents=[common], help="simulation-free reference values")
    p.add_argument("--kind", choices=("first-moment", "second-moment",
                                      "pair-moment", "divergence"), required=True)
    p.add_argument("--ell", type=int, default=0)
    p.add_argument("--hurst", type=float, default=None)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=0.02)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--m11", type=float, default=None)
    p.add_argument("--m12", type=float, default=None)
    p.add_argument("--m22", type=float, default=None)
    p.add_argument("--schedule", default=None, help="comma-separated eps schedule")
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("experiment", parents=[common], help="run a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("audit", parents=[common],
                       help="covariance-bound and identity suites")
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--identity-samples", type=int, default=1000)
    p.add_argument("--hurst-set", default=None, help="comma-separated H values")
    p.add_argument("--horizon", type=float, default=2.0)
    p.set_defaults(func=_cmd_audit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        code = exc.code
        return int(code) if code is not None else 0
    except DomainError as exc:
        print(f"fraclab: error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"fraclab: numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"fraclab: i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
