"""
Command-line component.

Subcommands:
  norms           evaluate and compare space norms on field files
  evolve          run a trajectory and persist it
  alpha           trace-series evaluation on a field, or conservation drift on a trajectory
  certify         growth-bound certificate (scaling reduction + family chain)
  identity-suite  exact identities: leading term, Hilbert-Schmidt sum, complex-kappa shift
  gen             random initial data

Exit codes: 0 ok, 1 certificate/identity failure, 2 usage or precondition, 3 numerical guard.
"""

import argparse
import os
import sys
from datetime import datetime
from typing import Any, Dict, List, Optional

from src import report
from src.determinant import (
    alpha,
    alpha_csv_header,
    conservation_drift,
    hs_report,
    leading_term,
)
from src.flow import FlowSpec, evolve
from src.harness import (
    FAMILY_MODES,
    ExperimentConfig,
    flow_spec_from_dict,
    growth_bound_experiment,
    growth_exponent_study,
    identity_suite,
    initial_datum,
)
from src.lattice import read_field, write_field
from src.models.model_loader import TrajectoryLoadError, TrajectoryLoader
from src.models.models import EQUATIONS
from src.spaces import NORM_CSV_HEADER, NormKind, NormSpec, equivalence_report, norm_report
from src.utilis import NumericalGuardError, get_logger, result_dir, set_log_level

log = get_logger("cli")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_GUARD = 3


def _timestamp() -> str:
    return datetime.now().strftime("%Y%m%d_%H%M%S")


def _out_folder(args: argparse.Namespace, command: str) -> str:
    if getattr(args, "out", None):
        os.makedirs(args.out, exist_ok=True)
        return args.out
    folder = os.path.join(result_dir(args.output_dir), f"{command}_{_timestamp()}")
    os.makedirs(folder, exist_ok=True)
    return folder


def _flow_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        "equation": args.equation,
        "sign": args.sign,
        "beta": args.beta,
        "dt": args.dt,
        "integrator": args.integrator,
        "dealias": False if args.no_dealias else None,
    }


def _flow_spec(args: argparse.Namespace) -> FlowSpec:
    flow = {k: v for k, v in _flow_overrides(args).items() if v is not None}
    return flow_spec_from_dict(flow)


def cmd_norms(args: argparse.Namespace) -> int:
    specs = [
        NormSpec(NormKind.SOBOLEV, theta=args.theta),
        NormSpec(NormKind.FOURIER_LEBESGUE, s=args.s, p=args.p),
        NormSpec(NormKind.MODULATION, s=args.s, p=args.p),
        NormSpec(NormKind.MODULATED_SOBOLEV, theta=args.theta, s=args.s, p=args.p),
    ]
    fields = [(os.path.basename(path), read_field(path)) for path in args.fields]
    rows = []
    for fid, f in fields:
        for spec in specs:
            rep = norm_report(f, spec, fid)
            rows.append(rep.as_row())
            print(f"[NORMS] {fid} {rep.kind.value}: {rep.value:.12g} (tail {rep.tail_estimate:.3g})")
    folder = _out_folder(args, "norms")
    report.write_csv(os.path.join(folder, "norms.csv"), NORM_CSV_HEADER, rows)
    if args.compare:
        eq = equivalence_report([f for _, f in fields], args.theta, args.p, args.s)
        print(f"[NORMS] MH/M ratios min={eq.ratio_min:.6g} max={eq.ratio_max:.6g} "
              f"mean={eq.ratio_mean:.6g} window=[{eq.window[0]:.4g}, {eq.window[1]:.4g}]")
        if not eq.within_window:
            return EXIT_FAILED
    return EXIT_OK


def cmd_evolve(args: argparse.Namespace) -> int:
    u0 = read_field(args.field)
    spec = _flow_spec(args)
    steps = int(round(args.T / spec.dt))
    snaps = sorted({int(round(i * steps / max(1, args.snaps - 1))) for i in range(args.snaps)})
    traj = evolve(u0, spec, args.T, [k * spec.dt for k in snaps],
                  norms=[NormSpec(NormKind.MODULATION, s=args.s, p=args.p)])
    folder = _out_folder(args, "evolve")
    TrajectoryLoader(folder).save(traj)
    print(f"[EVOLVE] {len(traj.snapshots)} snapshots, mass drift {traj.mass_drift():.3e} -> {folder}")
    if args.plot:
        report.plot_timeseries(os.path.join(folder, "diagnostics.svg"), traj.diagnostics,
                               [k for k in traj.diagnostics[0] if k != "t"], spec.equation.name)
    return EXIT_OK


def cmd_alpha(args: argparse.Namespace) -> int:
    kappa = complex(args.kappa_re, args.kappa_im)
    folder = _out_folder(args, "alpha")
    path = os.path.join(folder, "alpha.csv")
    if args.traj:
        traj = TrajectoryLoader(args.traj).load()
        drift = conservation_drift(traj, kappa, args.J, args.c0, args.workers)
        report.write_csv(path, alpha_csv_header(args.J),
                         [r.as_row(t) for t, r in zip(drift.times, drift.results)])
        print(f"[ALPHA] max relative drift {drift.max_rel_drift:.3e}, "
              f"unverifiable {drift.unverifiable}, min margin {drift.min_margin:.3g}")
        if args.plot:
            rows = [{"t": t, "alpha": v} for t, v in zip(drift.times, drift.values)]
            report.plot_timeseries(os.path.join(folder, "alpha.svg"), rows, ["alpha"], "alpha drift")
        return EXIT_OK
    if not args.field:
        raise ValueError("alpha needs a field file or --traj")
    u = read_field(args.field)
    lead = leading_term(u, kappa, args.leading)
    res = alpha(u, kappa, args.J, args.sign, args.c0, args.method, args.backend)
    hs = hs_report(u, kappa)
    report.write_csv(path, alpha_csv_header(args.J), [res.as_row(0.0)])
    print(f"[ALPHA] value={res.value:.12g} leading={lead:.12g} r={res.ratio:.4g} "
          f"tail<={res.tail_bound:.3g} small={res.smallness_ok} hs/log-weighted={hs.ratio:.4g}")
    return EXIT_OK


def _certify_config(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {
        "cutoff": args.cutoff,
        "p": args.p,
        "s": args.s,
        "theta": args.theta,
        "epsilon": args.epsilon,
        "n_mod": args.n_mod,
        "family_mode": args.family_mode,
        "T": args.T,
        "seed": args.seed,
        "initial_norm": args.initial_norm,
        "data_path": args.field,
        "lambda_cap": args.lambda_cap,
        "max_kernel_modes": args.max_kernel_modes,
        "growth_constant": args.growth_constant,
        "tail_tolerance": args.tail_tolerance,
        "J": args.J,
        "max_workers": args.workers,
    }
    overrides.update({f"flow.{k}": v for k, v in _flow_overrides(args).items()})
    cfg = ExperimentConfig.from_toml(args.config, overrides)
    cfg.output_dir = _out_folder(args, "certify")
    return cfg


def cmd_certify(args: argparse.Namespace) -> int:
    cfg = _certify_config(args)
    if args.study:
        study = growth_exponent_study(cfg, args.study)
        print(f"[CERTIFY] growth exponent {study.exponent:.4g} (bound {study.bound:.4g})")
        report.write_json(os.path.join(cfg.output_dir, "study.json"), {
            "sizes": study.sizes, "sup_ratios": study.sup_ratios,
            "exponent": study.exponent, "bound": study.bound, "holds": study.holds,
        })
        return EXIT_OK if study.holds else EXIT_FAILED
    record = growth_bound_experiment(cfg, write=True, plot=args.plot)
    cert = record.certificate
    print(f"[CERTIFY] lambda={record.lam} sup ratio={cert['sup_ratio']:.4g} "
          f"measured C={cert['measured_C']:.4g} status={record.status}")
    return EXIT_OK if record.certified else EXIT_FAILED


def cmd_identity_suite(args: argparse.Namespace) -> int:
    rep = identity_suite(args.lam, args.cutoff, args.seed)
    for c in rep.checks:
        print(f"[IDENTITY] {c.name}: {c.max_error:.3e} <= {c.tolerance:.0e} {'PASS' if c.passed else 'FAIL'}")
    return EXIT_OK if rep.passed else EXIT_FAILED


def cmd_gen(args: argparse.Namespace) -> int:
    cfg = ExperimentConfig(cutoff=args.cutoff, seed=args.seed, data_alpha=args.alpha,
                           initial_norm=args.initial_norm, p=args.p, s=args.s)
    u = initial_datum(cfg)
    path = args.out or os.path.join(result_dir(args.output_dir), f"field_{_timestamp()}.json")
    write_field(path, u)
    print(f"[GEN] field cutoff={args.cutoff} alpha={args.alpha} seed={args.seed} -> {path}")
    return EXIT_OK


def _add_flow_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--equation", choices=sorted(EQUATIONS), default=None)
    p.add_argument("--sign", choices=["defocusing", "focusing"], default=None)
    p.add_argument("--beta", type=float, default=None, help="mkdv_nls coefficient")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--integrator", choices=["strang", "ifrk4"], default=None)
    p.add_argument("--no-dealias", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spectral-lab", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--verbose", action="store_true")
    parser.add_argument("--output-dir", default=None, help="output root (default $SPECTRAL_LAB_OUTPUT or result/)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("norms", help="norms of field files")
    p.add_argument("fields", nargs="+")
    p.add_argument("--theta", type=float, default=-1.0)
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--compare", action="store_true", help="MH/M equivalence ratios over the fields")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_norms)

    p = sub.add_parser("evolve", help="run a trajectory")
    p.add_argument("field")
    _add_flow_args(p)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--snaps", type=int, default=11)
    p.add_argument("--p", type=float, default=4.0)
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--plot", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("alpha", help="trace series on a field or along a trajectory")
    p.add_argument("field", nargs="?")
    p.add_argument("--traj", default=None, help="trajectory directory for conservation drift")
    p.add_argument("--kappa-re", type=float, default=0.5)
    p.add_argument("--kappa-im", type=float, default=0.0)
    p.add_argument("--J", type=int, default=8)
    p.add_argument("--c0", type=float, default=0.25)
    p.add_argument("--sign", choices=["defocusing", "focusing"], default="defocusing")
    p.add_argument("--leading", choices=["closed_form", "matrix"], default="closed_form")
    p.add_argument("--method", choices=["direct", "eig"], default="direct")
    p.add_argument("--backend", choices=["numpy", "torch"], default="numpy")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--plot", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_alpha)

    p = sub.add_parser("certify", help="growth-bound certificate")
    p.add_argument("--config", default=None, help="TOML file mirroring ExperimentConfig")
    p.add_argument("--field", default=None, help="initial data on the unit torus")
    _add_flow_args(p)
    p.add_argument("--cutoff", type=int, default=None)
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--s", type=float, default=None)
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--n-mod", type=int, default=None)
    p.add_argument("--family-mode", choices=FAMILY_MODES, default=None)
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--initial-norm", type=float, default=None)
    p.add_argument("--lambda-cap", type=int, default=None)
    p.add_argument("--max-kernel-modes", type=int, default=None)
    p.add_argument("--growth-constant", type=float, default=None)
    p.add_argument("--tail-tolerance", type=float, default=None)
    p.add_argument("--J", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--study", type=float, nargs="+", default=None, help="initial sizes for the exponent fit")
    p.add_argument("--plot", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("identity-suite", help="exact discrete identities")
    p.add_argument("--lambda", dest="lam", type=int, default=1)
    p.add_argument("--cutoff", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_identity_suite)

    p = sub.add_parser("gen", help="random data on the unit torus")
    p.add_argument("--cutoff", type=int, default=8)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--initial-norm", type=float, default=None, help="rescale to this FL^{s,p} norm")
    p.add_argument("--p", type=float, default=4.0)
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--out", default=None, help="output path (.json or .bin)")
    p.set_defaults(func=cmd_gen)
    return parser


def run_cli(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    if args.verbose:
        set_log_level("DEBUG")
    try:
        return args.func(args)
    except NumericalGuardError as e:
        print(f"[{args.command.upper()}] numerical guard: {e}", file=sys.stderr)
        return EXIT_GUARD
    except (ValueError, OSError, TrajectoryLoadError) as e:
        print(f"[{args.command.upper()}] error: {e}", file=sys.stderr)
        return EXIT_USAGE


__all__ = ["build_parser", "run_cli", "EXIT_OK", "EXIT_FAILED", "EXIT_USAGE", "EXIT_GUARD"]
