from __future__ import annotations
import argparse
import logging
import sys
from typing import List, Optional

from .commands import cmd_check, cmd_estimate, cmd_gen, cmd_repro_example, cmd_sim, parse_floats
from .config import BUILTIN_TAG, DEFAULT_HORIZON, DEFAULT_STEP, LOG_LEVEL, EXAMPLE_SEEDS, EXAMPLE_Z0
from .errors import DivergenceError, InfeasibleCertificateError, InfeasibleParametersError, SwitchedIOSSError

log = logging.getLogger("switched_ioss")


def _add_family_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--builtin", help=f"Builtin family tag, e.g. {BUILTIN_TAG}")
    src.add_argument("--config", help="Family config file (INI)")
    p.add_argument("--delta-check", type=float, default=None,
                   help="Stable dwell lower bound (default: family or optimum)")
    p.add_argument("--Delta-hat", type=float, default=None,
                   help="Unstable dwell upper bound (default: family or optimum)")
    p.add_argument("--margin", type=float, default=0.0, help="Safety margin demanded from every condition")


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--signal", default=None, help="Signal JSON; drawn at random when omitted")
    p.add_argument("--x0", default=None, help="Initial state, comma separated; drawn at random when omitted")
    p.add_argument("--input", dest="input_spec", default=None, help="zero | uniform:lo,hi[,period] | expr:<e>")
    p.add_argument("--horizon", type=float, default=None, help="Simulation horizon (default: signal horizon)")
    p.add_argument("--step", type=float, default=DEFAULT_STEP, help="Integration step")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="switched-ioss",
        description="Switched-IOSS: dwell-time certificates, stabilizing signals, simulation and state-norm estimators",
    )
    p.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="Certify a family and print diagnostics")
    _add_family_args(c)
    c.add_argument("--out", default=None, help="Directory for certificate.json")
    c.add_argument("--probe-samples", type=int, default=None, help="Sampled Lyapunov-condition probes (0 disables)")
    c.add_argument("--seed", type=int, default=0)

    g = sub.add_parser("gen", help="Generate random stabilizing signals")
    _add_family_args(g)
    g.add_argument("--out", default=".", help="Output directory")
    g.add_argument("--n", type=int, default=1, help="Number of signals")
    g.add_argument("--horizon", type=float, default=DEFAULT_HORIZON)
    g.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("sim", help="Simulate one run")
    _add_family_args(s)
    s.add_argument("--out", default=".", help="Output directory")
    _add_run_args(s)

    e = sub.add_parser("estimate", help="Co-simulate the state-norm estimators")
    _add_family_args(e)
    e.add_argument("--out", default=".", help="Output directory")
    e.add_argument("--params", default="auto", help="auto | lambda_s*,lambda_u*,delta~,Delta~")
    e.add_argument("--z0", type=float, default=EXAMPLE_Z0)
    e.add_argument("--w0", type=float, default=None, help="Reference estimator start (default: z0)")
    _add_run_args(e)

    r = sub.add_parser("repro-example", help="Numerical experiment on the builtin family")
    r.add_argument("--out", default=".", help="Output directory")
    r.add_argument("--seeds", default=",".join(str(s) for s in EXAMPLE_SEEDS), help="Comma separated seeds")
    r.add_argument("--horizon", type=float, default=DEFAULT_HORIZON)
    r.add_argument("--step", type=float, default=DEFAULT_STEP)
    r.add_argument("--z0", type=float, default=EXAMPLE_Z0)
    r.add_argument("--jobs", type=int, default=1, help="Worker processes")
    return p


def _dispatch(args: argparse.Namespace) -> int:
    family = {"builtin": getattr(args, "builtin", None), "config": getattr(args, "config", None)}
    dwell = {
        "delta_check": getattr(args, "delta_check", None),
        "Delta_hat": getattr(args, "Delta_hat", None),
        "margin": getattr(args, "margin", 0.0),
    }
    if args.command == "check":
        extra = {} if args.probe_samples is None else {"probe_samples": args.probe_samples}
        return cmd_check(**family, **dwell, out=args.out, seed=args.seed, **extra)
    if args.command == "gen":
        return cmd_gen(**family, **dwell, out=args.out, n=args.n, horizon=args.horizon, seed=args.seed)
    run = {
        "signal": getattr(args, "signal", None),
        "x0": getattr(args, "x0", None),
        "input_spec": getattr(args, "input_spec", None),
        "horizon": getattr(args, "horizon", None),
        "step": getattr(args, "step", DEFAULT_STEP),
        "seed": getattr(args, "seed", 0),
    }
    if args.command == "sim":
        return cmd_sim(**family, **dwell, out=args.out, **run)
    if args.command == "estimate":
        return cmd_estimate(**family, **dwell, out=args.out, params=args.params, z0=args.z0, w0=args.w0, **run)
    seeds = [int(s) for s in parse_floats(args.seeds, what="--seeds")]
    return cmd_repro_example(
        out=args.out, seeds=seeds, horizon=args.horizon, step=args.step, z0=args.z0, jobs=args.jobs
    )


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else getattr(logging, LOG_LEVEL.upper(), logging.INFO),
        format="[%(levelname)s] %(message)s",
    )
    try:
        return _dispatch(args)
    except (InfeasibleCertificateError, InfeasibleParametersError, DivergenceError) as e:
        log.error("%s", e)
        return 1
    except (SwitchedIOSSError, OSError) as e:
        log.error("%s", e)
        return 2


if __name__ == "__main__":
    sys.exit(main())
