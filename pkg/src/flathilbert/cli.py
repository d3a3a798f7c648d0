"""Command line entry point: ``flathilbert <subcommand> [options]``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

from .battery import CHECKS, RunConfig, emit_profile, kernel_profile_rows, run_battery
from .errors import ParameterError, ResourceError
from .kernel import KernelSpec
from .measures import DiscreteMeasure, redistributed_closed_form, sigma_dot, sigma_hat
from .transform import apply
from .tree import parse_frac

log = logging.getLogger("flathilbert")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-param", type=int, default=16, help="branching base N (default 16)")
    p.add_argument("--rho", type=parse_frac, default=Fraction(3, 4), help="flat-set parameter, rational (default 3/4)")
    p.add_argument("--depth", type=int, default=8, help="measure depth m (default 8)")
    p.add_argument("--sigma-gens", type=int, default=6, help="atom generations n (default 6)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--format", dest="fmt", choices=["json", "csv", "both"], default="json")
    p.add_argument("--allow-unsafe-params", dest="allow_unsafe", action="store_true")
    p.add_argument("--parallel", action="store_true", help="run independent checks in worker processes")
    p.add_argument("--timings", action="store_true", help="include runtimes in the JSON reports")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flathilbert",
                                     description="Certify the flattened-kernel two-weight example numerically.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in CHECKS:
        _common(sub.add_parser(name, help=f"run the {name} check"))
    _common(sub.add_parser("run-all", help="run every check and write the profile CSVs"))
    kp = sub.add_parser("kernel-profile", help="dump x, K, K', region, band as CSV")
    kp.add_argument("--n", type=int, default=16)
    kp.add_argument("--rho", type=parse_frac, default=Fraction(3, 4))
    kp.add_argument("--from", dest="lo", type=float, default=1e-4)
    kp.add_argument("--to", dest="hi", type=float, default=1e2)
    kp.add_argument("--per-decade", type=int, default=200)
    kp.add_argument("--out", default=None, help="CSV path (stdout if omitted)")
    te = sub.add_parser("transform-eval", help="evaluate the transform of a measure at points")
    te.add_argument("--measure", required=True,
                    help="JSON file, or one of omega-hat, sigma-dot, sigma-hat")
    te.add_argument("--points", required=True, help="comma separated rationals, e.g. 1/32,1/2")
    te.add_argument("--n", type=int, default=16)
    te.add_argument("--rho", type=parse_frac, default=Fraction(3, 4))
    te.add_argument("--kind", choices=["flat", "hilbert"], default="flat")
    te.add_argument("--depth", type=int, default=8)
    te.add_argument("--sigma-gens", type=int, default=6)
    te.add_argument("--exclusion", type=parse_frac, default=Fraction(0))
    return parser


def _config(args) -> RunConfig:
    return RunConfig(n_param=args.n_param, rho=args.rho, depth=args.depth, sigma_gens=args.sigma_gens,
                     seed=args.seed, out=args.out, fmt=args.fmt, allow_unsafe=args.allow_unsafe,
                     parallel=args.parallel, timings=args.timings)


def _write_measures(cfg: RunConfig) -> None:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    n = cfg.n_param
    for name, mu in (("omega_hat", redistributed_closed_form(n, cfg.depth)),
                     ("sigma_dot", sigma_dot(n, cfg.sigma_gens)),
                     ("sigma_hat", sigma_hat(n, cfg.sigma_gens))):
        (out / f"{name}.json").write_text(json.dumps(mu.to_json(), indent=1) + "\n")


def _kernel_profile(args) -> int:
    kernel = KernelSpec(n=args.n, rho=args.rho)
    rows = kernel_profile_rows(kernel, args.lo, args.hi, args.per_decade)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "K", "dK", "region", "band"])
        for x, k, d, r, b in rows:
            w.writerow([f"{x:.12g}", f"{k:.12g}", f"{d:.12g}", r, b])
    finally:
        if args.out:
            fh.close()
    return 0


def _transform_eval(args) -> int:
    kernel = KernelSpec(n=args.n, rho=args.rho, kind=args.kind)
    named = {"omega-hat": lambda: redistributed_closed_form(args.n, args.depth),
             "sigma-dot": lambda: sigma_dot(args.n, args.sigma_gens),
             "sigma-hat": lambda: sigma_hat(args.n, args.sigma_gens)}
    if args.measure in named:
        mu = named[args.measure]()
    else:
        mu = DiscreteMeasure.from_json(Path(args.measure).read_text())
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["x", "value", "exact", "err"])
    for tok in args.points.split(","):
        x = parse_frac(tok.strip())
        v = apply(kernel, mu, x, exclusion=args.exclusion)
        shown = f"{v.value.numerator}/{v.value.denominator}" if v.exact else f"{float(v.value):.17g}"
        w.writerow([tok.strip(), shown, v.exact, f"{v.err:.3g}"])
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "kernel-profile":
            return _kernel_profile(args)
        if args.command == "transform-eval":
            return _transform_eval(args)
        cfg = _config(args)
        names = None if args.command == "run-all" else [args.command]
        code, reports = run_battery(cfg, names)
        for r in reports:
            print(r.summary_line())
        failing = [r.name for r in reports if not r.meets_expectation]
        if failing:
            print(f"first failing check: {failing[0]}", file=sys.stderr)
        if cfg.out and args.command == "build-measures":
            _write_measures(cfg.validated())
        if cfg.out and args.command == "run-all":
            emit_profile(cfg.out, cfg)
        return code
    except (ParameterError, ResourceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
