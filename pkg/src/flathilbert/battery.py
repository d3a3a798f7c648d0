"""The full check battery and its output files."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import certify
from .errors import ParameterError
from .functionals import (a2_sup, bounded_trend, divergent_trend, energy_sum, energy_sum_batch,
                          gap_energy_increments, maximal_testing, random_intervals, testing_backward,
                          testing_forward, wbp_scan)
from .kernel import KernelSpec
from .measures import redistributed_closed_form, sigma_dot, sigma_hat
from .report import CheckReport, to_jsonable
from .reversal import (build_reversal_failure_witness, energy_reversal_check,
                       gradient_monotonicity_check, random_hilbert_instance)
from .tree import (Interval, TreeAddress, addresses, addresses_upto, check_depth, frac_str,
                   children_decomposition, interval_of, kappa, random_decomposition)

log = logging.getLogger(__name__)

LOW_DEPTH = 6
FIRST_SERIES_DEPTH = 4
FAMILY_LEVEL = 2


@dataclass(frozen=True)
class RunConfig:
    n_param: int = 16
    rho: Fraction = Fraction(3, 4)
    depth: int = 8
    sigma_gens: int = 6
    seed: int = 0
    out: str | None = None
    fmt: str = "json"
    allow_unsafe: bool = False
    parallel: bool = False
    random_intervals: int = 1000
    random_decompositions: int = 1000
    reversal_instances: int = 20
    timings: bool = False
    warnings: tuple = field(default=())

    def validated(self) -> "RunConfig":
        """Checked copy; shrinks sigma_gens below depth and flags low depth."""
        check_depth(self.depth)
        warnings = list(self.warnings)
        rho = Fraction(self.rho)
        if not self.allow_unsafe and (self.n_param < 16 or rho < Fraction(2, 3)):
            raise ParameterError(
                f"N={self.n_param}, rho={rho} outside N >= 16, rho >= 2/3 (use --allow-unsafe-params)")
        gens = self.sigma_gens
        if gens > self.depth:
            gens = max(1, self.depth - 2)
            warnings.append(f"sigma generations reduced to {gens} (must not exceed depth)")
        if self.depth < LOW_DEPTH:
            warnings.append(f"low-depth run (depth {self.depth} < {LOW_DEPTH}): trend tolerances widened")
        return replace(self, rho=rho, sigma_gens=gens, warnings=tuple(warnings))

    @property
    def kernel(self) -> KernelSpec:
        return KernelSpec(n=self.n_param, rho=self.rho)

    @property
    def offset(self) -> int:
        return self.depth - self.sigma_gens

    @property
    def series_depths(self) -> list[int]:
        start = min(FIRST_SERIES_DEPTH, self.depth)
        return [d for d in range(start, self.depth + 1) if d - self.offset >= 1]

    @property
    def trend_tolerances(self) -> tuple[float, float]:
        return (20.0, 0.25) if self.depth < LOW_DEPTH else (10.0, 0.05)

    def params(self) -> dict:
        return {"N": self.n_param, "rho": self.rho, "n": self.sigma_gens, "m": self.depth,
                "depth": self.depth}


def _measures(cfg: RunConfig, d: int):
    """(sigma_dot, omega_hat) at series depth d."""
    return sigma_dot(cfg.n_param, d - cfg.offset), redistributed_closed_form(cfg.n_param, d)


def _family(cfg: RunConfig) -> list[Interval]:
    """Tree intervals of level <= 2 plus a few seeded random intervals."""
    n = cfg.n_param
    fam = [interval_of(a, n) for a in addresses_upto(FAMILY_LEVEL)]
    rng = np.random.default_rng(cfg.seed + 101)
    for _ in range(6):
        u = sorted(Fraction(int(v), 2 ** 20) for v in rng.integers(0, 2 ** 20 + 1, size=2))
        if u[0] < u[1]:
            fam.append(Interval(u[0], u[1]))
    return fam


def _series_report(name: str, cfg: RunConfig, values: list, per_depth: list, notes=()) -> CheckReport:
    ratio_tol, inc_tol = cfg.trend_tolerances
    trend = bounded_trend(values, ratio_tol, inc_tol)
    return CheckReport(name, trend["pass"], value=values[-1] if values else None,
                       bound_proxy={"max_over_min": trend["spread"], "increments": trend["increments"],
                                    "ratio_tol": ratio_tol, "increment_tol": inc_tol},
                       params=cfg.params(), per_depth=per_depth, seed=cfg.seed,
                       notes=list(cfg.warnings) + list(notes))


# -- individual checks --------------------------------------------------------------

def check_build_measures(cfg: RunConfig) -> CheckReport:
    n, m, g = cfg.n_param, cfg.depth, cfg.sigma_gens
    omega = redistributed_closed_form(n, m)
    sd, sh = sigma_dot(n, g), sigma_hat(n, g)
    coarse = redistributed_closed_form(n, m - 1) if m > 1 else omega
    refines = all(omega.mass_on(interval_of(a, n)) == coarse.mass_on(interval_of(a, n))
                  for a in addresses(max(m - 1, 0)))
    ratio = certify.sigma_dot_ratio_check(n, g, tail=max(1, min(6, g - 1)))
    ok = (omega.total_mass() == 1 and refines and sd.total_mass() == sh.total_mass()
          and ratio.passed)
    return CheckReport("build-measures", ok, value=omega.total_mass(),
                       bound_proxy={"sigma_dot_mass": sd.total_mass(), "sigma_dot_ratio_gap": ratio.value},
                       params=cfg.params(), per_depth=ratio.per_depth, witnesses=ratio.witnesses,
                       notes=list(cfg.warnings) + ratio.notes[1:] + [f"pieces {len(omega.pieces)}, atoms {len(sd.atoms)}"],
                       seed=cfg.seed)


def check_replication(cfg: RunConfig) -> CheckReport:
    r = certify.verify_replication(cfg.n_param, cfg.depth, kernel=cfg.kernel, seed=cfg.seed)
    r.params = cfg.params()
    return r


def check_eta(cfg: RunConfig) -> CheckReport:
    r = certify.check_redistribution(cfg.n_param, max(1, cfg.depth - 2), cfg.kernel)
    r.params = cfg.params()
    return r


def check_flatness(cfg: RunConfig) -> CheckReport:
    omega = redistributed_closed_form(cfg.n_param, cfg.depth)
    r = certify.certify_flatness(cfg.kernel, omega, max(0, cfg.depth - 2), samples=5, seed=cfg.seed)
    r.params = cfg.params()
    return r


def check_a2(cfg: RunConfig) -> CheckReport:
    n = cfg.n_param
    sd, om = sigma_dot(n, cfg.sigma_gens), redistributed_closed_form(n, cfg.depth)
    rng = np.random.default_rng(cfg.seed)
    extra = random_intervals(rng, cfg.random_intervals, n, cfg.depth)
    scan_depths = list(range(max(1, cfg.depth - 2), cfg.depth + 1))
    per_depth, sups = [], []
    for d in scan_depths:
        r = a2_sup(sd, om, n, d, extra)
        sups.append(r["sup"])
        # diagnostic: measures refined along with the scan depth
        if d - cfg.offset >= 1:
            s2, o2 = _measures(cfg, d)
            moving = a2_sup(s2, o2, n, d)["sup"]
        else:
            moving = math.nan
        per_depth.append({"depth": d, "sup": r["sup"], "argmax": str(r["argmax"]), "moving_measures_sup": moving})
    variation = (max(sups) - min(sups)) / min(sups)
    ok = all(math.isfinite(s) for s in sups) and variation < 0.10
    return CheckReport("a2-scan", ok, value=max(sups), bound_proxy={"relative_variation": variation, "tol": 0.10},
                       params=cfg.params(), per_depth=per_depth, seed=cfg.seed, notes=list(cfg.warnings))


def _sup_over_family(fn, fam) -> float:
    vals = [fn(I) for I in fam]
    return max(float(v.value) for v in vals if v is not None)


def check_test_forward(cfg: RunConfig) -> CheckReport:
    fam, kern = _family(cfg), cfg.kernel
    values, per = [], []
    for d in cfg.series_depths:
        sd, om = _measures(cfg, d)
        v = _sup_over_family(lambda I: testing_forward(I, kern, sd, om), fam)
        values.append(v)
        per.append({"depth": d, "n": d - cfg.offset, "sup_ratio": v})
    return _series_report("test-forward", cfg, values, per)


def check_test_backward(cfg: RunConfig) -> CheckReport:
    fam, kern = _family(cfg), cfg.kernel
    values, per = [], []
    for d in cfg.series_depths:
        sd, om = _measures(cfg, d)
        res = [testing_backward(I, kern, sd, om) for I in fam]
        res = [r for r in res if r is not None]
        v = max(float(r.value) for r in res)
        pointwise = max(r.breakdown["pointwise_over_poisson"] for r in res)
        values.append(v)
        per.append({"depth": d, "n": d - cfg.offset, "sup_ratio": v, "exact": all(r.exact for r in res),
                    "pointwise_over_poisson": pointwise})
    return _series_report("test-backward", cfg, values, per)


def check_wbp(cfg: RunConfig) -> CheckReport:
    kern = cfg.kernel
    values, per = [], []
    for d in cfg.series_depths:
        sd, om = _measures(cfg, d)
        r = wbp_scan(kern, sd, om, FAMILY_LEVEL, np.random.default_rng(cfg.seed))
        values.append(r["sup"])
        per.append({"depth": d, "n": d - cfg.offset, "sup_ratio": r["sup"], "argmax": str(r["argmax"])})
    return _series_report("wbp-scan", cfg, values, per)


def check_maximal(cfg: RunConfig) -> CheckReport:
    n = cfg.n_param
    fam = [interval_of(a, n) for a in addresses_upto(FAMILY_LEVEL)]
    values, per = [], []
    for d in cfg.series_depths:
        sd, om = _measures(cfg, d)
        v = _sup_over_family(lambda Q: maximal_testing(Q, sd, om, n, d), fam)
        values.append(v)
        per.append({"depth": d, "n": d - cfg.offset, "sup_ratio": v})
    return _series_report("maximal-testing", cfg, values, per)


def _random_decomps(cfg: RunConfig, avoid):
    rng = np.random.default_rng(cfg.seed + 7)
    n = cfg.n_param
    bases, a, b, owner = [], [], [], []
    for j in range(cfg.random_decompositions):
        lev = int(rng.integers(0, FAMILY_LEVEL + 1))
        base = interval_of(TreeAddress.from_index(lev, int(rng.integers(1, 2 ** lev + 1))), n)
        dec = random_decomposition(base, rng, avoid=avoid)
        bases.append(base)
        for p in dec.parts:
            a.append(float(p.left))
            b.append(float(p.right))
            owner.append(j)
    return bases, np.array(a), np.array(b), np.array(owner)


def _energy_series(cfg: RunConfig, direction: str, name: str) -> CheckReport:
    n = cfg.n_param
    # cut points avoid every atom that any depth of the series can carry
    avoid = [x for x, _ in sigma_dot(n, cfg.sigma_gens).atoms]
    decs = _random_decomps(cfg, avoid)
    values, per = [], []
    for d in cfg.series_depths:
        sd, om = _measures(cfg, d)
        tree_best = 0.0
        for base in addresses_upto(1):
            for lev in range(base.level + 1, d + 1):
                v = energy_sum(children_decomposition(base, n, lev), sd, om, direction)
                tree_best = max(tree_best, float(v.value))
        rand = energy_sum_batch(*decs, sd, om, direction)
        v = max(tree_best, float(rand.max()))
        values.append(v)
        per.append({"depth": d, "n": d - cfg.offset, "tree_sup": tree_best,
                    "random_sup": float(rand.max()), "sup": v})
    return _series_report(name, cfg, values, per,
                          notes=[f"random decompositions: {cfg.random_decompositions}"])


def check_energy_forward(cfg: RunConfig) -> CheckReport:
    return _energy_series(cfg, "forward", "energy-forward")


def check_energy_backward(cfg: RunConfig) -> CheckReport:
    return _energy_series(cfg, "backward", "energy-backward")


def energy_hat_increments(cfg: RunConfig) -> list[Fraction]:
    n = cfg.n_param
    return gap_energy_increments(sigma_hat(n, cfg.sigma_gens), redistributed_closed_form(n, cfg.depth),
                                 n, cfg.sigma_gens)


def check_energy_backward_hat(cfg: RunConfig) -> CheckReport:
    """Expected outcome: the backward energy sums over gaps grow without bound."""
    incs = energy_hat_increments(cfg)
    partial = np.cumsum([float(x) for x in incs])
    trend = divergent_trend(partial)
    later = [float(x) for x in incs[1:]]
    mean = float(np.mean(later)) if later else 0.0
    within = bool(later) and all(mean / 3 <= x <= 3 * mean for x in later)
    per = [{"level": i, "increment": x, "partial_sum": float(s)} for i, (x, s) in enumerate(zip(incs, partial))]
    return CheckReport("energy-backward-hat", trend["pass"] and within, value=trend["slope"],
                       bound_proxy={"increments_within_3x_of_mean": within},
                       params=cfg.params(), per_depth=per, expected="witness", seed=cfg.seed,
                       notes=list(cfg.warnings) + ["pass means divergence was detected"])


def check_reversal(cfg: RunConfig) -> CheckReport:
    rng = np.random.default_rng(cfg.seed)
    consts, grads = [], []
    probe = [(Fraction(3, 4), Fraction(1, 4)), (Fraction(1), Fraction(0)), (Fraction(9, 16), Fraction(1, 2))]
    for _ in range(cfg.reversal_instances):
        inst = random_hilbert_instance(rng, cfg.n_param)
        consts.append(energy_reversal_check(inst).constant)
        grads.append(gradient_monotonicity_check(inst, probe)["pass"])
    spread = max(consts) / min(consts)
    hilbert_ok = all(math.isfinite(c) for c in consts) and spread <= 10 and all(grads)
    witness = build_reversal_failure_witness(cfg.n_param, cfg.rho)
    res = energy_reversal_check(witness)
    flat_ok = res.exact and res.rhs == 0 and res.lhs > 0
    grad = gradient_monotonicity_check(witness, [(witness.J.right, witness.J.left)])
    return CheckReport("reversal", hilbert_ok and flat_ok, value={"hilbert_spread": spread, "flat_rhs": res.rhs},
                       bound_proxy={"spread_tol": 10},
                       params=cfg.params(), expected="witness", seed=cfg.seed,
                       per_depth=[{"instance": i, "constant": c} for i, c in enumerate(consts)],
                       witnesses=[{"J": str(witness.J), "lhs": res.lhs, "rhs": res.rhs,
                                   "gradient_bound_ratio": grad["worst_ratio"], "instance": witness.to_json()}],
                       notes=list(cfg.warnings))


CHECKS = {
    "build-measures": check_build_measures,
    "verify-replication": check_replication,
    "verify-eta": check_eta,
    "certify-flatness": check_flatness,
    "a2-scan": check_a2,
    "test-forward": check_test_forward,
    "test-backward": check_test_backward,
    "wbp-scan": check_wbp,
    "maximal-testing": check_maximal,
    "energy-forward": check_energy_forward,
    "energy-backward": check_energy_backward,
    "energy-backward-hat": check_energy_backward_hat,
    "reversal": check_reversal,
}


def run_check(name: str, cfg: RunConfig) -> CheckReport:
    """Run one check; any exception becomes a failing report."""
    t0 = time.perf_counter()
    try:
        rep = CHECKS[name](cfg)
    except Exception as exc:  # noqa: BLE001 - reported, not swallowed
        log.warning("%s raised %s", name, exc)
        rep = CheckReport(name, False, params=cfg.params(), seed=cfg.seed,
                          notes=list(cfg.warnings) + [f"error: {type(exc).__name__}: {exc}"])
    rep.runtime_ms = (time.perf_counter() - t0) * 1000
    return rep


def _run_named(args):
    return run_check(*args)


def run_battery(cfg: RunConfig, names=None) -> tuple[int, list[CheckReport]]:
    """Run the checks (all by default).  Exit code 0 iff every one meets its expectation."""
    cfg = cfg.validated()
    for w in cfg.warnings:
        log.warning(w)
    names = list(names or CHECKS)
    if cfg.parallel and len(names) > 1:
        with ProcessPoolExecutor() as pool:
            reports = list(pool.map(_run_named, [(nm, cfg) for nm in names]))
    else:
        reports = [run_check(nm, cfg) for nm in names]
    if cfg.out:
        write_reports(reports, cfg)
    code = 0 if all(r.meets_expectation for r in reports) else 1
    return code, reports


def write_reports(reports: list[CheckReport], cfg: RunConfig) -> None:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for r in reports:
        if cfg.fmt in ("json", "both"):
            (out / f"{r.name}.json").write_text(r.to_json(cfg.timings) + "\n")
        if cfg.fmt in ("csv", "both") and r.per_depth:
            (out / f"{r.name}.csv").write_text(r.per_depth_csv())
    summary = {"params": to_jsonable(cfg.params()), "seed": cfg.seed,
               "checks": [{"name": r.name, "pass": r.passed, "expected": r.expected} for r in reports]}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    timings = {r.name: round(r.runtime_ms, 1) for r in reports}
    (out / "timings.json").write_text(json.dumps(timings, indent=2) + "\n")


def kernel_profile_rows(kernel: KernelSpec, lo: float = 1e-4, hi: float = 1e2, per_decade: int = 200):
    count = int(round(math.log10(hi / lo) * per_decade)) + 1
    xs = np.geomspace(lo, hi, count)
    ks, ds = kernel.eval_array(xs), kernel.deriv_array(xs)
    regions = kernel.region_array(xs)
    bands, _ = kernel._band_array(xs)
    return [(float(x), float(k), float(d), r, int(b)) for x, k, d, r, b in zip(xs, ks, ds, regions, bands)]


def emit_profile(out_dir, cfg: RunConfig) -> list[Path]:
    """kernel.csv, masses.csv, nodes.csv and energy_backward_hat.csv for plotting."""
    cfg = cfg.validated()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = cfg.n_param
    paths = []
    p = out / "kernel.csv"
    with p.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "K", "dK", "region", "band"])
        for row in kernel_profile_rows(cfg.kernel):
            w.writerow([f"{row[0]:.12g}", f"{row[1]:.12g}", f"{row[2]:.12g}", row[3], row[4]])
    paths.append(p)
    from .measures import node_mass, sigma_dot_mass
    top = min(cfg.depth, 8)
    p = out / "masses.csv"
    # one row per level: the omega masses of its nodes from left to right
    with p.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "masses"])
        for lev in range(top + 1):
            w.writerow([lev] + [frac_str(node_mass(a, n)) for a in addresses(lev)])
    paths.append(p)
    p = out / "nodes.csv"
    with p.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "index", "address", "left", "right", "omega_mass", "kappa", "sigma_dot_mass"])
        for a in addresses_upto(top):
            iv = interval_of(a, n)
            k = kappa(a, n) if a.level else ""
            w.writerow([a.level, a.index, str(a), iv.left, iv.right, node_mass(a, n), k, sigma_dot_mass(a, n)])
    paths.append(p)
    p = out / "energy_backward_hat.csv"
    with p.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "increment", "partial_sum"])
        total = 0.0
        for lev, inc in enumerate(energy_hat_increments(cfg)):
            total += float(inc)
            w.writerow([lev, f"{float(inc):.12g}", f"{total:.12g}"])
    paths.append(p)
    return paths
