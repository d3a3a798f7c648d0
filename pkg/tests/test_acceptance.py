"""Acceptance criteria, one test each, at the stated tolerances.

Run with ``pytest tests/test_acceptance.py -s`` to see the PASS/FAIL lines as
they happen; they are also repeated in the terminal summary.
"""
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from flathilbert import battery, certify
from flathilbert.battery import RunConfig
from flathilbert.functionals import bounded_trend
from flathilbert.kernel import MP, KernelSpec, Region
from flathilbert.measures import redistributed_closed_form, sigma_dot, sigma_dot_mass
from flathilbert.reversal import build_reversal_failure_witness, energy_reversal_check, random_hilbert_instance
from flathilbert.tree import addresses, interval_of

N = 16
RHO = Fraction(3, 4)


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


@pytest.fixture(scope="module")
def cfg():
    return RunConfig().validated()


def mpf(x):
    if isinstance(x, Fraction):
        return MP.mpf(x.numerator) / x.denominator
    return MP.mpf(x)


def test_redistribution_identity():
    t0 = time.perf_counter()
    report = certify.check_redistribution(N, 6, KernelSpec(n=N, rho=RHO))
    elapsed = time.perf_counter() - t0
    mismatches = sum(row["mismatches"] for row in report.per_depth)
    record(1, "literal re-balancing equals the closed form to depth 6",
           report.passed and mismatches == 0 and elapsed < 10,
           f"mismatches={mismatches}, {elapsed:.2f}s of 10s")


def test_flatness_is_exact():
    t0 = time.perf_counter()
    report = certify.certify_flatness(KernelSpec(n=N, rho=RHO), redistributed_closed_form(N, 8), 6, samples=5)
    elapsed = time.perf_counter() - t0
    points = sum(row["points"] for row in report.per_depth)
    record(2, "transform of the level-8 measure is exactly 0 at centers and band points, levels <= 6",
           report.passed and not report.witnesses and elapsed < 60,
           f"{points} points, nonzero or inexact={len(report.witnesses)}, {elapsed:.1f}s of 60s")


def test_atom_ratio_partial_sums():
    gens = 7
    report = certify.sigma_dot_ratio_check(N, gens, tail=6)
    # independent recomputation at the level where 6 terms remain
    sigma = sigma_dot(N, gens)
    q = Fraction(4, N * N) / (1 - Fraction(1, N * N))
    partial = sum(q ** j for j in range(6))
    direct = {sigma.mass_on(interval_of(a, N)) / sigma_dot_mass(a, N) for a in addresses(gens - 6)}
    gap = float(Fraction(255, 251) - partial)
    record(3, "center-atom ratio equals the partial geometric sum and nears 255/251",
           report.passed and direct == {partial} and gap < 1e-6 and 1 / (1 - q) == Fraction(255, 251),
           f"identity mismatches={len(report.witnesses)}, distance to 255/251 at 6 terms={gap:.3g}")


def test_replication_identities_and_kernel_dilation():
    report = certify.verify_replication(N, 8)
    kernel = KernelSpec(n=N, rho=RHO)
    rng = np.random.default_rng(11)
    exact_bad, exact_seen = 0, 0
    while exact_seen < 10_000:
        x = Fraction(float(N) ** rng.uniform(-4, 4)).limit_denominator(2 ** 60)
        if kernel.classify(x).region is Region.TRANSITION or kernel.classify(N * x).region is Region.TRANSITION:
            continue
        exact_seen += 1
        exact_bad += kernel.eval(N * x) != kernel.eval(x) / N
    worst = 0.0
    zones = [z for band in range(-3, 4) for z in kernel.transition_zones(band)]
    for i in range(10_000):
        lo, hi = zones[i % len(zones)]
        x = Fraction(lo * (hi / lo) ** rng.uniform(0.001, 0.999))
        a, b = mpf(kernel.eval(N * x)), mpf(kernel.eval(x)) / N
        worst = max(worst, float(abs(a - b) / abs(a)))
    record(4, "self-similarity of the measures to level 7 and dilation of the kernel",
           report.passed and exact_bad == 0 and worst < 1e-12,
           f"identity failures={len(report.witnesses)}, exact mismatches={exact_bad}/10000, "
           f"worst transition error={worst:.2g}")


def test_a2_is_stable(cfg):
    report = battery.check_a2(cfg)
    sups = {row["depth"]: row["sup"] for row in report.per_depth}
    variation = (max(sups.values()) - min(sups.values())) / min(sups.values())
    record(5, "A2 supremum is finite and varies < 10% over depths 6-8",
           set(sups) == {6, 7, 8} and all(math.isfinite(v) for v in sups.values()) and variation < 0.10,
           f"sups={[round(sups[d], 4) for d in sorted(sups)]}, variation={variation:.3g}")


def test_testing_series_are_bounded(cfg):
    t0 = time.perf_counter()
    details, ok = [], True
    for check in (battery.check_test_forward, battery.check_test_backward, battery.check_wbp,
                  battery.check_maximal):
        report = check(cfg)
        values = [row["sup_ratio"] for row in report.per_depth]
        trend = bounded_trend(values, 10.0, 0.05)
        depths = [row["depth"] for row in report.per_depth]
        ok = ok and trend["pass"] and depths == [4, 5, 6, 7, 8]
        details.append(f"{report.name} spread={trend['spread']:.3g}")
    elapsed = time.perf_counter() - t0
    record(6, "testing, weak boundedness and maximal ratios are bounded over depths 4-8",
           ok and elapsed < 600, ", ".join(details) + f", {elapsed:.0f}s of 600s")


def test_energy_dichotomy(cfg):
    t0 = time.perf_counter()
    bounded = battery.check_energy_backward(cfg)
    values = [row["sup"] for row in bounded.per_depth]
    spread = max(values) / min(values)
    diverging = battery.check_energy_backward_hat(cfg)
    incs = [row["increment"] for row in diverging.per_depth]
    later = [float(x) for x in incs[1:6]]
    mean = sum(later) / len(later)
    sums = np.cumsum([float(x) for x in incs])
    slope = float(np.polyfit(np.arange(len(sums)), sums, 1)[0])
    elapsed = time.perf_counter() - t0
    record(7, "backward energy is bounded for atoms and grows affinely for smeared atoms",
           spread <= 10 and cfg.random_decompositions == 1000 and slope > 0 and len(later) == 5
           and all(mean / 3 <= x <= 3 * mean for x in later) and elapsed < 300,
           f"atom spread={spread:.3g}, smeared slope={slope:.3g}, "
           f"increments/mean in [{min(later) / mean:.3f}, {max(later) / mean:.3f}], {elapsed:.0f}s of 300s")


def test_energy_reversal():
    rng = np.random.default_rng(0)
    consts = [energy_reversal_check(random_hilbert_instance(rng, N)).constant for _ in range(20)]
    spread = max(consts) / min(consts)
    witness = build_reversal_failure_witness(N, RHO)
    res = energy_reversal_check(witness)
    record(8, "reversal holds for 1/x and fails exactly for the flattened kernel",
           all(math.isfinite(c) for c in consts) and spread <= 10 and res.exact and res.rhs == 0 and res.lhs > 0,
           f"1/x spread={spread:.3g}, flat rhs={res.rhs}, flat lhs={float(res.lhs):.3g}, exact={res.exact}")


def test_kernel_structure():
    kernel = KernelSpec(n=N, rho=RHO)
    report = certify.kernel_property_check(kernel, samples=10_000)
    xs = np.geomspace(16.0 ** -4, 16.0 ** 4, 10_000)
    env = np.abs(xs * kernel.eval_array(xs))
    odd = sum(kernel.eval(-Fraction(x)) != -kernel.eval(Fraction(x)) for x in xs)
    in_env = bool(env.min() >= 1 / math.sqrt(N) and env.max() <= math.sqrt(N))
    nonpos = bool((kernel.deriv_array(xs) <= 0).all())
    record(9, "oddness, |xK| envelope, monotone kernel, finite differences in transitions",
           report.passed and odd == 0 and in_env and nonpos,
           f"odd mismatches={odd}, |xK| in [{env.min():.4f}, {env.max():.4f}], "
           f"worst finite-difference error={report.value:.2g}")
