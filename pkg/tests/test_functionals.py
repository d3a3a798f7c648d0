import math
from fractions import Fraction

import numpy as np
from hypothesis import given, strategies as st

from flathilbert.functionals import (
    a2_sup, bounded_trend, divergent_trend, energy, energy_sq, energy_sum, energy_sum_batch,
    gap_energy_increments, maximal_restricted, maximal_testing, poisson, poisson_batch, random_intervals,
    wbp_ratio,
)
# aliased so pytest does not collect them as tests
from flathilbert.functionals import testing_backward as backward_testing, testing_forward as forward_testing
from flathilbert.measures import DiscreteMeasure, cantor_measure, redistributed_closed_form, sigma_dot, sigma_hat
from flathilbert.tree import (
    Interval, TreeAddress, addresses, children_decomposition, gap_decomposition, interval_of, random_decomposition,
)

N = 16
atom_lists = st.lists(st.tuples(st.fractions(0, 1, max_denominator=128), st.fractions(1, 4, max_denominator=6)),
                      min_size=1, max_size=6, unique_by=lambda t: t[0])


def atomic(pairs):
    return DiscreteMeasure(tuple(sorted(pairs)), ())


def test_poisson_examples():
    unit = Interval(0, 1)
    assert poisson(unit, atomic([(Fraction(1, 2), Fraction(1))])) == 1
    assert poisson(unit, atomic([(Fraction(2), Fraction(1))])) == Fraction(1, 4)


def test_poisson_of_a_piece_matches_quadrature():
    I = Interval(Fraction(1, 3), Fraction(1, 2))
    mu = DiscreteMeasure((), ((Interval(0, 2), Fraction(1)),))
    count = 2_000_000
    ys = (np.arange(count) + 0.5) * 2 / count
    L = 1 / 6
    d = np.maximum(1 / 3 - ys, 0) + np.maximum(ys - 1 / 2, 0)
    ref = math.fsum(L / (L + d) ** 2) / count
    assert abs(float(poisson(I, mu)) - ref) < 1e-9


def test_poisson_of_tree_intervals_tracks_their_density(omega8):
    # |I|_omega / |I| already captures the Poisson average, uniformly in the level
    ratios = []
    for level in range(1, 6):
        for a in addresses(level):
            I = interval_of(a, N)
            ratios.append(float(poisson(I, omega8) / (omega8.mass_on(I) / I.length)))
    assert 1 <= min(ratios) and max(ratios) <= 1.01


def test_float_poisson_agrees_with_exact(omega8, sigma6):
    rng = np.random.default_rng(2)
    a, b = random_intervals(rng, 200, N, 6)
    for mu in (omega8, sigma6):
        fast = poisson_batch(a, b, mu)
        exact = [float(poisson(Interval(Fraction(x), Fraction(y)), mu)) for x, y in zip(a, b)]
        np.testing.assert_allclose(fast, exact, rtol=1e-10)


def test_energy_examples():
    assert energy_sq(Interval(0, 1), atomic([(Fraction(1, 3), Fraction(2))])) == 0
    uniform = DiscreteMeasure((), ((Interval(0, 1), Fraction(1)),))
    assert energy_sq(Interval(0, 1), uniform) == Fraction(1, 12)
    assert abs(float(energy(Interval(0, 1), uniform)) - 0.288675) < 1e-6


@given(atom_lists)
def test_energy_is_the_normalised_variance(pairs):
    mu = atomic(pairs)
    total = sum(m for _, m in pairs)
    mean = sum(x * m for x, m in pairs) / total
    var = sum(m * (x - mean) ** 2 for x, m in pairs) / total
    assert energy_sq(Interval(0, 1), mu) == var
    assert energy_sq(Interval(0, 1), mu) <= 1


def test_a2_product_has_no_kappa_dependence(omega8, sigma6):
    prods = []
    for word in ("LLLLL", "LRLRL", "RRRRR", "RLRLR", "LLRRL"):
        I = interval_of(TreeAddress.parse(word), N)
        prods.append(float(poisson(I, omega8) * poisson(I, sigma6)))
    assert max(prods) / min(prods) < 1.5


def test_a2_sup_is_finite_and_stable(omega8, sigma6):
    extra = random_intervals(np.random.default_rng(0), 300, N, 8)
    sups = [a2_sup(sigma6, omega8, N, d, extra)["sup"] for d in (6, 7, 8)]
    assert all(math.isfinite(s) for s in sups)
    assert (max(sups) - min(sups)) / min(sups) < 0.05


def test_gap_decomposition_with_atoms_carries_no_energy(omega8, sigma6):
    v = energy_sum(gap_decomposition(N, 5), sigma6, omega8, "backward")
    assert v.exact and v.value == 0


def test_gap_increments_with_smeared_atoms_stay_comparable(omega8):
    incs = [float(x) for x in gap_energy_increments(sigma_hat(N, 6), omega8, N, 6)]
    later = incs[1:]
    mean = sum(later) / len(later)
    assert all(mean / 3 <= x <= 3 * mean for x in later)


def test_float_energy_batch_agrees_with_exact_sum(omega8, sigma6):
    rng = np.random.default_rng(4)
    avoid = [x for x, _ in sigma6.atoms]
    decs = [children_decomposition(TreeAddress.root(), N, 3)]
    for lev in (0, 1, 2):
        base = interval_of(TreeAddress.from_index(lev, 1), N)
        decs.append(random_decomposition(base, rng, avoid=avoid))
    bases, a, b, owner = [], [], [], []
    for j, dec in enumerate(decs):
        bases.append(dec.base)
        for p in dec.parts:
            a.append(float(p.left))
            b.append(float(p.right))
            owner.append(j)
    for direction in ("backward", "forward"):
        fast = energy_sum_batch(bases, np.array(a), np.array(b), np.array(owner), sigma6, omega8, direction)
        exact = [float(energy_sum(dec, sigma6, omega8, direction).value) for dec in decs]
        np.testing.assert_allclose(fast, exact, rtol=1e-8, atol=1e-14)


def test_pivotal_sum_dominates_energy_sum(omega8, sigma6):
    dec = children_decomposition(TreeAddress.root(), N, 4)
    plain = energy_sum(dec, sigma6, omega8, "forward")
    pivotal = energy_sum(dec, sigma6, omega8, "forward", pivotal=True)
    assert plain.value <= pivotal.value


def test_backward_testing_grows_for_the_cantor_measure(flat_kernel):
    vals = []
    for m in (3, 4, 5, 6):
        v = backward_testing(Interval(0, 1), flat_kernel, sigma_dot(N, m), cantor_measure(N, m + 2))
        vals.append(float(v.value))
    assert all(b - a > 0.003 for a, b in zip(vals, vals[1:]))


def test_backward_testing_vanishes_on_the_unit_interval(flat_kernel, omega8, sigma6):
    v = backward_testing(Interval(0, 1), flat_kernel, sigma6, omega8)
    assert v.exact and v.value == 0


def test_forward_testing_on_a_rescaled_child(flat_kernel, omega8, sigma6):
    whole = float(forward_testing(Interval(0, 1), flat_kernel, sigma6, omega8).value)
    child = float(forward_testing(interval_of(TreeAddress.parse("LL"), N), flat_kernel, sigma6, omega8).value)
    assert whole / 2 <= child <= 2 * whole


def test_weak_boundedness_is_dominated_by_testing(flat_kernel, omega8, sigma6):
    for word in ("root", "L", "RL"):
        I = interval_of(TreeAddress.parse(word), N)
        r = wbp_ratio(I, I, flat_kernel, sigma6, omega8)
        t = float(forward_testing(I, flat_kernel, sigma6, omega8).value)
        assert r <= math.sqrt(t) * (1 + 1e-9)


def test_maximal_function_of_an_atom_sees_the_deepest_interval():
    delta = atomic([(Fraction(0), Fraction(1))])
    assert maximal_restricted(Interval(0, 1), delta, 0, N, 5) == N ** 5


def test_maximal_testing_is_bounded_across_depths(omega8):
    vals = []
    for m in (5, 6, 7):
        v = maximal_testing(Interval(0, 1), sigma_dot(N, m - 2), redistributed_closed_form(N, m), N, m)
        vals.append(float(v.value))
    assert max(vals) / min(vals) < 1.1


def test_trend_helpers():
    assert bounded_trend([1.0, 1.01, 1.011, 1.0112])["pass"]
    assert not bounded_trend([1.0, 2.0, 4.0, 8.0])["pass"]
    assert divergent_trend([0.0, 1.0, 2.1, 3.0])["pass"]
    assert not divergent_trend([0.0, 1.0, 1.01, 1.011])["pass"]
