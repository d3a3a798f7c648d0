import json
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from flathilbert.certify import verify_replication
from flathilbert.errors import InexactError
from flathilbert.kernel import KernelSpec
from flathilbert.measures import (
    DiscreteMeasure, MeasureTransform, cantor_measure, compose, redistribute_step, redistributed_by_steps,
    redistributed_closed_form, sigma_dot, sigma_dot_mass, sigma_hat, transform,
)
from flathilbert.tree import Interval, TreeAddress, addresses, center_of, interval_of

N = 16
ETA = Fraction(1, N)


def oracle_masses(depth):
    """Walk the tree: the root's children split evenly, then a step keeping the
    previous direction takes (1 + eta)/2 of its parent and a turn takes (1 - eta)/2."""
    out = {(): Fraction(1)}
    frontier = [()]
    for _ in range(depth):
        nxt = []
        for word in frontier:
            for s in (-1, 1):
                if not word:
                    share = Fraction(1, 2)
                else:
                    share = (1 + ETA) / 2 if s == word[-1] else (1 - ETA) / 2
                out[word + (s,)] = out[word] * share
                nxt.append(word + (s,))
        frontier = nxt
    return out


def test_cantor_measure_examples():
    assert cantor_measure(N, 0).pieces == ((Interval(0, 1), Fraction(1)),)
    assert cantor_measure(N, 1).pieces == ((Interval(0, Fraction(1, 16)), Fraction(1, 2)),
                                           (Interval(Fraction(15, 16), 1), Fraction(1, 2)))
    three = cantor_measure(N, 3)
    assert len(three.pieces) == 8 and {m for _, m in three.pieces} == {Fraction(1, 8)}


def test_redistributed_examples():
    assert [m for _, m in redistributed_closed_form(N, 1).pieces] == [Fraction(1, 2)] * 2
    assert [m for _, m in redistributed_closed_form(N, 2).pieces] == [
        Fraction(17, 64), Fraction(15, 64), Fraction(15, 64), Fraction(17, 64)]
    for m in range(6):
        assert redistributed_closed_form(N, m).total_mass() == 1


def test_closed_form_matches_recursive_oracle():
    omega = redistributed_closed_form(N, 6)
    for word, mass in oracle_masses(6).items():
        assert omega.mass_on(interval_of(TreeAddress(word), N)) == mass


def test_one_step_from_cantor_gives_the_tilted_ratios(flat_kernel):
    omega = redistribute_step(cantor_measure(N, 2), 1, flat_kernel)
    for a in addresses(1):
        parent = omega.mass_on(interval_of(a, N))
        assert parent == Fraction(1, 2)
        kids = sorted(omega.mass_on(interval_of(c, N)) / parent for c in a.children())
        assert kids == [(1 - ETA) / 2, (1 + ETA) / 2]


def test_steps_agree_with_closed_form(flat_kernel):
    stages = redistributed_by_steps(N, 6, flat_kernel)
    assert stages[-1].canonical() == redistributed_closed_form(N, 6).canonical()
    for omega in stages:
        assert omega.total_mass() == 1


def test_rebalancing_needs_flat_sets():
    with pytest.raises(InexactError):
        redistribute_step(cantor_measure(N, 3), 1, KernelSpec.hilbert(N))


def test_sigma_dot_examples():
    assert sigma_dot(N, 1).atoms == ((Fraction(1, 2), Fraction(1)),)
    assert sigma_dot(N, 2).atoms == ((Fraction(1, 32), Fraction(1, 128)), (Fraction(1, 2), Fraction(1)),
                                     (Fraction(31, 32), Fraction(1, 128)))


def test_sigma_dot_normalisation():
    omega = redistributed_closed_form(N, 6)
    for k in range(6):
        for a in addresses(k):
            assert omega.mass_on(interval_of(a, N)) * sigma_dot_mass(a, N) * N ** (2 * k) == 1


def test_sigma_hat_smears_atoms_over_central_bands():
    assert sigma_hat(N, 1).pieces == ((Interval(Fraction(7, 16), Fraction(9, 16)), Fraction(1)),)
    for n in (3, 6, 8):
        sh = sigma_hat(N, n)
        assert sh.total_mass() == sigma_dot(N, n).total_mass()
        ivs = [iv for iv, _ in sh.pieces]
        assert all(p.right < q.left for p, q in zip(ivs, ivs[1:]))


def test_transform_examples():
    atom = DiscreteMeasure(((Fraction(1, 2), Fraction(1)),), ())
    assert transform(atom, MeasureTransform.dil(Fraction(1, 16))).atoms == ((Fraction(1, 32), Fraction(1)),)
    piece = DiscreteMeasure((), ((Interval(0, Fraction(1, 16)), Fraction(1, 2)),))
    assert transform(piece, MeasureTransform.ref()).pieces == ((Interval(Fraction(-1, 16), 0), Fraction(1, 2)),)


interval_ends = st.tuples(st.fractions(0, 1, max_denominator=1000), st.fractions(0, 1, max_denominator=1000)).filter(
    lambda t: t[0] != t[1]).map(sorted)


@given(interval_ends)
def test_conjugated_reflection_is_x_to_two_minus_x(ends):
    a, b = ends
    t = compose(MeasureTransform.trans(1), MeasureTransform.ref(), MeasureTransform.trans(-1))
    mu = DiscreteMeasure((), ((Interval(a, b), Fraction(1, 3)),))
    out = transform(mu, t)
    assert out.pieces == ((Interval(2 - b, 2 - a), Fraction(1, 3)),)
    assert out.total_mass() == mu.total_mass()


@given(st.fractions(-3, 3, max_denominator=50).filter(bool), st.fractions(-3, 3, max_denominator=50),
       st.fractions(-3, 3, max_denominator=50))
def test_composition_acts_right_to_left(g, c, x):
    t = compose(MeasureTransform.trans(c), MeasureTransform.dil(g))
    assert t.point(x) == g * x + c


def test_mass_queries():
    assert redistributed_closed_form(N, 3).mass_on(Interval(0, Fraction(1, 16))) == Fraction(1, 2)
    assert sigma_dot(N, 2).mass_on(Fraction(1, 2)) == 1
    for mu in (redistributed_closed_form(N, 4), sigma_dot(N, 4), sigma_hat(N, 4)):
        assert mu.mass_on(Interval(0, 1)) == mu.total_mass()


measures = st.builds(
    lambda xs, cuts: DiscreteMeasure(
        tuple((x, Fraction(i + 1, 7)) for i, x in enumerate(sorted(set(xs)))),
        tuple((Interval(a, b), Fraction(1, 5)) for a, b in zip(cuts[::2], cuts[1::2]) if a < b)),
    st.lists(st.fractions(0, 1, max_denominator=64), max_size=5),
    st.lists(st.fractions(2, 3, max_denominator=64), max_size=6, unique=True).map(sorted),
)


@given(measures)
def test_json_round_trip(mu):
    text = json.dumps(mu.to_json())
    assert DiscreteMeasure.from_json(text).canonical() == mu.canonical()


@given(measures, st.fractions(0, 3, max_denominator=64), st.fractions(0, 3, max_denominator=64),
       st.fractions(0, 3, max_denominator=64))
def test_mass_is_additive_over_adjacent_intervals(mu, a, b, c):
    a, b, c = sorted((a, b, c))
    if a == b or b == c:
        return
    whole = mu.mass_on(Interval(a, c))
    assert whole == mu.mass_on(Interval(a, b)) + mu.mass_on(Interval(b, c)) - mu.mass_on(b)


def test_replication_identities_hold():
    report = verify_replication(N, 6, samples=500)
    assert report.passed, report.witnesses


def test_replication_detects_a_perturbed_mass():
    omega = redistributed_closed_form(N, 6)
    target = TreeAddress.parse("LRRLLR")
    pieces = tuple((iv, m + Fraction(1, 10 ** 6) if iv == interval_of(target, N) else m) for iv, m in omega.pieces)
    mutated = DiscreteMeasure(omega.atoms, pieces)
    report = verify_replication(N, 6, omega=mutated, samples=100)
    assert not report.passed
    bad = [TreeAddress.parse(w["node"]) for w in report.witnesses]
    assert bad and all(a.is_prefix_of(target) for a in bad)


def test_center_atoms_sit_at_centers():
    sd = sigma_dot(N, 4)
    assert {x for x, _ in sd.atoms} == {center_of(a, N) for k in range(4) for a in addresses(k)}
