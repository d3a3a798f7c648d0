"""Finite measures on [0, 1] built on the Cantor tree.

A measure is a finite list of atoms plus uniformly distributed pieces, all
with rational data.  The constructions here are the plain Cantor measure, the
redistributed measure (both by literal re-balancing and in closed form), the
atomic companion placed at gap centers, and its smeared version.
"""
from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Iterable

import numpy as np

from .errors import InexactError
from .tree import (Interval, TreeAddress, addresses, as_fraction, center_of, check_depth,
                   check_n, frac_str, heads_tails, interval_of, l_interval_of, parse_frac)


@dataclass(frozen=True)
class DiscreteMeasure:
    """Atoms (position, mass) and uniform pieces (Interval, mass), sorted."""

    atoms: tuple = ()
    pieces: tuple = ()

    def __post_init__(self):
        atoms = tuple(sorted((as_fraction(x), as_fraction(m)) for x, m in self.atoms))
        pieces = tuple(sorted(((iv, as_fraction(m)) for iv, m in self.pieces),
                              key=lambda p: p[0].left))
        for _, m in atoms:
            if m < 0:
                raise ValueError("negative atom mass")
        for _, m in pieces:
            if m < 0:
                raise ValueError("negative piece mass")
        for (a, _), (b, _) in zip(pieces, pieces[1:]):
            if b.left < a.right:
                raise ValueError(f"pieces {a} and {b} overlap")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "pieces", pieces)

    # -- basic queries
    def total_mass(self) -> Fraction:
        return sum((m for _, m in self.atoms), Fraction(0)) + sum((m for _, m in self.pieces), Fraction(0))

    @cached_property
    def _atom_x(self) -> list:
        return [x for x, _ in self.atoms]

    @cached_property
    def _piece_left(self) -> list:
        return [iv.left for iv, _ in self.pieces]

    @cached_property
    def _piece_right(self) -> list:
        return [iv.right for iv, _ in self.pieces]

    @cached_property
    def _atom_cum(self) -> list:
        out = [Fraction(0)]
        for _, m in self.atoms:
            out.append(out[-1] + m)
        return out

    @cached_property
    def _piece_cum(self) -> list:
        out = [Fraction(0)]
        for _, m in self.pieces:
            out.append(out[-1] + m)
        return out

    def mass_on(self, target, closed: bool = True) -> Fraction:
        """Mass of a closed (or open) interval; a bare number is a singleton."""
        if not isinstance(target, Interval):
            x = as_fraction(target)
            i = bisect.bisect_left(self._atom_x, x)
            j = bisect.bisect_right(self._atom_x, x)
            return self._atom_cum[j] - self._atom_cum[i]
        a, b = target.left, target.right
        if closed:
            i = bisect.bisect_left(self._atom_x, a)
            j = bisect.bisect_right(self._atom_x, b)
        else:
            i = bisect.bisect_right(self._atom_x, a)
            j = bisect.bisect_left(self._atom_x, b)
        total = self._atom_cum[j] - self._atom_cum[i] if j > i else Fraction(0)
        # pieces are non-atomic so open/closed does not matter for them
        lo = bisect.bisect_right(self._piece_right, a)
        hi = bisect.bisect_left(self._piece_left, b)
        if hi - lo == 1:
            total += self._partial(lo, a, b)
        elif hi - lo > 1:
            total += self._partial(lo, a, b) + self._partial(hi - 1, a, b)
            total += self._piece_cum[hi - 1] - self._piece_cum[lo + 1]
        return total

    def _partial(self, k: int, a: Fraction, b: Fraction) -> Fraction:
        iv, m = self.pieces[k]
        lo, hi = max(iv.left, a), min(iv.right, b)
        if hi <= lo:
            return Fraction(0)
        if lo == iv.left and hi == iv.right:
            return m
        return m * (hi - lo) / iv.length

    def restrict(self, target: Interval, closed: bool = True) -> "DiscreteMeasure":
        atoms = [(x, m) for x, m in self.atoms if target.contains_point(x, closed)]
        pieces = []
        for iv, m in self.pieces:
            part = iv.intersect(target)
            if part is None:
                continue
            pieces.append((part, m if part == iv else m * part.length / iv.length))
        return DiscreteMeasure(tuple(atoms), tuple(pieces))

    def exclude(self, target: Interval) -> "DiscreteMeasure":
        """Restriction to the complement of the closed interval ``target``."""
        atoms = [(x, m) for x, m in self.atoms if not target.contains_point(x)]
        pieces = []
        for iv, m in self.pieces:
            for lo, hi in ((iv.left, min(iv.right, target.left)), (max(iv.left, target.right), iv.right)):
                if lo < hi:
                    pieces.append((Interval(lo, hi), m * (hi - lo) / iv.length))
        return DiscreteMeasure(tuple(atoms), tuple(pieces))

    def scaled(self, c) -> "DiscreteMeasure":
        c = as_fraction(c)
        return DiscreteMeasure(tuple((x, c * m) for x, m in self.atoms),
                               tuple((iv, c * m) for iv, m in self.pieces))

    def __add__(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        atoms: dict = {}
        for x, m in self.atoms + other.atoms:
            atoms[x] = atoms.get(x, Fraction(0)) + m
        pieces: dict = {}
        for iv, m in self.pieces + other.pieces:
            pieces[iv] = pieces.get(iv, Fraction(0)) + m
        return DiscreteMeasure(tuple(atoms.items()), tuple(pieces.items()))

    def support_hull(self) -> Interval | None:
        pts = [x for x, _ in self.atoms] + [iv.left for iv, _ in self.pieces] + [iv.right for iv, _ in self.pieces]
        if len(set(pts)) < 2:
            return None
        return Interval(min(pts), max(pts))

    def moments(self, target: Interval | None = None) -> tuple[Fraction, Fraction, Fraction]:
        """Exact (mass, first, second) moments, optionally restricted to ``target``."""
        mu = self if target is None else self.restrict(target)
        m0 = m1 = m2 = Fraction(0)
        for x, m in mu.atoms:
            m0 += m
            m1 += m * x
            m2 += m * x * x
        for iv, m in mu.pieces:
            a, b = iv.left, iv.right
            m0 += m
            m1 += m * (a + b) / 2
            m2 += m * (a * a + a * b + b * b) / 3
        return m0, m1, m2

    def canonical(self) -> tuple:
        """Atoms and pieces with zero masses dropped, for equality checks."""
        return (tuple((x, m) for x, m in self.atoms if m),
                tuple((iv.left, iv.right, m) for iv, m in self.pieces if m))

    # -- float views used by vectorised numerics
    @cached_property
    def arrays(self) -> dict:
        return {
            "atom_x": np.array([float(x) for x, _ in self.atoms]),
            "atom_m": np.array([float(m) for _, m in self.atoms]),
            "piece_a": np.array([float(iv.left) for iv, _ in self.pieces]),
            "piece_b": np.array([float(iv.right) for iv, _ in self.pieces]),
            "piece_m": np.array([float(m) for _, m in self.pieces]),
        }

    # -- serialisation
    def to_json(self) -> dict:
        return {
            "atoms": [{"x": frac_str(x), "mass": frac_str(m)} for x, m in self.atoms],
            "pieces": [{"a": frac_str(iv.left), "b": frac_str(iv.right), "mass": frac_str(m)}
                       for iv, m in self.pieces],
        }

    @classmethod
    def from_json(cls, data) -> "DiscreteMeasure":
        if isinstance(data, str):
            data = json.loads(data)
        atoms = tuple((parse_frac(a["x"]), parse_frac(a["mass"])) for a in data.get("atoms", []))
        pieces = tuple((Interval(parse_frac(p["a"]), parse_frac(p["b"])), parse_frac(p["mass"]))
                       for p in data.get("pieces", []))
        return cls(atoms, pieces)


def _pieces_from_masses(n: int, level: int, masses) -> DiscreteMeasure:
    return DiscreteMeasure((), tuple((interval_of(a, n), m) for a, m in zip(addresses(level), masses)))


@lru_cache(maxsize=64)
def cantor_measure(n: int, m: int) -> DiscreteMeasure:
    """Equal split at every node, uniform on the level-m intervals."""
    check_n(n)
    check_depth(m)
    w = Fraction(1, 2 ** m)
    return _pieces_from_masses(n, m, [w] * 2 ** m)


def node_mass(a: TreeAddress, n: int) -> Fraction:
    """Closed-form redistributed mass of a node: 1/2 ((1+e)/2)**H ((1-e)/2)**T."""
    if a.level == 0:
        return Fraction(1)
    ht = heads_tails(a)
    eta = Fraction(1, n)
    return Fraction(1, 2) * ((1 + eta) / 2) ** ht.heads * ((1 - eta) / 2) ** ht.tails


@lru_cache(maxsize=64)
def redistributed_closed_form(n: int, m: int) -> DiscreteMeasure:
    """Redistributed measure at depth m, uniform on level-m intervals.

    Children of the root split evenly; below that the child continuing in the
    parent's direction takes (1+1/N)/2 of the parent and the other (1-1/N)/2.
    """
    check_n(n)
    check_depth(m)
    return _pieces_from_masses(n, m, [node_mass(a, n) for a in addresses(m)])


def _rescaled_inside(mu: DiscreteMeasure, target: Interval, new_mass: Fraction) -> list:
    old = mu.mass_on(target)
    ratio = new_mass / old if old else Fraction(0)
    return [(iv, m * ratio) for iv, m in mu.pieces if target.contains(iv)]


def redistribute_step(omega: DiscreteMeasure, level: int, kernel) -> DiscreteMeasure:
    """Re-balance the two children of every level-``level`` node.

    With z the node center and x_l a point of the left child, the new left mass
    is half of (node mass - sum over the other level-(level+1) intervals of
    the integral of K(x - z)/K(x_l - z)), and the right mass takes the + sign.
    Everything inside a child is rescaled proportionally.  The kernel must be
    constant on every piece as seen from z; otherwise InexactError is raised.
    """
    from .transform import apply, integrate_piece

    n = kernel.n
    new_pieces = []
    for a in addresses(level):
        node = interval_of(a, n)
        z = node.center
        left_iv, right_iv = (interval_of(c, n) for c in a.children())
        ref = integrate_piece(kernel, left_iv, Fraction(1), z)
        if not ref.exact:
            raise InexactError(f"kernel not constant on left child of {a}")
        k_left = ref.value  # mass 1 over the child: the constant itself
        outside = apply(kernel, omega.exclude(node), z)
        if not outside.exact:
            raise InexactError(f"inexact outside contribution at {a}")
        node_m = omega.mass_on(node)
        shift = outside.value / k_left
        left_m = (node_m - shift) / 2
        right_m = (node_m + shift) / 2
        new_pieces += _rescaled_inside(omega, left_iv, left_m)
        new_pieces += _rescaled_inside(omega, right_iv, right_m)
    # anything not under a level-`level` node (none for tree measures) is kept
    covered = DiscreteMeasure((), tuple(new_pieces))
    return DiscreteMeasure(omega.atoms, covered.pieces)


def redistributed_by_steps(n: int, m: int, kernel) -> list:
    """[omega_1, ..., omega_m]: Cantor start then re-balancing levels 1..m-1."""
    omega = cantor_measure(n, m)
    out = [omega]
    for level in range(1, m):
        omega = redistribute_step(omega, level, kernel)
        out.append(omega)
    return out


def sigma_dot_mass(a: TreeAddress, n: int) -> Fraction:
    return Fraction(1, n ** (2 * a.level)) / node_mass(a, n)


@lru_cache(maxsize=64)
def sigma_dot(n: int, gens: int) -> DiscreteMeasure:
    """Atoms at the centers of all nodes of level < gens, mass N**(-2k)/|I|_omega."""
    check_n(n)
    check_depth(gens)
    atoms = []
    for k in range(gens):
        for a in addresses(k):
            atoms.append((center_of(a, n), sigma_dot_mass(a, n)))
    return DiscreteMeasure(tuple(atoms), ())


@lru_cache(maxsize=64)
def sigma_hat(n: int, gens: int) -> DiscreteMeasure:
    """Each atom of sigma_dot spread uniformly over its central band."""
    check_n(n)
    check_depth(gens)
    pieces = []
    for k in range(gens):
        for a in addresses(k):
            pieces.append((l_interval_of(a, n), sigma_dot_mass(a, n)))
    return DiscreteMeasure((), tuple(pieces))


@dataclass(frozen=True)
class MeasureTransform:
    """Affine push-forward x -> scale*x + shift, recorded as named steps.

    Steps are listed in composition order, so the last step acts first.
    """

    steps: tuple = field(default=())

    @staticmethod
    def dil(gamma) -> "MeasureTransform":
        return MeasureTransform((("Dil", as_fraction(gamma)),))

    @staticmethod
    def trans(gamma) -> "MeasureTransform":
        return MeasureTransform((("Trans", as_fraction(gamma)),))

    @staticmethod
    def ref() -> "MeasureTransform":
        return MeasureTransform((("Ref", Fraction(-1)),))

    def __matmul__(self, other: "MeasureTransform") -> "MeasureTransform":
        return MeasureTransform(self.steps + other.steps)

    @property
    def affine(self) -> tuple[Fraction, Fraction]:
        scale, shift = Fraction(1), Fraction(0)
        for kind, g in reversed(self.steps):
            if kind == "Dil":
                scale, shift = g * scale, g * shift
            elif kind == "Trans":
                shift = shift + g
            else:
                scale, shift = -scale, -shift
        return scale, shift

    def point(self, x) -> Fraction:
        s, t = self.affine
        return s * as_fraction(x) + t

    def __str__(self) -> str:
        return " ".join(k if k == "Ref" else f"{k}_{g}" for k, g in self.steps) or "Id"


def compose(*ts: MeasureTransform) -> MeasureTransform:
    out = MeasureTransform()
    for t in ts:
        out = out @ t
    return out


def transform(mu: DiscreteMeasure, t: MeasureTransform) -> DiscreteMeasure:
    """Push-forward of ``mu``; total mass is preserved."""
    s, c = t.affine
    atoms = tuple((s * x + c, m) for x, m in mu.atoms)
    pieces = []
    for iv, m in mu.pieces:
        a, b = s * iv.left + c, s * iv.right + c
        pieces.append((Interval(min(a, b), max(a, b)), m))
    return DiscreteMeasure(atoms, tuple(pieces))
