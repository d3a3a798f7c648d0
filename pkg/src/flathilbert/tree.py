"""Addresses and geometry of the N-adic Cantor tree.

An address is a finite word in {-1, +1}; -1 picks the left child (which keeps
the parent's left endpoint) and +1 the right child.  The level-l interval has
length N**-l, and the open middle of proportion (N-2)/N is its gap.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import product
from typing import Iterator, Sequence

from .errors import DomainError, ResourceError

DEFAULT_MAX_DEPTH = 16


def max_depth() -> int:
    """Depth cap, overridable through the CE_MAX_DEPTH environment variable."""
    raw = os.environ.get("CE_MAX_DEPTH")
    if raw is None:
        return DEFAULT_MAX_DEPTH
    try:
        return int(raw)
    except ValueError:
        return DEFAULT_MAX_DEPTH


def check_depth(depth: int) -> None:
    cap = max_depth()
    if depth > cap:
        raise ResourceError(f"depth {depth} exceeds cap {cap} (CE_MAX_DEPTH)")


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(x)
    return Fraction(x)


def frac_str(x: Fraction) -> str:
    x = as_fraction(x)
    return f"{x.numerator}/{x.denominator}"


def parse_frac(s) -> Fraction:
    if isinstance(s, (int, Fraction)):
        return Fraction(s)
    return Fraction(str(s))


@dataclass(frozen=True)
class Interval:
    """Closed interval with rational endpoints."""

    left: Fraction
    right: Fraction

    def __post_init__(self):
        object.__setattr__(self, "left", as_fraction(self.left))
        object.__setattr__(self, "right", as_fraction(self.right))
        if not self.left < self.right:
            raise ValueError(f"empty interval [{self.left}, {self.right}]")

    @property
    def length(self) -> Fraction:
        return self.right - self.left

    @property
    def center(self) -> Fraction:
        return (self.left + self.right) / 2

    def contains_point(self, x, closed: bool = True) -> bool:
        if closed:
            return self.left <= x <= self.right
        return self.left < x < self.right

    def contains(self, other: "Interval") -> bool:
        return self.left <= other.left and other.right <= self.right

    def intersect(self, other: "Interval") -> "Interval | None":
        lo = max(self.left, other.left)
        hi = min(self.right, other.right)
        if lo < hi:
            return Interval(lo, hi)
        return None

    def expand(self, factor) -> "Interval":
        """Concentric interval with length scaled by ``factor``."""
        half = self.length * as_fraction(factor) / 2
        return Interval(self.center - half, self.center + half)

    def distance_to(self, x) -> Fraction:
        if x < self.left:
            return self.left - x
        if x > self.right:
            return x - self.right
        return Fraction(0)

    def to_json(self) -> dict:
        return {"a": frac_str(self.left), "b": frac_str(self.right)}

    def __str__(self) -> str:
        return f"[{self.left}, {self.right}]"


def _coerce_sign(s) -> int:
    if s in (-1, "-", "L", "l"):
        return -1
    if s in (1, "+", "R", "r"):
        return 1
    raise ValueError(f"not a tree sign: {s!r}")


@dataclass(frozen=True, order=True)
class TreeAddress:
    """Word of child choices; -1 is left, +1 is right."""

    signs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "signs", tuple(_coerce_sign(s) for s in self.signs))

    @classmethod
    def root(cls) -> "TreeAddress":
        return cls(())

    @classmethod
    def parse(cls, text: str) -> "TreeAddress":
        """Accepts "LRL", "-+-", or the level:index form "3:2"."""
        text = text.strip()
        if text in ("", "root"):
            return cls(())
        if ":" in text:
            lev, idx = text.split(":")
            return cls.from_index(int(lev), int(idx))
        return cls(tuple(text))

    @classmethod
    def from_index(cls, level: int, r: int) -> "TreeAddress":
        """Address of the r-th (1-based, left to right) interval at ``level``."""
        if not 1 <= r <= 2 ** level:
            raise DomainError(f"index {r} out of range at level {level}")
        bits = format(r - 1, f"0{level}b") if level else ""
        return cls(tuple(1 if b == "1" else -1 for b in bits))

    @property
    def level(self) -> int:
        return len(self.signs)

    @property
    def index(self) -> int:
        r = 0
        for s in self.signs:
            r = 2 * r + (1 if s > 0 else 0)
        return r + 1

    def parent(self) -> "TreeAddress":
        if not self.signs:
            raise DomainError("root has no parent")
        return TreeAddress(self.signs[:-1])

    def child(self, sign) -> "TreeAddress":
        return TreeAddress(self.signs + (_coerce_sign(sign),))

    def children(self) -> tuple["TreeAddress", "TreeAddress"]:
        return self.child(-1), self.child(1)

    def is_prefix_of(self, other: "TreeAddress") -> bool:
        return other.signs[: self.level] == self.signs

    def __add__(self, other: "TreeAddress") -> "TreeAddress":
        return tree_add(self, other)

    def __str__(self) -> str:
        return "".join("R" if s > 0 else "L" for s in self.signs) or "root"

    def view(self) -> str:
        return f"{self.level}:{self.index}"


def tree_add(a: TreeAddress, b: TreeAddress) -> TreeAddress:
    """Concatenation: the node reached from ``a`` by following ``b``."""
    return TreeAddress(a.signs + b.signs)


def reflect(a: TreeAddress) -> TreeAddress:
    return TreeAddress(tuple(-s for s in a.signs))


def addresses(level: int) -> Iterator[TreeAddress]:
    """All addresses at ``level`` from left to right."""
    check_depth(level)
    for word in product((-1, 1), repeat=level):
        yield TreeAddress(word)


def addresses_upto(depth: int) -> Iterator[TreeAddress]:
    for level in range(depth + 1):
        yield from addresses(level)


def descendants(a: TreeAddress, level: int) -> Iterator[TreeAddress]:
    for word in product((-1, 1), repeat=level - a.level):
        yield TreeAddress(a.signs + word)


@lru_cache(maxsize=None)
def _interval_cached(signs: tuple, n: int) -> Interval:
    left = Fraction(0)
    length = Fraction(1)
    for s in signs:
        child = length / n
        if s > 0:
            left = left + length - child
        length = child
    return Interval(left, left + length)


def check_n(n: int) -> None:
    if not isinstance(n, int) or n < 3:
        raise ValueError(f"N must be an integer >= 3, got {n!r}")


def interval_of(a: TreeAddress, n: int) -> Interval:
    check_n(n)
    return _interval_cached(a.signs, n)


def center_of(a: TreeAddress, n: int) -> Fraction:
    return interval_of(a, n).center


def gap_of(a: TreeAddress, n: int) -> Interval:
    """Endpoints of the (open) removed middle of the node's interval."""
    iv = interval_of(a, n)
    step = iv.length / n
    return Interval(iv.left + step, iv.right - step)


def l_interval_of(a: TreeAddress, n: int) -> Interval:
    """Central band of half-width N**-(level+1) around the node's center."""
    half = Fraction(1, n ** (a.level + 1))
    z = center_of(a, n)
    return Interval(z - half, z + half)


def common_ancestor(a: TreeAddress, b: TreeAddress) -> TreeAddress:
    k = 0
    for s, t in zip(a.signs, b.signs):
        if s != t:
            break
        k += 1
    return TreeAddress(a.signs[:k])


def locate(x, n: int, depth: int) -> TreeAddress | None:
    """Deepest address (level <= depth) whose interval contains ``x``.

    Returns None when x lies outside [0, 1].  A point in a gap stops the
    descent at the node owning the gap.  Shared endpoints go to the left child.
    """
    x = as_fraction(x)
    if not 0 <= x <= 1:
        return None
    node = TreeAddress.root()
    for _ in range(depth):
        left, right = node.children()
        if interval_of(left, n).contains_point(x):
            node = left
        elif interval_of(right, n).contains_point(x):
            node = right
        else:
            break
    return node


@dataclass(frozen=True)
class HeadsTails:
    """Counts of continuation steps: heads repeat the previous direction."""

    heads: int
    tails: int


def heads_tails(a: TreeAddress) -> HeadsTails:
    """Replay the path from the second step on.

    A step in the same direction as its predecessor moves away from the parent
    center and carries the heavier factor; it counts as a head.
    """
    h = t = 0
    for prev, cur in zip(a.signs, a.signs[1:]):
        if cur == prev:
            h += 1
        else:
            t += 1
    return HeadsTails(h, t)


def kappa(a: TreeAddress, n: int) -> Fraction:
    """(1+1/N)**H (1-1/N)**T; undefined at the root."""
    check_n(n)
    if a.level == 0:
        raise DomainError("kappa is undefined at the root")
    ht = heads_tails(a)
    eta = Fraction(1, n)
    return (1 + eta) ** ht.heads * (1 - eta) ** ht.tails


@dataclass(frozen=True)
class Decomposition:
    """Pairwise disjoint parts of a base interval (parts may be gaps)."""

    base: Interval
    parts: tuple
    tag: str = ""

    def __post_init__(self):
        parts = tuple(sorted(self.parts, key=lambda p: p.left))
        object.__setattr__(self, "parts", parts)
        for p in parts:
            if not self.base.contains(p):
                raise ValueError(f"part {p} not inside base {self.base}")
        for p, q in zip(parts, parts[1:]):
            if q.left < p.right:
                raise ValueError(f"parts {p} and {q} overlap")


def children_decomposition(a: TreeAddress, n: int, level: int) -> Decomposition:
    """Tree descendants of ``a`` at ``level`` (not a cover: gaps are left out)."""
    parts = tuple(interval_of(d, n) for d in descendants(a, level))
    return Decomposition(interval_of(a, n), parts, tag=f"children:{a.view()}@{level}")


def gap_decomposition(n: int, depth: int, base: TreeAddress | None = None) -> Decomposition:
    """Gaps of all nodes under ``base`` with level < depth."""
    base = base or TreeAddress.root()
    parts = []
    for lev in range(base.level, depth):
        parts.extend(gap_of(d, n) for d in descendants(base, lev))
    return Decomposition(interval_of(base, n), tuple(parts), tag=f"gaps<{depth}")


def random_decomposition(base: Interval, rng, max_parts: int = 12,
                         grid: int = 2 ** 30, avoid: Sequence[Fraction] = ()) -> Decomposition:
    """Cut ``base`` at random rational points into between 1 and max_parts pieces.

    Cut points equal to any value in ``avoid`` are redrawn so that no atom sits
    on a shared endpoint.
    """
    avoid_set = set(avoid)
    k = int(rng.integers(0, max_parts))
    cuts = set()
    while len(cuts) < k:
        c = base.left + base.length * Fraction(int(rng.integers(1, grid)), grid)
        if c not in avoid_set:
            cuts.add(c)
    pts = [base.left] + sorted(cuts) + [base.right]
    parts = tuple(Interval(a, b) for a, b in zip(pts, pts[1:]))
    return Decomposition(base, parts, tag="random")


def maximal_tree_intervals(target: Interval, n: int, depth: int) -> list[TreeAddress]:
    """Maximal tree intervals of level <= depth contained in ``target``."""
    out = []

    def walk(a: TreeAddress):
        iv = interval_of(a, n)
        if target.contains(iv):
            out.append(a)
            return
        if iv.intersect(target) is None or a.level >= depth:
            return
        for c in a.children():
            walk(c)

    walk(TreeAddress.root())
    return out
