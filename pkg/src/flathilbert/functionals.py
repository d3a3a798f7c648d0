"""Poisson averages, energies, testing ratios and maximal-function quantities.

Exact routines take and return Fractions; the ``*_batch`` helpers are float64
vectorised versions used for scans over many random intervals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .kernel import KernelSpec
from .measures import DiscreteMeasure
from .transform import apply, integrate_against_pieces, transform_atoms_array
from .tree import (Decomposition, Interval, TreeAddress, addresses_upto, as_fraction,
                   gap_of, interval_of, locate)


@dataclass(frozen=True)
class FunctionalValue:
    value: object
    exact: bool
    depth: int | None = None
    breakdown: dict = field(default_factory=dict)

    def __float__(self):
        return float(self.value)


# -- Poisson averages --------------------------------------------------------

def _tail(length: Fraction, near: Fraction, far: Fraction) -> Fraction:
    """Integral of |I|/(|I|+t)**2 for t in [near, far]."""
    return length * (1 / (length + near) - 1 / (length + far))


def poisson(I: Interval, mu: DiscreteMeasure) -> Fraction:
    """Integral of |I| / (|I| + dist(x, I))**2 d mu(x), exactly."""
    L = I.length
    total = Fraction(0)
    for x, m in mu.atoms:
        d = I.distance_to(x)
        total += m * L / (L + d) ** 2
    for iv, m in mu.pieces:
        dens = m / iv.length
        a, b = iv.left, iv.right
        inside = I.intersect(iv)
        if inside is not None:
            total += dens * inside.length / L
        if b > I.right:
            lo = max(a, I.right)
            total += dens * _tail(L, lo - I.right, b - I.right)
        if a < I.left:
            hi = min(b, I.left)
            total += dens * _tail(L, I.left - hi, I.left - a)
    return total


def poisson_centered(I: Interval, mu: DiscreteMeasure) -> Fraction:
    """Integral of |I| / (|I| + |y - c_I|)**2 d mu(y), exactly."""
    L, c = I.length, I.center
    total = Fraction(0)
    for x, m in mu.atoms:
        total += m * L / (L + abs(x - c)) ** 2
    for iv, m in mu.pieces:
        dens = m / iv.length
        a, b = iv.left, iv.right
        if b > c:
            lo = max(a, c)
            total += dens * _tail(L, lo - c, b - c)
        if a < c:
            hi = min(b, c)
            total += dens * _tail(L, c - hi, c - a)
    return total


def poisson_batch(a: np.ndarray, b: np.ndarray, mu: DiscreteMeasure) -> np.ndarray:
    """Float Poisson averages for intervals [a_i, b_i]."""
    a = np.asarray(a, float)[:, None]
    b = np.asarray(b, float)[:, None]
    L = b - a
    arr = mu.arrays
    total = np.zeros(a.shape[0])
    if arr["atom_x"].size:
        x = arr["atom_x"][None, :]
        d = np.maximum(a - x, 0) + np.maximum(x - b, 0)
        total += (L / (L + d) ** 2) @ arr["atom_m"]
    if arr["piece_a"].size:
        p, q, m = arr["piece_a"][None, :], arr["piece_b"][None, :], arr["piece_m"][None, :]
        dens = m / (q - p)
        inside = np.clip(np.minimum(q, b) - np.maximum(p, a), 0, None) / L
        # tails written as L (t1 - t0) / ((L + t0)(L + t1)); the difference of
        # reciprocals cancels badly for pieces much shorter than L
        lo_r = np.maximum(p, b) - b
        width_r = np.clip(q - np.maximum(p, b), 0, None)
        right = np.where(q > b, L * width_r / ((L + lo_r) * (L + lo_r + width_r)), 0.0)
        hi_l = a - np.minimum(q, a)
        width_l = np.clip(np.minimum(q, a) - p, 0, None)
        left = np.where(p < a, L * width_l / ((L + hi_l) * (L + hi_l + width_l)), 0.0)
        total += ((inside + right + left) * dens).sum(axis=1)
    return total


def poisson_kernel_at(I: Interval, y) -> float:
    """Pointwise centered Poisson kernel |I|**-1 (1 + |y - c|/|I|)**-2."""
    L = float(I.length)
    return 1.0 / L / (1 + abs(float(y) - float(I.center)) / L) ** 2


def poisson_layered_at(I: Interval, y, n: int, layers: int = 64) -> float:
    """Sum over k >= 0 of N**-k |N**k I|**-1 1_{N**k I}(y)."""
    total = 0.0
    L, c = float(I.length), float(I.center)
    for k in range(layers):
        half = L * n ** k / 2
        if abs(float(y) - c) <= half:
            total += n ** -k / (L * n ** k)
    return total


# -- energies ------------------------------------------------------------------

def energy_sq(I: Interval, mu: DiscreteMeasure) -> Fraction:
    """Variance of mu restricted to I divided by |I|**2 (0 when I carries no mass)."""
    m0, m1, m2 = mu.moments(I)
    if m0 == 0:
        return Fraction(0)
    var = m2 / m0 - (m1 / m0) ** 2
    return var / I.length ** 2


def energy(I: Interval, mu: DiscreteMeasure) -> FunctionalValue:
    e2 = energy_sq(I, mu)
    return FunctionalValue(math.sqrt(e2), False, breakdown={"energy_sq": e2})


def _energy_sq_batch(a, b, mu: DiscreteMeasure) -> tuple[np.ndarray, np.ndarray]:
    """Float (mass, energy**2) of mu on each [a_i, b_i], centered moments."""
    a = np.asarray(a, float)[:, None]
    b = np.asarray(b, float)[:, None]
    c = (a + b) / 2
    L = (b - a)[:, 0]
    arr = mu.arrays
    m0 = np.zeros(L.shape)
    m1 = np.zeros(L.shape)
    m2 = np.zeros(L.shape)
    if arr["atom_x"].size:
        x = arr["atom_x"][None, :]
        mask = (x >= a) & (x <= b)
        w = mask * arr["atom_m"][None, :]
        dx = x - c
        m0 += w.sum(1)
        m1 += (w * dx).sum(1)
        m2 += (w * dx * dx).sum(1)
    if arr["piece_a"].size:
        p, q = arr["piece_a"][None, :], arr["piece_b"][None, :]
        lo, hi = np.maximum(p, a), np.minimum(q, b)
        frac = np.clip(hi - lo, 0, None) / (q - p)
        w = frac * arr["piece_m"][None, :]
        u, v = lo - c, hi - c
        m0 += w.sum(1)
        m1 += (w * (u + v) / 2).sum(1)
        m2 += (w * (u * u + u * v + v * v) / 3).sum(1)
    with np.errstate(invalid="ignore", divide="ignore"):
        var = np.where(m0 > 0, m2 / m0 - (m1 / np.where(m0 > 0, m0, 1)) ** 2, 0.0)
    return m0, np.clip(var, 0, None) / L ** 2


def energy_sum(dec: Decomposition, sigma: DiscreteMeasure, omega: DiscreteMeasure,
               direction: str = "backward", pivotal: bool = False) -> FunctionalValue:
    """Sum over parts of |I_r|_in E(I_r, in)**2 P(I_r, 1_base out)**2, exactly.

    "backward" puts sigma inside the energy and omega in the Poisson average;
    "forward" swaps them.  The value is normalised by |base|_out; the raw sum
    is in the breakdown.  ``pivotal`` drops the energy factor.
    """
    inner, outer = (sigma, omega) if direction == "backward" else (omega, sigma)
    outer_base = outer.restrict(dec.base)
    total = Fraction(0)
    terms = []
    for part in dec.parts:
        mass = inner.mass_on(part)
        if mass == 0:
            terms.append(Fraction(0))
            continue
        e2 = Fraction(1) if pivotal else energy_sq(part, inner)
        term = mass * e2 * poisson(part, outer_base) ** 2 if e2 else Fraction(0)
        terms.append(term)
        total += term
    base_mass = outer.mass_on(dec.base)
    value = total / base_mass if base_mass else Fraction(0)
    return FunctionalValue(value, True, breakdown={"sum": total, "terms": terms, "base_mass": base_mass})


def energy_sum_batch(bases: list, parts_a: np.ndarray, parts_b: np.ndarray, owner: np.ndarray,
                     sigma: DiscreteMeasure, omega: DiscreteMeasure, direction: str = "backward") -> np.ndarray:
    """Float normalised energy sums for many decompositions at once.

    Part i belongs to decomposition owner[i] whose base is bases[owner[i]].
    """
    inner, outer = (sigma, omega) if direction == "backward" else (omega, sigma)
    out = np.zeros(len(bases))
    mass, e2 = _energy_sq_batch(parts_a, parts_b, inner)
    for j, base in enumerate(bases):
        sel = owner == j
        if not np.any(sel):
            continue
        outer_base = outer.restrict(base)
        p = poisson_batch(parts_a[sel], parts_b[sel], outer_base)
        total = float((mass[sel] * e2[sel] * p * p).sum())
        bm = float(outer.mass_on(base))
        out[j] = total / bm if bm else 0.0
    return out


def gap_energy_increments(sigma: DiscreteMeasure, omega: DiscreteMeasure, n: int,
                          levels: int) -> list[Fraction]:
    """Per-level backward energy sums over the gaps of each level < levels."""
    from .tree import addresses
    base = Interval(0, 1)
    outer_base = omega.restrict(base)
    incs = []
    for lev in range(levels):
        s = Fraction(0)
        for a in addresses(lev):
            g = gap_of(a, n)
            mass = sigma.mass_on(g)
            if mass:
                s += mass * energy_sq(g, sigma) * poisson(g, outer_base) ** 2
        incs.append(s)
    return incs


def energy_a2_pointwise(I: Interval, sigma: DiscreteMeasure, omega: DiscreteMeasure) -> tuple:
    """(lhs, rhs) of |I|_sigma E(I, sigma)**2 P(I, omega)**2 <= C |I|_omega."""
    lhs = sigma.mass_on(I) * energy_sq(I, sigma) * poisson(I, omega) ** 2
    return lhs, omega.mass_on(I)


# -- A2 --------------------------------------------------------------------------

def random_intervals(rng, count: int, n: int, depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Half with uniform endpoints in [0,1], half with log-uniform lengths."""
    half = count // 2
    e = np.sort(rng.random((half, 2)), axis=1)
    lengths = np.power(float(n), -rng.uniform(0, depth, count - half))
    centers = rng.random(count - half)
    a = np.concatenate([e[:, 0], centers - lengths / 2])
    b = np.concatenate([e[:, 1], centers + lengths / 2])
    keep = b > a
    return a[keep], b[keep]


def a2_sup(sigma: DiscreteMeasure, omega: DiscreteMeasure, n: int, depth: int,
           extra: tuple | None = None) -> dict:
    """Sup of P(I, omega) P(I, sigma) over tree intervals to ``depth`` and extra intervals."""
    tree = [interval_of(a, n) for a in addresses_upto(depth)]
    a = np.array([float(iv.left) for iv in tree])
    b = np.array([float(iv.right) for iv in tree])
    if extra is not None:
        a = np.concatenate([a, extra[0]])
        b = np.concatenate([b, extra[1]])
    prod = poisson_batch(a, b, omega) * poisson_batch(a, b, sigma)
    i = int(np.argmax(prod))
    return {"sup": float(prod[i]), "argmax": (float(a[i]), float(b[i])), "tree_sup": float(prod[:len(tree)].max())}


# -- testing ratios --------------------------------------------------------------

def _atom_arrays(mu: DiscreteMeasure):
    arr = mu.arrays
    return arr["atom_x"], arr["atom_m"]


def testing_forward(I: Interval, kernel: KernelSpec, sigma: DiscreteMeasure,
                    omega: DiscreteMeasure, order: int = 16) -> FunctionalValue | None:
    """Integral over I of |T(1_I sigma)|**2 d omega divided by |I|_sigma.

    sigma must be atomic; the integral against the pieces of omega uses
    adaptive Gauss-Legendre.  None when I carries no sigma mass.
    """
    s_in = sigma.restrict(I)
    s_mass = s_in.total_mass()
    if s_mass == 0:
        return None
    xs, ms = _atom_arrays(s_in)

    def f(x):
        return transform_atoms_array(kernel, xs, ms, x) ** 2

    val, err = integrate_against_pieces(f, omega.restrict(I), order=order)
    return FunctionalValue(val / float(s_mass), False, breakdown={"integral": val, "err": err})


def testing_backward(I: Interval, kernel: KernelSpec, sigma: DiscreteMeasure,
                     omega: DiscreteMeasure) -> FunctionalValue | None:
    """Sum over atoms z of sigma in I of s_z |T(1_I omega)(z)|**2, over |I|_omega.

    Exact whenever every piece of omega sits in a single flat set from each
    atom.  The breakdown reports max |T(1_I omega)(z)| / P(I, omega).
    """
    o_mass = omega.mass_on(I)
    if o_mass == 0:
        return None
    o_in = omega.restrict(I)
    total = Fraction(0)
    exact = True
    worst = 0.0
    p = poisson(I, omega)
    for z, s in sigma.restrict(I).atoms:
        v = apply(kernel, o_in, z)
        if v.exact and exact:
            total += s * v.value ** 2
        else:
            exact = False
            total = float(total) + float(s) * float(v.value) ** 2
        if p:
            worst = max(worst, abs(float(v.value)) / float(p))
    value = total / o_mass if exact else float(total) / float(o_mass)
    return FunctionalValue(value, exact, breakdown={"pointwise_over_poisson": worst})


def wbp_ratio(I: Interval, J: Interval, kernel: KernelSpec, sigma: DiscreteMeasure,
              omega: DiscreteMeasure, order: int = 16) -> float | None:
    """|integral over J of T(1_I sigma) d omega| / sqrt(|J|_omega |I|_sigma)."""
    s_in = sigma.restrict(I)
    s_mass = s_in.total_mass()
    o_mass = omega.mass_on(J)
    if s_mass == 0 or o_mass == 0:
        return None
    xs, ms = _atom_arrays(s_in)
    val, _ = integrate_against_pieces(lambda x: transform_atoms_array(kernel, xs, ms, x),
                                      omega.restrict(J), order=order)
    return abs(val) / math.sqrt(float(o_mass) * float(s_mass))


def comparable_pair(I: Interval, J: Interval) -> bool:
    """J inside 3I and I inside 3J."""
    return I.expand(3).contains(J) and J.expand(3).contains(I)


def wbp_scan(kernel: KernelSpec, sigma: DiscreteMeasure, omega: DiscreteMeasure,
             depth: int, rng, random_per_interval: int = 3) -> dict:
    """Sup of the weak-boundedness ratio over tree I (level <= depth) and comparable J."""
    n = kernel.n
    best = (0.0, None)
    for a in addresses_upto(depth):
        I = interval_of(a, n)
        cands = [I, I.expand(3)]
        tries = 0
        while len(cands) < 2 + random_per_interval and tries < 50:
            tries += 1
            big = I.expand(3)
            u = sorted(Fraction(int(v), 2 ** 20) for v in rng.integers(0, 2 ** 20 + 1, size=2))
            if u[0] == u[1]:
                continue
            J = Interval(big.left + big.length * u[0], big.left + big.length * u[1])
            if comparable_pair(I, J):
                cands.append(J)
        for J in cands:
            r = wbp_ratio(I, J, kernel, sigma, omega)
            if r is not None and r > best[0]:
                best = (r, (str(a), str(J)))
    return {"sup": best[0], "argmax": best[1]}


# -- tree-restricted maximal function -------------------------------------------

def maximal_restricted(Q: Interval, mu: DiscreteMeasure, x, n: int, depth: int) -> Fraction:
    """Sup over tree intervals I of level <= depth containing x of |Q n I|_mu / |I|."""
    node = locate(x, n, depth)
    if node is None:
        return Fraction(0)
    mu_q = mu.restrict(Q)
    best = Fraction(0)
    for lev in range(node.level + 1):
        iv = interval_of(TreeAddress(node.signs[:lev]), n)
        best = max(best, mu_q.mass_on(iv) / iv.length)
    return best


def maximal_testing(Q: Interval, sigma: DiscreteMeasure, omega: DiscreteMeasure,
                    n: int, depth: int) -> FunctionalValue | None:
    """Integral over Q of M(1_Q sigma)**2 d omega divided by |Q|_sigma, exactly.

    omega must be uniform on tree intervals of level ``depth``, so the maximal
    function is constant on each of its pieces.
    """
    s_mass = sigma.mass_on(Q)
    if s_mass == 0:
        return None
    total = Fraction(0)
    for iv, m in omega.restrict(Q).pieces:
        mval = maximal_restricted(Q, sigma, iv.center, n, depth)
        total += m * mval ** 2
    return FunctionalValue(total / s_mass, True)


# -- series diagnostics ----------------------------------------------------------

def relative_increments(values) -> list[float]:
    v = [float(x) for x in values]
    return [abs(b - a) / abs(a) if a else math.inf for a, b in zip(v, v[1:])]


def bounded_trend(values, ratio_tol: float = 10.0, inc_tol: float = 0.05, tail: int = 2) -> dict:
    """Boundedness proxy: max/min <= ratio_tol and the last ``tail`` increments < inc_tol."""
    v = [float(x) for x in values]
    lo, hi = min(v), max(v)
    spread = hi / lo if lo > 0 else math.inf
    incs = relative_increments(v)
    last = incs[-tail:] if incs else []
    ok = spread <= ratio_tol and all(i < inc_tol for i in last) and all(math.isfinite(x) for x in v)
    return {"pass": ok, "spread": spread, "increments": incs}


def divergent_trend(partial_sums) -> dict:
    """Positive least-squares slope and last increment >= half the mean increment."""
    s = np.array([float(x) for x in partial_sums])
    L = np.arange(len(s), dtype=float)
    slope = float(np.polyfit(L, s, 1)[0]) if len(s) > 1 else 0.0
    incs = np.diff(s)
    ok = slope > 0 and len(incs) > 0 and incs[-1] >= 0.5 * incs.mean()
    return {"pass": bool(ok), "slope": slope, "increments": incs.tolist()}
