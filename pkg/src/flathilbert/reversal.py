"""Energy reversal: when does E(J,w)^2 P(J,mu)^2 control the oscillation of T mu on J?

For 1/x the oscillation E_J E_J |T mu(x) - T mu(z)|^2 is comparable to the
left side.  For the flattened kernel one can place mu so that every distance
from J to supp mu lands in a single flat set; T mu is then constant on J and
the right side vanishes while the left side does not.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ParameterError
from .functionals import energy_sq, poisson
from .kernel import KernelSpec, Region
from .measures import DiscreteMeasure, redistributed_closed_form
from .transform import apply, gauss_legendre
from .tree import Interval, TreeAddress, as_fraction, frac_str, interval_of, l_interval_of, parse_frac


@dataclass(frozen=True)
class ReversalInstance:
    J: Interval
    omega: DiscreteMeasure
    mu: DiscreteMeasure
    gamma: Fraction
    kernel: KernelSpec

    def __post_init__(self):
        object.__setattr__(self, "gamma", as_fraction(self.gamma))
        if self.gamma < 2:
            raise ParameterError("gamma must be at least 2")
        if self.omega.support_hull() is not None and not self.J.contains(self.omega.support_hull()):
            raise ParameterError("omega must live on J")
        for x, _ in self.omega.atoms:
            if not self.J.contains_point(x):
                raise ParameterError("omega must live on J")
        need = (self.gamma - 1) / 2 * self.J.length
        for y in _support_points(self.mu):
            if self.J.distance_to(y) < need:
                raise ParameterError(f"mu reaches within {need} of J")

    def to_json(self) -> dict:
        """Full instance; ``from_json`` rebuilds it exactly."""
        k = self.kernel
        return {"J": self.J.to_json(), "omega": self.omega.to_json(), "mu": self.mu.to_json(),
                "gamma": frac_str(self.gamma), "kernel": {"n": k.n, "rho": frac_str(k.rho), "kind": k.kind}}

    @classmethod
    def from_json(cls, data) -> "ReversalInstance":
        if isinstance(data, str):
            data = json.loads(data)
        k = data["kernel"]
        return cls(Interval(parse_frac(data["J"]["a"]), parse_frac(data["J"]["b"])),
                   DiscreteMeasure.from_json(data["omega"]), DiscreteMeasure.from_json(data["mu"]),
                   parse_frac(data["gamma"]), KernelSpec(n=k["n"], rho=parse_frac(k["rho"]), kind=k["kind"]))


def _support_points(mu: DiscreteMeasure):
    for x, _ in mu.atoms:
        yield x
    for iv, _ in mu.pieces:
        yield iv.left
        yield iv.right


def _omega_nodes(omega: DiscreteMeasure, order: int = 16):
    """(points, weights, exact) discretisation of omega; exact when atomic."""
    if not omega.pieces:
        return [x for x, _ in omega.atoms], [m for _, m in omega.atoms], True
    pts, wts = [float(x) for x, _ in omega.atoms], [float(m) for _, m in omega.atoms]
    nodes, weights = gauss_legendre(order)
    for iv, m in omega.pieces:
        a, b = float(iv.left), float(iv.right)
        pts += list((a + b) / 2 + (b - a) / 2 * nodes)
        wts += list(float(m) * weights / 2)
    return pts, wts, False


def _t_values(inst: ReversalInstance, pts, exact: bool):
    vals = []
    for x in pts:
        v = apply(inst.kernel, inst.mu, Fraction(x) if not exact else x)
        exact = exact and v.exact
        vals.append(v.value)
    return vals, exact


@dataclass(frozen=True)
class ReversalResult:
    lhs: object
    rhs: object
    exact: bool

    @property
    def constant(self) -> float:
        """lhs / rhs; infinite when the oscillation vanishes."""
        if float(self.rhs) == 0:
            return math.inf
        return float(self.lhs) / float(self.rhs)


def energy_reversal_check(inst: ReversalInstance) -> ReversalResult:
    """lhs = E(J, omega)^2 P(J, mu)^2, rhs = E_J E_J |T mu(x) - T mu(z)|^2."""
    lhs = energy_sq(inst.J, inst.omega) * poisson(inst.J, inst.mu) ** 2
    pts, wts, exact = _omega_nodes(inst.omega)
    vals, exact = _t_values(inst, pts, exact)
    total_w = sum(wts)
    if exact:
        rhs = sum(wi * wj * (vi - vj) ** 2 for wi, vi in zip(wts, vals)
                  for wj, vj in zip(wts, vals)) / total_w ** 2
    else:
        v = np.array([float(x) for x in vals])
        w = np.array([float(x) for x in wts])
        rhs = float(w @ ((v[:, None] - v[None, :]) ** 2) @ w) / float(total_w) ** 2
        lhs = float(lhs)
    return ReversalResult(lhs, rhs, exact)


def gradient_monotonicity_check(inst: ReversalInstance, pairs, c=1) -> dict:
    """Check T'(x) - T'(z) >= (c/4)(x - z) sum m/(c_J - y)^2 for x > z in J.

    T' is the transform in the orientation K(y - x), which is increasing in x
    for 1/x.  Returns the worst ratio of difference to bound and the pass flag.
    """
    cJ = inst.J.center
    weight = Fraction(0)
    for y, m in inst.mu.atoms:
        weight += m / (cJ - y) ** 2
    for iv, m in inst.mu.pieces:
        # density times the integral of dy / (y - cJ)^2; same form on both sides
        u, v = iv.left - cJ, iv.right - cJ
        weight += m / iv.length * (1 / u - 1 / v)
    worst = math.inf
    witness = None
    for x, z in pairs:
        x, z = as_fraction(x), as_fraction(z)
        if x < z:
            x, z = z, x
        # orientation K(y - x) = -K(x - y)
        diff = -(apply(inst.kernel, inst.mu, x).value) + apply(inst.kernel, inst.mu, z).value
        bound = as_fraction(c) / 4 * (x - z) * weight
        r = float(diff) / float(bound) if bound else math.inf
        if r < worst:
            worst, witness = r, (x, z, diff, bound)
    return {"pass": worst >= 1.0, "worst_ratio": worst, "witness": witness}


def random_hilbert_instance(rng, n: int = 16) -> ReversalInstance:
    """J = [0, 1], 2-5 atoms of omega in J, 1-3 atoms of mu outside gamma J."""
    J = Interval(0, 1)
    gamma = Fraction(int(rng.choice([2, 4, 8])))
    grid = 2 ** 16
    k = int(rng.integers(2, 6))
    xs = set()
    while len(xs) < k:
        xs.add(Fraction(int(rng.integers(0, grid + 1)), grid))
    omega = DiscreteMeasure(tuple((x, Fraction(int(rng.integers(1, 10)), 10)) for x in xs), ())
    reach = (gamma - 1) / 2
    atoms = []
    for _ in range(int(rng.integers(1, 4))):
        side = 1 if rng.random() < 0.5 else -1
        dist = reach + Fraction(int(rng.integers(0, 5 * grid)), grid)
        y = J.right + dist if side > 0 else J.left - dist
        atoms.append((y, Fraction(int(rng.integers(1, 10)), 10)))
    mu = DiscreteMeasure(tuple(atoms), ())
    return ReversalInstance(J, omega, mu, gamma, KernelSpec.hilbert(n))


def build_reversal_failure_witness(n: int = 16, rho=Fraction(3, 4), depth: int = 4) -> ReversalInstance:
    """J = central band of the node L, mu = redistributed measure on its right child.

    Every distance from J to supp mu lies in the flat set of band 1, so T mu is
    constant on J.  Raises ParameterError when the parameters do not force this.
    """
    kernel = KernelSpec(n=n, rho=rho)
    kernel.require_containment()
    node = TreeAddress((-1,))
    J = l_interval_of(node, n)
    right = interval_of(node.child(1), n)
    mu = redistributed_closed_form(n, max(depth, 2)).restrict(right)
    q = J.length / 4
    omega = DiscreteMeasure(((J.center - q, Fraction(1, 2)), (J.center + q, Fraction(1, 2))), ())
    inst = ReversalInstance(J, omega, mu, Fraction(2), kernel)
    lo, hi = kernel.classify(right.left - J.right), kernel.classify(right.right - J.left)
    if not (lo.same_piece(hi) and lo.region is Region.FLAT):
        raise ParameterError("distances from J to mu do not share one flat set")
    return inst


def hilbert_energy_chain(sigma: DiscreteMeasure, omega: DiscreteMeasure, base: Interval,
                         parts, n: int = 16) -> dict:
    """Forward energy sum against 1/x compared with testing plus A2 terms on ``base``.

    lhs = sum over parts of |J|_omega E(J, omega)^2 P(J, 1_base sigma)^2;
    rhs = (sup_J P(J, omega) P(J, sigma) + testing ratio of base) |base|_sigma.
    """
    from .functionals import testing_forward
    s_base = sigma.restrict(base)
    lhs = Fraction(0)
    a2 = 0.0
    for J in parts:
        lhs += omega.mass_on(J) * energy_sq(J, omega) * poisson(J, s_base) ** 2
        a2 = max(a2, float(poisson(J, omega) * poisson(J, sigma)))
    test = testing_forward(base, KernelSpec.hilbert(n), sigma, omega)
    rhs = (a2 + (float(test.value) if test else 0.0)) * float(sigma.mass_on(base))
    return {"lhs": float(lhs), "rhs": rhs, "constant": float(lhs) / rhs if rhs else math.inf}
