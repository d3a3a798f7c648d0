"""Convolution T mu(x) = integral of K(x - y) d mu(y) for finite measures.

Atoms are evaluated pointwise.  For a uniform piece the kernel is integrated
over the range of distances it presents to x; when both ends of that range
fall in one flat set the answer is an exact rational.  Mixed sums drop to
float and carry an error bound.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import InexactError, SingularityError
from .kernel import KernelSpec, TRANSITION_ERROR_BOUND, _mpf
from .measures import DiscreteMeasure
from .tree import Interval, as_fraction

FLOAT_EPS = 2.0 ** -52


@dataclass(frozen=True)
class TransformValue:
    value: object  # Fraction when exact, else float
    exact: bool
    err: float = 0.0

    def __float__(self) -> float:
        return float(self.value)

    def __add__(self, other: "TransformValue") -> "TransformValue":
        if self.exact and other.exact:
            return TransformValue(self.value + other.value, True)
        v = float(self.value) + float(other.value)
        err = self.err + other.err + FLOAT_EPS * abs(v)
        return TransformValue(v, False, err)

    def scaled(self, c) -> "TransformValue":
        if self.exact and isinstance(c, (int, Fraction)):
            return TransformValue(self.value * c, True)
        return TransformValue(float(self.value) * float(c), False, self.err * abs(float(c)))


ZERO = TransformValue(Fraction(0), True)


def _from_mp(v, mass_scale: float = 1.0) -> TransformValue:
    f = float(v)
    return TransformValue(f, False, (TRANSITION_ERROR_BOUND + FLOAT_EPS) * abs(f) + 1e-300)


def integrate_piece(kernel: KernelSpec, piece: Interval, mass, x) -> TransformValue:
    """Contribution of mass spread uniformly over ``piece`` to T(x).

    x must lie outside the closed piece.
    """
    x = as_fraction(x)
    mass = as_fraction(mass)
    if mass == 0:
        return ZERO
    a, b = piece.left, piece.right
    if a <= x <= b:
        raise SingularityError(f"point {x} lies on piece {piece}")
    if x > b:
        sign, lo, hi = 1, x - b, x - a
    else:
        sign, lo, hi = -1, a - x, b - x
    val, exact = kernel.integral(lo, hi)
    density = mass / piece.length
    if exact:
        return TransformValue(sign * density * val, True)
    return _from_mp(sign * _mpf(density) * val)


def _clip_piece(piece: Interval, mass: Fraction, x: Fraction, radius: Fraction) -> list:
    """Parts of the piece at distance >= radius from x, with prorated masses."""
    cut = Interval(x - radius, x + radius) if radius > 0 else None
    if cut is None:
        return [(piece, mass)]
    out = []
    for lo, hi in ((piece.left, min(piece.right, cut.left)), (max(piece.left, cut.right), piece.right)):
        if lo < hi:
            out.append((Interval(lo, hi), mass * (hi - lo) / piece.length))
    return out


def apply(kernel: KernelSpec, mu: DiscreteMeasure, x, window: Interval | None = None,
          exclusion=0, require_exact: bool = False) -> TransformValue:
    """T(1_window mu)(x), dropping the part of mu closer to x than ``exclusion``.

    With ``require_exact`` any float contribution raises InexactError.
    """
    x = as_fraction(x)
    radius = as_fraction(exclusion)
    if window is not None:
        mu = mu.restrict(window)
    total = ZERO
    for y, m in mu.atoms:
        d = x - y
        if abs(d) < radius or m == 0:
            continue
        if d == 0:
            raise SingularityError(f"point {x} is an atom of the measure")
        k = kernel.eval(d)
        if isinstance(k, Fraction):
            total = total + TransformValue(m * k, True)
        else:
            if require_exact:
                raise InexactError(f"transition kernel value at distance {d}")
            total = total + _from_mp(_mpf(m) * k)
    for piece, m in mu.pieces:
        for part, pm in _clip_piece(piece, m, x, radius):
            v = integrate_piece(kernel, part, pm, x)
            if require_exact and not v.exact:
                raise InexactError(f"piece {part} is not in a single flat set from {x}")
            total = total + v
    return total


def apply_linear(kernel: KernelSpec, terms, x) -> TransformValue:
    """T(sum c_i mu_i)(x) computed as sum c_i T(mu_i)(x)."""
    total = ZERO
    for c, mu in terms:
        total = total + apply(kernel, mu, x).scaled(as_fraction(c))
    return total


# -- vectorised float path -------------------------------------------------

def transform_atoms_array(kernel: KernelSpec, atom_x: np.ndarray, atom_m: np.ndarray,
                          xs: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Float64 sum_i m_i K(x - y_i) at every x in ``xs``."""
    xs = np.asarray(xs, dtype=float)
    out = np.zeros_like(xs)
    if atom_x.size == 0:
        return out
    for start in range(0, xs.size, chunk):
        block = xs[start:start + chunk]
        d = block[:, None] - atom_x[None, :]
        out[start:start + chunk] = kernel.eval_array(d) @ atom_m
    return out


def transform_array(kernel: KernelSpec, mu: DiscreteMeasure, xs) -> np.ndarray:
    """Float64 T mu on an array of points off the support."""
    xs = np.asarray(xs, dtype=float)
    arr = mu.arrays
    out = transform_atoms_array(kernel, arr["atom_x"], arr["atom_m"], xs)
    if mu.pieces:
        for i, x in enumerate(xs):
            xf = Fraction(x)
            out[i] += sum(float(integrate_piece(kernel, iv, m, xf).value) for iv, m in mu.pieces)
    return out


_GL_CACHE: dict = {}


def gauss_legendre(order: int):
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def gl_integrate(f, a: float, b: float, order: int = 16, tol: float = 1e-14,
                 max_depth: int = 30) -> tuple[float, float]:
    """Adaptive Gauss-Legendre on [a, b] for a vectorised integrand.

    Each panel is compared with the sum over its two halves; panels are split
    until they agree within ``tol`` scaled by the panel's share of [a, b].
    Returns (value, error estimate).
    """
    nodes, weights = gauss_legendre(order)

    def panel(lo, hi):
        half, mid = (hi - lo) / 2, (hi + lo) / 2
        return half * float(weights @ f(mid + half * nodes))

    total_len = b - a
    stack = [(a, b, panel(a, b), 0)]
    value = err = 0.0
    while stack:
        lo, hi, whole, depth = stack.pop()
        mid = (lo + hi) / 2
        left, right = panel(lo, mid), panel(mid, hi)
        diff = abs(left + right - whole)
        if diff <= tol * (hi - lo) / total_len or depth >= max_depth:
            value += left + right
            err += diff
        else:
            stack.append((lo, mid, left, depth + 1))
            stack.append((mid, hi, right, depth + 1))
    return value, err


def integrate_against_pieces(f, mu: DiscreteMeasure, order: int = 16, tol: float = 1e-14):
    """Integral of a vectorised f against the pieces of ``mu`` (atoms add f(x) m)."""
    total = 0.0
    err = 0.0
    for iv, m in mu.pieces:
        a, b = float(iv.left), float(iv.right)
        v, e = gl_integrate(f, a, b, order=order, tol=tol * (b - a))
        total += float(m) / (b - a) * v
        err += float(m) / (b - a) * e
    arr = mu.arrays
    if arr["atom_x"].size:
        total += float(f(arr["atom_x"]) @ arr["atom_m"])
    return total, err
