"""Odd convolution kernels: the band-flattened 1/x kernel and plain 1/x.

The flattened kernel is built on the base band [N**-1/2, N**1/2] and extended
by K(x) = N**k K(N**k x), where band k holds the points with
N**(-2k-1) <= x**2 < N**(-2k+1).  Inside a band, with y = N**k |x|:

    1/N        <= y**2 <= 1/(rho N)      K = 1/x            (one_over_x, low)
    1/(rho N)  <  y**2 <  1/(rho**2 N)   Hermite blend      (transition, low)
    1/(rho**2 N) <= y**2 <= rho**2 N     K = N**k           (flat)
    rho**2 N   <  y**2 <  rho N          Hermite blend      (transition, high)
    rho N      <= y**2 <  N              K = 1/x            (one_over_x, high)

Classification is done with integer comparisons on x**2 so exact inputs get
exact answers.  Values in the flat and 1/x regions are returned as Fractions;
transition values come from a 128-bit mpmath context.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import cached_property

import mpmath
import numpy as np

from .errors import DomainError, ParameterError, SingularityError
from .tree import as_fraction

MP = mpmath.MPContext()
MP.prec = 128
# Guaranteed absolute accuracy of transition values relative to their size.
TRANSITION_ERROR_BOUND = 1e-25


class Region(str, Enum):
    ONE_OVER_X = "OneOverX"
    TRANSITION = "Transition"
    FLAT = "Flat"


@dataclass(frozen=True)
class BandClass:
    region: Region
    band: int
    side: str  # "low", "high" or "mid" (flat)

    def same_piece(self, other: "BandClass") -> bool:
        return (self.region, self.band, self.side) == (other.region, other.band, other.side)


def _mpf(x) -> mpmath.mpf:
    if isinstance(x, Fraction):
        return MP.mpf(x.numerator) / x.denominator
    return MP.mpf(x)


@dataclass(frozen=True)
class _Hermite:
    """Cubic in t = (log y - u0)/width, with its derivative and y-antiderivative."""

    u0: object
    width: object
    coeffs: tuple

    def _t(self, y):
        return (MP.log(y) - self.u0) / self.width

    def value(self, y):
        c0, c1, c2, c3 = self.coeffs
        t = self._t(y)
        return c0 + t * (c1 + t * (c2 + t * c3))

    def dvalue_dy(self, y):
        _, c1, c2, c3 = self.coeffs
        t = self._t(y)
        return (c1 + t * (2 * c2 + 3 * t * c3)) / (self.width * y)

    def primitive(self, y):
        # integral of P(t(y)) dy = y * sum_j (-1)**j P^(j)(t) / width**j
        c0, c1, c2, c3 = self.coeffs
        t = self._t(y)
        w = self.width
        p0 = c0 + t * (c1 + t * (c2 + t * c3))
        p1 = c1 + t * (2 * c2 + 3 * t * c3)
        p2 = 2 * c2 + 6 * t * c3
        p3 = 6 * c3
        return y * (p0 - p1 / w + p2 / w ** 2 - p3 / w ** 3)

    def as_floats(self):
        return float(self.u0), float(self.width), tuple(float(c) for c in self.coeffs)


def _hermite(y0, h0, m0, y1, h1, m1) -> _Hermite:
    """Hermite cubic in log y from (y0, h0, dh/du=m0) to (y1, h1, dh/du=m1)."""
    u0 = MP.log(y0)
    w = MP.log(y1) - u0
    c0 = h0
    c1 = w * m0
    c2 = -3 * h0 - 2 * w * m0 + 3 * h1 - w * m1
    c3 = 2 * h0 + w * m0 - 2 * h1 + w * m1
    return _Hermite(u0, w, (c0, c1, c2, c3))


@dataclass(frozen=True)
class KernelSpec:
    """Kernel parameters.  ``kind`` is "flat" (flattened) or "hilbert" (1/x)."""

    n: int = 16
    rho: Fraction = Fraction(3, 4)
    kind: str = "flat"

    def __post_init__(self):
        object.__setattr__(self, "rho", as_fraction(self.rho))
        if not isinstance(self.n, int) or self.n < 3:
            raise ParameterError(f"N must be an integer >= 3, got {self.n!r}")
        if self.kind not in ("flat", "hilbert"):
            raise ParameterError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "flat":
            if not 0 < self.rho < 1:
                raise ParameterError(f"rho must lie in (0, 1), got {self.rho}")
            self._check_monotone()

    @classmethod
    def hilbert(cls, n: int = 16) -> "KernelSpec":
        return cls(n=n, kind="hilbert")

    # -- thresholds on y**2 = (N**k x)**2, as Fractions
    @cached_property
    def _thresholds(self) -> tuple:
        n, r = Fraction(self.n), self.rho
        return (1 / n, 1 / (r * n), 1 / (r * r * n), r * r * n, r * n, n)

    @cached_property
    def _threshold_ints(self) -> tuple:
        return tuple((t.numerator, t.denominator) for t in self._thresholds)

    @cached_property
    def _breaks(self) -> tuple:
        """Square roots of the thresholds: base-band region boundaries."""
        return tuple(MP.sqrt(_mpf(t)) for t in self._thresholds)

    @cached_property
    def _blends(self) -> tuple:
        ya, yb, yc, yd, ye, yf = self._breaks
        low = _hermite(yb, 1 / yb, -1 / yb, yc, MP.mpf(1), MP.mpf(0))
        high = _hermite(yd, MP.mpf(1), MP.mpf(0), ye, 1 / ye, -1 / ye)
        return low, high

    def _check_monotone(self):
        # Fritsch-Carlson: cubic Hermite with one zero end slope is monotone
        # iff the other end slope is at most 3 times the secant slope.
        for blend in self._blends:
            c0, c1, c2, c3 = blend.coeffs
            secant = c1 + c2 + c3  # P(1) - P(0)
            ends = (c1, c1 + 2 * c2 + 3 * c3)
            for s in ends:
                if s != 0 and (s / secant < 0 or s / secant > 3):
                    raise ParameterError("transition blend is not monotone for these parameters")

    @property
    def is_flat(self) -> bool:
        return self.kind == "flat"

    def containment_ok(self) -> bool:
        """Inequalities that put the near-center distances inside flat sets.

        (1/rho) N**-1/2 <= 1/2 - 2/N  and  1 <= rho N**1/2, checked exactly.
        """
        n, r = Fraction(self.n), self.rho
        gap = Fraction(1, 2) - 2 / n
        return gap > 0 and 1 / (r * r * n) <= gap * gap and r * r * n >= 1

    def require_containment(self):
        if not self.containment_ok():
            raise ParameterError(
                f"N={self.n}, rho={self.rho}: near-center distances are not inside flat sets")

    def flat_value(self, band: int) -> Fraction:
        return Fraction(self.n) ** band

    # -- exact classification
    def band_of(self, x) -> int:
        x = abs(as_fraction(x))
        if x == 0:
            raise SingularityError("band of 0 is undefined")
        p, q = x.numerator, x.denominator
        est = -(math.log(p) - math.log(q)) / math.log(self.n)
        k = int(round(est))
        p2, q2 = p * p, q * q
        while self._cmp(p2, q2, k, 1, self.n) < 0:
            k += 1
        while self._cmp(p2, q2, k, self.n, 1) >= 0:
            k -= 1
        return k

    def _cmp(self, p2: int, q2: int, k: int, tn: int, td: int) -> int:
        """Sign of (p2/q2) N**(2k) - tn/td."""
        if k >= 0:
            lhs = p2 * self.n ** (2 * k) * td
            rhs = tn * q2
        else:
            lhs = p2 * td
            rhs = tn * q2 * self.n ** (-2 * k)
        return (lhs > rhs) - (lhs < rhs)

    def classify(self, x) -> BandClass:
        x = abs(as_fraction(x))
        k = self.band_of(x)
        if not self.is_flat:
            return BandClass(Region.ONE_OVER_X, k, "low" if self._below_one(x, k) else "high")
        p2, q2 = x.numerator ** 2, x.denominator ** 2
        _, b, c, d, e, _ = self._threshold_ints
        if self._cmp(p2, q2, k, *b) <= 0:
            return BandClass(Region.ONE_OVER_X, k, "low")
        if self._cmp(p2, q2, k, *c) < 0:
            return BandClass(Region.TRANSITION, k, "low")
        if self._cmp(p2, q2, k, *d) <= 0:
            return BandClass(Region.FLAT, k, "mid")
        if self._cmp(p2, q2, k, *e) < 0:
            return BandClass(Region.TRANSITION, k, "high")
        return BandClass(Region.ONE_OVER_X, k, "high")

    def _below_one(self, x: Fraction, k: int) -> bool:
        return self._cmp(x.numerator ** 2, x.denominator ** 2, k, 1, 1) < 0

    # -- pointwise evaluation
    def eval(self, x):
        """K(x): a Fraction on exact regions, a 128-bit mpf in transitions."""
        x = as_fraction(x)
        if x == 0:
            raise SingularityError("kernel is singular at 0")
        sign = 1 if x > 0 else -1
        ax = abs(x)
        if not self.is_flat:
            return 1 / x
        bc = self.classify(ax)
        if bc.region is Region.ONE_OVER_X:
            return 1 / x
        scale = Fraction(self.n) ** bc.band
        if bc.region is Region.FLAT:
            return sign * scale
        blend = self._blends[0] if bc.side == "low" else self._blends[1]
        return sign * _mpf(scale) * blend.value(_mpf(ax * scale))

    def deriv(self, x):
        """K'(x); even in x and never positive."""
        x = as_fraction(x)
        if x == 0:
            raise SingularityError("kernel is singular at 0")
        ax = abs(x)
        if not self.is_flat:
            return -1 / (x * x)
        bc = self.classify(ax)
        if bc.region is Region.ONE_OVER_X:
            return -1 / (x * x)
        if bc.region is Region.FLAT:
            return Fraction(0)
        scale = Fraction(self.n) ** bc.band
        blend = self._blends[0] if bc.side == "low" else self._blends[1]
        return _mpf(scale * scale) * blend.dvalue_dy(_mpf(ax * scale))

    # -- integrals over positive ranges
    @cached_property
    def _band_primitive_table(self):
        ya, yb, yc, yd, ye, yf = self._breaks
        low, high = self._blends
        at_b = MP.log(yb / ya)
        at_c = at_b + low.primitive(yc) - low.primitive(yb)
        at_d = at_c + (yd - yc)
        at_e = at_d + high.primitive(ye) - high.primitive(yd)
        at_f = at_e + MP.log(yf / ye)
        return at_b, at_c, at_d, at_e, at_f

    def _base_primitive(self, y, side_region: BandClass):
        """Integral of the base-band profile from N**-1/2 up to y."""
        ya, yb, yc, yd, ye, _ = self._breaks
        at_b, at_c, at_d, at_e, _ = self._band_primitive_table
        low, high = self._blends
        r, s = side_region.region, side_region.side
        if r is Region.ONE_OVER_X and s == "low":
            return MP.log(y / ya)
        if r is Region.TRANSITION and s == "low":
            return at_b + low.primitive(y) - low.primitive(yb)
        if r is Region.FLAT:
            return at_c + (y - yc)
        if r is Region.TRANSITION:
            return at_d + high.primitive(y) - high.primitive(yd)
        return at_e + MP.log(y / ye)

    def integral(self, lo, hi):
        """Integral of K over [lo, hi] with 0 < lo < hi.

        Returns (value, exact).  Exact Fractions come back only when both ends
        fall in one flat set.
        """
        lo, hi = as_fraction(lo), as_fraction(hi)
        if not 0 < lo < hi:
            raise DomainError(f"need 0 < lo < hi, got {lo}, {hi}")
        if not self.is_flat:
            return MP.log(_mpf(hi) / _mpf(lo)), False
        c_lo, c_hi = self.classify(lo), self.classify(hi)
        if c_lo.same_piece(c_hi):
            if c_lo.region is Region.FLAT:
                return self.flat_value(c_lo.band) * (hi - lo), True
            if c_lo.region is Region.ONE_OVER_X:
                return MP.log(_mpf(hi) / _mpf(lo)), False
        total = self._band_primitive_table[-1]
        y_lo = _mpf(lo) * _mpf(Fraction(self.n) ** c_lo.band)
        y_hi = _mpf(hi) * _mpf(Fraction(self.n) ** c_hi.band)
        b_lo = self._base_primitive(y_lo, c_lo)
        b_hi = self._base_primitive(y_hi, c_hi)
        # band index decreases as t grows; each band contributes the same total
        full = c_lo.band - c_hi.band
        return b_hi - b_lo + full * total, False

    # -- vectorised float path
    @cached_property
    def _float_tables(self):
        breaks = tuple(float(b) for b in self._breaks)
        low, high = self._blends
        return breaks, low.as_floats(), high.as_floats()

    def _band_array(self, ax: np.ndarray):
        n = float(self.n)
        k = np.floor(0.5 - np.log(ax) / math.log(n)).astype(np.int64)
        y = ax * np.power(n, k.astype(float))
        lo_mask = y * y < 1.0 / n
        k = np.where(lo_mask, k + 1, k)
        y = np.where(lo_mask, y * n, y)
        hi_mask = y * y >= n
        k = np.where(hi_mask, k - 1, k)
        y = np.where(hi_mask, y / n, y)
        return k, y

    @staticmethod
    def _blend_float(params, y, derivative=False):
        u0, w, (c0, c1, c2, c3) = params
        t = (np.log(y) - u0) / w
        if derivative:
            return (c1 + t * (2 * c2 + 3 * t * c3)) / (w * y)
        return c0 + t * (c1 + t * (c2 + t * c3))

    def eval_array(self, x) -> np.ndarray:
        """Float64 K on an array; zeros in the input raise SingularityError."""
        x = np.asarray(x, dtype=float)
        if np.any(x == 0):
            raise SingularityError("kernel is singular at 0")
        if not self.is_flat:
            return 1.0 / x
        ax = np.abs(x)
        k, y = self._band_array(ax)
        (ya, yb, yc, yd, ye, yf), low, high = self._float_tables
        scale = np.power(float(self.n), k.astype(float))
        out = 1.0 / ax
        out = np.where((y > yb) & (y < yc), scale * self._blend_float(low, y), out)
        out = np.where((y >= yc) & (y <= yd), scale, out)
        out = np.where((y > yd) & (y < ye), scale * self._blend_float(high, y), out)
        return np.sign(x) * out

    def deriv_array(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if np.any(x == 0):
            raise SingularityError("kernel is singular at 0")
        if not self.is_flat:
            return -1.0 / (x * x)
        ax = np.abs(x)
        k, y = self._band_array(ax)
        (ya, yb, yc, yd, ye, yf), low, high = self._float_tables
        scale2 = np.power(float(self.n), 2.0 * k.astype(float))
        out = -1.0 / (ax * ax)
        out = np.where((y > yb) & (y < yc), scale2 * self._blend_float(low, y, True), out)
        out = np.where((y >= yc) & (y <= yd), 0.0, out)
        out = np.where((y > yd) & (y < ye), scale2 * self._blend_float(high, y, True), out)
        return out

    def region_array(self, x) -> list[str]:
        ax = np.abs(np.asarray(x, dtype=float))
        k, y = self._band_array(ax)
        (ya, yb, yc, yd, ye, yf), _, _ = self._float_tables
        names = []
        for yy in y:
            if yy <= yb or yy >= ye:
                names.append(Region.ONE_OVER_X.value)
            elif yc <= yy <= yd:
                names.append(Region.FLAT.value)
            else:
                names.append(Region.TRANSITION.value)
        return names

    def transition_zones(self, band: int = 0) -> tuple:
        """Float endpoints of the two transition zones of ``band`` (positive side)."""
        ya, yb, yc, yd, ye, yf = (float(b) for b in self._breaks)
        s = float(self.n) ** (-band)
        return (yb * s, yc * s), (yd * s, ye * s)

    def flat_set(self, band: int) -> tuple[float, float]:
        ya, yb, yc, yd, ye, yf = (float(b) for b in self._breaks)
        s = float(self.n) ** (-band)
        return yc * s, yd * s


def ellipticity_constants(kernel: KernelSpec, samples: np.ndarray) -> tuple[float, float]:
    """inf and sup of |x K(x)| over the samples."""
    v = np.abs(samples * kernel.eval_array(samples))
    return float(v.min()), float(v.max())


def log_samples(n: int, count: int, bands: int, rng) -> np.ndarray:
    """Signed samples spread log-uniformly over ``bands`` bands on each side of 1."""
    u = rng.uniform(-(bands + 0.5), bands + 0.5, size=count)
    sign = np.where(rng.random(count) < 0.5, -1.0, 1.0)
    return sign * np.power(float(n), u)
