"""Exact piecewise-polynomial functions on the half line.

A :class:`PiecewisePoly` is a function on ``[0, oo)`` that is polynomial on
each interval ``[b_i, b_{i+1})`` of a finite breakpoint list and polynomial
again on the tail ``[b_last, oo)``.  All coefficients are
:class:`fractions.Fraction`.  Objects are kept in a canonical form (trimmed
coefficients, adjacent equal pieces merged) so ``==`` is mathematical
equality up to values at breakpoints.

The module also applies the Taylor coefficients of the free Dirichlet
resolvent, the integral operators with kernels

    K_j(r, r') = (-1)^j / (2 (j+1)!) * ((r_> + r_<)^(j+1) - (r_> - r_<)^(j+1)),

exactly to compactly supported functions.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from fractions import Fraction
from math import comb, factorial
from typing import Iterable, Sequence, Union

import numpy as np

Number = Union[int, Fraction]
Poly = tuple  # tuple[Fraction, ...], ascending powers, no trailing zeros

MAX_DEGREE = 40


# ---------------------------------------------------------------------------
# dense polynomials as coefficient tuples


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, str)):
        return Fraction(x)
    if isinstance(x, float):
        raise TypeError("floats are not accepted in the exact engine; use Fraction or a 'num/den' string")
    return Fraction(x)


def poly(coeffs: Iterable) -> Poly:
    c = [as_fraction(x) for x in coeffs]
    while c and c[-1] == 0:
        c.pop()
    return tuple(c)


def poly_add(a: Poly, b: Poly) -> Poly:
    if len(a) < len(b):
        a, b = b, a
    out = list(a)
    for i, x in enumerate(b):
        out[i] += x
    return poly(out)


def poly_scale(c: Fraction, a: Poly) -> Poly:
    if c == 0:
        return ()
    return tuple(c * x for x in a)


def poly_mul(a: Poly, b: Poly) -> Poly:
    if not a or not b:
        return ()
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x == 0:
            continue
        for j, y in enumerate(b):
            out[i + j] += x * y
    return poly(out)


def poly_shift_power(a: Poly, k: int) -> Poly:
    """Multiply by ``x**k``."""
    if not a:
        return ()
    return (Fraction(0),) * k + a


def poly_eval(a: Poly, x: Fraction) -> Fraction:
    acc = Fraction(0)
    for c in reversed(a):
        acc = acc * x + c
    return acc


def poly_antiderivative(a: Poly) -> Poly:
    """Antiderivative vanishing at 0."""
    return poly([0] + [c / (i + 1) for i, c in enumerate(a)])


def poly_derivative(a: Poly) -> Poly:
    return poly([i * c for i, c in enumerate(a)][1:])


def poly_integral(a: Poly, lo: Fraction, hi: Fraction) -> Fraction:
    A = poly_antiderivative(a)
    return poly_eval(A, hi) - poly_eval(A, lo)


def poly_degree(a: Poly) -> int:
    return len(a) - 1


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PiecewisePoly:
    """Piecewise polynomial on [0, oo) with a polynomial tail.

    ``pieces[i]`` is valid on ``[breaks[i], breaks[i+1])`` and ``tail`` on
    ``[breaks[-1], oo)``.  Values at a breakpoint come from the piece on its
    right.
    """

    breaks: tuple
    pieces: tuple
    tail: Poly = ()

    def __post_init__(self):
        breaks = tuple(as_fraction(b) for b in self.breaks)
        pieces = tuple(poly(p) for p in self.pieces)
        tail = poly(self.tail)
        if not breaks or breaks[0] != 0:
            raise ValueError("breakpoints must start at 0")
        if len(pieces) != len(breaks) - 1:
            raise ValueError("need exactly one piece per interval between breakpoints")
        for lo, hi in zip(breaks, breaks[1:]):
            if not lo < hi:
                raise ValueError("breakpoints must be strictly increasing")
        for p in pieces + (tail,):
            if len(p) - 1 > MAX_DEGREE:
                raise ValueError(f"piece degree {len(p) - 1} exceeds MAX_DEGREE={MAX_DEGREE}")
        # canonical form: merge adjacent equal pieces (tail included)
        segments = list(zip(breaks, pieces + (tail,)))
        merged = [segments[0]]
        for seg in segments[1:]:
            if seg[1] != merged[-1][1]:
                merged.append(seg)
        nb = tuple(b for b, _ in merged)
        np_ = tuple(p for _, p in merged[:-1])
        tail = merged[-1][1]
        object.__setattr__(self, "breaks", nb)
        object.__setattr__(self, "pieces", np_)
        object.__setattr__(self, "tail", tail)

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls) -> "PiecewisePoly":
        return cls((0,), (), ())

    @classmethod
    def polynomial(cls, coeffs: Iterable) -> "PiecewisePoly":
        """A global polynomial (tail only)."""
        return cls((0,), (), poly(coeffs))

    @classmethod
    def from_intervals(cls, spec: Sequence, tail: Iterable = ()) -> "PiecewisePoly":
        """Build from ``[(a, b, coeffs), ...]`` on disjoint intervals.

        Gaps between the given intervals are zero; everything past the last
        interval is ``tail``.
        """
        items = sorted(((as_fraction(a), as_fraction(b), poly(c)) for a, b, c in spec), key=lambda t: t[0])
        breaks, pieces = [Fraction(0)], []
        for a, b, c in items:
            if a < breaks[-1]:
                raise ValueError("intervals overlap")
            if b <= a:
                raise ValueError("empty interval")
            if a > breaks[-1]:
                pieces.append(())
                breaks.append(a)
            pieces.append(c)
            breaks.append(b)
        return cls(tuple(breaks), tuple(pieces), poly(tail))

    @classmethod
    def indicator(cls, a: Number, b: Number, value: Number = 1) -> "PiecewisePoly":
        return cls.from_intervals([(a, b, (value,))])

    # -- basic queries ------------------------------------------------------

    @property
    def compact(self) -> bool:
        return not self.tail

    @property
    def is_zero(self) -> bool:
        return not self.pieces and not self.tail

    @property
    def degree(self) -> int:
        return max((len(p) - 1 for p in self.pieces + (self.tail,)), default=-1)

    @property
    def support_end(self) -> Fraction:
        """Right end of the last nonzero piece (infinite support raises)."""
        if self.tail:
            raise ValueError("function has an unbounded tail")
        for i in range(len(self.pieces) - 1, -1, -1):
            if self.pieces[i]:
                return self.breaks[i + 1]
        return Fraction(0)

    def intervals(self):
        """Yield ``(lo, hi, poly)`` for the bounded pieces."""
        for i, p in enumerate(self.pieces):
            yield self.breaks[i], self.breaks[i + 1], p

    def piece_at(self, x: Fraction) -> Poly:
        i = bisect.bisect_right(self.breaks, x) - 1
        if i >= len(self.pieces):
            return self.tail
        return self.pieces[i]

    def __call__(self, r) -> Fraction:
        return evaluate(self, r)

    # -- arithmetic sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(-1, other))

    def __neg__(self):
        return scale(-1, self)

    def __mul__(self, other):
        if isinstance(other, PiecewisePoly):
            return mul(self, other)
        return scale(other, self)

    __rmul__ = __mul__

    def __str__(self) -> str:
        parts = []
        for lo, hi, p in self.intervals():
            parts.append(f"[{lo}, {hi}): {format_poly(p)}")
        parts.append(f"[{self.breaks[-1]}, oo): {format_poly(self.tail)}")
        return "; ".join(parts)

    # -- float views used by the numerical oracle ------------------------------

    def evaluate_array(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        edges = [float(b) for b in self.breaks]
        idx = np.searchsorted(edges, x, side="right") - 1
        for i, p in enumerate(self.pieces + (self.tail,)):
            mask = idx == i
            if p and mask.any():
                out[mask] = np.polyval([float(c) for c in reversed(p)], x[mask])
        return out

    def antiderivative_array(self, x) -> np.ndarray:
        """Float values of ``int_0^x self``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        edges = [float(b) for b in self.breaks]
        idx = np.searchsorted(edges, x, side="right") - 1
        offset = Fraction(0)
        for i, p in enumerate(self.pieces + (self.tail,)):
            lo = self.breaks[i]
            A = poly_antiderivative(p)
            const = offset - poly_eval(A, lo)
            mask = idx == i
            if mask.any():
                coeffs = [float(c) for c in reversed(A)] or [0.0]
                out[mask] = np.polyval(coeffs, x[mask]) + float(const)
            if i < len(self.pieces):
                offset += poly_integral(p, lo, self.breaks[i + 1])
        return out


def format_poly(p: Poly, var: str = "r") -> str:
    if not p:
        return "0"
    terms = []
    for k, c in enumerate(p):
        if c == 0:
            continue
        if k == 0:
            terms.append(f"{c}")
        elif k == 1:
            terms.append(f"({c})*{var}")
        else:
            terms.append(f"({c})*{var}^{k}")
    return " + ".join(terms)


# ---------------------------------------------------------------------------
# pointwise algebra


def evaluate(p: PiecewisePoly, r) -> Fraction:
    r = as_fraction(r)
    if r < 0:
        raise ValueError("functions live on [0, oo); got negative argument")
    return poly_eval(p.piece_at(r), r)


def _merged_breaks(*fs: PiecewisePoly) -> list:
    pts = set()
    for f in fs:
        pts.update(f.breaks)
    return sorted(pts)


def _combine(op, *fs: PiecewisePoly) -> PiecewisePoly:
    breaks = _merged_breaks(*fs)
    pieces = [op(*(f.piece_at(lo) for f in fs)) for lo in breaks[:-1]]
    tail = op(*(f.tail for f in fs))
    return PiecewisePoly(tuple(breaks), tuple(pieces), tail)


def add(p: PiecewisePoly, q: PiecewisePoly) -> PiecewisePoly:
    return _combine(poly_add, p, q)


def scale(c: Number, p: PiecewisePoly) -> PiecewisePoly:
    c = as_fraction(c)
    return PiecewisePoly(p.breaks, tuple(poly_scale(c, x) for x in p.pieces), poly_scale(c, p.tail))


def mul(p: PiecewisePoly, q: PiecewisePoly) -> PiecewisePoly:
    return _combine(poly_mul, p, q)


def linear_combination(items: Iterable) -> PiecewisePoly:
    """Sum of ``c * f`` over ``(c, f)`` pairs."""
    items = [(as_fraction(c), f) for c, f in items if c != 0]
    if not items:
        return PiecewisePoly.zero()
    fs = [f for _, f in items]
    breaks = _merged_breaks(*fs)

    def at(select):
        acc: Poly = ()
        for c, f in items:
            acc = poly_add(acc, poly_scale(c, select(f)))
        return acc

    pieces = [at(lambda f, lo=lo: f.piece_at(lo)) for lo in breaks[:-1]]
    return PiecewisePoly(tuple(breaks), tuple(pieces), at(lambda f: f.tail))


def multiply_by_power(p: PiecewisePoly, k: int) -> PiecewisePoly:
    """Pointwise product with ``r**k``."""
    return PiecewisePoly(p.breaks, tuple(poly_shift_power(x, k) for x in p.pieces), poly_shift_power(p.tail, k))


def derivative(p: PiecewisePoly) -> PiecewisePoly:
    """Piecewise derivative (jumps at breakpoints are ignored)."""
    return PiecewisePoly(p.breaks, tuple(poly_derivative(x) for x in p.pieces), poly_derivative(p.tail))


# ---------------------------------------------------------------------------
# integrals


def integrate(p: PiecewisePoly, weight_power: int = 0) -> Fraction:
    """Exact ``int_0^oo r**weight_power * p(r) dr`` of a compactly supported p."""
    if weight_power < 0:
        raise ValueError("weight_power must be nonnegative")
    if not p.compact:
        raise ValueError("integral of a function with nonzero polynomial tail diverges")
    total = Fraction(0)
    for lo, hi, c in p.intervals():
        if c:
            total += poly_integral(poly_shift_power(c, weight_power), lo, hi)
    return total


def inner(p: PiecewisePoly, q: PiecewisePoly) -> Fraction:
    """Exact L2 inner product; at least one argument must be compact."""
    if not (p.compact or q.compact):
        raise ValueError("inner product needs at least one compactly supported argument")
    return integrate(mul(p, q))


def norm_squared(p: PiecewisePoly) -> Fraction:
    return inner(p, p)


# ---------------------------------------------------------------------------
# free Dirichlet kernels


def kernel_coefficients(j: int) -> dict:
    """Coefficients ``c_k`` with ``K_j = sum_k c_k r_<^k r_>^(j+1-k)``."""
    if j < 0:
        raise ValueError("kernel index must be nonnegative")
    sign = -1 if j % 2 else 1
    return {k: Fraction(sign * comb(j + 1, k), factorial(j + 1)) for k in range(1, j + 2, 2)}


def kernel_value(j: int, r, rp) -> Fraction:
    """Exact value of the kernel of G_j^D at (r, r')."""
    r, rp = as_fraction(r), as_fraction(rp)
    big, small = max(r, rp), min(r, rp)
    return sum((c * small**k * big ** (j + 1 - k) for k, c in kernel_coefficients(j).items()), Fraction(0))


def apply_GjD(j: int, f: PiecewisePoly) -> PiecewisePoly:
    """Apply the order-j free Dirichlet coefficient to a compact function.

    The kernel is separable in ``(r_<, r_>)``, so on every piece of ``f`` the
    result is a polynomial built from partial moments of ``f``.  Past the
    support of ``f`` it is a polynomial of degree at most ``j + 1``.
    """
    if not f.compact:
        raise ValueError("G_j^D is applied only to compactly supported functions")
    coeffs = kernel_coefficients(j)
    powers = sorted({k for k in coeffs} | {j + 1 - k for k in coeffs})
    intervals = list(f.intervals())

    # cumulative moments int_0^{b_i} s^m f(s) ds at every breakpoint
    cum = {m: [Fraction(0)] for m in powers}
    for lo, hi, c in intervals:
        for m in powers:
            cum[m].append(cum[m][-1] + (poly_integral(poly_shift_power(c, m), lo, hi) if c else 0))
    total = {m: cum[m][-1] for m in powers}

    def result_poly(lower_moment) -> Poly:
        # lower_moment(m) -> Poly of x equal to int_0^x s^m f
        acc: Poly = ()
        for k, c in coeffs.items():
            m_low, m_high = k, j + 1 - k
            below = lower_moment(m_low)
            above = poly_add((total[m_high],), poly_scale(Fraction(-1), lower_moment(m_high)))
            term = poly_add(poly_shift_power(below, m_high), poly_shift_power(above, m_low))
            acc = poly_add(acc, poly_scale(c, term))
        return acc

    pieces = []
    for i, (lo, hi, c) in enumerate(intervals):
        def lower(m, i=i, lo=lo, c=c):
            A = poly_antiderivative(poly_shift_power(c, m))
            return poly_add((cum[m][i] - poly_eval(A, lo),), A)
        pieces.append(result_poly(lower))
    tail = result_poly(lambda m: (total[m],))
    return PiecewisePoly(f.breaks, tuple(pieces), tail)


# ---------------------------------------------------------------------------
# text serialization


def fraction_text(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else f"{x.numerator}"


def to_text(p: PiecewisePoly) -> str:
    """Serialize as ``breaks:``/``piece:``/``tail:`` lines of exact fractions."""
    lines = ["breaks: " + " ".join(fraction_text(b) for b in p.breaks)]
    for c in p.pieces:
        lines.append("piece: " + (" ".join(fraction_text(x) for x in c) or "0"))
    lines.append("tail: " + (" ".join(fraction_text(x) for x in p.tail) or "0"))
    return "\n".join(lines)


def parse_fraction(token: str) -> Fraction:
    """Integers and ``num/den`` only; decimal notation is refused to keep inputs visibly exact."""
    if any(ch in token for ch in ".eE"):
        raise ValueError(f"not an exact fraction: {token!r} (write it as num/den)")
    try:
        return Fraction(token)
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not an exact fraction: {token!r}") from exc


def from_text(text: str) -> PiecewisePoly:
    breaks, pieces, tail = None, [], None
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, rest = line.partition(":")
        values = [parse_fraction(t) for t in rest.split()]
        key = key.strip()
        if key == "breaks":
            breaks = values
        elif key == "piece":
            pieces.append(values)
        elif key == "tail":
            tail = values
        else:
            raise ValueError(f"unknown key {key!r} in piecewise block")
    if breaks is None:
        raise ValueError("piecewise block lacks a 'breaks:' line")
    return PiecewisePoly(tuple(breaks), tuple(pieces), tuple(tail or ()))


def indicator_battery() -> list:
    """A fixed set of compact test functions used for sandwich comparisons."""
    P = PiecewisePoly
    return [
        P.indicator(0, 1),
        P.indicator(1, 2),
        P.indicator(2, 3),
        P.indicator(3, 4),
        P.indicator(4, 5),
        P.indicator(0, Fraction(1, 2)),
        multiply_by_power(P.indicator(0, 2), 1),
        multiply_by_power(P.indicator(1, 3), 2),
    ]
