"""Laurent expansion of ``M(kappa)^{-1}`` and of the resolvent around zero.

``M(kappa)`` is inverted by repeated projection onto kernels: with ``S`` the
K-orthogonal projection onto ``ker A_0`` (inside the current subspace),

    A^{-1} = (A + S)^{-1} + kappa^{-1} (A + S)^{-1} S m^{-1} S (A + S)^{-1},
    m(kappa) = sum_j (-1)^j kappa^j S [A~_1(kappa) J_0]^{j+1} S,

where ``A = A_0 + kappa A~_1`` and ``J_0 = (A_0 + S)^{-1}``.  ``m`` is again
a self-adjoint series on ``S K`` and the step is repeated.  For a
self-adjoint Schrodinger operator at most two steps are singular.

The resolvent follows from the factored second resolvent equation

    R(-kappa^2) = R_0 - R_0 v* M(kappa)^{-1} v R_0,

collected per power of kappa.  Coefficients are kept as a symbolic
``G_j^D`` tag plus a finite-rank part whose factors are ``G_a^D phi_i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence

from . import qlinalg as ql
from .potential import FactoredPotential, Factorization, factorization
from .ppoly import PiecewisePoly, apply_GjD, indicator_battery, inner, multiply_by_power
from .threshold import ThresholdClassification, classify

MAX_SINGULAR_LEVELS = 2


class SingularityOrderError(ArithmeticError):
    pass


class InsufficientOrderError(ValueError):
    def __init__(self, message: str, required_order: int):
        super().__init__(message)
        self.required_order = required_order


# ---------------------------------------------------------------------------
# matrix power series


def series_add(A: Sequence, B: Sequence) -> list:
    n = max(len(A), len(B))
    out = []
    for k in range(n):
        if k < len(A) and k < len(B):
            out.append(ql.add(A[k], B[k]))
        else:
            out.append(A[k] if k < len(A) else B[k])
    return out


def series_mul(A: Sequence, B: Sequence, order: Optional[int] = None) -> list:
    """Truncated Cauchy product; default order is the common order."""
    order = min(len(A), len(B)) - 1 if order is None else order
    dim = len(A[0])
    out = []
    for k in range(order + 1):
        acc = ql.zeros(dim)
        for i in range(max(0, k - len(B) + 1), min(k, len(A) - 1) + 1):
            acc = ql.add(acc, ql.matmul(A[i], B[k - i]))
        out.append(acc)
    return out


def series_neumann_inverse(A: Sequence, inverse0: Optional[ql.Matrix] = None) -> list:
    """Inverse power series of ``A`` to the same order.

    ``inverse0`` replaces ``A_0^{-1}`` (used for inverses restricted to a
    subspace); by default ``A_0`` must be invertible.
    """
    if inverse0 is None:
        try:
            inverse0 = ql.inverse(A[0])
        except ZeroDivisionError as exc:
            raise ZeroDivisionError("leading coefficient is singular; use laurent_invert") from exc
    X = [inverse0]
    for k in range(1, len(A)):
        acc = ql.zeros(len(inverse0))
        for j in range(1, k + 1):
            acc = ql.add(acc, ql.matmul(A[j], X[k - j]))
        X.append(ql.scale(-1, ql.matmul(inverse0, acc)))
    return X


@dataclass(frozen=True)
class LaurentMatrixSeries:
    lowest: int
    coefficients: tuple  # kappa^lowest, kappa^(lowest+1), ...

    @property
    def valid_through(self) -> int:
        return self.lowest + len(self.coefficients) - 1

    def coeff(self, power: int) -> ql.Matrix:
        k = power - self.lowest
        if k < 0:
            return ql.zeros(len(self.coefficients[0]))
        if k >= len(self.coefficients):
            raise InsufficientOrderError(f"kappa^{power} is beyond the computed order {self.valid_through}", power)
        return self.coefficients[k]


def laurent_mul(A: LaurentMatrixSeries, B: LaurentMatrixSeries) -> LaurentMatrixSeries:
    lo = A.lowest + B.lowest
    hi = min(A.valid_through + B.lowest, B.valid_through + A.lowest)
    coeffs = series_mul(A.coefficients, B.coefficients, hi - lo)
    return LaurentMatrixSeries(lo, tuple(coeffs))


def laurent_add(A: LaurentMatrixSeries, B: LaurentMatrixSeries) -> LaurentMatrixSeries:
    lo = min(A.lowest, B.lowest)
    hi = min(A.valid_through, B.valid_through)
    out = []
    for p in range(lo, hi + 1):
        out.append(ql.add(A.coeff(p), B.coeff(p)))
    return LaurentMatrixSeries(lo, tuple(out))


# ---------------------------------------------------------------------------
# recursive inversion


@dataclass(frozen=True)
class InversionLevel:
    """Data of one projection step (kept for inspection and tests)."""

    P: ql.Matrix  # projection onto the space this level lives on
    coefficients: tuple  # the series being inverted, on ran P
    S: ql.Matrix  # projection onto ker of the leading coefficient in ran P
    J0: ql.Matrix  # (A_0 + S)^{-1} on ran P
    m: tuple = ()  # the reduced series on ran S (empty if S == 0)


@dataclass(frozen=True)
class LaurentInversion:
    inverse: LaurentMatrixSeries
    levels: tuple

    @property
    def singular_levels(self) -> int:
        return sum(1 for lv in self.levels if lv.m)


def inverse_on(fac: Factorization, P: ql.Matrix, A: ql.Matrix) -> ql.Matrix:
    """Inverse of ``A`` on ``ran P`` extended by zero (A self-adjoint, A = PAP)."""
    n = fac.dim
    Q = ql.sub(ql.identity(n), P)
    return ql.sub(ql.inverse(ql.add(A, Q)), Q)


def kernel_projection(fac: Factorization, P: ql.Matrix, A0: ql.Matrix) -> ql.Matrix:
    n = fac.dim
    Q = ql.sub(ql.identity(n), P)
    basis = ql.nullspace(tuple(A0) + tuple(Q))
    return fac.projection(basis)


def reduced_series(A: Sequence, S: ql.Matrix, J0: ql.Matrix) -> list:
    """``m(kappa) = sum_j (-1)^j kappa^j S [A~_1 J_0]^{j+1} S`` to order ``len(A) - 2``."""
    order = len(A) - 2
    if order < 0:
        return []
    T = [ql.matmul(A[i + 1], J0) for i in range(order + 1)]
    dim = len(J0)
    m = [ql.zeros(dim) for _ in range(order + 1)]
    power = T
    for j in range(order + 1):
        sign = -1 if j % 2 else 1
        for k in range(order + 1 - j):
            m[j + k] = ql.add(m[j + k], ql.scale(sign, ql.chain(S, power[k], S)))
        if j < order:
            power = series_mul(power, T, order - j - 1)
    return m


def reduced_series_schur(fac: Factorization, P: ql.Matrix, A: Sequence, S: ql.Matrix) -> list:
    """Same as :func:`reduced_series`, via ``(S - S (A+S)^{-1} S) / kappa``."""
    B = [ql.add(A[0], S)] + list(A[1:])
    Binv = series_neumann_inverse(B, inverse_on(fac, P, B[0]))
    C = [ql.sub(S, ql.chain(S, Binv[0], S))] + [ql.scale(-1, ql.chain(S, X, S)) for X in Binv[1:]]
    if not ql.is_zero(C[0]):
        raise ArithmeticError("constant term of the Schur complement should vanish")
    return C[1:]


def _invert(fac: Factorization, P: ql.Matrix, A: Sequence, depth: int, levels: list) -> LaurentMatrixSeries:
    if not A:
        raise InsufficientOrderError("series order exhausted before the singular part was resolved", depth)
    S = kernel_projection(fac, P, A[0])
    if ql.is_zero(S):
        J0 = inverse_on(fac, P, A[0])
        levels.append(InversionLevel(P, tuple(A), S, J0))
        return LaurentMatrixSeries(0, tuple(series_neumann_inverse(A, J0)))
    if depth >= MAX_SINGULAR_LEVELS:
        raise SingularityOrderError("singularity order > 2: input violates self-adjoint spectral structure")
    B = [ql.add(A[0], S)] + list(A[1:])
    J0 = inverse_on(fac, P, B[0])
    m = reduced_series(A, S, J0)
    levels.append(InversionLevel(P, tuple(A), S, J0, tuple(m)))
    Binv = LaurentMatrixSeries(0, tuple(series_neumann_inverse(B, J0)))
    minv = _invert(fac, S, m, depth + 1, levels)
    middle = LaurentMatrixSeries(minv.lowest, tuple(ql.chain(S, X, S) for X in minv.coefficients))
    corr = laurent_mul(laurent_mul(Binv, middle), Binv)
    corr = LaurentMatrixSeries(corr.lowest - 1, corr.coefficients)
    return laurent_add(Binv, corr)


def laurent_invert(fac: Factorization, M: Sequence) -> LaurentInversion:
    """Laurent inverse of the self-adjoint series ``M`` (weighted K coordinates)."""
    levels: list = []
    n = fac.dim
    inv = _invert(fac, ql.identity(n), list(M), 0, levels)
    return LaurentInversion(inv, tuple(levels))


def required_series_order(p: int, singular_levels: int) -> int:
    return p + 2 * singular_levels


# ---------------------------------------------------------------------------
# resolvent coefficients


@lru_cache(maxsize=1 << 16)
def cached_inner(f: PiecewisePoly, g: PiecewisePoly) -> Fraction:
    return inner(f, g)


@dataclass(frozen=True)
class OperatorRep:
    """``[G_base^D] + sum w |left><right|``."""

    base: Optional[int] = None
    terms: tuple = ()

    def sandwich(self, f: PiecewisePoly, g: PiecewisePoly) -> Fraction:
        total = Fraction(0)
        if self.base is not None:
            total += cached_inner(f, apply_GjD_cached(self.base, g))
        for left, right, w in self.terms:
            total += w * cached_inner(f, left) * cached_inner(right, g)
        return total

    def apply(self, g: PiecewisePoly) -> PiecewisePoly:
        out = apply_GjD(self.base, g) if self.base is not None else PiecewisePoly.zero()
        for left, right, w in self.terms:
            c = w * inner(right, g)
            if c:
                out = out + c * left
        return out

    @property
    def finite_rank(self) -> bool:
        return self.base is None


@lru_cache(maxsize=1 << 12)
def apply_GjD_cached(j: int, g: PiecewisePoly) -> PiecewisePoly:
    return apply_GjD(j, g)


def free_coefficient(j: int) -> OperatorRep:
    """``G_j^D`` as an operator; odd orders are finite rank in polynomial factors."""
    if j % 2 == 0:
        return OperatorRep(base=j)
    # K_j is then a polynomial in (r, r'): expand (r + r')^(j+1) - |r - r'|^(j+1)
    from math import comb, factorial

    terms = []
    n = j + 1
    sign = -1 if j % 2 else 1
    for a in range(n + 1):
        # (r + r')^n - (r - r')^n = sum_a C(n,a) r^a r'^(n-a) (1 - (-1)^(n-a))
        c = Fraction(sign * comb(n, a) * (1 - (-1) ** (n - a)), 2 * factorial(n))
        if c:
            left = PiecewisePoly.polynomial([0] * a + [1])
            right = PiecewisePoly.polynomial([0] * (n - a) + [1])
            terms.append((left, right, c))
    return OperatorRep(None, tuple(terms))


@dataclass(frozen=True)
class ResolventExpansion:
    coefficients: dict  # power -> OperatorRep
    lowest: int
    order: int
    inversion: LaurentInversion = field(repr=False, default=None)

    def __getitem__(self, j: int) -> OperatorRep:
        return self.coefficients[j]

    def sandwich(self, j: int, f: PiecewisePoly, g: PiecewisePoly) -> Fraction:
        if j < self.lowest:
            return Fraction(0)
        return self.coefficients[j].sandwich(f, g)

    def series_sandwich(self, f: PiecewisePoly, g: PiecewisePoly) -> dict:
        return {j: self.sandwich(j, f, g) for j in range(self.lowest, self.order + 1)}


def assemble_resolvent(fac: Factorization, Minv: LaurentMatrixSeries, p: int, inversion=None) -> ResolventExpansion:
    """Collect ``G_n`` for ``lowest <= n <= p`` from ``R_0 - R_0 v* M^{-1} v R_0``."""
    lowest = min(Minv.lowest, 0)
    if Minv.valid_through < p:
        d = -Minv.lowest
        raise InsufficientOrderError(
            f"M(kappa)^-1 known through kappa^{Minv.valid_through}; G_{p} needs M through kappa^{required_series_order(p, d)}",
            required_series_order(p, d),
        )
    n_dim = fac.dim
    coeffs = {}
    for n in range(lowest, p + 1):
        blocks = {}
        for c in range(Minv.lowest, n + 1):
            X = Minv.coeff(c)
            for a in range(0, n - c + 1):
                b = n - c - a
                acc = blocks.get((a, b))
                blocks[(a, b)] = X if acc is None else ql.add(acc, X)
        terms = []
        for (a, b), X in sorted(blocks.items()):
            for i in range(n_dim):
                for k in range(n_dim):
                    w = -X[i][k] * fac.abs_gamma[k]
                    if w:
                        terms.append((fac.G_phi(a, i), fac.G_phi(b, k), w))
        if n >= 0:
            free = free_coefficient(n)
            coeffs[n] = OperatorRep(free.base, free.terms + tuple(terms))
        else:
            coeffs[n] = OperatorRep(None, tuple(terms))
    return ResolventExpansion(coeffs, lowest, p, inversion)


def expand_resolvent(V: FactoredPotential, p: int = 1, cls: Optional[ThresholdClassification] = None) -> ResolventExpansion:
    """Resolvent coefficients ``G_lowest .. G_p``.

    The series order of ``M`` is chosen from the singularity detected by the
    recursion, so callers only name the resolvent depth.
    """
    if p < 0:
        raise ValueError("expansion depth must be nonnegative")
    fac = factorization(V)
    if fac.dim == 0:
        coeffs = {j: free_coefficient(j) for j in range(0, p + 1)}
        return ResolventExpansion(coeffs, 0, p, None)
    d = (classify(V) if cls is None else cls).kind.singularity_order
    while True:
        q = required_series_order(p, d)
        inv = laurent_invert(fac, fac.M_series(q))
        if inv.singular_levels == d:
            break
        d = inv.singular_levels
    return assemble_resolvent(fac, inv.inverse, p, inv)


# ---------------------------------------------------------------------------
# operator comparisons


def default_battery(V: Optional[FactoredPotential] = None) -> list:
    """Fixed compact test functions, plus the form factors of ``V``."""
    funcs = indicator_battery()
    if V is not None:
        from .potential import flatten

        fr, local = flatten(V)
        funcs += [t.phi for t in fr.terms] + [w.vfun for w in local]
    seen, out = set(), []
    for f in funcs:
        if f not in seen and not f.is_zero:
            seen.add(f)
            out.append(f)
    return out


def separating_battery(functions: Sequence[PiecewisePoly]) -> list:
    """Test functions that separate finite-rank operators built from ``functions``.

    On every interval of the merged breakpoints, plus a unit interval past the
    last one, include ``r^k`` for ``k`` up to the largest degree.
    """
    pts = sorted({b for f in functions for b in f.breaks})
    pts.append(pts[-1] + 1)
    deg = max((f.degree for f in functions), default=0)
    out = []
    for lo, hi in zip(pts, pts[1:]):
        base = PiecewisePoly.indicator(lo, hi)
        for k in range(deg + 1):
            out.append(multiply_by_power(base, k))
    return out


def finite_rank_equal(A: OperatorRep, B: OperatorRep) -> bool:
    """Exact equality of two finite-rank operators."""
    if A.base != B.base:
        return False
    funcs = [t[0] for t in A.terms + B.terms] + [t[1] for t in A.terms + B.terms]
    if not funcs:
        return True
    battery = separating_battery(funcs)
    for f in battery:
        for g in battery:
            if A.sandwich(f, g) != B.sandwich(f, g):
                return False
    return True


def is_zero_operator(A: OperatorRep) -> bool:
    return finite_rank_equal(A, OperatorRep())
