"""Potentials in factored form ``V = v* U v``.

Two building blocks are supported, plus their sums:

* finite rank, ``V = sum_i gamma_i |phi_i><phi_i|`` with compact ``phi_i``;
* local, ``(V f)(r) = vfun(r) f(r)`` with compact ``vfun``.

The exact engine works only with the finite-rank part.  For it we keep the
auxiliary space ``K = C^N`` in a *weighted* coordinate system,

    (v f)_i = |gamma_i| <phi_i, f>,    v* x = sum_i x_i phi_i,
    <x, y>_K = sum_i x_i y_i / |gamma_i|,    U = diag(sign gamma_i),

which is unitarily equivalent to the orthonormal one
``(v f)_i = |gamma_i|^(1/2) <phi_i, f>`` (conjugation by
``diag(|gamma_i|^(1/2))``) but keeps every matrix entry rational.
:func:`assemble_Mj` still offers the orthonormal matrices when they happen to
be rational.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from math import isqrt
from typing import Sequence, Union

from . import qlinalg as ql
from .ppoly import (
    PiecewisePoly,
    apply_GjD,
    as_fraction,
    fraction_text,
    from_text,
    inner,
    linear_combination,
    mul,
    parse_fraction,
    to_text,
)


class IrrationalEntryError(ValueError):
    """An orthonormal-basis matrix entry would be irrational."""


@dataclass(frozen=True)
class RankOneTerm:
    gamma: Fraction
    phi: PiecewisePoly

    def __post_init__(self):
        object.__setattr__(self, "gamma", as_fraction(self.gamma))
        if self.gamma == 0:
            raise ValueError("rank-one coupling gamma must be nonzero")
        if not self.phi.compact:
            raise ValueError("rank-one form factor must be compactly supported")
        if self.phi.is_zero:
            raise ValueError("rank-one form factor must not vanish identically")


@dataclass(frozen=True)
class FiniteRankPotential:
    terms: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    @classmethod
    def from_pairs(cls, pairs: Sequence) -> "FiniteRankPotential":
        return cls(tuple(RankOneTerm(g, p) for g, p in pairs))

    @property
    def rank(self) -> int:
        return len(self.terms)

    @property
    def gammas(self) -> tuple:
        return tuple(t.gamma for t in self.terms)

    @property
    def phis(self) -> tuple:
        return tuple(t.phi for t in self.terms)


@dataclass(frozen=True)
class LocalPotential:
    vfun: PiecewisePoly

    def __post_init__(self):
        if not self.vfun.compact:
            raise ValueError("local potentials must be compactly supported in this engine")


@dataclass(frozen=True)
class SumPotential:
    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))


FactoredPotential = Union[FiniteRankPotential, LocalPotential, SumPotential]


def flatten(V: FactoredPotential) -> tuple:
    """Split into ``(FiniteRankPotential, [LocalPotential, ...])``."""
    terms, local = [], []

    def walk(W):
        if isinstance(W, FiniteRankPotential):
            terms.extend(W.terms)
        elif isinstance(W, LocalPotential):
            local.append(W)
        elif isinstance(W, SumPotential):
            for part in W.parts:
                walk(part)
        else:
            raise TypeError(f"not a potential: {W!r}")

    walk(V)
    return FiniteRankPotential(tuple(terms)), local


def finite_rank_part(V: FactoredPotential) -> FiniteRankPotential:
    """The finite-rank content of ``V``; local pieces are rejected."""
    fr, local = flatten(V)
    if local:
        raise ValueError("the exact engine handles finite-rank potentials only; local parts need the numerical oracle")
    return fr


def support_end(V: FactoredPotential) -> Fraction:
    fr, local = flatten(V)
    ends = [t.phi.support_end for t in fr.terms] + [w.vfun.support_end for w in local]
    return max(ends, default=Fraction(0))


def apply_V(V: FactoredPotential, f: PiecewisePoly) -> PiecewisePoly:
    """Exact ``V f``.  ``f`` may have a polynomial tail."""
    fr, local = flatten(V)
    out = linear_combination((t.gamma * inner(t.phi, f), t.phi) for t in fr.terms)
    for w in local:
        out = out + mul(w.vfun, f)
    return out


def add_potentials(*Vs: FactoredPotential) -> SumPotential:
    return SumPotential(tuple(Vs))


# ---------------------------------------------------------------------------
# the weighted factorization


@dataclass(frozen=True, eq=False)
class Factorization:
    """Rational model of ``(K, v, U)`` for a finite-rank potential."""

    potential: FiniteRankPotential
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.potential.rank

    @cached_property
    def abs_gamma(self) -> tuple:
        return tuple(abs(g) for g in self.potential.gammas)

    @cached_property
    def weights(self) -> tuple:
        """Diagonal of the K Gram matrix."""
        return tuple(1 / a for a in self.abs_gamma)

    @cached_property
    def U(self) -> ql.Matrix:
        return ql.diag([1 if g > 0 else -1 for g in self.potential.gammas])

    def v(self, f: PiecewisePoly) -> tuple:
        return tuple(a * inner(phi, f) for a, phi in zip(self.abs_gamma, self.potential.phis))

    def v_star(self, x: Sequence) -> PiecewisePoly:
        return linear_combination(zip(x, self.potential.phis))

    def inner_K(self, x: Sequence, y: Sequence) -> Fraction:
        return sum((a * b * w for a, b, w in zip(x, y, self.weights)), Fraction(0))

    def norm2_K(self, x: Sequence) -> Fraction:
        return self.inner_K(x, x)

    def adjoint(self, A: ql.Matrix) -> ql.Matrix:
        n = self.dim
        return tuple(tuple(A[j][i] * self.weights[j] / self.weights[i] for j in range(n)) for i in range(n))

    def is_self_adjoint(self, A: ql.Matrix) -> bool:
        return A == self.adjoint(A)

    def gram_form(self, A: ql.Matrix) -> ql.Matrix:
        """Matrix of the sesquilinear form ``<x, A y>_K``; symmetric iff A is self-adjoint."""
        return tuple(tuple(self.weights[i] * A[i][j] for j in range(self.dim)) for i in range(self.dim))

    def projection(self, vectors: Sequence) -> ql.Matrix:
        """K-orthogonal projection onto the span of ``vectors``."""
        vectors = [tuple(v) for v in vectors]
        n = self.dim
        if not vectors:
            return ql.zeros(n)
        B = ql.column_matrix(vectors)
        W = ql.diag(self.weights)
        G = ql.chain(ql.transpose(B), W, B)
        return ql.chain(B, ql.inverse(G), ql.transpose(B), W)

    def rank_one(self, x: Sequence, y: Sequence) -> ql.Matrix:
        """Matrix of ``|x><y|`` in K."""
        return tuple(tuple(x[i] * y[j] * self.weights[j] for j in range(self.dim)) for i in range(self.dim))

    # -- kernels --------------------------------------------------------------

    def G_phi(self, j: int, i: int) -> PiecewisePoly:
        key = ("Gphi", j, i)
        if key not in self._cache:
            self._cache[key] = apply_GjD(j, self.potential.phis[i])
        return self._cache[key]

    def gram(self, j: int) -> ql.Matrix:
        """``<phi_i, G_j^D phi_k>`` (symmetric, rational)."""
        key = ("gram", j)
        if key not in self._cache:
            n = self.dim
            rows = [[None] * n for _ in range(n)]
            for i in range(n):
                for k in range(i, n):
                    val = inner(self.potential.phis[i], self.G_phi(j, k))
                    rows[i][k] = rows[k][i] = val
            self._cache[key] = ql.matrix(rows)
        return self._cache[key]

    def M(self, j: int) -> ql.Matrix:
        """Coefficient of kappa^j in ``M(kappa) = U + v R_0(-kappa^2) v*`` (weighted gauge)."""
        Phi = self.gram(j)
        A = tuple(tuple(self.abs_gamma[i] * Phi[i][k] for k in range(self.dim)) for i in range(self.dim))
        return ql.add(self.U, A) if j == 0 else A

    def M_series(self, order: int) -> list:
        return [self.M(j) for j in range(order + 1)]


def factorization(V: FactoredPotential) -> Factorization:
    return Factorization(finite_rank_part(V))


def _rational_sqrt(x: Fraction):
    n, d = x.numerator, x.denominator
    rn, rd = isqrt(n), isqrt(d)
    if rn * rn == n and rd * rd == d:
        return Fraction(rn, rd)
    return None


def assemble_Mj(V: FactoredPotential, j: int) -> ql.Matrix:
    """``M_j`` in the orthonormal factorization ``(v f)_i = |gamma_i|^(1/2) <phi_i, f>``.

    Raises :class:`IrrationalEntryError` naming the first (1-based) index
    pair whose entry ``|gamma_i gamma_k|^(1/2) <phi_i, G_j phi_k>`` is not
    rational.  The weighted equivalent is always available as
    ``factorization(V).M(j)``.
    """
    if j < 0:
        raise ValueError("j must be nonnegative")
    fac = factorization(V)
    Phi = fac.gram(j)
    n = fac.dim
    rows = []
    for i in range(n):
        row = []
        for k in range(n):
            if Phi[i][k] == 0:
                row.append(Fraction(0))
                continue
            root = _rational_sqrt(fac.abs_gamma[i] * fac.abs_gamma[k])
            if root is None:
                raise IrrationalEntryError(
                    f"entry ({i + 1},{k + 1}) of M_{j} equals sqrt({fac.abs_gamma[i] * fac.abs_gamma[k]})"
                    f" * {Phi[i][k]}, which is irrational"
                )
            row.append(root * Phi[i][k])
        rows.append(row)
    A = ql.matrix(rows)
    return ql.add(fac.U, A) if j == 0 else A


# ---------------------------------------------------------------------------
# potential description files


class PotentialFileError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def parse_potential(text: str) -> SumPotential:
    """Read ``[rank1]`` / ``[local]`` sections.

    A ``[rank1]`` section has a ``gamma:`` line and a piecewise block
    (``breaks:``, ``piece:`` lines, ``tail:``); a ``[local]`` section has only
    the block.  ``#`` starts a comment.  An empty file is the zero potential.
    """
    sections = []  # (kind, header line, [(lineno, text)])
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            kind = line.strip("[]").strip().lower()
            if not line.endswith("]") or kind not in ("rank1", "local"):
                raise PotentialFileError(lineno, f"unknown section header {line!r}; expected [rank1] or [local]")
            sections.append((kind, lineno, []))
        elif not sections:
            raise PotentialFileError(lineno, "content before the first [rank1] or [local] header")
        else:
            sections[-1][2].append((lineno, line))

    rank1, local = [], []
    for kind, header, lines in sections:
        gamma = None
        block = []
        for lineno, line in lines:
            key = line.partition(":")[0].strip()
            if key == "gamma":
                if kind != "rank1":
                    raise PotentialFileError(lineno, "gamma is only allowed in [rank1] sections")
                try:
                    gamma = parse_fraction(line.partition(":")[2].strip())
                except ValueError as exc:
                    raise PotentialFileError(lineno, str(exc)) from None
            elif key in ("breaks", "piece", "tail"):
                try:
                    [parse_fraction(t) for t in line.partition(":")[2].split()]
                except ValueError as exc:
                    raise PotentialFileError(lineno, str(exc)) from None
                block.append(line)
            else:
                raise PotentialFileError(lineno, f"unknown key {key!r}")
        try:
            f = from_text("\n".join(block))
        except (ValueError, TypeError) as exc:
            raise PotentialFileError(header, f"bad piecewise block: {exc}") from None
        try:
            if kind == "rank1":
                if gamma is None:
                    raise ValueError("missing 'gamma:' line")
                rank1.append(RankOneTerm(gamma, f))
            else:
                local.append(LocalPotential(f))
        except ValueError as exc:
            raise PotentialFileError(header, str(exc)) from None
    parts = ([FiniteRankPotential(tuple(rank1))] if rank1 or not local else []) + local
    return SumPotential(tuple(parts))


def read_potential(path) -> SumPotential:
    with open(path) as fh:
        return parse_potential(fh.read())


def potential_to_text(V: FactoredPotential) -> str:
    fr, local = flatten(V)
    chunks = []
    for t in fr.terms:
        chunks.append(f"[rank1]\ngamma: {fraction_text(t.gamma)}\n{to_text(t.phi)}")
    for w in local:
        chunks.append(f"[local]\n{to_text(w.vfun)}")
    return "\n\n".join(chunks) + "\n"
