"""Classification of the threshold zero and the zero-energy solutions.

Everything here is exact.  Vectors in ``K`` are given in the weighted
coordinates of :class:`~threshold_resolvent.potential.Factorization`; the
functions ``v* f`` built from them are the ones that appear in the text
formulas regardless of the coordinate choice.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from . import qlinalg as ql
from .potential import FactoredPotential, Factorization, apply_V, factorization
from .ppoly import PiecewisePoly, apply_GjD, derivative, inner, linear_combination


class Kind(enum.Enum):
    REGULAR = "regular"
    FIRST = "first"
    SECOND = "second"
    THIRD = "third"

    @property
    def description(self) -> str:
        if self is Kind.REGULAR:
            return "regular point"
        return f"exceptional point of the {self.value} kind"

    @property
    def singularity_order(self) -> int:
        return {Kind.REGULAR: 0, Kind.FIRST: 1, Kind.SECOND: 2, Kind.THIRD: 2}[self]


class InternalInconsistency(RuntimeError):
    pass


@dataclass(frozen=True)
class KernelVector:
    vector: tuple
    norm2: Fraction
    moment: Fraction  # <vr, f>_K


@dataclass(frozen=True)
class ThresholdClassification:
    kind: Kind
    ker_basis: tuple  # KernelVector, first one carries the moment in the third kind
    vr: tuple
    S: ql.Matrix
    factorization: Factorization

    @property
    def dim_ker(self) -> int:
        return len(self.ker_basis)

    @property
    def Svr(self) -> tuple:
        return ql.matvec(self.S, self.vr)

    @property
    def alpha(self) -> Fraction:
        """``||S v r||_K^2``."""
        return self.factorization.inner_K(self.vr, self.Svr)

    @property
    def eigen_vectors(self) -> tuple:
        """Kernel vectors with vanishing moment; they produce L2 solutions."""
        return tuple(k for k in self.ker_basis if k.moment == 0)

    @property
    def resonance_vector(self) -> Optional[KernelVector]:
        return next((k for k in self.ker_basis if k.moment != 0), None)

    @property
    def eigen_multiplicity(self) -> int:
        return len(self.eigen_vectors)


def moment_vector(V: FactoredPotential) -> tuple:
    """``v r`` in weighted coordinates: ``|gamma_i| int r phi_i``."""
    fac = factorization(V)
    return fac.v(PiecewisePoly.polynomial([0, 1]))


def moment_vector_orthonormal(V: FactoredPotential) -> tuple:
    """``v r`` in orthonormal coordinates as ``(sign, square)`` pairs.

    The orthonormal component ``|gamma_i|^(1/2) int r phi_i`` is generally
    irrational; its sign and square are not.
    """
    fac = factorization(V)
    out = []
    for a, phi in zip(fac.abs_gamma, fac.potential.phis):
        m = inner(phi, PiecewisePoly.polynomial([0, 1]))
        out.append(((m > 0) - (m < 0), a * m * m))
    return tuple(out)


def gram_schmidt(vectors: Sequence, inner_product) -> list:
    """Exact Gram-Schmidt without normalization; returns ``(vector, norm2)`` pairs."""
    out = []
    for v in vectors:
        w = tuple(v)
        for u, n2 in out:
            c = inner_product(u, w) / n2
            w = tuple(a - c * b for a, b in zip(w, u))
        n2 = inner_product(w, w)
        if n2 != 0:
            out.append((w, n2))
    return out


def _euclid(x, y):
    return sum((a * b for a, b in zip(x, y)), Fraction(0))


def kernel_basis(M0: ql.Matrix, fac: Optional[Factorization] = None) -> list:
    """Exact basis of ``ker M0``, orthogonalized in ``K``.

    Returns ``(vector, norm2)`` pairs in elimination order.  Without a
    factorization the Euclidean inner product is used.
    """
    ip = fac.inner_K if fac is not None else _euclid
    return gram_schmidt(ql.nullspace(M0), ip)


def classify(V: FactoredPotential) -> ThresholdClassification:
    fac = factorization(V)
    vr = moment_vector(V)
    if fac.dim == 0:
        return ThresholdClassification(Kind.REGULAR, (), vr, (), fac)
    basis = kernel_basis(fac.M(0), fac)
    S = fac.projection([b for b, _ in basis])
    if not basis:
        return ThresholdClassification(Kind.REGULAR, (), vr, S, fac)
    Svr = ql.matvec(S, vr)
    if all(x == 0 for x in Svr):
        kvs = tuple(KernelVector(b, n2, Fraction(0)) for b, n2 in basis)
        return ThresholdClassification(Kind.SECOND, kvs, vr, S, fac)
    # rotate: Svr first, the rest orthogonal to it (hence to vr)
    rotated = gram_schmidt([Svr] + [b for b, _ in basis], fac.inner_K)
    kvs = tuple(KernelVector(b, n2, fac.inner_K(vr, b)) for b, n2 in rotated)
    kind = Kind.FIRST if len(kvs) == 1 else Kind.THIRD
    return ThresholdClassification(kind, kvs, vr, S, fac)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EigenData:
    """Zero eigenfunctions (mutually orthogonal, unnormalized) and P0."""

    eigenfunctions: tuple
    norms2: tuple

    def P0(self, f: PiecewisePoly) -> PiecewisePoly:
        return linear_combination((inner(g, f) / n2, g) for g, n2 in zip(self.eigenfunctions, self.norms2))

    def P0_terms(self) -> tuple:
        """Rank decomposition ``sum w |g><g|`` as ``(left, right, weight)`` triples."""
        return tuple((g, g, 1 / n2) for g, n2 in zip(self.eigenfunctions, self.norms2))

    @property
    def rank(self) -> int:
        return len(self.eigenfunctions)


def is_zero_energy_solution(V: FactoredPotential, g: PiecewisePoly) -> bool:
    """``-g'' + V g = 0`` piecewise, and ``g(0) = 0``."""
    return g(0) == 0 and derivative(derivative(g)) == apply_V(V, g)


def zero_eigenfunctions(V: FactoredPotential, cls: Optional[ThresholdClassification] = None) -> EigenData:
    cls = classify(V) if cls is None else cls
    if cls.kind not in (Kind.SECOND, Kind.THIRD):
        raise ValueError(f"zero is not an eigenvalue: {cls.kind.description}")
    fac = cls.factorization
    funcs = []
    for kv in cls.eigen_vectors:
        g = -apply_GjD(0, fac.v_star(kv.vector))
        if not g.compact:
            raise InternalInconsistency("kernel vector with zero moment produced a non-L2 solution")
        if not is_zero_energy_solution(V, g):
            raise InternalInconsistency("constructed eigenfunction does not solve H g = 0")
        funcs.append(g)
    ortho = []
    for g in funcs:
        for u, n2 in ortho:
            g = g - (inner(u, g) / n2) * u
        ortho.append((g, inner(g, g)))
    return EigenData(tuple(g for g, _ in ortho), tuple(n2 for _, n2 in ortho))


@dataclass(frozen=True)
class Resonance:
    psi: PiecewisePoly  # canonical: tail is the constant 1
    norm2_scale: Fraction  # |<f, vr>|^2 (first kind) or ||S v r||^2 (third kind)


def canonical_resonance(
    V: FactoredPotential,
    cls: Optional[ThresholdClassification] = None,
    eigen: Optional[EigenData] = None,
) -> Resonance:
    cls = classify(V) if cls is None else cls
    fac = cls.factorization
    if cls.kind is Kind.FIRST:
        kv = cls.ker_basis[0]
        psi = apply_GjD(0, fac.v_star(kv.vector)) * (1 / kv.moment)
        return Resonance(psi, kv.moment**2 / kv.norm2)
    if cls.kind is Kind.THIRD:
        eigen = zero_eigenfunctions(V, cls) if eigen is None else eigen
        Svr = cls.Svr
        alpha = cls.alpha
        vs = fac.v_star(Svr)
        psi = (apply_GjD(0, vs) - eigen.P0(apply_V(V, apply_GjD(2, vs)))) * (1 / alpha)
        return Resonance(psi, alpha)
    raise ValueError(f"no zero resonance at a {cls.kind.description}")


def lemma39_sides(V: FactoredPotential, f1: Sequence, f2: Sequence) -> tuple:
    """Both sides of ``<f1, v G2 v* f2> = -<G0 v* f1, G0 v* f2>``."""
    fac = factorization(V)
    vr = moment_vector(V)
    for f in (f1, f2):
        if fac.inner_K(vr, f) != 0:
            raise ValueError("vector violates the moment condition <vr, f> = 0")
    lhs = fac.inner_K(f1, ql.matvec(fac.M(2), f2))
    rhs = -inner(apply_GjD(0, fac.v_star(f1)), apply_GjD(0, fac.v_star(f2)))
    return lhs, rhs


def lemma39_check(V: FactoredPotential, f1: Sequence, f2: Sequence) -> bool:
    lhs, rhs = lemma39_sides(V, f1, f2)
    return lhs == rhs
