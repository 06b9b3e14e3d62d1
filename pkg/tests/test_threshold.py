from fractions import Fraction

import pytest
from hypothesis import given, settings

from threshold_resolvent import qlinalg as ql
from threshold_resolvent.builtins import PHI1, PHI2, first_kind, free, rank2, regular, second_kind, second_kind_rank3
from threshold_resolvent.expansion import default_battery
from threshold_resolvent.potential import FiniteRankPotential, apply_V, factorization
from threshold_resolvent.ppoly import PiecewisePoly, derivative, inner
from threshold_resolvent.threshold import (
    Kind,
    canonical_resonance,
    classify,
    is_zero_energy_solution,
    kernel_basis,
    lemma39_check,
    lemma39_sides,
    moment_vector,
    moment_vector_orthonormal,
    zero_eigenfunctions,
)

from .strategies import finite_rank_potentials

F = Fraction

# [PAPER] eigenfunction block (unnormalized) and canonical resonance of the rank-2 example
PSI0_BLOCK = PiecewisePoly.from_intervals([
    (0, 1, [0, F(-2, 5)]),
    (1, 2, [F(1, 2), F(-7, 5), F(1, 2)]),
    (2, 3, [F(-27, 10), F(9, 5), F(-3, 10)]),
])
PSI_C = PiecewisePoly.from_intervals([
    (0, 1, [0, F(-52, 343)]),
    (1, 2, [F(375, 686), F(-61, 49), F(375, 686)]),
    (2, 3, [F(-2025, 686), F(773, 343), F(-225, 686)]),
    (3, 4, [F(-9, 7), F(8, 7), F(-1, 7)]),
], tail=[1])


def test_moment_vector_examples():
    # weighted coordinates: |gamma| int r phi
    assert moment_vector(rank2()) == (F(3, 10) * F(7, 2), 0)
    assert moment_vector_orthonormal(rank2()) == ((1, F(3, 10) * F(49, 4)), (0, 0))
    assert moment_vector(FiniteRankPotential.from_pairs([(5, PHI2)])) == (0,)
    assert moment_vector(FiniteRankPotential.from_pairs([(1, PiecewisePoly.indicator(0, 1))])) == (F(1, 2),)


def test_kernel_basis_examples():
    zero = ql.zeros(2)
    assert [v for v, _ in kernel_basis(zero)] == [(1, 0), (0, 1)]
    assert kernel_basis(ql.identity(2)) == []
    assert [v for v, _ in kernel_basis(ql.matrix([[0, 0], [0, 3]]))] == [(1, 0)]


@pytest.mark.parametrize(
    "V, kind",
    [
        (rank2(), Kind.THIRD),
        (free(), Kind.REGULAR),
        (regular(), Kind.REGULAR),
        (first_kind(), Kind.FIRST),
        (second_kind(), Kind.SECOND),
        (second_kind_rank3(), Kind.SECOND),
    ],
)
def test_classify_examples(V, kind):
    assert classify(V).kind is kind


def test_third_kind_structure():
    cls = classify(rank2())
    assert cls.dim_ker == 2
    assert cls.eigen_multiplicity == 1
    assert cls.resonance_vector is not None
    assert cls.alpha == factorization(rank2()).inner_K(cls.Svr, cls.Svr)


@settings(max_examples=40, deadline=None)
@given(finite_rank_potentials())
def test_classification_is_exhaustive(V):
    cls = classify(V)
    assert cls.kind in tuple(Kind)
    assert -cls.kind.singularity_order in (0, -1, -2)
    if cls.kind is Kind.REGULAR:
        with pytest.raises(ValueError):
            zero_eigenfunctions(V, cls)
        with pytest.raises(ValueError):
            canonical_resonance(V, cls)


def test_rank2_eigenfunction():
    eigen = zero_eigenfunctions(rank2())
    assert eigen.rank == 1
    g, n2 = eigen.eigenfunctions[0], eigen.norms2[0]
    assert g in (PSI0_BLOCK, -PSI0_BLOCK)
    assert n2 == F(98, 375)
    assert g(0) == 0 and g.compact


def test_eigenfunctions_solve_the_equation():
    for V in (rank2(), second_kind(), second_kind_rank3()):
        for g in zero_eigenfunctions(V).eigenfunctions:
            assert g(0) == 0 and g.compact
            assert -derivative(derivative(g)) + apply_V(V, g) == PiecewisePoly.zero()


def test_zero_eigenfunctions_requires_eigenvalue():
    with pytest.raises(ValueError):
        zero_eigenfunctions(regular())
    with pytest.raises(ValueError):
        zero_eigenfunctions(first_kind())


def test_rank2_resonance():
    res = canonical_resonance(rank2())
    assert res.psi == PSI_C
    assert res.psi(0) == 0
    assert res.psi(5) == 1
    assert is_zero_energy_solution(rank2(), res.psi)


def test_first_kind_resonance_has_constant_tail():
    res = canonical_resonance(first_kind())
    assert len(res.psi.tail) == 1 and res.psi.tail[0] != 0
    assert res.psi.tail == (1,)
    assert is_zero_energy_solution(first_kind(), res.psi)


def test_no_resonance_in_second_kind():
    with pytest.raises(ValueError):
        canonical_resonance(second_kind())


def test_P0_is_an_orthogonal_projection():
    for V in (rank2(), second_kind_rank3()):
        eigen = zero_eigenfunctions(V)
        battery = default_battery(V)
        for f in battery:
            P = eigen.P0(f)
            assert eigen.P0(P) == P
            for h in battery:
                assert inner(h, P) == inner(eigen.P0(h), f)
        for g in eigen.eigenfunctions:
            assert eigen.P0(g) == g


def test_resonance_is_orthogonal_to_eigenfunctions():
    V = rank2()
    eigen = zero_eigenfunctions(V)
    psi = canonical_resonance(V).psi
    assert all(inner(g, psi) == 0 for g in eigen.eigenfunctions)


def test_lemma_examples():
    assert lemma39_sides(rank2(), (0, 1), (0, 1)) == (F(-98, 375), F(-98, 375))
    assert lemma39_sides(rank2(), (0, 0), (0, 0)) == (0, 0)
    with pytest.raises(ValueError):
        lemma39_check(rank2(), (1, 0), (0, 1))


@settings(max_examples=40, deadline=None)
@given(finite_rank_potentials())
def test_lemma_holds_on_the_moment_complement(V):
    fac = factorization(V)
    vr = moment_vector(V)
    n2 = fac.inner_K(vr, vr)
    basis = [tuple(F(int(i == k)) for i in range(fac.dim)) for k in range(fac.dim)]
    if n2:
        basis = [tuple(x - fac.inner_K(vr, e) / n2 * y for x, y in zip(e, vr)) for e in basis]
    for f1 in basis:
        for f2 in basis:
            assert lemma39_check(V, f1, f2)


def test_phi_sanity():
    assert inner(PHI1, PHI1) == 1
