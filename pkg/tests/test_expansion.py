from fractions import Fraction

import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from threshold_resolvent import qlinalg as ql
from threshold_resolvent.builtins import PHI1, PHI2, first_kind, free, rank2, regular, second_kind, second_kind_rank3
from threshold_resolvent.expansion import (
    InsufficientOrderError,
    LaurentMatrixSeries,
    SingularityOrderError,
    assemble_resolvent,
    default_battery,
    expand_resolvent,
    finite_rank_equal,
    is_zero_operator,
    laurent_invert,
    required_series_order,
    series_mul,
    series_neumann_inverse,
)
from threshold_resolvent.potential import FiniteRankPotential, factorization
from threshold_resolvent.ppoly import PiecewisePoly, apply_GjD, inner
from threshold_resolvent.theorems import laurent_product_defect
from threshold_resolvent.threshold import Kind, canonical_resonance, classify, zero_eigenfunctions

from .strategies import finite_rank_potentials, small_fractions

F = Fraction


def unit_weights(n: int):
    """A factorization whose K inner product is Euclidean (all |gamma| = 1)."""
    V = FiniteRankPotential.from_pairs([(1, PiecewisePoly.indicator(k, k + 1)) for k in range(n)])
    return factorization(V)


def test_neumann_inverse_of_nilpotent_perturbation():
    N = ql.matrix([[0, 1], [0, 0]])
    inv = series_neumann_inverse([ql.identity(2), N, ql.zeros(2), ql.zeros(2)])
    assert inv[0] == ql.identity(2)
    assert inv[1] == ql.scale(-1, N)
    # N^2 = 0 so the series stops
    assert ql.is_zero(inv[2]) and ql.is_zero(inv[3])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.lists(small_fractions, min_size=4, max_size=4), min_size=3, max_size=3))
def test_series_inverse_defining_property(rows):
    A = [ql.add(ql.identity(2), ql.matrix([r[:2], r[2:]])) for r in rows]
    if ql.rank(A[0]) < 2:
        return
    prod = series_mul(A, series_neumann_inverse(A))
    assert prod[0] == ql.identity(2)
    assert all(ql.is_zero(P) for P in prod[1:len(A)])


def test_rank2_J0_is_identity():
    cls = classify(rank2())
    fac = cls.factorization
    assert cls.S == ql.identity(2)
    inv = series_neumann_inverse([ql.add(fac.M(0), cls.S), fac.M(1), fac.M(2)])
    assert inv[0] == ql.identity(2)


def test_laurent_inverse_regular_constant():
    fac = unit_weights(2)
    inv = laurent_invert(fac, [ql.diag([1, 2]), ql.zeros(2), ql.zeros(2)]).inverse
    assert inv.lowest == 0
    assert inv.coeff(0) == ql.diag([1, F(1, 2)])
    assert ql.is_zero(inv.coeff(1))


def test_laurent_inverse_simple_pole():
    fac = unit_weights(1)
    w2 = F(9, 4)
    inv = laurent_invert(fac, [ql.zeros(1), ql.matrix([[-w2]]), ql.zeros(1), ql.zeros(1)]).inverse
    assert inv.lowest == -1
    assert inv.coeff(-1) == ql.matrix([[-1 / w2]])


def test_third_singular_level_is_rejected():
    fac = unit_weights(1)
    with pytest.raises(SingularityOrderError, match="singularity order > 2"):
        laurent_invert(fac, [ql.zeros(1)] * 6)


def test_exhausted_series_is_reported():
    fac = unit_weights(1)
    with pytest.raises(InsufficientOrderError):
        laurent_invert(fac, [ql.zeros(1)])


@pytest.mark.parametrize(
    "V, lowest", [(regular(), 0), (first_kind(), -1), (second_kind(), -2), (second_kind_rank3(), -2), (rank2(), -2)]
)
def test_singularity_order_matches_classification(V, lowest):
    exp = expand_resolvent(V, 1)
    assert exp.lowest == lowest == -classify(V).kind.singularity_order


@pytest.mark.parametrize("V", [regular(), first_kind(), second_kind(), second_kind_rank3(), rank2()])
def test_laurent_inverse_defining_property(V):
    fac = factorization(V)
    M = fac.M_series(6)
    inv = laurent_invert(fac, M)
    defect = laurent_product_defect(M, inv.inverse)
    assert defect and all(ql.is_zero(D) for D in defect.values())


def test_required_order():
    assert required_series_order(1, 0) == 1
    assert required_series_order(1, 1) == 3
    assert required_series_order(1, 2) == 5


def test_insufficient_order_names_the_requirement():
    fac = factorization(rank2())
    inv = laurent_invert(fac, fac.M_series(3))
    with pytest.raises(InsufficientOrderError) as info:
        assemble_resolvent(fac, inv.inverse, 3, inv)
    assert info.value.required_order == 7


def test_free_expansion_is_the_free_kernel():
    exp = expand_resolvent(free(), 3)
    assert exp.lowest == 0
    for j in range(4):
        for f in default_battery():
            for g in default_battery()[:3]:
                assert exp.sandwich(j, f, g) == inner(f, apply_GjD(j, g))


def test_regular_G0_formula():
    V = regular()
    fac = factorization(V)
    exp = expand_resolvent(V, 1)
    M0inv = ql.inverse(fac.M(0))
    for f in default_battery(V):
        for g in default_battery(V):
            a = fac.v(apply_GjD(0, g))
            b = fac.v(apply_GjD(0, f))
            expected = inner(f, apply_GjD(0, g)) - fac.inner_K(b, ql.matvec(M0inv, a))
            assert exp.sandwich(0, f, g) == expected


def test_rank2_leading_coefficients():
    V = rank2()
    exp = expand_resolvent(V, 1)
    eigen = zero_eigenfunctions(V)
    psi = canonical_resonance(V).psi
    for f in (PHI1, PHI2, PiecewisePoly.indicator(0, 1)):
        for g in (PHI1, PHI2, PiecewisePoly.indicator(0, 1)):
            assert exp.sandwich(-2, f, g) == inner(f, eigen.P0(g))
            assert exp.sandwich(-1, f, g) == inner(f, psi) * inner(psi, g)
    assert exp[-2].finite_rank and exp[-1].finite_rank


def test_second_kind_has_no_simple_pole():
    exp = expand_resolvent(second_kind(), 1)
    assert is_zero_operator(exp[-1])
    assert not is_zero_operator(exp[-2])


def test_residue_product_vanishes():
    # G_{-2} G_{-1} = 0 because P0 Psi_c = 0
    V = rank2()
    exp = expand_resolvent(V, 1)
    for g in default_battery(V):
        assert exp[-2].apply(exp[-1].apply(g)).is_zero


@pytest.mark.parametrize("V", [regular(), first_kind(), second_kind_rank3(), rank2()])
def test_coefficients_are_symmetric(V):
    exp = expand_resolvent(V, 2)
    battery = default_battery(V)
    for j in range(exp.lowest, 3):
        for f in battery:
            for g in battery:
                assert exp.sandwich(j, f, g) == exp.sandwich(j, g, f)


def test_finite_rank_equality_detects_differences():
    exp = expand_resolvent(rank2(), 1)
    assert finite_rank_equal(exp[-1], exp[-1])
    assert not finite_rank_equal(exp[-1], exp[-2])


@settings(max_examples=25, deadline=None)
@given(finite_rank_potentials())
def test_inverse_and_nullspace_match_sympy(V):
    fac = factorization(V)
    M0 = fac.M(0)
    S = sympy.Matrix([[sympy.Rational(x.numerator, x.denominator) for x in row] for row in M0])
    null = ql.nullspace(M0)
    assert len(null) == len(S.nullspace())
    for x in null:
        assert all(v == 0 for v in ql.matvec(M0, x))
    if not null:
        expected = S.inv()
        got = ql.inverse(M0)
        assert all(
            sympy.Rational(got[i][k].numerator, got[i][k].denominator) == expected[i, k]
            for i in range(fac.dim) for k in range(fac.dim)
        )


def test_laurent_series_bounds():
    s = LaurentMatrixSeries(-1, (ql.identity(1), ql.zeros(1)))
    assert s.valid_through == 0
    assert ql.is_zero(s.coeff(-3))
    with pytest.raises(InsufficientOrderError):
        s.coeff(1)


def test_kind_enum_orders():
    assert [k.singularity_order for k in (Kind.REGULAR, Kind.FIRST, Kind.SECOND, Kind.THIRD)] == [0, 1, 2, 2]
