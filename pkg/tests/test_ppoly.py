from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from threshold_resolvent.builtins import PHI1, PHI2
from threshold_resolvent.ppoly import (
    PiecewisePoly,
    add,
    apply_GjD,
    derivative,
    from_text,
    indicator_battery,
    inner,
    integrate,
    kernel_value,
    linear_combination,
    mul,
    multiply_by_power,
    parse_fraction,
    scale,
    to_text,
)

from .strategies import compact_polys, small_fractions

F = Fraction
ZERO = PiecewisePoly.zero()
R = PiecewisePoly.polynomial([0, 1])


def test_eval_examples():
    assert PHI2(F(3, 2)) == 1
    assert ZERO(7) == 0
    psi_c = PiecewisePoly.from_intervals([(0, 4, [0])], tail=[1])
    assert psi_c(5) == 1


def test_eval_uses_right_piece_at_breakpoints():
    f = PiecewisePoly.from_intervals([(0, 1, [1]), (1, 2, [5])])
    assert f(1) == 5
    assert f(2) == 0


def test_eval_rejects_negative_argument():
    with pytest.raises(ValueError):
        PHI1(-1)


def test_algebra_examples():
    assert add(PHI1, scale(-1, PHI1)).is_zero
    assert mul(PiecewisePoly.indicator(1, 2), PiecewisePoly.indicator(2, 3)).is_zero
    middle = scale(F(-3, 5), PiecewisePoly.indicator(2, 3))
    assert PHI2 - PiecewisePoly.indicator(1, 2) == middle


def test_integrate_examples():
    assert integrate(PHI2, 1) == 0
    assert integrate(PHI1, 1) == F(7, 2)
    assert integrate(ZERO, 1) == 0
    with pytest.raises(ValueError):
        integrate(PiecewisePoly.polynomial([1]))


def test_inner_examples():
    assert inner(PHI1, PHI2) == 0
    assert inner(PHI1, apply_GjD(0, PHI1)) == F(10, 3)
    assert inner(PHI2, PHI2) == F(34, 25)
    with pytest.raises(ValueError):
        inner(R, R)
    # one compact argument is enough
    assert inner(R, PHI1) == F(7, 2)


def test_apply_G0_on_phi1():
    g = apply_GjD(0, PHI1)
    assert g.piece_at(F(1)) == (0, 1)
    assert g(F(3)) == 3
    assert g.tail == (F(7, 2),)


def test_apply_rejects_bad_input():
    with pytest.raises(ValueError):
        apply_GjD(0, R)
    with pytest.raises(ValueError):
        apply_GjD(-1, PHI1)
    assert apply_GjD(0, ZERO).is_zero


@given(compact_polys())
def test_G1_is_separable(f):
    assert apply_GjD(1, f) == scale(-integrate(f, 1), R)


@given(compact_polys())
def test_G3_identity(f):
    r3 = PiecewisePoly.polynomial([0, 0, 0, 1])
    expected = scale(F(-1, 6), r3 * integrate(f, 1) + R * integrate(f, 3))
    assert apply_GjD(3, f) == expected


@settings(max_examples=40, deadline=None)
@given(compact_polys(), compact_polys(), st.integers(0, 4))
def test_kernel_symmetry(f, g, j):
    assert inner(f, apply_GjD(j, g)) == inner(g, apply_GjD(j, f))


@given(compact_polys(), st.integers(0, 5))
def test_dirichlet_boundary(f, j):
    assert apply_GjD(j, f)(0) == 0


@given(compact_polys())
def test_G0_inverts_minus_laplacian(f):
    assert -derivative(derivative(apply_GjD(0, f))) == f


@given(st.integers(0, 4), small_fractions.map(abs), small_fractions.map(abs))
def test_kernel_is_symmetric_pointwise(j, r, s):
    assert kernel_value(j, r, s) == kernel_value(j, s, r)
    assert kernel_value(j, 0, s) == 0


def test_kernel_closed_forms():
    # r_<, -r_< r_>, (r_< r_>^2 + r_<^3/3)/2 at r = 1, r' = 2
    assert kernel_value(0, 1, 2) == 1
    assert kernel_value(1, 1, 2) == -2
    assert kernel_value(2, 1, 2) == F(1, 2) * (4 + F(1, 3))


@given(compact_polys(), compact_polys(), compact_polys())
def test_algebra_laws(a, b, c):
    assert a + b == b + a
    assert (a + b) + c == a + (b + c)
    assert mul(a, b) == mul(b, a)
    assert mul(mul(a, b), c) == mul(a, mul(b, c))
    assert mul(a, b + c) == mul(a, b) + mul(a, c)


@given(compact_polys(), compact_polys())
def test_breakpoints_stay_sorted(a, b):
    s = a + b
    assert list(s.breaks) == sorted(set(s.breaks))
    assert s.breaks[0] == 0


@given(compact_polys(), st.integers(0, 3))
def test_multiply_by_power_matches_weighted_integral(f, k):
    assert integrate(multiply_by_power(f, k)) == integrate(f, k)


def test_linear_combination():
    f = linear_combination([(2, PHI1), (F(-1, 2), PHI2)])
    assert f == scale(2, PHI1) + scale(F(-1, 2), PHI2)


@given(compact_polys())
def test_text_round_trip(f):
    assert from_text(to_text(f)) == f


def test_text_round_trip_keeps_tail():
    f = PiecewisePoly.from_intervals([(0, 1, [0, F(-52, 343)])], tail=[1])
    assert from_text(to_text(f)) == f


def test_parse_fraction_is_exact():
    assert parse_fraction("-52/343") == F(-52, 343)
    assert parse_fraction("7") == 7
    with pytest.raises(ValueError, match="exact fraction"):
        parse_fraction("0.3")


def test_canonical_form_merges_equal_pieces():
    f = PiecewisePoly.indicator(0, 1) + PiecewisePoly.indicator(1, 2)
    assert f == PiecewisePoly.indicator(0, 2)


def test_indicator_battery_is_compact():
    assert all(f.compact and not f.is_zero for f in indicator_battery())
