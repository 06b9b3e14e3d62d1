"""Built-in potentials used by the CLI demos and the test suite."""

from __future__ import annotations

from fractions import Fraction

from .potential import FiniteRankPotential, LocalPotential
from .ppoly import PiecewisePoly

PHI1 = PiecewisePoly.indicator(3, 4)
PHI2 = PiecewisePoly.indicator(1, 2) + PiecewisePoly.indicator(2, 3, Fraction(-3, 5))


def rank2() -> FiniteRankPotential:
    """``-(3/10)|phi1><phi1| - (75/28)|phi2><phi2|``: an eigenvalue and a resonance at zero."""
    return FiniteRankPotential.from_pairs([(Fraction(-3, 10), PHI1), (Fraction(-75, 28), PHI2)])


def regular() -> FiniteRankPotential:
    return FiniteRankPotential.from_pairs([(-1, PiecewisePoly.indicator(0, 1))])


def first_kind() -> FiniteRankPotential:
    # <phi, G0 phi> = 1/3 for phi = 1[0,1], so gamma = -3 puts zero in ker M0
    return FiniteRankPotential.from_pairs([(-3, PiecewisePoly.indicator(0, 1))])


def second_kind() -> FiniteRankPotential:
    # phi2 alone: <phi2, G0 phi2> = 28/75 and its first moment vanishes
    return FiniteRankPotential.from_pairs([(Fraction(-75, 28), PHI2)])


def second_kind_rank3() -> FiniteRankPotential:
    """Second kind with a nontrivial ``J_0`` (extra terms decouple from ``phi2`` at zero energy)."""
    return FiniteRankPotential.from_pairs([
        (Fraction(-75, 28), PHI2),
        (2, PiecewisePoly.indicator(4, 5)),
        (Fraction(-1, 2), PiecewisePoly.from_intervals([(3, 6, [0, 1])])),
    ])


def free() -> FiniteRankPotential:
    return FiniteRankPotential(())


def well() -> LocalPotential:
    """Local square well ``-1[0,1]`` (numerical classification only)."""
    return LocalPotential(PiecewisePoly.indicator(0, 1, -1))


def window() -> LocalPotential:
    """Multiplication by ``1[1,2]``, the perturbation of the decay demo."""
    return LocalPotential(PiecewisePoly.indicator(1, 2))


BUILTINS = {
    "rank2": rank2,
    "regular": regular,
    "first": first_kind,
    "second": second_kind,
    "second3": second_kind_rank3,
    "free": free,
    "well": well,
    "window": window,
}


def builtin(name: str):
    try:
        return BUILTINS[name]()
    except KeyError:
        raise KeyError(f"unknown builtin potential {name!r}; choose from {', '.join(sorted(BUILTINS))}") from None
