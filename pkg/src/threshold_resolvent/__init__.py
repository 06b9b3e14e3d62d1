"""Exact and numerical threshold analysis for half-line Schrodinger operators.

The exact engine (``ppoly``, ``potential``, ``threshold``, ``expansion``,
``theorems``) works in rational arithmetic with compactly supported
piecewise-polynomial data.  ``oracle`` is an independent finite-difference
model, and ``fgr`` evaluates the perturbed-eigenvalue quantities.
"""

__version__ = "0.1.0"

from .expansion import ResolventExpansion, expand_resolvent
from .potential import FiniteRankPotential, LocalPotential, SumPotential, factorization
from .ppoly import PiecewisePoly
from .threshold import Kind, canonical_resonance, classify, zero_eigenfunctions

__all__ = [
    "FiniteRankPotential",
    "Kind",
    "LocalPotential",
    "PiecewisePoly",
    "ResolventExpansion",
    "SumPotential",
    "canonical_resonance",
    "classify",
    "expand_resolvent",
    "factorization",
    "zero_eigenfunctions",
]
