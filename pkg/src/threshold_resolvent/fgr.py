"""Perturbation of a simple threshold eigenvalue: ``H(eps) = H + eps W``.

With ``Psi0`` the normalized zero eigenfunction,

    b = <Psi0, W Psi0>,    g_nu = <Psi0, W G_nu W Psi0>,

where ``nu`` is the first odd order with ``G_{-1} = G_1 = ... = G_{nu-2} = 0``
and ``g_nu != 0``.  At leading order the eigenvalue turns into a resonance
``x0 - i Gamma`` with

    Gamma(eps) = -(i^(nu-1)) g_nu b^(nu/2) eps^(2 + nu/2),    x0(eps) = b eps,

and the survival amplitude is ``exp(-i t (x0 - i Gamma))`` up to an error
``O(eps^p)``, ``p = min(2, (2 + nu)/2)``.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import oracle
from .expansion import ResolventExpansion, expand_resolvent, is_zero_operator
from .potential import FactoredPotential, apply_V
from .ppoly import inner
from .threshold import (
    EigenData,
    Kind,
    ThresholdClassification,
    canonical_resonance,
    classify,
    zero_eigenfunctions,
)


class OutsideHypotheses(ValueError):
    """The perturbation violates ``b > 0`` or the eigenvalue is not simple."""


@dataclass(frozen=True)
class OrderResult:
    nu: Optional[int]  # None when undetermined
    g: Optional[Fraction]
    depth: int
    message: str = ""

    @property
    def determined(self) -> bool:
        return self.nu is not None


def _simple(eigen: EigenData):
    if eigen.rank != 1:
        raise OutsideHypotheses(f"the zero eigenvalue must be simple (multiplicity {eigen.rank})")
    return eigen.eigenfunctions[0], eigen.norms2[0]


def compute_b(eigen: EigenData, W: FactoredPotential) -> Fraction:
    """Exact ``<Psi0, W Psi0>`` with ``Psi0 = g / ||g||``."""
    g, n2 = _simple(eigen)
    return inner(g, apply_V(W, g)) / n2


def coupling(expansion: ResolventExpansion, eigen: EigenData, W: FactoredPotential, j: int) -> Fraction:
    """``<Psi0, W G_j W Psi0>``."""
    g, n2 = _simple(eigen)
    Wg = apply_V(W, g)
    return expansion.sandwich(j, Wg, Wg) / n2


def determine_nu(expansion: ResolventExpansion, eigen: EigenData, W: FactoredPotential) -> OrderResult:
    """Smallest odd ``nu >= -1`` with vanishing lower odd coefficients and ``g_nu != 0``."""
    depth = expansion.order
    for nu in range(-1, depth + 1, 2):
        lower = [j for j in range(-1, nu - 1, 2) if j >= expansion.lowest]
        blocking = next((j for j in lower if not is_zero_operator(expansion[j])), None)
        if blocking is not None:
            return OrderResult(None, None, depth, f"undetermined at depth {depth}: G_{blocking} != 0 but g_{blocking} = 0")
        g = coupling(expansion, eigen, W, nu) if nu >= expansion.lowest else Fraction(0)
        if g != 0:
            return OrderResult(nu, g, depth)
    return OrderResult(None, None, depth, f"undetermined at depth {depth}")


def resonance_coupling(eigen: EigenData, resonance, W: FactoredPotential) -> Fraction:
    """``|<Psi0, W Psi_c>|^2``, the alternative route to ``g_{-1}``."""
    g, n2 = _simple(eigen)
    return inner(g, apply_V(W, resonance.psi)) ** 2 / n2


def prefactor(nu: int) -> int:
    """``-(i^(nu-1))`` for odd ``nu``: +1 for nu = -1, 3, 7, ...; -1 for nu = 1, 5, ..."""
    if nu % 2 == 0:
        raise ValueError("nu must be odd")
    return -((-1) ** ((nu - 1) // 2))


def error_exponent(nu: int) -> Fraction:
    return min(Fraction(2), Fraction(2 + nu, 2))


def resonance_parameters(b, nu: int, g, eps: float) -> tuple:
    """Leading-order ``(Gamma(eps), x0(eps))``."""
    b = Fraction(b)
    if b <= 0:
        raise OutsideHypotheses(f"b = {b} is not positive: outside stated hypotheses")
    if g == 0:
        raise ValueError("g_nu must be nonzero")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if eps == 0:
        return 0.0, 0.0
    Gamma = prefactor(nu) * float(g) * float(b) ** (nu / 2) * eps ** (2 + nu / 2)
    return Gamma, float(b) * eps


@dataclass(frozen=True)
class SurvivalPrediction:
    amplitude: complex
    error_exponent: Fraction  # the error is O(eps^p)


def survival_prediction(Gamma: float, x0: float, nu: int, t: float) -> SurvivalPrediction:
    if t < 0:
        raise ValueError("t must be nonnegative")
    lam = complex(x0, -Gamma)
    return SurvivalPrediction(cmath.exp(-1j * t * lam), error_exponent(nu))


@dataclass(frozen=True)
class FGRResult:
    b: Fraction
    order: OrderResult
    g_resonance: Optional[Fraction]  # |<Psi0, W Psi_c>|^2 in the third kind
    epsilons: tuple
    Gammas: tuple
    x0s: tuple
    kind: Kind

    @property
    def nu(self):
        return self.order.nu

    @property
    def consistent(self) -> bool:
        """Decay rather than growth, and the two routes to ``g_{-1}`` agree."""
        if not self.order.determined:
            return False
        if any(G < 0 for G in self.Gammas):
            return False
        if self.nu == -1 and self.g_resonance is not None:
            return self.g_resonance == self.order.g
        return True

    def rows(self) -> list:
        return [
            (e, float(self.b), self.nu, float(self.order.g), G, x)
            for e, G, x in zip(self.epsilons, self.Gammas, self.x0s)
        ]


def analyze(
    V: FactoredPotential,
    W: FactoredPotential,
    epsilons: Sequence[float] = (),
    depth: int = 1,
    cls: Optional[ThresholdClassification] = None,
) -> FGRResult:
    cls = classify(V) if cls is None else cls
    if cls.kind not in (Kind.SECOND, Kind.THIRD):
        raise OutsideHypotheses(f"zero is not an eigenvalue ({cls.kind.description})")
    eigen = zero_eigenfunctions(V, cls)
    _simple(eigen)
    b = compute_b(eigen, W)
    if b <= 0:
        raise OutsideHypotheses(f"b = {b} is not positive: outside stated hypotheses")
    exp = expand_resolvent(V, depth, cls)
    order = determine_nu(exp, eigen, W)
    g_res = resonance_coupling(eigen, canonical_resonance(V, cls, eigen), W) if cls.kind is Kind.THIRD else None
    Gammas, x0s = [], []
    if order.determined:
        for e in epsilons:
            G, x = resonance_parameters(b, order.nu, order.g, e)
            Gammas.append(G)
            x0s.append(x)
    return FGRResult(b, order, g_res, tuple(epsilons), tuple(Gammas), tuple(x0s), cls.kind)


# ---------------------------------------------------------------------------
# time-evolution check


@dataclass(frozen=True)
class SimulatedDecay:
    eps: float
    predicted_rate: float  # 2 Gamma
    fitted_rate: float
    evolution: oracle.Evolution
    window: tuple

    @property
    def relative_error(self) -> float:
        return abs(self.fitted_rate - self.predicted_rate) / self.predicted_rate


def simulate_decay(
    V: FactoredPotential,
    W: FactoredPotential,
    eps: float,
    Gamma: float,
    x0: float,
    h_fine: float = 2.5e-3,
    h_coarse: float = 1.0,
    dt: float = 2.0,
    decay_target: float = 0.6,
    eigen: Optional[EigenData] = None,
) -> SimulatedDecay:
    """Evolve ``Psi0`` under ``H + eps W`` and fit the decay rate of ``|<Psi0, psi(t)>|^2``.

    The run lasts until the predicted survival is ``exp(-decay_target)``; the
    fit window is its last 80%.  The grid reaches far enough that waves leaving
    at the resonance energy cannot return within the run.
    """
    eigen = zero_eigenfunctions(V) if eigen is None else eigen
    g, _ = _simple(eigen)
    t_end = decay_target / (2 * Gamma)
    speed = 2 * np.sqrt(max(x0, 1e-12))
    R = max(500.0, 0.75 * speed * t_end + 50.0)
    model = oracle.build_graded_grid(V, R, h_fine, h_coarse, fine_end=6.0, growth=1.01, perturbation=(W, eps))
    psi = model.sample(g)
    psi = psi / np.linalg.norm(psi)
    steps = int(np.ceil(t_end / dt))
    ev = oracle.evolve(model, psi, dt, steps, record_every=max(1, steps // 500))
    window = (0.2 * t_end, t_end)
    mask = (ev.times >= window[0]) & (ev.times <= window[1])
    rate = oracle.fit_decay_rate(ev.times[mask], ev.survival[mask])
    return SimulatedDecay(eps, 2 * Gamma, rate, ev, window)


def fitted_exponent(epsilons: Sequence[float], rates: Sequence[float]) -> float:
    return oracle.loglog_slope(epsilons, rates)
