"""Acceptance criteria 1-9, each at its stated tolerance and time budget."""

import random
import time
from fractions import Fraction

import numpy as np
import pytest

from threshold_resolvent import fgr, oracle, theorems
from threshold_resolvent import qlinalg as ql
from threshold_resolvent.builtins import (
    PHI1,
    first_kind,
    rank2,
    regular,
    second_kind,
    window,
)
from threshold_resolvent.expansion import default_battery, expand_resolvent, laurent_invert
from threshold_resolvent.potential import FiniteRankPotential, assemble_Mj, factorization
from threshold_resolvent.ppoly import PiecewisePoly, apply_GjD, inner, kernel_value
from threshold_resolvent.threshold import (
    Kind,
    canonical_resonance,
    classify,
    lemma39_check,
    moment_vector,
    zero_eigenfunctions,
)

F = Fraction

# [PAPER] normalized eigenfunction block and its squared normalization factor
PSI0_BLOCK = PiecewisePoly.from_intervals([
    (0, 1, [0, F(-2, 5)]),
    (1, 2, [F(1, 2), F(-7, 5), F(1, 2)]),
    (2, 3, [F(-27, 10), F(9, 5), F(-3, 10)]),
])
PSI0_NORM_FACTOR = F(375, 98)

# [PAPER] canonical resonance, five pieces
PSI_C_PIECES = [
    ((0, 1), [0, F(-52, 343)]),
    ((1, 2), [F(375, 686), F(-61, 49), F(375, 686)]),
    ((2, 3), [F(-2025, 686), F(773, 343), F(-225, 686)]),
    ((3, 4), [F(-9, 7), F(8, 7), F(-1, 7)]),
]


def test_criterion_1_zero_M0_and_third_kind(verdict):
    start = time.perf_counter()
    M0 = assemble_Mj(rank2(), 0)
    cls = classify(rank2())
    elapsed = time.perf_counter() - start
    zero = len(M0) == 2 and all(len(row) == 2 and all(x == 0 for x in row) for row in M0)
    ok = zero and cls.kind is Kind.THIRD and elapsed < 1
    verdict(1, ok, f"M0 zero: {zero}, kind: {cls.kind.description}, {elapsed:.2f}s")
    assert ok


def test_criterion_2_eigenfunction(verdict):
    start = time.perf_counter()
    eigen = zero_eigenfunctions(rank2())
    g, n2 = eigen.eigenfunctions[0], eigen.norms2[0]
    points = [F(k, 4) for k in range(0, 17)] + [F(1, 3), F(5, 7), F(29, 11)]
    squares = all(g(r) ** 2 / n2 == PSI0_NORM_FACTOR * PSI0_BLOCK(r) ** 2 for r in points)
    # (375/98) (2/5)^2 evaluates to 30/49
    at_one = g(1) ** 2 / n2 == PSI0_NORM_FACTOR * F(2, 5) ** 2 == F(30, 49)
    normalized = n2 * PSI0_NORM_FACTOR == 1
    same = g == PSI0_BLOCK or g == -PSI0_BLOCK
    elapsed = time.perf_counter() - start
    ok = squares and at_one and normalized and same and elapsed < 1
    verdict(2, ok, f"normalized^2 at r=1: {g(1) ** 2 / n2}, {elapsed:.2f}s")
    assert ok


def test_criterion_3_resonance(verdict):
    start = time.perf_counter()
    psi = canonical_resonance(rank2()).psi
    pieces_ok = all(
        psi.piece_at(F(a + b, 2)) == tuple(F(c) for c in coeffs)
        for (a, b), coeffs in PSI_C_PIECES
    )
    tail_ok = psi.tail == (F(1),)
    elapsed = time.perf_counter() - start
    ok = pieces_ok and tail_ok and elapsed < 1
    verdict(3, ok, f"{len(PSI_C_PIECES) + 1} pieces, {elapsed:.2f}s")
    assert ok


def _random_potential(rng: random.Random) -> FiniteRankPotential:
    pairs = []
    for _ in range(rng.randint(1, 4)):
        pieces = []
        a = F(rng.randint(0, 6), rng.randint(1, 3))
        for _ in range(rng.randint(1, 3)):
            b = a + F(rng.randint(1, 4), rng.randint(1, 3))
            pieces.append((a, b, [F(rng.randint(-4, 4), rng.randint(1, 5)) for _ in range(rng.randint(1, 3))]))
            a = b
        phi = PiecewisePoly.from_intervals(pieces)
        if phi.is_zero:
            phi = PiecewisePoly.indicator(0, 1)
        gamma = F(rng.choice([-1, 1]) * rng.randint(1, 9), rng.randint(1, 7))
        pairs.append((gamma, phi))
    return FiniteRankPotential.from_pairs(pairs)


def _constrained(fac, vr, rng):
    """Random vector with <vr, f>_K = 0."""
    f = tuple(F(rng.randint(-9, 9), rng.randint(1, 5)) for _ in range(fac.dim))
    n2 = fac.inner_K(vr, vr)
    if n2 == 0:
        return f
    c = fac.inner_K(vr, f) / n2
    return tuple(x - c * y for x, y in zip(f, vr))


def test_criterion_4_lemma_property_suite(verdict):
    rng = random.Random(20261014)
    start = time.perf_counter()
    count, ok = 0, True
    while count < 60:
        V = _random_potential(rng)
        fac = factorization(V)
        vr = moment_vector(V)
        f1, f2 = _constrained(fac, vr, rng), _constrained(fac, vr, rng)
        ok = ok and lemma39_check(V, f1, f2)
        count += 1
    elapsed = time.perf_counter() - start
    ok = ok and elapsed < 30
    verdict(4, ok, f"{count} random potentials, {elapsed:.1f}s")
    assert ok


def test_criterion_5_theorem_cross_checks(verdict):
    start = time.perf_counter()
    cases = {
        "regular": regular(),
        "first": first_kind(),
        "second": second_kind(),
        "third": rank2(),
    }
    kinds = {"regular": Kind.REGULAR, "first": Kind.FIRST, "second": Kind.SECOND, "third": Kind.THIRD}
    results = {}
    for name, V in cases.items():
        report = theorems.run_theorem_checks(V)
        results[name] = report.passed and report.kind is kinds[name]
    elapsed = time.perf_counter() - start
    ok = all(results.values()) and elapsed < 10
    verdict(5, ok, ", ".join(f"{k}: {'ok' if v else 'failed'}" for k, v in results.items()) + f", {elapsed:.1f}s")
    assert ok


def test_criterion_6_oracle_convergence(verdict):
    V = regular()
    f = PiecewisePoly.indicator(0, 1)
    g = PiecewisePoly.from_intervals([(0, 2, [0, 1])])
    exp = expand_resolvent(V, 1)
    c0, c1 = float(exp.sandwich(0, f, g)), float(exp.sandwich(1, f, g))
    model = oracle.build_grid(V, 50.0, 1e-3)
    kappas = oracle.default_kappas(1e-3, 1e-1, 12)
    values = oracle.resolvent_sandwiches(model, f, g, kappas, refine=2)
    fit = oracle.fit_laurent(kappas, values, 0, 3)
    rel = abs(fit.coeff(0) - c0) / abs(c0)
    slope = oracle.loglog_slope(kappas, values - fit.coeff(0) - fit.coeff(1) * kappas)
    ok = rel < 1e-3 and 1.8 <= slope <= 2.2
    verdict(6, ok, f"c0 rel.err {rel:.2e}, residual slope {slope:.3f} (exact c0 {c0}, c1 {c1})")
    assert ok


def test_criterion_7_residue(verdict):
    # spacing and refinement chosen so the discrete eigenvalue (about 0.43 h^2)
    # stays far below kappa_min^2 = 1e-6
    V = rank2()
    eigen = zero_eigenfunctions(V)
    g, n2 = eigen.eigenfunctions[0], eigen.norms2[0]
    model = oracle.build_grid(V, 5.0, 5e-5)
    kappas = np.geomspace(1e-3, 1e-2, 8)
    values = oracle.resolvent_sandwiches(model, g, g, kappas, refine=4) / float(n2)
    scaled = kappas**2 * values
    worst = float(np.max(np.abs(scaled - 1)))
    ok = worst < 1e-2
    verdict(7, ok, f"max |kappa^2 S - 1| = {worst:.2e} over kappa in [1e-3, 1e-2]")
    assert ok


@pytest.mark.slow
def test_criterion_8_fgr_decay(verdict):
    V, W = rank2(), window()
    eps = [0.02, 0.04, 0.08]
    res = fgr.analyze(V, W, eps)
    assert res.nu == -1 and res.consistent
    runs = oracle.parallel_map(
        lambda e: fgr.simulate_decay(V, W, e, res.Gammas[eps.index(e)], res.x0s[eps.index(e)]), eps
    )
    errors = [r.relative_error for r in runs]
    exponent = fgr.fitted_exponent(eps, [r.fitted_rate for r in runs])
    ok = all(e < 0.25 for e in errors) and 1.35 <= exponent <= 1.65
    verdict(8, ok, "rate rel.err " + ", ".join(f"{e:.2%}" for e in errors) + f"; exponent {exponent:.3f}")
    assert ok


def test_criterion_9_invariant_suite(verdict):
    start = time.perf_counter()
    failures = []
    # kernel symmetry and Dirichlet condition
    pts = [F(k, 3) for k in range(0, 10)]
    for j in range(0, 5):
        if any(kernel_value(j, r, s) != kernel_value(j, s, r) for r in pts for s in pts):
            failures.append(f"kernel symmetry j={j}")
        if any(kernel_value(j, 0, s) != 0 for s in pts):
            failures.append(f"Dirichlet kernel j={j}")
    for f in default_battery(rank2()):
        for j in range(0, 5):
            if apply_GjD(j, f)(0) != 0:
                failures.append(f"Dirichlet G{j}")
    # P0 projection identities
    V = rank2()
    eigen = zero_eigenfunctions(V)
    battery = default_battery(V)
    for f in battery:
        P = eigen.P0(f)
        if eigen.P0(P) != P:
            failures.append("P0^2 = P0")
        if any(inner(g, P) != inner(eigen.P0(g), f) for g in battery):
            failures.append("P0 self-adjoint")
    # third-kind identities and the Laurent inverse
    for check in theorems.third_kind_identities(V, battery):
        if not check.passed:
            failures.append(check.name)
    for W in (regular(), first_kind(), second_kind()):
        fac = factorization(W)
        inv = laurent_invert(fac, fac.M_series(6))
        if not all(ql.is_zero(D) for D in theorems.laurent_product_defect(fac.M_series(6), inv.inverse).values()):
            failures.append("Laurent inverse")
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 30
    verdict(9, ok, f"{elapsed:.1f}s" + (f"; failed: {sorted(set(failures))}" if failures else ""))
    assert ok


def test_phi1_is_the_bound_partner():
    # sanity: the first term of the rank-2 potential is phi1
    assert factorization(rank2()).potential.phis[0] == PHI1
