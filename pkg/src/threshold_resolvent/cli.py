"""Command-line front end: ``threshold-resolvent COMMAND [options]``."""

from __future__ import annotations

import argparse
import os
import sys
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import __version__, builtins, fgr, oracle
from .expansion import InsufficientOrderError, SingularityOrderError, default_battery, expand_resolvent
from .potential import (
    IrrationalEntryError,
    PotentialFileError,
    factorization,
    flatten,
    potential_to_text,
    read_potential,
)
from .ppoly import PiecewisePoly, fraction_text, to_text
from .theorems import verify_against_theorems
from .threshold import Kind, canonical_resonance, classify, zero_eigenfunctions

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
HEADER = f"threshold-resolvent {__version__}"


class UsageError(Exception):
    pass


def fmt(x) -> str:
    x = Fraction(x)
    return f"{fraction_text(x)} ({float(x):.12g})"


def fmt_vector(xs) -> str:
    return "(" + ", ".join(fmt(x) for x in xs) + ")"


def load_potential(spec: Optional[str]):
    if spec is None:
        raise UsageError("--potential is required")
    if spec.startswith("builtin:"):
        try:
            return builtins.builtin(spec.split(":", 1)[1])
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from None
    if not os.path.exists(spec):
        raise UsageError(f"no such potential file: {spec}")
    return read_potential(spec)


def is_finite_rank(V) -> bool:
    return not flatten(V)[1]


def ensure_out(path: Optional[str]) -> Optional[str]:
    if path:
        os.makedirs(path, exist_ok=True)
    return path


def battery_names(V) -> list:
    return [(f"t{i}", f) for i, f in enumerate(default_battery(V))]


def print_legend(battery) -> None:
    print("test functions:")
    for name, f in battery:
        print(f"  {name} = {f}")


# ---------------------------------------------------------------------------
# commands


def cmd_classify(args) -> int:
    V = load_potential(args.potential)
    if not is_finite_rank(V):
        res = oracle.classify_numerical(V, args.spacing)
        print("method: numerical (local part present, grid M0 with spacing", args.spacing, ")")
        print("kind:", res.kind.description)
        print("dim ker M0:", res.kernel_dim)
        print("smallest relative singular value:", f"{res.singular_values[0]:.6e}" if len(res.singular_values) else "n/a")
        for m in res.moments:
            print("relative |<vr, f>|:", f"{m:.6e}")
        return EXIT_OK
    cls = classify(V)
    fac = cls.factorization
    print("method: exact")
    print("kind:", cls.kind.description)
    print("rank of V:", fac.dim)
    print("dim ker M0:", cls.dim_ker)
    print("M0 (weighted coordinates):")
    for row in fac.M(0):
        print("  ", fmt_vector(row))
    for i, kv in enumerate(cls.ker_basis, 1):
        print(f"kernel vector {i}: {fmt_vector(kv.vector)}  <vr, f>_K = {fmt(kv.moment)}  ||f||^2 = {fmt(kv.norm2)}")
    if cls.kind in (Kind.SECOND, Kind.THIRD):
        eigen = zero_eigenfunctions(V, cls)
        print("zero eigenvalue multiplicity:", eigen.rank)
        for g, n2 in zip(eigen.eigenfunctions, eigen.norms2):
            print("  eigenfunction:", g)
            print("  squared norm:", fmt(n2))
    if cls.kind in (Kind.FIRST, Kind.THIRD):
        res = canonical_resonance(V, cls)
        print("canonical resonance:", res.psi)
    return EXIT_OK


def cmd_expand(args) -> int:
    V = load_potential(args.potential)
    if not is_finite_rank(V):
        raise UsageError("expand needs a finite-rank potential")
    cls = classify(V)
    exp = expand_resolvent(V, args.depth, cls)
    print("kind:", cls.kind.description)
    print(f"coefficients G_{exp.lowest} .. G_{exp.order}")
    battery = battery_names(V)[: args.battery]
    print_legend(battery)
    out = ensure_out(args.out)
    for j in range(exp.lowest, exp.order + 1):
        label = "" if j <= 1 else "  (recursion-derived, no closed-form cross-check)"
        print(f"\nG_{j}{label}")
        rows = []
        for fname, f in battery:
            for gname, g in battery:
                val = exp.sandwich(j, f, g)
                rows.append((fname, gname, fraction_text(val), f"{float(val):.12g}"))
                print(f"  <{fname} | G_{j} | {gname}> = {fmt(val)}")
        if out:
            oracle.write_csv(os.path.join(out, f"G{j}.csv"), ["f", "g", "exact", "float"], rows)
    if cls.factorization.dim == 0:
        print("\nfree expansion: no theorem cross-check needed")
        return EXIT_OK
    report = verify_against_theorems(exp, cls, V)
    print("\ntheorem cross-checks:")
    for line in report.lines():
        print("  " + line)
    print("verdict:", "PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_validate(args) -> int:
    V = load_potential(args.potential)
    if not is_finite_rank(V):
        raise UsageError("validate compares with the exact engine and needs a finite-rank potential")
    cls = classify(V)
    lowest = -cls.kind.singularity_order
    exp = expand_resolvent(V, args.depth, cls)
    model = oracle.build_grid(V, args.radius, args.spacing)
    kappas = oracle.default_kappas(args.kappa_min, args.kappa_max, args.samples)
    print("kind:", cls.kind.description)
    print(f"grid: R = {args.radius}, h = {args.spacing}, n = {model.n}; kappa in [{args.kappa_min}, {args.kappa_max}]")
    mode = None
    if cls.kind in (Kind.SECOND, Kind.THIRD):
        shift = oracle.zero_mode_shift(model)
        print(f"discrete zero eigenvalue: {shift:.3e}")
        if args.keep_eigenmode:
            if abs(shift) > 1e-2 * args.kappa_min**2:
                print("note: the shift is not small against kappa_min^2; refine the spacing or raise kappa-min")
        else:
            vec = oracle.lowest_eigenpairs(model, 1)[1][:, 0]
            mode = (vec / np.linalg.norm(vec), shift)
            print("discrete eigenmode subtracted: c_-2 is its residue, the remaining powers are fitted")
    tests = battery_names(V)[:3]
    print_legend(tests)
    out = ensure_out(args.out)
    ok = True
    for index, (fname, f) in enumerate(tests):
        vals = oracle.resolvent_sandwiches(model, f, f, kappas, refine=args.refine)
        if mode is None:
            rep = oracle.fit_laurent(kappas, vals, lowest, args.depth + 1)
        else:
            rep = oracle.fit_without_mode(model, f, f, kappas, vals, *mode, args.depth + 1)
        print(f"\n<{fname} | R | {fname}>: residual {rep.residual:.3e}, condition {rep.condition:.3e}"
              + ("  [ILL-CONDITIONED]" if rep.ill_conditioned else ""))
        exact = {}
        for j in range(lowest, args.depth + 1):
            ex = exp.sandwich(j, f, f)
            exact[j] = ex
            c = rep.coeff(j)
            rel = abs(c - float(ex)) / abs(float(ex)) if ex else abs(c)
            print(f"  c_{j}: fitted {c:.10g}  exact {fmt(ex)}  rel.err {rel:.3e}")
            if j == lowest and rel > 1e-2:
                ok = False
        if out:
            oracle.write_sandwich_csv(os.path.join(out, f"sandwich_f{index}.csv"), kappas, vals)
            oracle.write_fit_csv(os.path.join(out, f"fit_f{index}.csv"), rep, exact)
    # observed order in h at the largest kappa
    f = tests[0][1]
    k = float(args.kappa_max)
    hs = [4 * args.spacing, 2 * args.spacing, args.spacing]
    vals = [oracle.resolvent_sandwich(oracle.build_grid(V, args.radius, h), f, f, k, refine=args.refine) for h in hs]
    d1, d2 = abs(vals[0] - vals[1]), abs(vals[1] - vals[2])
    order = np.log2(d1 / d2) if d2 > 0 else float("inf")
    print(f"\nobserved convergence order in h at kappa = {k}: {order:.3f}")
    print("verdict:", "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_fgr(args) -> int:
    V = load_potential(args.potential)
    if args.perturbation is None:
        raise UsageError("fgr needs --perturbation")
    W = load_potential(args.perturbation)
    eps = parse_eps(args.eps)
    try:
        res = fgr.analyze(V, W, eps, args.depth)
    except fgr.OutsideHypotheses as exc:
        print("outside stated hypotheses:", exc)
        return EXIT_FAIL
    print("kind:", res.kind.description)
    print("hypothesis on the decay of V: satisfied (compact support)")
    print("b = <Psi0, W Psi0> =", fmt(res.b))
    if not res.order.determined:
        print(res.order.message)
        return EXIT_FAIL
    print("nu =", res.nu)
    print(f"g_{res.nu} =", fmt(res.order.g))
    if res.g_resonance is not None:
        print("|<Psi0, W Psi_c>|^2 =", fmt(res.g_resonance), "(agrees)" if res.g_resonance == res.order.g else "(MISMATCH)")
    print("error exponent p(nu) =", fraction_text(fgr.error_exponent(res.nu)))
    print("\neps, Gamma, x0")
    for e, G, x in zip(res.epsilons, res.Gammas, res.x0s):
        print(f"{e:.6g}, {G:.12g}, {x:.12g}")
    if any(G < 0 for G in res.Gammas):
        print("consistency: Gamma < 0 (growth); the sign of g_nu contradicts decay")
    out = ensure_out(args.out)
    if out:
        oracle.write_csv(os.path.join(out, "fgr.csv"), ["eps", "b", "nu", "g_nu", "Gamma", "x0"],
                         [tuple(repr(v) if isinstance(v, float) else v for v in row) for row in res.rows()])
    ok = res.consistent
    if args.simulate:
        eigen = zero_eigenfunctions(V)
        sims = oracle.parallel_map(
            lambda a: fgr.simulate_decay(V, W, a[0], a[1], a[2], eigen=eigen), list(zip(eps, res.Gammas, res.x0s))
        )
        print("\neps, predicted 2 Gamma, fitted rate, rel.err")
        for s in sims:
            print(f"{s.eps:.6g}, {s.predicted_rate:.6e}, {s.fitted_rate:.6e}, {s.relative_error:.3e}")
            ok = ok and s.relative_error < 0.25
            if out:
                x0 = float(res.b) * s.eps
                pred = [abs(fgr.survival_prediction(s.predicted_rate / 2, x0, res.nu, t).amplitude) ** 2
                        for t in s.evolution.times]
                oracle.write_evolution_csv(os.path.join(out, f"survival_eps{s.eps:g}.csv"), s.evolution, pred)
        if len(sims) >= 2:
            slope = fgr.fitted_exponent([s.eps for s in sims], [s.fitted_rate for s in sims])
            print(f"fitted exponent of the rates: {slope:.4f} (predicted {2 + res.nu / 2})")
    print("verdict:", "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


# reference closed forms for the rank-2 example, pieces on [0,1), [1,2), [2,3), [3,4), tail
RANK2_EIGENFUNCTION = PiecewisePoly.from_intervals([
    (0, 1, [0, Fraction(-2, 5)]),
    (1, 2, [Fraction(1, 2), Fraction(-7, 5), Fraction(1, 2)]),
    (2, 3, [Fraction(-27, 10), Fraction(9, 5), Fraction(-3, 10)]),
])
RANK2_EIGENFUNCTION_NORM2 = Fraction(375, 98)  # squared normalization factor
RANK2_RESONANCE = PiecewisePoly.from_intervals([
    (0, 1, [0, Fraction(-52, 343)]),
    (1, 2, [Fraction(375, 686), Fraction(-61, 49), Fraction(375, 686)]),
    (2, 3, [Fraction(-2025, 686), Fraction(773, 343), Fraction(-225, 686)]),
    (3, 4, [Fraction(-9, 7), Fraction(8, 7), Fraction(-1, 7)]),
], tail=[1])


def cmd_demo_rank2(args) -> int:
    V = builtins.rank2()
    fac = factorization(V)
    cls = classify(V)
    eigen = zero_eigenfunctions(V, cls)
    res = canonical_resonance(V, cls, eigen)
    g, n2 = eigen.eigenfunctions[0], eigen.norms2[0]
    print("potential:")
    print(potential_to_text(V).rstrip())
    print("\nM0 is zero:", all(x == 0 for row in fac.M(0) for x in row))
    print("kind:", cls.kind.description)
    print("alpha = ||S vr||^2 =", fmt(cls.alpha))
    print("\neigenfunction (unnormalized):", g)
    print("squared norm:", fmt(n2))
    print("canonical resonance:", res.psi)
    eig_ok = (g == RANK2_EIGENFUNCTION or g == -RANK2_EIGENFUNCTION) and n2 * RANK2_EIGENFUNCTION_NORM2 == 1
    psi_ok = res.psi == RANK2_RESONANCE
    print("\nPsi_0 exact match:", "PASS" if eig_ok else "FAIL")
    print("Psi_c exact match:", "PASS" if psi_ok else "FAIL")
    out = ensure_out(args.out or ".")
    sign = 1 if g == RANK2_EIGENFUNCTION else -1
    with open(os.path.join(out, "psi0.txt"), "w") as fh:
        fh.write(f"# {HEADER}\n# normalized eigenfunction = sqrt({fraction_text(1 / n2)}) * block\n")
        fh.write(to_text(sign * g) + "\n")
    with open(os.path.join(out, "psi_c.txt"), "w") as fh:
        fh.write(f"# {HEADER}\n")
        fh.write(to_text(res.psi) + "\n")
    scale = float(1 / n2) ** 0.5
    rows = []
    for k in range(0, 601):
        r = Fraction(k, 100)
        psi0 = sign * scale * float(g(r))
        rows.append((fraction_text(r), repr(psi0), repr(-psi0), repr(float(res.psi(r)))))
    oracle.write_csv(os.path.join(out, "rank2_functions.csv"), ["r", "psi0", "minus_psi0", "psi_c"], rows)
    print("wrote", os.path.join(out, "rank2_functions.csv"))
    return EXIT_OK if eig_ok and psi_ok else EXIT_FAIL


# ---------------------------------------------------------------------------


def parse_eps(text: str) -> list:
    try:
        vals = [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"--eps expects a comma separated list of numbers, got {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise UsageError("--eps values must be positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="threshold-resolvent", description="Threshold analysis of half-line Schrodinger operators.")
    p.add_argument("--version", action="version", version=HEADER)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, potential=True):
        if potential:
            sp.add_argument("--potential", help="potential file or builtin:NAME (" + ", ".join(sorted(builtins.BUILTINS)) + ")")
        sp.add_argument("--out", help="output directory for CSV and text artifacts")

    def depth(sp):
        sp.add_argument("--depth", type=int, default=1, help="highest resolvent coefficient G_p (default 1)")

    sc = sub.add_parser("classify", help="classify the threshold zero")
    common(sc)
    sc.add_argument("--spacing", type=float, default=1e-3, help="grid spacing for numerical classification")
    sc.set_defaults(func=cmd_classify)

    se = sub.add_parser("expand", help="resolvent coefficients and theorem cross-checks")
    common(se)
    depth(se)
    se.add_argument("--battery", type=int, default=4, help="number of battery functions in the printed tables")
    se.set_defaults(func=cmd_expand)

    sv = sub.add_parser("validate", help="compare the exact expansion with the finite-difference oracle")
    common(sv)
    depth(sv)
    sv.add_argument("--radius", type=float, default=50.0)
    sv.add_argument("--spacing", type=float, default=1e-3)
    sv.add_argument("--kappa-min", type=float, default=1e-3)
    sv.add_argument("--kappa-max", type=float, default=1e-1)
    sv.add_argument("--samples", type=int, default=12)
    sv.add_argument("--refine", type=int, default=2, help="extended-precision refinement rounds per solve")
    sv.add_argument("--keep-eigenmode", action="store_true",
                    help="fit the raw sandwiches instead of subtracting the discrete zero eigenmode")
    sv.set_defaults(func=cmd_validate)

    sf = sub.add_parser("fgr", help="Fermi golden rule quantities for H + eps W")
    common(sf)
    depth(sf)
    sf.add_argument("--perturbation", help="perturbation W (file or builtin:NAME)")
    sf.add_argument("--eps", default="0.02,0.04,0.08", help="comma separated list of eps values")
    sf.add_argument("--simulate", action="store_true", help="also fit decay rates from Crank-Nicolson runs")
    sf.set_defaults(func=cmd_fgr)

    sd = sub.add_parser("demo-rank2", help="reproduce the rank-2 example exactly")
    common(sd, potential=False)
    sd.set_defaults(func=cmd_demo_rank2)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if getattr(args, "depth", 0) < 0:
        print("error: --depth must be nonnegative", file=sys.stderr)
        return EXIT_USAGE
    print(HEADER)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PotentialFileError as exc:
        print(f"error: potential file {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IrrationalEntryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InsufficientOrderError as exc:
        print(f"error: {exc} (required series order {exc.required_order})", file=sys.stderr)
        return EXIT_FAIL
    except SingularityOrderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
