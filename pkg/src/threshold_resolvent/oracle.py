"""Finite-difference model of ``H = -d^2/dr^2 + V`` for numerical cross-checks.

The grid has nodes ``x_1 < ... < x_n`` with ``x_0 = 0`` (Dirichlet).  With
lumped masses ``m_a = (h_{a-1/2} + h_{a+1/2}) / 2`` the discrete operator is
made symmetric in the coordinates ``w = m^{1/2} u``, so every model is

    H = tridiagonal + sum_i gamma_i |b_i><b_i|,    b_i = m^{1/2} * phi_i averaged.

Functions are sampled by exact cell averages over the dual cells, which keeps
second-order accuracy across jumps of the form factors at arbitrary
positions relative to the nodes.

At the outer end two closures are available.  ``dirichlet`` puts a wall at
``R``.  ``transparent`` (uniform grids only, resolvent use only) replaces the
wall by the exact discrete exterior solution ``u_a ~ lam^a`` with
``lam + 1/lam = 2 + kappa^2 h^2``, so the model is the infinite discrete half
line and ``R`` only has to clear the support of ``V``, ``f`` and ``g``.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .potential import FactoredPotential, flatten, support_end
from .ppoly import PiecewisePoly
from .threshold import Kind

ILL_CONDITIONED = 1e8
SINGULAR_RELATIVE = 1e-6


def thread_count() -> int:
    env = os.environ.get("THRESHOLD_RESOLVENT_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def parallel_map(fn, items):
    items = list(items)
    n = thread_count()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


class SolverBreakdown(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# grids


def uniform_nodes(R: float, h: float) -> np.ndarray:
    n = int(round(R / h)) - 1
    if n < 1 or abs((n + 1) * h - R) > 1e-9 * R:
        raise ValueError(f"R = {R} must be a multiple of h = {h} with at least one interior node")
    return h * np.arange(1, n + 1)


def graded_nodes(fine_end: float, h_fine: float, h_coarse: float, R: float, growth: float = 1.02) -> np.ndarray:
    """Uniform spacing ``h_fine`` on ``[0, fine_end]``, then geometric growth up to ``h_coarse``."""
    pts = list(h_fine * np.arange(1, int(round(fine_end / h_fine)) + 1))
    x, step = pts[-1], h_fine
    while x < R:
        step = min(step * growth, h_coarse)
        x += step
        pts.append(x)
    return np.array(pts[:-1])


def _dual_cells(nodes: np.ndarray, R: float) -> tuple:
    left = np.concatenate(([0.0], nodes))
    right = np.concatenate((nodes, [R]))
    spacing = right - left  # h_{a-1/2}, a = 1..n+1
    lo = nodes - spacing[:-1] / 2
    hi = nodes + spacing[1:] / 2
    return spacing, lo, hi


def cell_average(f: PiecewisePoly, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return (f.antiderivative_array(hi) - f.antiderivative_array(lo)) / (hi - lo)


@dataclass(frozen=True, eq=False)
class GridModel:
    """Immutable discrete Hamiltonian in symmetric coordinates."""

    nodes: np.ndarray
    R: float
    mass: np.ndarray
    diag: np.ndarray  # kinetic + local potential
    off: np.ndarray  # off-diagonal of the kinetic part
    B: np.ndarray  # n x k, columns m^{1/2} phi_i
    gammas: np.ndarray
    cells: tuple = field(repr=False)
    spacing: np.ndarray = field(repr=False, default=None)  # h_{a-1/2}, a = 1..n+1
    local: np.ndarray = field(repr=False, default=None)  # local potential per node
    uniform_h: Optional[float] = None

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def h(self) -> float:
        if self.uniform_h is None:
            raise AttributeError("graded grid has no single spacing")
        return self.uniform_h

    def sample(self, f) -> np.ndarray:
        """Symmetric-coordinate vector of ``f`` (PiecewisePoly or node values)."""
        if isinstance(f, PiecewisePoly):
            vals = cell_average(f, *self.cells)
        else:
            vals = np.asarray(f, dtype=float)
        return np.sqrt(self.mass) * vals

    def inner(self, x: np.ndarray, y: np.ndarray):
        return np.vdot(x, y)

    def tridiagonal(self) -> sp.csc_matrix:
        return sp.diags([self.off, self.diag, self.off], [-1, 0, 1], format="csc")

    def dense(self) -> np.ndarray:
        H = self.tridiagonal().toarray()
        return H + (self.B * self.gammas) @ self.B.T

    def apply(self, x: np.ndarray) -> np.ndarray:
        out = self.diag * x
        out[:-1] += self.off * x[1:]
        out[1:] += self.off * x[:-1]
        return out + self.B @ (self.gammas * (self.B.T @ x))

    @cached_property
    def extended(self) -> tuple:
        """``(diag, off, B)`` rebuilt in extended precision from the spacings."""
        ld = np.longdouble
        hs = self.spacing.astype(ld)
        mass = (hs[:-1] + hs[1:]) / 2
        sq = np.sqrt(mass)
        inv = 1 / hs
        diag = (inv[:-1] + inv[1:]) / mass + self.local.astype(ld)
        off = -inv[1:-1] / (sq[:-1] * sq[1:])
        return diag, off, self.B.astype(ld)


def _assemble(V: FactoredPotential, nodes: np.ndarray, R: float, perturbation=None, uniform_h=None) -> GridModel:
    end = float(support_end(V))
    if perturbation is not None:
        end = max(end, float(support_end(perturbation[0])))
    if R <= end:
        raise ValueError(f"truncation radius R = {R} lies inside the support of the potential (ends at {end})")
    spacing, lo, hi = _dual_cells(nodes, R)
    if uniform_h is not None:
        spacing = np.full(len(nodes) + 1, uniform_h)
    mass = (spacing[:-1] + spacing[1:]) / 2
    s = np.sqrt(mass)
    inv = 1 / spacing
    diag = (inv[:-1] + inv[1:]) / mass
    off = -inv[1:-1] / (s[:-1] * s[1:])
    cols, gam = [], []
    loc = np.zeros(len(nodes))

    def add_potential(W, weight):
        nonlocal loc
        fr, local = flatten(W)
        for t in fr.terms:
            cols.append(s * cell_average(t.phi, lo, hi))
            gam.append(weight * float(t.gamma))
        for w in local:
            loc = loc + weight * cell_average(w.vfun, lo, hi)

    add_potential(V, 1.0)
    if perturbation is not None:
        add_potential(perturbation[0], float(perturbation[1]))
    B = np.column_stack(cols) if cols else np.zeros((len(nodes), 0))
    return GridModel(nodes, float(R), mass, diag + loc, off, B, np.array(gam), (lo, hi), spacing, loc, uniform_h)


def build_grid(V: FactoredPotential, R: float = 50.0, h: float = 1e-3, perturbation=None) -> GridModel:
    """Uniform grid with ``R/h - 1`` interior nodes."""
    R, h = float(R), float(h)
    if h <= 0:
        raise ValueError("grid spacing must be positive")
    return _assemble(V, uniform_nodes(R, h), R, perturbation, uniform_h=h)


def build_graded_grid(
    V: FactoredPotential,
    R: float,
    h_fine: float,
    h_coarse: float,
    fine_end: Optional[float] = None,
    growth: float = 1.02,
    perturbation=None,
) -> GridModel:
    if fine_end is None:
        fine_end = float(support_end(V)) + 2.0
    return _assemble(V, graded_nodes(fine_end, h_fine, h_coarse, R, growth), float(R), perturbation)


# ---------------------------------------------------------------------------
# resolvent


def exterior_root(kappa: float, h: float) -> float:
    """The root ``|lam| < 1`` of ``lam + 1/lam = 2 + kappa^2 h^2``."""
    a = kappa * kappa * h * h
    # lam = 1 + a/2 - sqrt(a + a^2/4), written without cancellation
    return 1.0 / (1.0 + a / 2 + np.sqrt(a + a * a / 4))


def _banded(model: GridModel, kappa: float, boundary: str):
    diag = model.diag + kappa * kappa
    if boundary == "transparent":
        h = model.h
        diag[-1] -= exterior_root(kappa, h) / h**2
    elif boundary != "dirichlet":
        raise ValueError(f"unknown boundary closure {boundary!r}")
    ab = np.zeros((3, model.n), dtype=np.result_type(diag, model.off))
    ab[0, 1:] = model.off
    ab[1] = diag
    ab[2, :-1] = model.off
    return ab


def _apply_shifted_extended(model: GridModel, x, kappa: float, boundary: str):
    diag, off, B = model.extended
    ld = np.longdouble
    k2 = ld(kappa) ** 2
    out = (diag + k2) * x
    if boundary == "transparent":
        h = ld(model.h)
        a = k2 * h * h
        lam = 1 / (1 + a / 2 + np.sqrt(a + a * a / 4))
        out[-1] -= lam / (h * h) * x[-1]
    out[:-1] += off * x[1:]
    out[1:] += off * x[:-1]
    if B.shape[1]:
        out += B @ (model.gammas.astype(ld) * (B.T @ x))
    return out


def solve_shifted(
    model: GridModel, rhs: np.ndarray, kappa: float, boundary: str = "transparent", refine: int = 0
) -> np.ndarray:
    """``(H + kappa^2)^{-1} rhs`` by a tridiagonal solve and a Woodbury correction.

    ``refine`` rounds of iterative refinement compute the residual in extended
    precision; they matter when ``kappa^2`` is near round-off relative to ``2/h^2``.
    """
    x = _solve_shifted(model, rhs, kappa, boundary)
    if refine:
        b = np.asarray(rhs, dtype=np.longdouble)
        xl = x.astype(np.longdouble)
        for _ in range(refine):
            r = b - _apply_shifted_extended(model, xl, kappa, boundary)
            xl = xl + _solve_shifted(model, r.astype(float), kappa, boundary)
        x = xl.astype(float)
    return x


def _solve_shifted(model: GridModel, rhs: np.ndarray, kappa: float, boundary: str) -> np.ndarray:
    ab = _banded(model, kappa, boundary)
    k = model.B.shape[1]
    stacked = np.column_stack([rhs, model.B]) if k else rhs[:, None]
    try:
        Y = sla.solve_banded((1, 1), ab, stacked)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverBreakdown(f"tridiagonal solve failed at kappa = {kappa}: {exc}") from exc
    y = Y[:, 0]
    if not k:
        return y
    Z = Y[:, 1:]
    cap = np.diag(1 / model.gammas) + model.B.T @ Z
    try:
        c = np.linalg.solve(cap, model.B.T @ y)
    except np.linalg.LinAlgError as exc:
        raise SolverBreakdown(f"Woodbury capacitance matrix singular at kappa = {kappa}") from exc
    return y - Z @ c


def resolvent_sandwich(model: GridModel, f, g, kappa: float, boundary: str = "transparent", refine: int = 0) -> float:
    """``<f, (H + kappa^2)^{-1} g>`` on the grid."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    x, y = model.sample(f), model.sample(g)
    return float(x @ solve_shifted(model, y, kappa, boundary, refine))


def resolvent_sandwiches(
    model: GridModel, f, g, kappas: Sequence[float], boundary: str = "transparent", refine: int = 0
) -> np.ndarray:
    if any(k <= 0 for k in kappas):
        raise ValueError("kappa must be positive")
    x, y = model.sample(f), model.sample(g)
    return np.array(parallel_map(lambda k: float(x @ solve_shifted(model, y, k, boundary, refine)), kappas))


def free_sandwich_quadrature(f: PiecewisePoly, g: PiecewisePoly, kappa: float, points: int = 4000) -> float:
    """``<f, R_0(-kappa^2) g>`` from the closed-form free kernel by 2-D midpoint quadrature."""
    end = float(max(f.support_end, g.support_end))
    r = (np.arange(points) + 0.5) * end / points
    w = end / points
    fr, gr = f.evaluate_array(r), g.evaluate_array(r)
    rr, ss = np.meshgrid(r, r, indexing="ij")
    K = -(np.exp(-kappa * (rr + ss)) - np.exp(-kappa * np.abs(rr - ss))) / (2 * kappa)
    return float(fr @ K @ gr) * w * w


# ---------------------------------------------------------------------------
# Laurent fits


@dataclass(frozen=True)
class FitReport:
    coefficients: dict  # power -> estimate
    residual: float  # relative l2 residual
    condition: float
    kappas: tuple
    values: tuple

    @property
    def ill_conditioned(self) -> bool:
        return self.condition > ILL_CONDITIONED

    def coeff(self, power: int) -> float:
        return self.coefficients[power]


def fit_laurent(kappas: Sequence[float], values: Sequence[float], lowest: int, highest: int) -> FitReport:
    """Least squares for ``sum_{j=lowest}^{highest} c_j kappa^j`` with column scaling."""
    k = np.asarray(kappas, dtype=float)
    y = np.asarray(values, dtype=float)
    powers = np.arange(lowest, highest + 1)
    if len(k) < len(powers) + 2:
        raise ValueError(f"need at least {len(powers) + 2} samples for powers {lowest}..{highest}")
    A = k[:, None] ** powers[None, :]
    scale = np.linalg.norm(A, axis=0)
    As = A / scale
    sol, *_ = np.linalg.lstsq(As, y, rcond=None)
    c = sol / scale
    resid = np.linalg.norm(A @ c - y) / max(np.linalg.norm(y), np.finfo(float).tiny)
    cond = np.linalg.cond(As)
    return FitReport({int(p): float(v) for p, v in zip(powers, c)}, float(resid), float(cond), tuple(k), tuple(y))


def fit_resolvent(
    model: GridModel, f, g, kappas, lowest: int, highest: int, boundary: str = "transparent", refine: int = 0
) -> FitReport:
    return fit_laurent(kappas, resolvent_sandwiches(model, f, g, kappas, boundary, refine), lowest, highest)


def fit_without_mode(
    model: GridModel, f, g, kappas, values, mode: np.ndarray, shift: float, highest: int
) -> FitReport:
    """Laurent fit with the discrete threshold eigenmode taken out.

    On the grid the zero eigenvalue sits at a small ``shift`` and its pole
    ``a b / (kappa^2 + shift)`` would leak into every fitted coefficient.  The
    residue ``a b`` is read off the eigenvector and the remainder is fitted
    from ``kappa^-1`` up.
    """
    k = np.asarray(kappas, dtype=float)
    residue = float(model.sample(f) @ mode) * float(model.sample(g) @ mode)
    rest = fit_laurent(k, np.asarray(values) - residue / (k**2 + shift), -1, highest)
    coeffs = {-2: residue, **rest.coefficients}
    return FitReport(coeffs, rest.residual, rest.condition, rest.kappas, tuple(values))


def default_kappas(kmin: float = 1e-3, kmax: float = 1e-1, count: int = 12) -> np.ndarray:
    return np.geomspace(kmin, kmax, count)


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    return float(np.polyfit(np.log(np.asarray(x)), np.log(np.abs(np.asarray(y))), 1)[0])


# ---------------------------------------------------------------------------
# spectrum near zero


def _shift_invert_operator(model: GridModel, sigma: float) -> spla.LinearOperator:
    n = model.n
    lu = spla.splu(model.tridiagonal() - sigma * sp.identity(n, format="csc"))
    k = model.B.shape[1]
    if k:
        Z = lu.solve(model.B)
        cap = np.linalg.inv(np.diag(1 / model.gammas) + model.B.T @ Z)

    def solve(x):
        y = lu.solve(np.asarray(x, dtype=float).ravel())
        return y - Z @ (cap @ (model.B.T @ y)) if k else y

    return spla.LinearOperator((n, n), matvec=solve, dtype=float)


def lowest_eigenpairs(model: GridModel, count: int = 1, sigma: float = -1e-6) -> tuple:
    """Eigenvalues nearest ``sigma`` (shift-invert) and unit eigenvectors in symmetric coordinates."""
    A = spla.LinearOperator((model.n, model.n), matvec=model.apply, dtype=float)
    vals, vecs = spla.eigsh(A, k=count, sigma=sigma, OPinv=_shift_invert_operator(model, sigma), which="LM")
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


def zero_mode_shift(model: GridModel, sigma: float = -1e-6) -> float:
    """Discrete eigenvalue nearest zero, as an extended-precision Rayleigh quotient.

    The double-precision eigensolver cannot resolve values below about
    ``eps * 4/h^2``; the quotient of its eigenvector is accurate to second order.
    """
    _, vecs = lowest_eigenpairs(model, 1, sigma)
    x = vecs[:, 0].astype(np.longdouble)
    Hx = _apply_shifted_extended(model, x, 0.0, "dirichlet")
    return float((x @ Hx) / (x @ x))


# ---------------------------------------------------------------------------
# numerical M0 (covers local potentials)


@dataclass(frozen=True)
class NumericalThreshold:
    kind: Kind
    singular_values: np.ndarray  # ascending, relative to ||M0||
    kernel_dim: int
    moments: np.ndarray  # |<vr, f>| / ||vr|| per kernel vector


def numerical_M0(V: FactoredPotential, h: float = 1e-3) -> tuple:
    """``U + v G_0 v*`` on ``K = C^N (+) L^2(supp V_local)`` sampled by midpoint cells.

    Returns ``(M0, vr)``.  Local parts use ``v = |V|^{1/2}``, ``U = sign V``;
    the zero-energy free kernel is ``min(r, r')``.
    """
    fr, local = flatten(V)
    end = float(support_end(V))
    m = max(1, int(round(end / h)))
    r = (np.arange(m) + 0.5) * end / m
    w = end / m
    # every K component is described by a function on r: (v* e)(r) on quadrature points
    # each K basis vector e is recorded through (v* e)(r) at the quadrature points
    funcs, udiag = [], []
    for t in fr.terms:
        funcs.append(np.sqrt(abs(float(t.gamma))) * t.phi.evaluate_array(r))
        udiag.append(np.sign(float(t.gamma)))
    for loc in local:
        vals = loc.vfun.evaluate_array(r)
        for a in np.nonzero(vals)[0]:
            e = np.zeros(m)
            e[a] = np.sqrt(abs(vals[a]) / w)  # unit vector of the cell in L2
            funcs.append(e)
            udiag.append(np.sign(vals[a]))
    F = np.array(funcs) if funcs else np.zeros((0, m))
    K0 = np.minimum.outer(r, r)
    M0 = np.diag(udiag) + (F * w) @ K0 @ (F * w).T
    vr = (F * w) @ r
    return M0, vr


def classify_numerical(V: FactoredPotential, h: float = 1e-3) -> NumericalThreshold:
    M0, vr = numerical_M0(V, h)
    if M0.size == 0:
        return NumericalThreshold(Kind.REGULAR, np.array([]), 0, np.array([]))
    U, s, Vt = np.linalg.svd(M0)
    rel = s[::-1] / s[0]
    kernel = Vt[s < SINGULAR_RELATIVE * s[0]]
    if len(kernel) == 0:
        return NumericalThreshold(Kind.REGULAR, rel, 0, np.array([]))
    vnorm = np.linalg.norm(vr)
    moments = np.abs(kernel @ vr) / vnorm if vnorm else np.zeros(len(kernel))
    resonant = moments > SINGULAR_RELATIVE
    if not resonant.any():
        kind = Kind.SECOND
    else:
        kind = Kind.FIRST if len(kernel) == 1 else Kind.THIRD
    return NumericalThreshold(kind, rel, len(kernel), moments)


# ---------------------------------------------------------------------------
# time evolution


@dataclass(frozen=True)
class Evolution:
    times: np.ndarray
    amplitudes: np.ndarray  # <psi0, psi(t)>
    norms: np.ndarray

    @property
    def survival(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def evolve(model: GridModel, psi0: np.ndarray, dt: float, steps: int, record_every: int = 1) -> Evolution:
    """Crank-Nicolson propagation; records ``<psi0, psi(t)>`` every ``record_every`` steps."""
    if dt <= 0 or steps < 0:
        raise ValueError("dt must be positive and steps nonnegative")
    psi0 = np.asarray(psi0, dtype=complex)
    nrm = np.sqrt(np.vdot(psi0, psi0).real)
    if abs(nrm - 1) > 1e-8:
        raise ValueError("psi0 must be normalized in grid coordinates")
    n = model.n
    half = 0.5j * dt
    T = model.tridiagonal()
    try:
        lu = spla.splu((sp.identity(n, format="csc") + half * T).astype(complex).tocsc())
    except RuntimeError as exc:
        raise SolverBreakdown(f"Crank-Nicolson factorization failed: {exc}") from exc
    k = model.B.shape[1]
    if k:
        Z = lu.solve(model.B.astype(complex))
        cap = np.linalg.inv(np.diag(1 / (half * model.gammas)) + model.B.T @ Z)
    psi = psi0.copy()
    times, amps, norms = [0.0], [np.vdot(psi0, psi)], [1.0]
    for step in range(1, steps + 1):
        rhs = psi - half * model.apply(psi)
        y = lu.solve(rhs)
        psi = y - Z @ (cap @ (model.B.T @ y)) if k else y
        if step % record_every == 0:
            times.append(step * dt)
            amps.append(np.vdot(psi0, psi))
            norms.append(np.sqrt(np.vdot(psi, psi).real))
    return Evolution(np.array(times), np.array(amps), np.array(norms))


def fit_decay_rate(times: Sequence[float], survival: Sequence[float]) -> float:
    """Rate ``r`` in ``survival ~ C exp(-r t)`` by a straight-line fit of the logarithm."""
    return float(-np.polyfit(np.asarray(times), np.log(np.asarray(survival)), 1)[0])


# ---------------------------------------------------------------------------
# CSV


def write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def write_sandwich_csv(path, kappas, values) -> None:
    write_csv(path, ["kappa", "sandwich"], ((repr(float(k)), repr(float(v))) for k, v in zip(kappas, values)))


def write_fit_csv(path, report: FitReport, exact: Optional[dict] = None) -> None:
    rows = []
    for p, c in sorted(report.coefficients.items()):
        ex = None if exact is None else exact.get(p)
        rows.append((p, repr(c), "" if ex is None else repr(float(ex)), repr(report.residual), repr(report.condition)))
    write_csv(path, ["power", "fitted", "exact", "residual", "condition"], rows)


def write_evolution_csv(path, evo: Evolution, predicted=None) -> None:
    header = ["t", "re_amp", "im_amp", "abs2_amp"] + (["predicted_abs2"] if predicted is not None else [])
    rows = []
    for i, (t, a) in enumerate(zip(evo.times, evo.amplitudes)):
        row = [repr(float(t)), repr(float(a.real)), repr(float(a.imag)), repr(float(abs(a) ** 2))]
        if predicted is not None:
            row.append(repr(float(predicted[i])))
        rows.append(row)
    write_csv(path, header, rows)
