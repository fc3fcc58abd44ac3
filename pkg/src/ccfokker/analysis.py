"""Structural diagnostics and the proven bounds they are compared against.

Notation: ``r = dt / h^2``. For a step matrix ``A``

* column defect ``|A_pp| - sum_{q != p} |A_qp|`` equals 1,
* row defect is at least ``1 - gamma dt``,
* ``||A||_2 <= 2 r d (C h + 2) + 1`` with ``C`` back-solved from
  ``Q = max_p (A_pp - 1) / r`` as ``C = max(0, (Q/d - 2)/h)``,
* ``||A^{-1}||_2 <= 1 / sqrt(1 - gamma dt)``,

and for the plain global system ``||L^{-1}||_2 < 1.5 e^{gamma T} / (gamma dt)``
and ``kappa(L) < 3 e^{gamma T} / gamma (1/dt + 2d/h^2 + C d/h)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import StepMatrix
from .exceptions import HypothesisViolation, SolverError
from .global_system import GlobalSystem, build_global
from .grid import Grid
from .model import FPEProblem
from .stepper import LinearSolver

__all__ = [
    "sdd_defects",
    "norm2_estimate",
    "inverse_norm2_estimate",
    "norm_sandwich",
    "bound_A",
    "bound_A_inv",
    "bound_L_inv",
    "kappa_bound",
    "condition_and_query_estimate",
    "StepAnalysis",
    "AnalysisReport",
    "analyze",
]

DENSE_LIMIT = 2000


def sdd_defects(A) -> tuple[float, float]:
    """Minimum row and column diagonal-dominance defects."""
    M = sp.csr_matrix(A.matrix if isinstance(A, StepMatrix) else A)
    d = np.abs(M.diagonal())
    absM = abs(M)
    row_off = np.asarray(absM.sum(axis=1)).ravel() - d
    col_off = np.asarray(absM.sum(axis=0)).ravel() - d
    return float((d - row_off).min()), float((d - col_off).min())


def _as_linear(A):
    if isinstance(A, StepMatrix):
        return A.matrix
    if isinstance(A, GlobalSystem):
        return A.matrix if A.materialized else A.as_operator()
    return A


def norm2_estimate(A, tol: float = 1e-6, maxiter: int = 5000, dense_limit: int = DENSE_LIMIT) -> float:
    """Spectral norm of a matrix, sparse matrix or linear operator.

    Dense SVD up to ``dense_limit`` rows; above that the largest singular
    value comes from Lanczos bidiagonalization (ARPACK) on ``A^T A``.
    """
    A = _as_linear(A)
    n = A.shape[0]
    if n <= dense_limit and not isinstance(A, spla.LinearOperator):
        dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        return float(sla.svdvals(dense)[0])
    op = spla.aslinearoperator(A)
    ata = spla.LinearOperator((op.shape[1], op.shape[1]), matvec=lambda x: op.rmatvec(op.matvec(x)), dtype=float)
    try:
        lam = spla.eigsh(ata, k=1, which="LA", tol=tol * 1e-2, maxiter=maxiter, return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise SolverError(f"norm estimate did not converge: {exc}") from exc
    return float(np.sqrt(lam[0]))


def inverse_norm2_estimate(A, tol: float = 1e-6, maxiter: int = 5000, dense_limit: int = DENSE_LIMIT) -> float:
    """``||A^{-1}||_2 = 1 / sigma_min(A)``.

    The iterative path runs Lanczos on ``A^{-1} A^{-T}`` applied through an
    existing factorization (block substitution for global systems); no
    inverse is formed.
    """
    if isinstance(A, GlobalSystem):
        system = A
        n = system.shape[0]
        if n <= dense_limit and system.materialized:
            return 1.0 / float(sla.svdvals(system.matrix.toarray())[-1])

        def apply(x):
            return system.block_solve(system.block_solve(x, transpose=True))

    else:
        M = _as_linear(A)
        n = M.shape[0]
        if n <= dense_limit:
            dense = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
            return 1.0 / float(sla.svdvals(dense)[-1])
        solver = LinearSolver(M, tol=1e-8)

        def apply(x):
            return solver.solve(solver.solve(x, transpose=True)[0])[0]

    op = spla.LinearOperator((n, n), matvec=apply, dtype=float)
    try:
        lam = spla.eigsh(op, k=1, which="LA", tol=tol * 1e-2, maxiter=maxiter, return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise SolverError(f"inverse norm estimate did not converge: {exc}") from exc
    return float(np.sqrt(lam[0]))


def norm_sandwich(A) -> float:
    """``sqrt(||A||_1 ||A||_inf)``, an upper bound on ``||A||_2``."""
    M = sp.csr_matrix(_as_linear(A))
    absM = abs(M)
    n1 = float(np.asarray(absM.sum(axis=0)).max())
    ninf = float(np.asarray(absM.sum(axis=1)).max())
    return math.sqrt(n1 * ninf)


def bound_A(A: StepMatrix) -> tuple[float, float, float]:
    """Norm bound for one step matrix.

    Returns ``(bound, Q, C)`` where ``Q = max_p (A_pp - 1) / r`` is computed
    exactly from the assembled diagonal and ``C`` is the smallest constant
    with ``d (C h + 2) >= Q``.
    """
    g = A.grid
    r = A.dt / g.h**2
    Q = float((A.diag.max() - 1.0) / r)
    C = max(0.0, (Q / g.d - 2.0) / g.h)
    bound = 2.0 * r * (C * g.h * g.d + 2.0 * g.d) + 1.0
    return bound, Q, C


def bound_A_inv(gamma: float, dt: float) -> float:
    x = gamma * dt
    if not 0 <= x < 1:
        raise HypothesisViolation(f"gamma*dt = {x:.6g} must lie in [0, 1)")
    return 1.0 / math.sqrt(1.0 - x)


def bound_L_inv(gamma: float, dt: float, T: float) -> float:
    x = gamma * dt
    if not 0 < x < 0.5:
        raise HypothesisViolation(f"gamma*dt = {x:.6g} must lie in (0, 0.5)")
    return 1.5 * math.exp(gamma * T) / x


def kappa_bound(gamma: float, T: float, dt: float, h: float, d: int, C: float) -> float:
    return 3.0 * math.exp(gamma * T) / gamma * (1.0 / dt + 2.0 * d / h**2 + C * d / h)


@dataclass
class StepAnalysis:
    step: int
    t: float
    row_defect: float
    col_defect: float
    row_defect_bound: float
    norm: float
    norm_bound: float
    norm_sandwich: float
    Q: float
    C: float
    inv_norm: float
    inv_norm_bound: float


@dataclass
class ConditionEstimate:
    kappa: float
    kappa_bound: float
    sparsity: int
    norm: float
    inv_norm: float
    inv_norm_bound: float
    C: float
    log2_inv_eps: int
    queries: float
    queries_bound: float


def condition_and_query_estimate(system: GlobalSystem, eps: float, gamma: float) -> ConditionEstimate:
    """Empirical and bounded condition number plus ``s kappa ceil(log2(1/eps))``."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    g = system.grid
    T = system.dt * system.n_steps
    C = max(bound_A(A)[2] for A in system.steps)
    norm = norm2_estimate(system)
    inv = inverse_norm2_estimate(system)
    kappa = norm * inv
    kb = kappa_bound(gamma, T, system.dt, g.h, g.d, C)
    try:
        ib = bound_L_inv(gamma, system.dt, T)
    except HypothesisViolation:
        ib = math.nan
    s = system.max_row_nnz
    lg = math.ceil(math.log2(1.0 / eps))
    return ConditionEstimate(
        kappa=kappa,
        kappa_bound=kb,
        sparsity=s,
        norm=norm,
        inv_norm=inv,
        inv_norm_bound=ib,
        C=C,
        log2_inv_eps=lg,
        queries=s * kappa * lg,
        queries_bound=s * kb * lg,
    )


@dataclass
class AnalysisReport:
    """Measured quantities beside their bounds.

    ``rows`` is the comparison table: ``(quantity, empirical, bound,
    hypothesis_ok, exceeds)``. A row with ``exceeds`` set while
    ``hypothesis_ok`` holds is a genuine bound violation.
    """

    config: dict
    steps: list[StepAnalysis]
    condition: ConditionEstimate
    gamma_dt: float
    rows: list[tuple] = field(default_factory=list)

    @property
    def violations(self) -> list[tuple]:
        return [r for r in self.rows if r[3] and r[4]]

    def to_text(self) -> str:
        lines = [f"{k} = {v}" for k, v in self.config.items()]
        c = self.condition
        lines += [
            f"gamma_dt = {self.gamma_dt:.17g}",
            f"kappa = {c.kappa:.17g}",
            f"kappa_bound = {c.kappa_bound:.17g}",
            f"norm_L = {c.norm:.17g}",
            f"inv_norm_L = {c.inv_norm:.17g}",
            f"inv_norm_L_bound = {c.inv_norm_bound:.17g}",
            f"C = {c.C:.17g}",
            f"sparsity = {c.sparsity}",
            f"queries = {c.queries:.17g}",
            f"queries_bound = {c.queries_bound:.17g}",
            f"violations = {len(self.violations)}",
        ]
        return "\n".join(lines) + "\n"

    def write_table(self, path, header: str | None = None) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            if header:
                for line in header.splitlines():
                    fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["quantity", "empirical", "bound", "hypothesis_ok", "exceeds"])
            for q, e, b, ok, ex in self.rows:
                w.writerow([q, f"{e:.17g}", f"{b:.17g}", int(ok), int(ex)])
        return path


def analyze(problem: FPEProblem, grid: Grid, dt: float, n_steps: int, eps: float = 0.1) -> AnalysisReport:
    """Run every step-matrix and global-system check for one discretization."""
    gamma = problem.gamma
    gdt = gamma * dt
    system = build_global(problem, grid, dt, n_steps)
    rows = []
    steps = []
    seen = {}
    for n, A in enumerate(system.steps):
        key = id(A.diag)
        if key not in seen:
            rd, cd = sdd_defects(A)
            nb, Q, C = bound_A(A)
            seen[key] = (rd, cd, nb, Q, C, norm2_estimate(A), norm_sandwich(A), inverse_norm2_estimate(A))
        rd, cd, nb, Q, C, nrm, sw, inv = seen[key]
        ib = bound_A_inv(gamma, dt) if gdt < 1 else math.inf
        steps.append(StepAnalysis(n, A.t, rd, cd, 1.0 - gdt, nrm, nb, sw, Q, C, inv, ib))
        ok1 = gdt < 1
        rows += [
            (f"step{n}.col_defect", cd, 1.0, True, abs(cd - 1.0) > 1e-12),
            (f"step{n}.row_defect", rd, 1.0 - gdt, ok1, rd < 1.0 - gdt - 1e-12),
            (f"step{n}.norm_A", nrm, nb, ok1, nrm > nb),
            (f"step{n}.norm_A_sandwich", nrm, sw, True, nrm > sw * (1 + 1e-12)),
            (f"step{n}.inv_norm_A", inv, ib, ok1, inv > ib),
        ]
    cond = condition_and_query_estimate(system, eps, gamma)
    ok4 = gdt < 0.5
    rows += [
        ("inv_norm_L", cond.inv_norm, cond.inv_norm_bound, ok4, bool(cond.inv_norm > cond.inv_norm_bound)),
        ("kappa_L", cond.kappa, cond.kappa_bound, ok4, cond.kappa > cond.kappa_bound),
        ("sparsity", float(cond.sparsity), float(2 * grid.d + 2), True, cond.sparsity > 2 * grid.d + 2),
        ("queries", cond.queries, cond.queries_bound, ok4, cond.queries > cond.queries_bound),
    ]
    config = {
        "problem": problem.name,
        "d": grid.d,
        "N": grid.N,
        "L": grid.L,
        "h": grid.h,
        "dt": dt,
        "n_steps": n_steps,
        "T": dt * n_steps,
        "gamma": gamma,
        "eps": eps,
    }
    return AnalysisReport(config=config, steps=steps, condition=cond, gamma_dt=gdt, rows=rows)
