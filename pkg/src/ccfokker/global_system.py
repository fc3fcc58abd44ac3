"""All-steps block systems.

The plain system stacks the steps ``A^n rho^{n+1} - rho^n = 0``::

    [ A^0                ] [rho^1  ]   [rho^0]
    [ -I   A^1           ] [rho^2  ] = [  0  ]
    [       ...   ...    ] [ ...   ]   [ ... ]
    [            -I  A^{N_t-1}] [rho^N_t]   [  0  ]

The extended system appends ``N_t`` block rows ``-rho^{k-1} + rho^k = 0`` so
that the last ``N_t`` blocks of its solution all repeat ``rho^{N_t}``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import StepMatrix, assemble_step_matrix, export_coo
from .exceptions import SolverError
from .grid import Grid
from .model import FPEProblem, discretize_initial
from .stepper import DEFAULT_TOL, LinearSolver

__all__ = [
    "GlobalSystem",
    "build_global",
    "solve_global",
    "hermitian_dilation",
    "recover_from_dilation",
    "export_global",
]

logger = logging.getLogger(__name__)

#: Systems with more stored nonzeros than this are only used in operator form.
NNZ_CAP = 5_000_000


@dataclass(frozen=True)
class GlobalSystem:
    """Block lower-bidiagonal system over all time steps.

    ``steps`` holds the ``N_t`` step matrices; ``kind`` is ``"plain"``
    (``N_t`` blocks), ``"extended"`` (``2 N_t`` blocks, identity padding) or
    ``"dilated"`` (the symmetric embedding of one of the former, see
    :func:`hermitian_dilation`).
    """

    grid: Grid
    dt: float
    steps: tuple[StepMatrix, ...]
    rhs: np.ndarray
    kind: str = "plain"
    nnz_cap: int = NNZ_CAP
    base: "GlobalSystem | None" = field(default=None, repr=False)

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    @property
    def block_size(self) -> int:
        return self.grid.n_points

    @property
    def n_blocks(self) -> int:
        if self.kind == "dilated":
            return 2 * self.base.n_blocks
        return self.n_steps * (2 if self.kind == "extended" else 1)

    @property
    def shape(self) -> tuple[int, int]:
        n = self.n_blocks * self.block_size
        return (n, n)

    @property
    def nnz_estimate(self) -> int:
        if self.kind == "dilated":
            return 2 * self.base.nnz_estimate
        step_nnz = sum(A.matrix.nnz for A in self.steps)
        n = self.block_size
        coupling = (self.n_blocks - 1) * n
        padding = (self.n_blocks - self.n_steps) * n
        return step_nnz + coupling + padding

    @property
    def materialized(self) -> bool:
        return self.nnz_estimate <= self.nnz_cap

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        if not self.materialized:
            raise MemoryError(
                f"system has ~{self.nnz_estimate} nonzeros, above the cap {self.nnz_cap}; use as_operator()"
            )
        if self.kind == "dilated":
            L = self.base.matrix
            return sp.bmat([[None, L.T], [L, None]], format="csr")
        n = self.block_size
        blocks = [A.matrix for A in self.steps] + [sp.identity(n, format="csr")] * (self.n_blocks - self.n_steps)
        diag = sp.block_diag(blocks, format="csr")
        sub = sp.kron(sp.eye(self.n_blocks, k=-1), sp.identity(n), format="csr")
        M = (diag - sub).tocsr()
        M.sort_indices()
        return M

    def _diag_block(self, k: int):
        return self.steps[k].matrix if k < self.n_steps else None

    def matvec(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "dilated":
            m = self.base.shape[0]
            return np.concatenate([self.base.rmatvec(x[m:]), self.base.matvec(x[:m])])
        X = np.asarray(x).reshape(self.n_blocks, self.block_size)
        Y = np.empty_like(X, dtype=float)
        for k in range(self.n_blocks):
            A = self._diag_block(k)
            Y[k] = X[k] if A is None else A @ X[k]
            if k > 0:
                Y[k] -= X[k - 1]
        return Y.ravel()

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        if self.kind == "dilated":
            return self.matvec(y)
        Y = np.asarray(y).reshape(self.n_blocks, self.block_size)
        X = np.empty_like(Y, dtype=float)
        for k in range(self.n_blocks):
            A = self._diag_block(k)
            X[k] = Y[k] if A is None else A.T @ Y[k]
            if k + 1 < self.n_blocks:
                X[k] -= Y[k + 1]
        return X.ravel()

    def as_operator(self) -> spla.LinearOperator:
        return spla.LinearOperator(self.shape, matvec=self.matvec, rmatvec=self.rmatvec, dtype=float)

    @cached_property
    def _block_solvers(self) -> list[LinearSolver]:
        return [LinearSolver(A) for A in self.steps]

    def block_solve(self, b: np.ndarray, transpose: bool = False) -> np.ndarray:
        """Exact solve by block forward (or, transposed, backward) substitution."""
        if self.kind == "dilated":
            m = self.base.shape[0]
            # [[0, L^T], [L, 0]] [u; v] = [a; b]  =>  L u = b,  L^T v = a
            u = self.base.block_solve(b[m:])
            v = self.base.block_solve(b[:m], transpose=True)
            return np.concatenate([u, v])
        B = np.asarray(b, dtype=float).reshape(self.n_blocks, self.block_size)
        X = np.empty_like(B)
        solvers = self._block_solvers
        order = range(self.n_blocks - 1, -1, -1) if transpose else range(self.n_blocks)
        prev = None
        for k in order:
            rhs = B[k] if prev is None else B[k] + prev
            X[k] = solvers[k].solve(rhs, transpose=transpose)[0] if k < self.n_steps else rhs
            prev = X[k]
        return X.ravel()

    @cached_property
    def max_row_nnz(self) -> int:
        if self.materialized:
            return int(np.diff(self.matrix.indptr).max())
        per_step = max(int(np.diff(A.matrix.indptr).max()) for A in self.steps)
        return per_step + (1 if self.n_blocks > 1 else 0)

    def blocks_of(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x).reshape(self.n_blocks, self.block_size)

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "n_steps": self.n_steps,
            "n_blocks": self.n_blocks,
            "block_size": self.block_size,
            "shape": f"{self.shape[0]}x{self.shape[1]}",
            "nnz": self.nnz_estimate,
            "max_row_nnz": self.max_row_nnz,
            "materialized": self.materialized,
            "dt": self.dt,
            "h": self.grid.h,
            "d": self.grid.d,
        }


def build_global(
    problem: FPEProblem,
    grid: Grid,
    dt: float,
    n_steps: int,
    extended: bool = False,
    rho0: np.ndarray | None = None,
    nnz_cap: int = NNZ_CAP,
) -> GlobalSystem:
    """Assemble every ``A^n`` at ``t^n = n dt`` and stack them."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if problem.time_homogeneous:
        A = assemble_step_matrix(problem, grid, 0.0, dt)
        steps = tuple(
            A if n == 0 else StepMatrix(grid, n * dt, dt, A.diag, A.alpha, A.gamma, A.warnings) for n in range(n_steps)
        )
    else:
        steps = tuple(assemble_step_matrix(problem, grid, n * dt, dt) for n in range(n_steps))
    rho0 = discretize_initial(problem, grid) if rho0 is None else np.asarray(rho0, dtype=float)
    n_blocks = n_steps * (2 if extended else 1)
    rhs = np.zeros(n_blocks * grid.n_points)
    rhs[: grid.n_points] = rho0
    return GlobalSystem(
        grid=grid, dt=float(dt), steps=steps, rhs=rhs, kind="extended" if extended else "plain", nnz_cap=nnz_cap
    )


def solve_global(system: GlobalSystem, tol: float = DEFAULT_TOL, rhs: np.ndarray | None = None) -> np.ndarray:
    """Solve the whole system at once.

    Materialized systems go through one sparse LU of the full matrix, which
    is independent of the step-by-step route; larger ones fall back to block
    substitution.
    """
    b = system.rhs if rhs is None else np.asarray(rhs, dtype=float)
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return np.zeros_like(b)
    if system.materialized:
        x = spla.splu(sp.csc_matrix(system.matrix)).solve(b)
        res = np.linalg.norm(system.matrix @ x - b) / nb
    else:
        x = system.block_solve(b)
        res = np.linalg.norm(system.matvec(x) - b) / nb
    if not res <= tol:
        raise SolverError(f"global solve residual {res:.3e} exceeds {tol:.1e}", residual=float(res))
    logger.debug("global %s solve: residual %.3e", system.kind, res)
    return x


def hermitian_dilation(system: GlobalSystem) -> GlobalSystem:
    """Symmetric embedding ``[[0, L^T], [L, 0]]`` with right-hand side ``(0, f)``.

    Its solution is ``(x, 0)`` where ``L x = f``.
    """
    if system.kind == "dilated":
        raise ValueError("system is already dilated")
    rhs = np.concatenate([np.zeros_like(system.rhs), system.rhs])
    return GlobalSystem(
        grid=system.grid,
        dt=system.dt,
        steps=system.steps,
        rhs=rhs,
        kind="dilated",
        nnz_cap=system.nnz_cap,
        base=system,
    )


def recover_from_dilation(solution: np.ndarray) -> np.ndarray:
    """First half of a dilated solution, i.e. the solution of the base system."""
    solution = np.asarray(solution)
    return solution[: solution.size // 2]


def export_global(system: GlobalSystem, directory, header: str | None = None) -> dict[str, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = {"matrix": export_coo(system.matrix, directory / f"global_{system.kind}.coo", header)}
    rep = directory / f"global_{system.kind}_structure.txt"
    with rep.open("w") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for k, v in system.summary().items():
            fh.write(f"{k} = {v}\n")
    out["structure"] = rep
    return out
