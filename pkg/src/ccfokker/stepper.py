"""Sequential backward-Euler time integration."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import StepMatrix, assemble_step_matrix
from .exceptions import CCFokkerError, SolverError
from .grid import Grid
from .model import FPEProblem, discretize_initial

__all__ = ["LinearSolver", "Trajectory", "step", "evolve", "write_trajectory"]

logger = logging.getLogger(__name__)

DIRECT_LIMIT = 200_000
DEFAULT_TOL = 1e-12


class LinearSolver:
    """Solve ``A x = b`` repeatedly for one sparse matrix.

    Sparse LU up to :data:`DIRECT_LIMIT` unknowns, BiCGSTAB (Jacobi
    preconditioned) above it. Every solve records its relative residual.
    """

    def __init__(self, A, tol: float = DEFAULT_TOL, method: str = "auto"):
        A = A.matrix if isinstance(A, StepMatrix) else A
        self.A = sp.csc_matrix(A)
        self.tol = tol
        if method == "auto":
            method = "direct" if self.A.shape[0] <= DIRECT_LIMIT else "iterative"
        self.method = method
        if method == "direct":
            self._lu = spla.splu(self.A)
        elif method == "iterative":
            self._lu = None
            self._M = sp.diags(1.0 / self.A.diagonal())
        else:
            raise ValueError(f"unknown solver method {method!r}")

    def solve(self, b: np.ndarray, transpose: bool = False) -> tuple[np.ndarray, float]:
        b = np.asarray(b, dtype=float)
        nb = np.linalg.norm(b)
        if nb == 0.0:
            return np.zeros_like(b), 0.0
        op = self.A.T if transpose else self.A
        if self._lu is not None:
            x = self._lu.solve(b, trans="T" if transpose else "N")
        else:
            x, info = spla.bicgstab(op, b, rtol=self.tol, atol=0.0, M=self._M, maxiter=10 * op.shape[0])
            if info != 0:
                res = np.linalg.norm(op @ x - b) / nb
                raise SolverError(f"BiCGSTAB did not converge (info={info})", residual=res)
        res = float(np.linalg.norm(op @ x - b) / nb)
        if res > self.tol:
            raise SolverError(f"relative residual {res:.3e} exceeds tolerance {self.tol:.1e}", residual=res)
        return x, res


def step(A: StepMatrix, rho: np.ndarray, tol: float = DEFAULT_TOL) -> tuple[np.ndarray, float]:
    """One step: solve ``A rho_next = rho``. Returns ``(rho_next, relative residual)``."""
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (A.n,):
        raise ValueError(f"density has shape {rho.shape}, matrix has {A.n} rows")
    return LinearSolver(A, tol).solve(rho)


@dataclass(frozen=True)
class Trajectory:
    """Densities ``rho^0 .. rho^{N_t}`` (rows) with per-step diagnostics."""

    grid: Grid
    dt: float
    densities: np.ndarray
    residuals: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.densities.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    @property
    def mass(self) -> np.ndarray:
        return self.densities.sum(axis=1) * self.grid.h**self.grid.d

    @property
    def min_entry(self) -> np.ndarray:
        return self.densities.min(axis=1)

    @property
    def final(self) -> np.ndarray:
        return self.densities[-1]

    def diagnostics(self, tol: float = DEFAULT_TOL) -> list[dict]:
        """Per-step mass, minimum entry and residual.

        Minimum entries in ``(-10 tol, 0)`` are reported as zero; the stored
        densities are never modified.
        """
        out = []
        for n, (m, lo, res) in enumerate(zip(self.mass, self.min_entry, self.residuals)):
            shown = 0.0 if -10 * tol < lo < 0 else float(lo)
            out.append({"step": n, "time": n * self.dt, "mass": float(m), "min_entry": shown, "residual": float(res)})
        return out


def evolve(
    problem: FPEProblem,
    grid: Grid,
    dt: float,
    n_steps: int,
    tol: float = DEFAULT_TOL,
    rho0: np.ndarray | None = None,
    method: str = "auto",
) -> Trajectory:
    """Integrate from ``t = 0`` to ``T = n_steps * dt``.

    ``dt * n_steps`` must reproduce ``problem.T`` to rounding. The step
    matrix is re-assembled at every ``t^n`` unless the problem is marked
    time-homogeneous, in which case one factorization serves all steps.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not math.isclose(dt * n_steps, problem.T, rel_tol=1e-12, abs_tol=0.0):
        raise ValueError(f"dt * n_steps = {dt * n_steps!r} does not match T = {problem.T!r}")
    if dt > 1.0 / (2.0 * problem.gamma):
        warnings.warn(
            f"dt = {dt:.6g} exceeds 1/(2 gamma) = {1 / (2 * problem.gamma):.6g}; "
            "positivity and convergence are not guaranteed",
            stacklevel=2,
        )
    rho = discretize_initial(problem, grid) if rho0 is None else np.asarray(rho0, dtype=float)
    densities = np.empty((n_steps + 1, grid.n_points))
    residuals = np.zeros(n_steps + 1)
    densities[0] = rho
    solver = None
    with warnings.catch_warnings():
        # the dt*gamma warning is raised once above, not at every assembly
        warnings.filterwarnings("ignore", message="dt\\*gamma")
        for n in range(n_steps):
            try:
                if solver is None or not problem.time_homogeneous:
                    A = assemble_step_matrix(problem, grid, n * dt, dt)
                    solver = LinearSolver(A, tol, method)
                rho, res = solver.solve(rho)
            except CCFokkerError as exc:
                raise type(exc)(f"step {n}: {exc}") from exc
            densities[n + 1] = rho
            residuals[n + 1] = res
    logger.debug("evolved %d steps, final mass %.16g", n_steps, densities[-1].sum() * grid.h**grid.d)
    return Trajectory(grid=grid, dt=float(dt), densities=densities, residuals=residuals)


def write_trajectory(traj: Trajectory, path, layout: str = "long", header: str | None = None) -> Path:
    """Write the trajectory as CSV.

    ``layout="long"`` gives one ``step,index,value`` row per entry;
    ``layout="dense"`` gives one row per step with a column per node.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        w = csv.writer(fh)
        if layout == "long":
            w.writerow(["step", "time", "index", "value"])
            for n, rho in enumerate(traj.densities):
                t = f"{n * traj.dt:.17g}"
                for p, v in enumerate(rho):
                    w.writerow([n, t, p, f"{v:.17g}"])
        elif layout == "dense":
            w.writerow(["step", "time"] + [f"p{p}" for p in range(traj.grid.n_points)])
            for n, rho in enumerate(traj.densities):
                w.writerow([n, f"{n * traj.dt:.17g}"] + [f"{v:.17g}" for v in rho])
        else:
            raise ValueError(f"unknown layout {layout!r}")
    return path
