"""Sparse step matrix for one backward-Euler Chang-Cooper step.

``A^n rho^{n+1} = rho^n`` with, at node ``j`` and axis ``i`` and
``r = dt / h^2``::

    A[p, p + s_i] = -alpha_i[p] = -r D_{j+e_i/2} W(w_{j+e_i/2}) exp(w_{j+e_i/2})
    A[p, p - s_i] = -gamma_i[p] = -r D_{j-e_i/2} W(w_{j-e_i/2})
    A[p, p]       = 1 + r sum_i (D_{j+e_i/2} W(w_{j+e_i/2})
                                 + D_{j-e_i/2} W(w_{j-e_i/2}) exp(w_{j-e_i/2}))

Coefficients are frozen at ``t^n``. Zero-flux boundaries remove the terms of
faces outside the domain from the diagonal (``beta_hat``); the assembled
diagonal only ever sums in-domain faces, which is that modification in
closed form. :func:`boundary_beta_hat` applies the subtraction literally.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .exceptions import DomainError
from .grid import Grid
from .model import FPEProblem, cc_W, cc_W_exp, face_coefficients, sample_face

__all__ = ["StepMatrix", "assemble_step_matrix", "boundary_beta_hat", "export_coo"]


@dataclass(frozen=True)
class StepMatrix:
    """Banded step matrix.

    ``alpha[i]`` and ``gamma[i]`` hold the (non-negated) super/sub-diagonal
    magnitudes for axis ``i``; entries for absent neighbours are zero.
    """

    grid: Grid
    t: float
    dt: float
    diag: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    warnings: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return self.grid.n_points

    @property
    def offsets(self) -> tuple[int, ...]:
        s = self.grid.strides
        return tuple(-v for v in reversed(s)) + (0,) + s

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        n = self.n
        rows = [np.arange(n)]
        cols = [np.arange(n)]
        vals = [self.diag]
        for i, s in enumerate(self.grid.strides):
            up = np.flatnonzero(self.grid.multi_indices[:, i] < self.grid.N)
            rows += [up, up + s]
            cols += [up + s, up]
            vals += [-self.alpha[i, up], -self.gamma[i, up + s]]
        A = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        ).tocsr()
        A.sort_indices()
        return A

    def __matmul__(self, x):
        return self.matrix @ x

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def assemble_step_matrix(problem: FPEProblem, grid: Grid, t: float, dt: float) -> StepMatrix:
    """Assemble ``A^n`` at time level ``t`` for step size ``dt``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if grid.d != problem.d:
        raise ValueError(f"grid has d={grid.d}, problem has d={problem.d}")
    n = grid.n_points
    r = dt / grid.h**2
    diag = np.ones(n)
    alpha = np.zeros((grid.d, n))
    gamma = np.zeros((grid.d, n))
    for i, s in enumerate(grid.strides):
        lower, _, D, w = face_coefficients(problem, grid, i, t)
        upper = lower + s
        alpha[i, lower] = r * D * cc_W_exp(w)
        gamma[i, upper] = r * D * cc_W(w)
        # the same face enters the diagonal of both adjacent nodes
        diag[lower] += r * D * cc_W(w)
        diag[upper] += r * D * cc_W_exp(w)
    notes = []
    if dt * problem.gamma >= 1.0:
        msg = f"dt*gamma = {dt * problem.gamma:.6g} >= 1: diagonal dominance bounds are not guaranteed"
        notes.append(msg)
        warnings.warn(msg, stacklevel=2)
    return StepMatrix(grid=grid, t=float(t), dt=float(dt), diag=diag, alpha=alpha, gamma=gamma, warnings=tuple(notes))


def boundary_beta_hat(problem: FPEProblem, grid: Grid, p: int, t: float, dt: float) -> tuple[float, float]:
    """Unmodified and boundary-modified diagonal of row ``p``.

    ``beta`` is summed over all ``2d`` faces including the ghost faces beyond
    the boundary; ``beta_hat`` then subtracts, per axis at 0, the lower ghost
    face term ``r D W e^w`` and, per axis at N, the upper ghost face term
    ``r D W``. Returns ``(beta, beta_hat)``.
    """
    j = grid.linear_to_multi(p)
    at_lower = [i for i in range(grid.d) if j[i] == 0]
    at_upper = [i for i in range(grid.d) if j[i] == grid.N]
    if not at_lower and not at_upper:
        raise DomainError(f"row {p} (j={j}) is an interior row")
    r = dt / grid.h**2
    beta = 1.0
    lower_terms = {}
    upper_terms = {}
    for i in range(grid.d):
        up = sample_face(problem, grid, j, i, +1, t, allow_ghost=True)
        lo = sample_face(problem, grid, j, i, -1, t, allow_ghost=True)
        upper_terms[i] = r * up.D * up.W
        lower_terms[i] = r * lo.D * cc_W_exp(lo.w)
        beta += upper_terms[i] + lower_terms[i]
    beta_hat = beta - sum(lower_terms[i] for i in at_lower) - sum(upper_terms[i] for i in at_upper)
    return beta, beta_hat


def export_coo(matrix, path, header: str | None = None) -> Path:
    """Write ``row col value`` lines (0-based, round-trip precision)."""
    path = Path(path)
    A = sp.coo_matrix(matrix)
    order = np.lexsort((A.col, A.row))
    with path.open("w") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        fh.write(f"# shape {A.shape[0]} {A.shape[1]} nnz {A.nnz}\n")
        for k in order:
            fh.write(f"{A.row[k]} {A.col[k]} {A.data[k]:.17g}\n")
    return path
