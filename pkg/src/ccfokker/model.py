"""Fokker-Planck problem data and Chang-Cooper coefficient functions.

The equation is solved in flux form ``d rho/dt = div F`` with, per axis,
``F^i = M^i rho + D^i d rho / dx_i`` and ``M^i = dD^i/dx_i - mu_i``.
Diffusion is diagonal; ``D^i`` is the i-th diagonal entry.

Coefficient callbacks are vectorized: ``drift(x, t)`` and ``diffusion(x, t)``
receive ``x`` of shape ``(n, d)`` and return arrays of shape ``(n, d)``.
They must be pure functions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .exceptions import AssumptionViolation, DomainError, EvaluationError
from .grid import Grid

__all__ = [
    "PointMass",
    "Gaussian",
    "GridVector",
    "FPEProblem",
    "HalfPointCoefficients",
    "AssumptionReport",
    "cc_W",
    "cc_W_exp",
    "cc_delta",
    "eval_M",
    "eval_D",
    "sample_face",
    "face_coefficients",
    "validate_assumptions",
    "discretize_initial",
]

SERIES_THRESHOLD = 1e-4

CoefficientFn = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class PointMass:
    x0: Sequence[float]


@dataclass(frozen=True)
class Gaussian:
    mean: Sequence[float]
    variance: Sequence[float]


@dataclass(frozen=True)
class GridVector:
    values: np.ndarray


InitialDensity = Union[PointMass, Gaussian, GridVector]


@dataclass(frozen=True)
class FPEProblem:
    """Fokker-Planck problem on ``[0, L]^d`` over ``[0, T]``.

    ``gamma`` is the declared Lipschitz constant of ``sum_i |M^i|``; every
    complexity bound is stated in terms of it. ``diffusion_grad`` optionally
    supplies ``dD^i/dx_i`` analytically (same shape convention as
    ``diffusion``). Set ``time_homogeneous`` when no coefficient depends on
    ``t`` so steppers may reuse one factorization. ``exact``, when given, is
    the analytic density ``exact(x, t)`` used as a reference.
    """

    d: int
    drift: CoefficientFn
    diffusion: CoefficientFn
    L: float
    T: float
    initial: InitialDensity
    gamma: float
    diffusion_grad: CoefficientFn | None = None
    time_homogeneous: bool = False
    assume_positive_M: bool = False
    assume_diagonal: bool = True
    exact: Callable[[np.ndarray, float], np.ndarray] | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not (self.L > 0 and np.isfinite(self.L)):
            raise ValueError("L must be positive")
        if not (self.T > 0 and np.isfinite(self.T)):
            raise ValueError("T must be positive")
        if not (self.gamma > 0 and np.isfinite(self.gamma)):
            raise ValueError(f"gamma must be positive, got {self.gamma}")


@dataclass(frozen=True)
class HalfPointCoefficients:
    """Coefficients on the face between ``j`` and ``j + side * e_axis``."""

    M: float
    D: float
    w: float
    W: float


@dataclass
class AssumptionReport:
    min_M: float
    lipschitz_estimate: float
    declared_gamma: float
    gamma_ok: bool
    boundary_max_M: float
    warnings: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "min_M": self.min_M,
            "lipschitz_estimate": self.lipschitz_estimate,
            "declared_gamma": self.declared_gamma,
            "gamma_ok": self.gamma_ok,
            "boundary_max_M": self.boundary_max_M,
        }


# ---------------------------------------------------------------------------
# Chang-Cooper weights


def _check_finite(w):
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise EvaluationError("non-finite cell Peclet number")
    return w


def cc_W(w):
    """Chang-Cooper weight ``w / (exp(w) - 1)``.

    Uses a 4-term series near ``w = 0`` and ``w e^{-w} / (1 - e^{-w})`` for
    positive ``w`` so nothing overflows. Accepts scalars or arrays.
    """
    w = _check_finite(w)
    out = np.empty_like(w)
    small = np.abs(w) < SERIES_THRESHOLD
    pos = (w > 0) & ~small
    neg = (w < 0) & ~small
    ws = w[small]
    out[small] = 1.0 - ws / 2.0 + ws**2 / 12.0 - ws**4 / 720.0
    wp = w[pos]
    out[pos] = wp * np.exp(-wp) / -np.expm1(-wp)
    wn = w[neg]
    out[neg] = wn / np.expm1(wn)
    return out if out.ndim else float(out)


def cc_W_exp(w):
    """``W(w) * exp(w)`` evaluated as ``w / (1 - e^{-w})``, i.e. ``W(-w)``."""
    return cc_W(-np.asarray(w, dtype=float))


def cc_delta(w):
    """Chang-Cooper interpolation weight ``1/w - 1/(exp(w) - 1)``."""
    w = _check_finite(w)
    out = np.empty_like(w)
    small = np.abs(w) < SERIES_THRESHOLD
    ws = w[small]
    out[small] = 0.5 - ws / 12.0 + ws**3 / 720.0
    wl = w[~small]
    # expm1 overflows to inf for large w, where 1/(e^w - 1) is 0 anyway
    with np.errstate(over="ignore"):
        out[~small] = 1.0 / wl - 1.0 / np.expm1(wl)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Coefficient evaluation


def _as_points(problem: FPEProblem, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != problem.d:
        raise ValueError(f"points have {x.shape[-1]} components, problem has d={problem.d}")
    return x, single


def eval_D(problem: FPEProblem, x, t: float) -> np.ndarray:
    x, single = _as_points(problem, x)
    D = np.asarray(problem.diffusion(x, t), dtype=float).reshape(x.shape)
    if not np.all(np.isfinite(D)):
        raise EvaluationError(f"diffusion is non-finite at t={t}")
    return D[0] if single else D


def eval_M(problem: FPEProblem, x, t: float, axis: int | None = None, h: float | None = None):
    """Drift-like coefficient ``M^i = dD^i/dx_i - mu_i``.

    Without an analytic ``diffusion_grad`` the derivative is the symmetric
    difference of width ``h`` around ``x``; ``h`` is then required.
    Returns all axes (shape ``(n, d)`` or ``(d,)``) or one axis if given.
    """
    x, single = _as_points(problem, x)
    mu = np.asarray(problem.drift(x, t), dtype=float).reshape(x.shape)
    if problem.diffusion_grad is not None:
        dD = np.asarray(problem.diffusion_grad(x, t), dtype=float).reshape(x.shape)
    else:
        if h is None:
            raise ValueError("h is required when no analytic diffusion gradient is given")
        dD = np.empty_like(x)
        for i in range(problem.d):
            shift = np.zeros(problem.d)
            shift[i] = h / 2.0
            Dp = np.asarray(problem.diffusion(x + shift, t), dtype=float).reshape(x.shape)
            Dm = np.asarray(problem.diffusion(x - shift, t), dtype=float).reshape(x.shape)
            dD[:, i] = (Dp[:, i] - Dm[:, i]) / h
    M = dD - mu
    if not np.all(np.isfinite(M)):
        raise EvaluationError(f"M is non-finite at t={t}")
    if axis is not None:
        M = M[:, axis]
    return M[0] if single else M


def face_coefficients(problem: FPEProblem, grid: Grid, axis: int, t: float):
    """Coefficients on every in-domain face normal to ``axis``.

    The face ``j + e_axis/2`` is listed for every node with ``j_axis < N``,
    in linear-index order of that lower node. Returns ``(lower, M, D, w)``
    where ``lower`` holds the lower node indices.
    """
    mi = grid.multi_indices
    lower = np.flatnonzero(mi[:, axis] < grid.N)
    x = grid.points[lower].copy()
    x[:, axis] += grid.h / 2.0
    M = eval_M(problem, x, t, h=grid.h)[:, axis]
    D = eval_D(problem, x, t)[:, axis]
    bad = ~(D > 0)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        j = grid.linear_to_multi(int(lower[k]))
        raise AssumptionViolation(
            f"D^{axis} = {D[k]!r} <= 0 on face j={j} + e_{axis}/2 at t={t}"
        )
    return lower, M, D, grid.h * M / D


def sample_face(
    problem: FPEProblem,
    grid: Grid,
    j: Sequence[int],
    axis: int,
    side: int,
    t: float,
    allow_ghost: bool = False,
) -> HalfPointCoefficients:
    """Evaluate ``M, D, w, W`` at ``x = (j + side * e_axis / 2) h``.

    Faces outside ``[0, L]^d`` (the ghost faces beyond boundary nodes) are
    rejected unless ``allow_ghost`` is set.
    """
    if side not in (-1, 1):
        raise ValueError("side must be +1 or -1")
    grid.multi_to_linear(j)
    x = np.asarray(j, dtype=float) * grid.h
    x[axis] += side * grid.h / 2.0
    if not allow_ghost and not (0.0 <= x[axis] <= grid.L):
        raise DomainError(f"face j={tuple(j)} {'+' if side > 0 else '-'} e_{axis}/2 lies outside the domain")
    M = float(eval_M(problem, x, t, axis=axis, h=grid.h))
    D = float(eval_D(problem, x, t)[axis])
    if not D > 0:
        raise AssumptionViolation(
            f"D^{axis} = {D!r} <= 0 on face j={tuple(j)} {'+' if side > 0 else '-'} e_{axis}/2 at t={t}"
        )
    w = grid.h * M / D
    return HalfPointCoefficients(M=M, D=D, w=w, W=cc_W(w))


def validate_assumptions(problem: FPEProblem, grid: Grid, times: Sequence[float]) -> AssumptionReport:
    """Sample every face at ``times`` and check positivity, Lipschitz bound and support.

    The Lipschitz estimate is the largest ``sum_i |M^i_{j+e_i/2} - M^i_{j-e_i/2}| / h``
    over nodes, counting only axes where both faces lie in the domain.
    Violations produce warnings; nothing is raised.
    """
    min_M = np.inf
    lip = 0.0
    bmax = 0.0
    for t in times:
        total = np.zeros(grid.n_points)
        for i in range(grid.d):
            lower, M, _, _ = face_coefficients(problem, grid, i, t)
            min_M = min(min_M, float(M.min()))
            # face k is the upper face of lower[k] and the lower face of lower[k] + stride
            upper_face = np.full(grid.n_points, np.nan)
            upper_face[lower] = M
            lower_face = np.full(grid.n_points, np.nan)
            lower_face[lower + grid.strides[i]] = M
            diff = np.abs(upper_face - lower_face)
            total += np.where(np.isfinite(diff), diff, 0.0)
            ji = grid.multi_indices[lower, i]
            edge = (ji == 0) | (ji == grid.N - 1)
            if np.any(edge):
                bmax = max(bmax, float(np.abs(M[edge]).max()))
        lip = max(lip, float(total.max()) / grid.h)

    report = AssumptionReport(
        min_M=float(min_M),
        lipschitz_estimate=lip,
        declared_gamma=problem.gamma,
        gamma_ok=lip <= problem.gamma,
        boundary_max_M=bmax,
    )
    if not min_M > 0:
        report.warnings.append(f"M is not strictly positive (min M = {min_M:.6g})")
    if not report.gamma_ok:
        report.warnings.append(
            f"declared gamma = {problem.gamma:.6g} is below the empirical Lipschitz estimate {lip:.6g}"
        )
    if bmax > 0:
        report.warnings.append(f"M does not vanish at the boundary (max |M| = {bmax:.6g})")
    for msg in report.warnings:
        warnings.warn(msg, stacklevel=2)
    return report


def discretize_initial(problem: FPEProblem, grid: Grid) -> np.ndarray:
    """Nodal initial density normalized so that ``sum(rho) * h^d == 1``."""
    init = problem.initial
    hd = grid.h**grid.d
    if isinstance(init, PointMass):
        x0 = np.asarray(init.x0, dtype=float).reshape(grid.d)
        if np.any(x0 < 0) or np.any(x0 > grid.L):
            raise DomainError(f"point mass at {tuple(x0)} outside [0, {grid.L}]^{grid.d}")
        rho = np.zeros(grid.n_points)
        rho[grid.nearest_node(x0)] = 1.0 / hd
        return rho
    if isinstance(init, Gaussian):
        mean = np.broadcast_to(np.asarray(init.mean, dtype=float), (grid.d,))
        var = np.broadcast_to(np.asarray(init.variance, dtype=float), (grid.d,))
        if np.any(var <= 0):
            raise ValueError("Gaussian variance must be positive")
        z = (grid.points - mean) ** 2 / (2.0 * var)
        rho = np.exp(-z.sum(axis=1))
    elif isinstance(init, GridVector):
        rho = np.asarray(init.values, dtype=float).ravel().copy()
        if rho.size != grid.n_points:
            raise ValueError(f"initial vector has {rho.size} entries, grid has {grid.n_points}")
        if np.any(rho < 0) or not np.all(np.isfinite(rho)):
            raise ValueError("initial density must be finite and non-negative")
    else:
        raise TypeError(f"unsupported initial density {init!r}")
    mass = rho.sum() * hd
    if not mass > 0:
        raise ValueError("initial density has zero mass on the grid")
    return rho / mass
