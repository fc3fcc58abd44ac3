"""Shared problem factories and independent oracles for the test suite."""

from __future__ import annotations

import math
import warnings

import numpy as np

from ccfokker.catalog import make_problem
from ccfokker.grid import Grid
from ccfokker.model import FPEProblem, Gaussian, validate_assumptions

# OU benchmark used for convergence, emulation and post-selection checks.
OU_PARAMS = dict(theta=1.0, sigma=0.15, mean=0.4, var=0.01)


def ou_benchmark(d: int = 1, T: float = 1.0, **overrides) -> FPEProblem:
    params = dict(OU_PARAMS)
    params.update(overrides)
    return make_problem("ou", d=d, L=1.0, T=T, **params)


def random_problem(rng: np.random.Generator, d: int, grid: Grid, t_samples=(0.0,), analytic_grad=None) -> FPEProblem:
    """Smooth random problem with inward-pointing drift at the boundary.

    ``M^i = theta_i (x_i - c_i) + e_i sin(...) + f_i sin(x_{i+1} ...)`` keeps
    ``M <= 0`` on the lowest faces and ``M >= 0`` on the highest ones, so
    boundary rows stay diagonally dominant. ``gamma`` is the empirical
    Lipschitz estimate over ``t_samples`` with a 1 % margin.
    """
    L = grid.L
    theta = rng.uniform(0.2, 3.0, d)
    c = rng.uniform(0.3, 0.7, d) * L
    room = theta * (np.minimum(c, L - c) - grid.h / 2)
    e = rng.uniform(-0.4, 0.4, d) * room
    f = rng.uniform(-0.4, 0.4, d) * room * (d > 1)
    k = rng.integers(1, 3, d)
    psi = rng.uniform(0, 2 * np.pi, d)
    a = rng.uniform(0.2, 2.0, d)
    b = rng.uniform(0.0, 0.5, d)
    kd = rng.integers(1, 3, d)
    phi = rng.uniform(0, 2 * np.pi, d)
    tdep = rng.uniform(0.0, 0.3)
    if analytic_grad is None:
        analytic_grad = bool(rng.integers(0, 2))

    def M_target(x, t):
        nxt = np.roll(x, -1, axis=-1)
        return (
            theta * (x - c)
            + e * np.sin(2 * np.pi * k * x / L + psi) * (1 + tdep * np.sin(t))
            + f * np.sin(np.pi * nxt / L)
        )

    def diffusion(x, t):
        return a * (1 + b * np.cos(2 * np.pi * kd * x / L + phi)) * (1 + tdep * np.cos(3 * t))

    def diffusion_grad(x, t):
        return -a * b * (2 * np.pi * kd / L) * np.sin(2 * np.pi * kd * x / L + phi) * (1 + tdep * np.cos(3 * t))

    def drift(x, t):
        return diffusion_grad(x, t) - M_target(x, t)

    base = dict(
        d=d,
        drift=drift,
        diffusion=diffusion,
        diffusion_grad=diffusion_grad if analytic_grad else None,
        L=L,
        T=1.0,
        initial=Gaussian(tuple(c), tuple((0.1 * L) ** 2 for _ in range(d))),
        time_homogeneous=False,
        name="random",
    )
    probe = FPEProblem(gamma=1.0, **base)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lip = validate_assumptions(probe, grid, t_samples).lipschitz_estimate
    return FPEProblem(gamma=1.01 * lip, **base)


def dense_step_oracle(problem: FPEProblem, grid: Grid, t: float, dt: float) -> np.ndarray:
    """Row-by-row transcription of the step-matrix formulas in plain Python.

    Every row first gets the unmodified diagonal, summed over all 2d faces
    including ghost faces outside the box; boundary rows then subtract the
    ghost terms literally (lower ghost ``r D W e^w``, upper ghost ``r D W``).
    """
    n = grid.n_points
    h = grid.h
    r = dt / h**2
    A = np.zeros((n, n))

    def face(j, i, side):
        x = np.array(j, dtype=float) * h
        x[i] += side * h / 2
        X = x[None, :]
        D = float(problem.diffusion(X, t)[0, i])
        if problem.diffusion_grad is not None:
            dD = float(problem.diffusion_grad(X, t)[0, i])
        else:
            xp, xm = x.copy(), x.copy()
            xp[i] += h / 2
            xm[i] -= h / 2
            dD = (float(problem.diffusion(xp[None], t)[0, i]) - float(problem.diffusion(xm[None], t)[0, i])) / h
        M = dD - float(problem.drift(X, t)[0, i])
        w = h * M / D
        W = 1.0 if w == 0 else w / math.expm1(w)
        We = 1.0 if w == 0 else w / -math.expm1(-w)
        return D, W, We

    for p in range(n):
        j = grid.linear_to_multi(p)
        beta = 1.0
        for i in range(grid.d):
            s = grid.strides[i]
            Dp, Wp, Wep = face(j, i, +1)
            Dm, Wm, Wem = face(j, i, -1)
            beta += r * (Dp * Wp + Dm * Wem)
            if j[i] < grid.N:
                A[p, p + s] = -r * Dp * Wep
            else:
                beta -= r * Dp * Wp
            if j[i] > 0:
                A[p, p - s] = -r * Dm * Wm
            else:
                beta -= r * Dm * Wem
        A[p, p] = beta
    return A


def fitted_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])
