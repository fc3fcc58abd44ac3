"""Built-in problems addressable by name.

``diffusion``
    ``mu = 0``, ``D = c``. Parameters: ``c`` (default 1).
``ou``
    Ornstein-Uhlenbeck, ``mu = -theta (x - center)``, ``D = sigma^2 / 2``.
    Parameters: ``theta`` (1), ``center`` (L/2), ``sigma`` (1).
``double-well``
    ``mu = -grad V`` with ``V = a sum_i ((x_i - center)^2 - b)^2``,
    ``D = sigma^2 / 2``. Parameters: ``a`` (1), ``b`` (0.25), ``center`` (L/2),
    ``sigma`` (1).

Every problem accepts ``init`` (``"gaussian"`` or ``"point"``), ``mean``,
``var`` (Gaussian) or ``x0`` (point mass), and ``gamma`` to override the
Lipschitz constant derived from the drift. ``diffusion`` and ``ou`` carry
the free-space Gaussian transition density as their exact solution, which
is accurate on the box while the density is negligible at its faces.
"""

from __future__ import annotations

import numpy as np

from .model import FPEProblem, Gaussian, PointMass

__all__ = ["PROBLEMS", "make_problem", "gaussian_density"]

PROBLEMS = ("diffusion", "ou", "double-well")


def gaussian_density(x: np.ndarray, mean, var) -> np.ndarray:
    """Product Gaussian density with per-axis ``mean`` and ``var``."""
    x = np.atleast_2d(x)
    mean = np.broadcast_to(np.asarray(mean, dtype=float), x.shape[-1:])
    var = np.broadcast_to(np.asarray(var, dtype=float), x.shape[-1:])
    z = ((x - mean) ** 2 / (2.0 * var)).sum(axis=-1)
    return np.exp(-z) / np.sqrt(np.prod(2.0 * np.pi * var))


def _initial(d, L, params):
    kind = params.pop("init", "gaussian")
    if kind == "point":
        x0 = np.broadcast_to(np.asarray(params.pop("x0", L / 2.0), dtype=float), (d,))
        return PointMass(tuple(x0)), x0, np.zeros(d)
    if kind == "gaussian":
        mean = np.broadcast_to(np.asarray(params.pop("mean", L / 2.0), dtype=float), (d,))
        var = np.broadcast_to(np.asarray(params.pop("var", (L / 10.0) ** 2), dtype=float), (d,))
        return Gaussian(tuple(mean), tuple(var)), mean, var
    raise ValueError(f"unknown initial density kind {kind!r}")


def make_problem(name: str, d: int = 1, L: float = 1.0, T: float = 1.0, **params) -> FPEProblem:
    """Build a catalog problem; unknown parameter names raise ``KeyError``."""
    params = dict(params)
    resolved = dict(params)
    gamma_override = params.pop("gamma", None)
    initial, m0, v0 = _initial(d, L, params)

    if name == "diffusion":
        c = float(params.pop("c", 1.0))
        gamma = 1.0

        def drift(x, t):
            return np.zeros_like(x)

        def diffusion(x, t):
            return np.full_like(x, c)

        def exact(x, t):
            return gaussian_density(x, m0, v0 + 2.0 * c * t)

    elif name == "ou":
        theta = float(params.pop("theta", 1.0))
        center = float(params.pop("center", L / 2.0))
        sigma = float(params.pop("sigma", 1.0))
        Dc = sigma**2 / 2.0
        gamma = d * theta

        def drift(x, t):
            return -theta * (x - center)

        def diffusion(x, t):
            return np.full_like(x, Dc)

        def exact(x, t):
            decay = np.exp(-theta * t)
            mean = center + (m0 - center) * decay
            var = v0 * decay**2 + Dc / theta * (1.0 - decay**2)
            return gaussian_density(x, mean, var)

    elif name == "double-well":
        a = float(params.pop("a", 1.0))
        b = float(params.pop("b", 0.25))
        center = float(params.pop("center", L / 2.0))
        sigma = float(params.pop("sigma", 1.0))
        Dc = sigma**2 / 2.0
        umax = max(center, L - center)
        gamma = d * 4.0 * a * max(abs(3.0 * umax**2 - b), b)
        exact = None

        def drift(x, t):
            u = x - center
            return -4.0 * a * u * (u**2 - b)

        def diffusion(x, t):
            return np.full_like(x, Dc)

    else:
        raise ValueError(f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}")

    if params:
        raise KeyError(f"unknown parameters for {name!r}: {', '.join(sorted(params))}")

    def zero_grad(x, t):
        return np.zeros_like(x)

    return FPEProblem(
        d=d,
        drift=drift,
        diffusion=diffusion,
        diffusion_grad=zero_grad,
        L=L,
        T=T,
        initial=initial,
        gamma=float(gamma_override) if gamma_override is not None else gamma,
        time_homogeneous=True,
        exact=exact,
        name=name,
        params=resolved,
    )
