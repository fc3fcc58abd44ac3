"""Classical stand-in for the quantum linear-systems pipeline.

Steps: pick ``(h, dt)`` from the error budget, build the padded system,
solve it (exactly, optionally followed by a controlled perturbation of the
normalized terminal state that mimics the solver's error allowance),
post-select the terminal-state blocks and sample measurement outcomes.

Norm convention: densities become probability vectors ``p = rho h^d`` when
a 2-norm of the density itself is needed (``q``); normalized states do not
depend on the convention.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .global_system import build_global, solve_global
from .grid import Grid
from .model import FPEProblem
from .stepper import evolve

__all__ = [
    "DiscretizationPlan",
    "EmulationResult",
    "choose_discretization",
    "emulate",
    "fidelity_check",
    "estimate_q",
    "perturb_state",
    "normalized",
]


def normalized(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("cannot normalize a zero vector")
    return v / n


@dataclass(frozen=True)
class DiscretizationPlan:
    eps: float
    gamma: float
    C: float
    q: float
    d: int
    L: float
    T: float
    h_raw: float
    dt_raw: float
    N: int
    n_steps: int
    branch: str
    flagged: bool = False
    note: str = ""

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def error_budget(self) -> float:
        """``C (dt + d h^2) / q`` for the rounded values; at most ``eps / 4``."""
        return self.C * (self.dt + self.d * self.h**2) / self.q

    def grid(self) -> Grid:
        return Grid(self.d, self.N, self.L)

    def as_dict(self) -> dict:
        return {
            "eps": self.eps,
            "gamma": self.gamma,
            "C": self.C,
            "q": self.q,
            "d": self.d,
            "L": self.L,
            "T": self.T,
            "branch": self.branch,
            "h_raw": self.h_raw,
            "dt_raw": self.dt_raw,
            "N": self.N,
            "n_steps": self.n_steps,
            "h": self.h,
            "dt": self.dt,
            "error_budget": self.error_budget,
            "flagged": self.flagged,
            "note": self.note,
        }


def choose_discretization(
    eps: float, gamma: float, C: float, q: float, d: int, L: float, T: float
) -> DiscretizationPlan:
    """Mesh and step size meeting ``C (dt + d h^2) / q <= eps / 4`` with ``dt <= 1/(2 gamma)``.

    ``gamma >= 1``: ``dt = d h^2 = eps q / (8 C gamma)``.
    ``gamma < 1``: ``dt = eps q / (8 C gamma)``, ``d h^2 = eps q / (4C) - dt``.
    That split leaves nothing for ``h`` once ``gamma <= 1/2``; the plan then
    uses ``dt = d h^2 = eps q / (8 C)`` and is flagged.
    The real-valued ``h``, ``dt`` are rounded down onto ``L / N`` and ``T / N_t``.
    """
    if not 0 < eps <= 1:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if not C >= 1:
        raise ValueError("C must be >= 1")
    if not 0 < q <= 1:
        raise ValueError(f"q must lie in (0, 1], got {q}")
    base = eps * q / (8.0 * C * gamma)
    flagged = False
    note = ""
    if gamma >= 1:
        branch = "gamma>=1"
        dt_raw = base
        dh2 = base
    else:
        branch = "gamma<1"
        dt_raw = base
        dh2 = eps * q / (4.0 * C) - base
        if dh2 <= 0:
            branch = "gamma<1/2-fallback"
            dt_raw = dh2 = eps * q / (8.0 * C)
            flagged = True
            note = "gamma <= 1/2 leaves a non-positive spatial budget; used an even split"
    dt_raw = min(dt_raw, 1.0 / (2.0 * gamma))
    h_raw = math.sqrt(dh2 / d)
    N = math.ceil(L / h_raw)
    n_steps = math.ceil(T / dt_raw)
    return DiscretizationPlan(
        eps=eps, gamma=gamma, C=C, q=q, d=d, L=L, T=T, h_raw=h_raw, dt_raw=dt_raw,
        N=N, n_steps=n_steps, branch=branch, flagged=flagged, note=note,
    )


@dataclass
class EmulationResult:
    plan: DiscretizationPlan
    grid: Grid
    state: np.ndarray
    exact_state: np.ndarray
    block_norms: np.ndarray
    success_probability: float
    noise: float
    seed: int | None
    generator: str = "numpy.random.PCG64"
    samples_block: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    samples_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def n_steps(self) -> int:
        return self.plan.n_steps

    def block_probabilities(self) -> np.ndarray:
        sq = self.block_norms**2
        return sq / sq.sum()

    def empirical_success(self) -> float:
        if self.samples_block.size == 0:
            return math.nan
        return float(np.mean(self.samples_block >= self.n_steps))

    def histogram(self) -> np.ndarray:
        return np.bincount(self.samples_block, minlength=self.block_norms.size)

    def write_histogram(self, path, header: str | None = None) -> Path:
        path = Path(path)
        probs = self.block_probabilities()
        with path.open("w", newline="") as fh:
            if header:
                for line in header.splitlines():
                    fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["block", "count", "probability", "post_selected"])
            for k, c in enumerate(self.histogram()):
                w.writerow([k, int(c), f"{probs[k]:.17g}", int(k >= self.n_steps)])
        return path


def perturb_state(state: np.ndarray, size: float, rng: np.random.Generator) -> np.ndarray:
    """Unit vector at distance exactly ``size`` from the unit vector ``state``.

    Rotates ``state`` towards a random orthogonal direction; ``size`` must
    lie in ``[0, 2]``.
    """
    v = normalized(state)
    if size == 0:
        return v
    if not 0 < size <= 2:
        raise ValueError("perturbation size must lie in [0, 2]")
    u = rng.standard_normal(v.size)
    u -= (u @ v) * v
    u = normalized(u)
    phi = 2.0 * math.asin(size / 2.0)
    return math.cos(phi) * v + math.sin(phi) * u


def emulate(
    problem: FPEProblem,
    plan: DiscretizationPlan,
    noise: float = 0.0,
    n_samples: int = 0,
    seed: int | None = 0,
    tol: float = 1e-10,
) -> EmulationResult:
    """Solve the padded system for ``plan`` and post-select the terminal block.

    ``noise`` is the normalized-state error added to the extracted terminal
    state (``eps / 2`` emulates the solver's full allowance).
    Measurement samples are ``(block, node)`` pairs drawn from the squared
    amplitudes of the normalized exact solution.
    """
    grid = plan.grid()
    system = build_global(problem, grid, plan.dt, plan.n_steps, extended=True)
    x = solve_global(system, tol=tol)
    blocks = system.blocks_of(x)
    norms = np.linalg.norm(blocks, axis=1)
    nt = plan.n_steps
    p_succ = float(nt * norms[-1] ** 2 / np.sum(norms**2))
    exact_state = normalized(blocks[-1])
    rng = np.random.default_rng(seed)
    state = perturb_state(exact_state, noise, rng) if noise > 0 else exact_state
    sb = si = np.zeros(0, dtype=np.int64)
    if n_samples > 0:
        probs = (x / np.linalg.norm(x)) ** 2
        flat = rng.choice(probs.size, size=n_samples, p=probs / probs.sum())
        sb, si = np.divmod(flat, grid.n_points)
    return EmulationResult(
        plan=plan,
        grid=grid,
        state=state,
        exact_state=exact_state,
        block_norms=norms,
        success_probability=p_succ,
        noise=noise,
        seed=seed,
        samples_block=sb,
        samples_index=si,
    )


def fidelity_check(result: EmulationResult | np.ndarray, reference: np.ndarray) -> float:
    """``|| ref/||ref|| - state/||state|| ||_2`` on the same grid."""
    state = result.state if isinstance(result, EmulationResult) else np.asarray(result)
    reference = np.asarray(reference, dtype=float)
    if reference.shape != state.shape:
        raise ValueError(f"reference has shape {reference.shape}, state has {state.shape}")
    return float(np.linalg.norm(normalized(reference) - normalized(state)))


def estimate_q(problem: FPEProblem, grid: Grid, n_steps: int, target_h: float | None = None) -> float:
    """Heuristic lower estimate of ``||rho(T)||_2`` from a coarse run.

    The coarse terminal density's function L2 norm ``(h^d sum rho^2)^{1/2}``
    is rescaled to the probability-vector convention on a mesh of spacing
    ``target_h`` (default: the coarse spacing) and halved as a safety margin.
    """
    traj = evolve(problem, grid, problem.T / n_steps, n_steps)
    l2 = math.sqrt(grid.h**grid.d * float(np.sum(traj.final**2)))
    th = grid.h if target_h is None else target_h
    return 0.5 * l2 * th ** (grid.d / 2.0)
