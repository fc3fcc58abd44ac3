"""Command-line front end.

Configuration is an INI file (``key = value`` under sections) with flag
overrides. Sections and keys::

    [run]            mode, seed, tol, layout (long|dense)
    [problem]        name, d, L, T and any catalog parameter (theta, sigma, ...)
    [discretization] N, n_steps
    [plan]           eps, gamma, C, q
    [converge]       spatial_N, spatial_dt, temporal_n_steps, temporal_N
    [emulate]        noise, samples
    [analyze]        eps

Exit status: 0 success, 2 configuration error, 3 numerical failure.
The output directory defaults to ``$CCFOKKER_OUT`` or ``./ccfokker_out``.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import math
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import analyze
from .assembly import assemble_step_matrix, export_coo
from .catalog import PROBLEMS, make_problem
from .exceptions import CCFokkerError
from .global_system import build_global, export_global
from .grid import Grid
from .model import FPEProblem, validate_assumptions
from .qlscca import choose_discretization, emulate, fidelity_check
from .stepper import evolve, write_trajectory

logger = logging.getLogger("ccfokker")

MODES = ("solve", "converge", "analyze", "emulate")
OUT_ENV = "CCFOKKER_OUT"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    mode: str
    problem: str
    d: int
    L: float
    T: float
    problem_params: dict = field(default_factory=dict)
    N: int | None = None
    n_steps: int | None = None
    eps: float | None = None
    gamma: float | None = None
    C: float = 1.0
    q: float | None = None
    tol: float = 1e-12
    seed: int = 0
    layout: str = "long"
    out: Path = Path("ccfokker_out")
    export_matrix: bool = False
    spatial_N: list[int] = field(default_factory=lambda: [16, 32, 64, 128])
    spatial_dt: float = 1e-4
    temporal_n_steps: list[int] = field(default_factory=lambda: [16, 32, 64, 128])
    temporal_N: int = 512
    noise: float = 0.0
    samples: int = 100_000

    def resolved(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            if k == "problem_params":
                for pk, pv in sorted(v.items()):
                    out[f"problem.{pk}"] = pv
            elif v is not None:
                out[k] = v
        return out

    def header(self) -> str:
        return "\n".join(f"{k} = {_fmt(v)}" for k, v in self.resolved().items())


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def _number(section, key, raw, kind=float, positive=True):
    try:
        v = kind(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid {kind.__name__}") from None
    if kind is float and not math.isfinite(v):
        raise ConfigError(f"[{section}] {key} must be finite")
    if positive and not v > 0:
        raise ConfigError(f"[{section}] {key} = {raw!r} must be positive")
    return v


def _int_list(section, key, raw):
    try:
        vals = [int(s) for s in str(raw).split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a comma-separated integer list") from None
    if not vals or any(v < 1 for v in vals):
        raise ConfigError(f"[{section}] {key} needs positive integers")
    return vals


KNOWN = {
    "run": {"mode", "seed", "tol", "layout"},
    "discretization": {"N", "n_steps"},
    "plan": {"eps", "gamma", "C", "q"},
    "converge": {"spatial_N", "spatial_dt", "temporal_n_steps", "temporal_N"},
    "emulate": {"noise", "samples"},
    "analyze": {"eps"},
}


def load_config(path: str | None, overrides: list[str], args: argparse.Namespace) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    if path is not None:
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, name, value.strip())

    for section in parser.sections():
        if section == "problem":
            continue
        if section not in KNOWN:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser[section]:
            if key not in KNOWN[section]:
                raise ConfigError(f"unknown key [{section}] {key}")

    def get(section, key, default=None):
        if parser.has_option(section, key):
            return parser.get(section, key)
        return default

    mode = args.mode or get("run", "mode")
    if mode not in MODES:
        raise ConfigError(f"[run] mode = {mode!r}; choose from {', '.join(MODES)}")
    if not parser.has_section("problem"):
        parser.add_section("problem")
    prob = dict(parser["problem"])
    name = prob.pop("name", None)
    if name not in PROBLEMS:
        raise ConfigError(f"[problem] name = {name!r}; choose from {', '.join(PROBLEMS)}")
    d = _number("problem", "d", prob.pop("d", "1"), int)
    L = _number("problem", "L", prob.pop("L", "1"))
    T = _number("problem", "T", prob.pop("T", "1"))
    params = {}
    for k, v in prob.items():
        if k == "init":
            params[k] = v
        else:
            params[k] = _number("problem", k, v, float, positive=False)

    cfg = RunConfig(mode=mode, problem=name, d=d, L=L, T=T, problem_params=params)
    cfg.seed = args.seed if args.seed is not None else _number("run", "seed", get("run", "seed", "0"), int, positive=False)
    cfg.tol = _number("run", "tol", get("run", "tol", "1e-12"))
    cfg.layout = get("run", "layout", "long")
    if cfg.layout not in ("long", "dense"):
        raise ConfigError(f"[run] layout = {cfg.layout!r}; choose long or dense")
    cfg.export_matrix = bool(args.export_matrix)
    cfg.out = Path(args.out or os.environ.get(OUT_ENV) or "ccfokker_out")

    explicit = parser.has_option("discretization", "N") or parser.has_option("discretization", "n_steps")
    planned = parser.has_option("plan", "eps")
    if explicit:
        for key in ("N", "n_steps"):
            if not parser.has_option("discretization", key):
                raise ConfigError(f"[discretization] {key} is required alongside the other explicit key")
        cfg.N = _number("discretization", "N", get("discretization", "N"), int)
        cfg.n_steps = _number("discretization", "n_steps", get("discretization", "n_steps"), int)
    if planned:
        cfg.eps = _number("plan", "eps", get("plan", "eps"))
        if get("plan", "gamma") is not None:
            cfg.gamma = _number("plan", "gamma", get("plan", "gamma"))
        cfg.C = _number("plan", "C", get("plan", "C", "1"))
        cfg.q = _number("plan", "q", get("plan", "q", "0.5"))
    if mode in ("solve", "analyze") and explicit == planned:
        raise ConfigError("give exactly one of [discretization] N/n_steps or [plan] eps")
    if mode == "emulate" and not planned:
        raise ConfigError("emulate mode needs [plan] eps")

    cfg.spatial_N = _int_list("converge", "spatial_N", get("converge", "spatial_N", "16,32,64,128"))
    cfg.temporal_n_steps = _int_list("converge", "temporal_n_steps", get("converge", "temporal_n_steps", "16,32,64,128"))
    cfg.spatial_dt = _number("converge", "spatial_dt", get("converge", "spatial_dt", "1e-4"))
    cfg.temporal_N = _number("converge", "temporal_N", get("converge", "temporal_N", "512"), int)
    cfg.noise = _number("emulate", "noise", get("emulate", "noise", "0"), positive=False)
    cfg.samples = _number("emulate", "samples", get("emulate", "samples", "100000"), int, positive=False)
    if mode == "analyze" and get("analyze", "eps") is not None:
        cfg.eps = _number("analyze", "eps", get("analyze", "eps"))
    return cfg


def build_problem(cfg: RunConfig) -> FPEProblem:
    params = dict(cfg.problem_params)
    if cfg.gamma is not None:
        params["gamma"] = cfg.gamma
    try:
        return make_problem(cfg.problem, cfg.d, cfg.L, cfg.T, **params)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"[problem] {exc}") from None


def _discretization(cfg: RunConfig, problem: FPEProblem) -> tuple[Grid, int, dict]:
    if cfg.N is not None:
        return Grid(cfg.d, cfg.N, cfg.L), cfg.n_steps, {}
    plan = choose_discretization(cfg.eps, problem.gamma, cfg.C, cfg.q, cfg.d, cfg.L, cfg.T)
    return plan.grid(), plan.n_steps, plan.as_dict()


def _write_kv(path: Path, header: str, values: dict) -> Path:
    with path.open("w") as fh:
        for line in header.splitlines():
            fh.write(f"# {line}\n")
        for k, v in values.items():
            fh.write(f"{k} = {_fmt(v)}\n")
    return path


def l2_error(grid: Grid, rho: np.ndarray, reference: np.ndarray) -> float:
    return math.sqrt(grid.h**grid.d * float(np.sum((rho - reference) ** 2)))


def run_solve(cfg: RunConfig) -> dict:
    problem = build_problem(cfg)
    grid, n_steps, plan = _discretization(cfg, problem)
    dt = cfg.T / n_steps
    traj = evolve(problem, grid, dt, n_steps, tol=cfg.tol)
    out = cfg.out
    header = cfg.header()
    files = {
        "trajectory": write_trajectory(traj, out / "trajectory.csv", cfg.layout, header),
    }
    diag = out / "diagnostics.csv"
    with diag.open("w", newline="") as fh:
        for line in header.splitlines():
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["step", "time", "mass", "min_entry", "residual"])
        for row in traj.diagnostics(cfg.tol):
            w.writerow([row["step"]] + [f"{row[k]:.17g}" for k in ("time", "mass", "min_entry", "residual")])
    files["diagnostics"] = diag
    summary = {
        "N": grid.N,
        "h": grid.h,
        "n_steps": n_steps,
        "dt": dt,
        "mass_drift": float(np.max(np.abs(traj.mass - traj.mass[0]))),
        "min_entry": float(traj.min_entry.min()),
        "max_residual": float(traj.residuals.max()),
    }
    summary.update({f"plan.{k}": v for k, v in plan.items()})
    if problem.exact is not None:
        summary["l2_error_vs_exact"] = l2_error(grid, traj.final, problem.exact(grid.points, cfg.T))
    files["summary"] = _write_kv(out / "summary.txt", header, summary)
    if cfg.export_matrix:
        files["matrix"] = export_coo(assemble_step_matrix(problem, grid, 0.0, dt).matrix, out / "step_matrix_0.coo", header)
    return files


def convergence_rows(problem: FPEProblem, cfg: RunConfig) -> tuple[list[dict], dict]:
    if problem.exact is None:
        raise ConfigError(f"problem {cfg.problem!r} has no analytic reference; converge needs ou or diffusion")
    rows = []
    orders = {}
    for ladder in ("spatial", "temporal"):
        rungs = []
        if ladder == "spatial":
            n_steps = max(1, round(cfg.T / cfg.spatial_dt))
            for N in cfg.spatial_N:
                rungs.append((Grid(cfg.d, N, cfg.L), n_steps))
        else:
            for nt in cfg.temporal_n_steps:
                rungs.append((Grid(cfg.d, cfg.temporal_N, cfg.L), nt))
        xs, es = [], []
        for grid, nt in rungs:
            traj = evolve(problem, grid, cfg.T / nt, nt, tol=cfg.tol)
            err = l2_error(grid, traj.final, problem.exact(grid.points, cfg.T))
            x = grid.h if ladder == "spatial" else cfg.T / nt
            order = None
            if xs:
                order = math.log(es[-1] / err) / math.log(xs[-1] / x)
            xs.append(x)
            es.append(err)
            rows.append({"ladder": ladder, "N": grid.N, "n_steps": nt, "step": x, "l2_error": err, "order": order})
        if len(xs) >= 2:
            orders[f"{ladder}_order"] = float(np.polyfit(np.log(xs), np.log(es), 1)[0])
        else:
            orders[f"{ladder}_order"] = None
    return rows, orders


def run_converge(cfg: RunConfig) -> dict:
    problem = build_problem(cfg)
    rows, orders = convergence_rows(problem, cfg)
    header = cfg.header()
    table = cfg.out / "convergence.csv"
    with table.open("w", newline="") as fh:
        for line in header.splitlines():
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["ladder", "N", "n_steps", "h_or_dt", "l2_error", "order"])
        for r in rows:
            order = "" if r["order"] is None else f"{r['order']:.17g}"
            w.writerow([r["ladder"], r["N"], r["n_steps"], f"{r['step']:.17g}", f"{r['l2_error']:.17g}", order])
    summary = {k: ("" if v is None else v) for k, v in orders.items()}
    return {"table": table, "summary": _write_kv(cfg.out / "summary.txt", header, summary)}


def run_analyze(cfg: RunConfig) -> dict:
    problem = build_problem(cfg)
    grid, n_steps, plan = _discretization(cfg, problem)
    dt = cfg.T / n_steps
    eps = cfg.eps if cfg.eps is not None else 0.1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assumptions = validate_assumptions(problem, grid, [n * dt for n in range(n_steps)][:4])
    report = analyze(problem, grid, dt, n_steps, eps=eps)
    header = cfg.header()
    files = {"table": report.write_table(cfg.out / "analysis.csv", header)}
    text = cfg.out / "analysis.txt"
    with text.open("w") as fh:
        for line in header.splitlines():
            fh.write(f"# {line}\n")
        fh.write(report.to_text())
        for k, v in assumptions.as_dict().items():
            fh.write(f"assumption.{k} = {_fmt(v)}\n")
        for k, v in plan.items():
            fh.write(f"plan.{k} = {_fmt(v)}\n")
    files["report"] = text
    if cfg.export_matrix:
        files.update(export_global(build_global(problem, grid, dt, n_steps), cfg.out, header))
    return files


def run_emulate(cfg: RunConfig) -> dict:
    problem = build_problem(cfg)
    plan = choose_discretization(cfg.eps, problem.gamma, cfg.C, cfg.q, cfg.d, cfg.L, cfg.T)
    result = emulate(problem, plan, noise=cfg.noise, n_samples=cfg.samples, seed=cfg.seed)
    header = cfg.header()
    values = {f"plan.{k}": v for k, v in plan.as_dict().items()}
    values.update(
        {
            "success_probability": result.success_probability,
            "empirical_success": result.empirical_success(),
            "samples": cfg.samples,
            "seed": cfg.seed,
            "generator": result.generator,
            "noise": cfg.noise,
        }
    )
    if problem.exact is not None:
        ref = problem.exact(result.grid.points, cfg.T)
        values["fidelity_error"] = fidelity_check(result, ref)
        values["fidelity_error_exact_solve"] = fidelity_check(result.exact_state, ref)
    files = {"result": _write_kv(cfg.out / "emulation.txt", header, values)}
    files["histogram"] = result.write_histogram(cfg.out / "histogram.csv", header)
    state = cfg.out / "state.csv"
    with state.open("w", newline="") as fh:
        for line in header.splitlines():
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["index", "amplitude"])
        for p, v in enumerate(result.state):
            w.writerow([p, f"{v:.17g}"])
    files["state"] = state
    if cfg.export_matrix:
        files.update(export_global(build_global(problem, plan.grid(), plan.dt, plan.n_steps, extended=True), cfg.out, header))
    return files


RUNNERS = {"solve": run_solve, "converge": run_converge, "analyze": run_analyze, "emulate": run_emulate}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ccfokker", description="Chang-Cooper Fokker-Planck solver and analysis")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./ccfokker_out)")
    p.add_argument("--export-matrix", action="store_true", help="also write coordinate-format matrices")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override a config entry")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.set, args)
        cfg.out.mkdir(parents=True, exist_ok=True)
        files = RUNNERS[cfg.mode](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CCFokkerError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for name, path in files.items():
        print(f"{name}: {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
