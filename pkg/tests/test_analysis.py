import math

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from ccfokker.analysis import (
    analyze,
    bound_A,
    bound_A_inv,
    bound_L_inv,
    condition_and_query_estimate,
    inverse_norm2_estimate,
    kappa_bound,
    norm2_estimate,
    norm_sandwich,
    sdd_defects,
)
from ccfokker.assembly import assemble_step_matrix
from ccfokker.catalog import make_problem
from ccfokker.exceptions import HypothesisViolation
from ccfokker.global_system import build_global
from ccfokker.grid import Grid

from helpers import ou_benchmark, random_problem


def test_defects_random_and_diffusion():
    rng = np.random.default_rng(9)
    g = Grid(2, 6, 1.0)
    p = random_problem(rng, 2, g)
    dt = 0.3 / p.gamma
    row, col = sdd_defects(assemble_step_matrix(p, g, 0.0, dt))
    assert abs(col - 1) <= 1e-12
    assert row >= 1 - p.gamma * dt
    row, col = sdd_defects(assemble_step_matrix(make_problem("diffusion", d=2), g, 0.0, 0.01))
    assert abs(row - 1) <= 1e-12 and abs(col - 1) <= 1e-12


def test_row_defect_ou_large_step():
    p = ou_benchmark()
    dt = 0.4 / p.gamma
    row, _ = sdd_defects(assemble_step_matrix(p, Grid(1, 32, 1.0), 0.0, dt))
    # linear M makes the bound tight
    assert row >= 0.6 - 1e-12


def test_norm_estimates_simple():
    assert norm2_estimate(sp.identity(5)) == pytest.approx(1.0)
    assert norm2_estimate(sp.diags([1.0, 2.0, 3.0])) == pytest.approx(3.0)
    assert inverse_norm2_estimate(sp.diags([1.0, 2.0, 3.0])) == pytest.approx(1.0)


def test_norm_estimates_iterative_vs_dense():
    rng = np.random.default_rng(4)
    A = sp.random(50, 50, density=0.1, random_state=4) + sp.identity(50) * 3
    dense = A.toarray()
    sv = sla.svdvals(dense)
    assert norm2_estimate(A, dense_limit=0) == pytest.approx(sv[0], rel=1e-6)
    assert inverse_norm2_estimate(A, dense_limit=0) == pytest.approx(1 / sv[-1], rel=1e-6)
    g = Grid(1, 10, 1.0)
    s = build_global(ou_benchmark(), g, 0.25, 4)
    dense_inv = inverse_norm2_estimate(s)
    assert inverse_norm2_estimate(s, dense_limit=0) == pytest.approx(dense_inv, rel=1e-6)
    assert norm2_estimate(s.as_operator()) == pytest.approx(norm2_estimate(s), rel=1e-6)


def test_bound_A_pure_diffusion():
    for d in (1, 2, 3):
        g = Grid(d, 4, 1.0)
        dt = 0.01
        A = assemble_step_matrix(make_problem("diffusion", d=d), g, 0.0, dt)
        bound, Q, C = bound_A(A)
        assert Q == pytest.approx(2 * d)
        assert C == pytest.approx(0.0, abs=1e-12)
        assert bound == pytest.approx(4 * d * dt / g.h**2 + 1)
        assert norm2_estimate(A) <= bound


def test_sandwich_example():
    A = assemble_step_matrix(make_problem("diffusion"), Grid(1, 2, 1.0), 0.0, 0.1)
    assert norm_sandwich(A) == pytest.approx(2.6)
    assert norm2_estimate(A) <= 2.6


def test_norm_bounds_random():
    rng = np.random.default_rng(21)
    for d, N in [(1, 12), (2, 6), (3, 3)]:
        g = Grid(d, N, 1.0)
        for _ in range(5):
            p = random_problem(rng, d, g)
            dt = rng.uniform(0.05, 0.4) / p.gamma
            A = assemble_step_matrix(p, g, 0.0, dt)
            assert norm2_estimate(A) <= bound_A(A)[0]
            assert inverse_norm2_estimate(A) <= bound_A_inv(p.gamma, dt)


def test_bound_A_inv_values():
    assert bound_A_inv(1.0, 0.0) == 1.0
    assert bound_A_inv(1.0, 0.75) == pytest.approx(2.0)
    with pytest.raises(HypothesisViolation):
        bound_A_inv(1.0, 1.0)


def test_bound_L_inv_monotone_and_chained():
    vals = [bound_L_inv(1.0, 1.0 / nt, 1.0) for nt in (4, 8, 16, 32)]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    with pytest.raises(HypothesisViolation):
        bound_L_inv(1.0, 0.5, 1.0)
    p = ou_benchmark(T=0.25)
    g = Grid(1, 16, 1.0)
    s = build_global(p, g, 0.25, 1)
    inv = inverse_norm2_estimate(s)
    assert inv == pytest.approx(inverse_norm2_estimate(s.steps[0]))
    assert inv <= bound_A_inv(p.gamma, 0.25) <= bound_L_inv(p.gamma, 0.25, 0.25)


def test_kappa_formula():
    assert kappa_bound(1.0, 1.0, 0.1, 0.5, 1, 0.0) == pytest.approx(3 * math.e * (10 + 8))


@pytest.mark.parametrize("d,N,nt", [(1, 32, 32), (2, 8, 8)])
def test_condition_estimate_ou(d, N, nt):
    p = ou_benchmark(d=d)
    s = build_global(p, Grid(d, N, 1.0), 1.0 / nt, nt, extended=True)
    est = condition_and_query_estimate(s, 0.1, p.gamma)
    assert est.kappa <= est.kappa_bound
    assert est.sparsity == 2 * d + 2
    assert est.log2_inv_eps == 4
    assert est.queries == pytest.approx(est.sparsity * est.kappa * 4)
    with pytest.raises(ValueError):
        condition_and_query_estimate(s, 1.5, p.gamma)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_extended_sparsity(d):
    s = build_global(make_problem("ou", d=d), Grid(d, 4, 1.0), 0.25, 4, extended=True)
    assert s.max_row_nnz == 2 * d + 2


def test_analyze_report(tmp_path):
    rep = analyze(ou_benchmark(), Grid(1, 16, 1.0), 0.125, 8, eps=0.1)
    assert rep.violations == []
    assert rep.gamma_dt == pytest.approx(0.125)
    assert len(rep.steps) == 8
    path = rep.write_table(tmp_path / "a.csv", header="x = 1")
    lines = path.read_text().splitlines()
    assert lines[0] == "# x = 1"
    assert lines[1] == "quantity,empirical,bound,hypothesis_ok,exceeds"
    assert "kappa = " in rep.to_text()
