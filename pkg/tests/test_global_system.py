import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from ccfokker.assembly import assemble_step_matrix
from ccfokker.catalog import make_problem
from ccfokker.exceptions import SolverError
from ccfokker.global_system import (
    build_global,
    export_global,
    hermitian_dilation,
    recover_from_dilation,
    solve_global,
)
from ccfokker.grid import Grid
from ccfokker.model import discretize_initial
from ccfokker.stepper import evolve

from helpers import ou_benchmark, random_problem


def test_single_step_plain_system():
    p = ou_benchmark(T=0.1)
    g = Grid(1, 8, 1.0)
    s = build_global(p, g, 0.1, 1)
    np.testing.assert_array_equal(s.matrix.toarray(), assemble_step_matrix(p, g, 0.0, 0.1).toarray())
    np.testing.assert_array_equal(s.rhs, discretize_initial(p, g))


def test_extended_block_structure():
    p = ou_benchmark(T=0.2)
    g = Grid(1, 4, 1.0)
    s = build_global(p, g, 0.1, 2, extended=True)
    n = g.n_points
    assert s.n_blocks == 4 and s.shape == (4 * n, 4 * n)
    M = s.matrix.toarray()
    blk = lambda a, b: M[a * n:(a + 1) * n, b * n:(b + 1) * n]
    for k in (2, 3):
        np.testing.assert_array_equal(blk(k, k), np.eye(n))
        np.testing.assert_array_equal(blk(k, k - 1), -np.eye(n))
    np.testing.assert_array_equal(blk(1, 0), -np.eye(n))
    np.testing.assert_array_equal(blk(0, 1), 0)
    assert s.nnz_estimate == s.matrix.nnz


def test_matvec_rmatvec_match_matrix():
    rng = np.random.default_rng(0)
    g = Grid(2, 4, 1.0)
    p = random_problem(rng, 2, g)
    s = build_global(p, g, 0.1, 3, extended=True)
    x = rng.standard_normal(s.shape[0])
    np.testing.assert_allclose(s.matvec(x), s.matrix @ x, rtol=1e-14, atol=1e-14)
    np.testing.assert_allclose(s.rmatvec(x), s.matrix.T @ x, rtol=1e-14, atol=1e-14)


@pytest.mark.parametrize("d,N,nt", [(1, 32, 16), (2, 10, 8)])
def test_plain_solve_matches_stepper(d, N, nt):
    p = ou_benchmark(d=d)
    g = Grid(d, N, 1.0)
    traj = evolve(p, g, 1.0 / nt, nt)
    s = build_global(p, g, 1.0 / nt, nt)
    blocks = s.blocks_of(solve_global(s))
    rel = np.linalg.norm(blocks - traj.densities[1:], axis=1) / np.linalg.norm(traj.densities[1:], axis=1)
    assert rel.max() <= 1e-9


def test_operator_path_matches_materialized():
    p = ou_benchmark()
    g = Grid(1, 16, 1.0)
    s = build_global(p, g, 0.125, 8, extended=True)
    small = build_global(p, g, 0.125, 8, extended=True, nnz_cap=10)
    assert s.materialized and not small.materialized
    with pytest.raises(MemoryError):
        small.matrix
    np.testing.assert_allclose(solve_global(small), solve_global(s), rtol=1e-10, atol=1e-13)
    assert small.max_row_nnz == s.max_row_nnz == 4


def test_zero_rhs_gives_zero():
    s = build_global(ou_benchmark(), Grid(1, 8, 1.0), 0.25, 4)
    np.testing.assert_array_equal(solve_global(s, rhs=np.zeros(s.shape[0])), 0.0)


def test_extended_padded_blocks_equal():
    p = ou_benchmark()
    g = Grid(1, 24, 1.0)
    nt = 10
    s = build_global(p, g, 1.0 / nt, nt, extended=True)
    blocks = s.blocks_of(solve_global(s))
    ref = blocks[nt - 1]
    for k in range(nt, 2 * nt):
        assert np.linalg.norm(blocks[k] - ref) / np.linalg.norm(ref) <= 1e-9


def test_dilation_symmetry_spectrum_recovery():
    p = ou_benchmark(T=0.5)
    g = Grid(1, 7, 1.0)
    s = build_global(p, g, 0.125, 4)
    dil = hermitian_dilation(s)
    H = dil.matrix
    assert (H != H.T).nnz == 0
    sv = sla.svdvals(s.matrix.toarray())
    ev = np.sort(sla.eigvalsh(H.toarray()))
    np.testing.assert_allclose(ev, np.sort(np.concatenate([sv, -sv])), atol=1e-8)
    x = solve_global(s)
    y = solve_global(dil)
    np.testing.assert_allclose(recover_from_dilation(y), x, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(y[x.size:], 0.0, atol=1e-12)
    np.testing.assert_allclose(dil.block_solve(dil.rhs), y, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(dil.matvec(y), H @ y, atol=1e-13)
    with pytest.raises(ValueError):
        hermitian_dilation(dil)


def test_solve_global_residual_check():
    s = build_global(ou_benchmark(), Grid(1, 8, 1.0), 0.25, 4)
    with pytest.raises(SolverError):
        solve_global(s, tol=0.0, rhs=np.random.default_rng(1).standard_normal(s.shape[0]))


def test_build_validation_and_export(tmp_path):
    p = ou_benchmark()
    with pytest.raises(ValueError):
        build_global(p, Grid(1, 4, 1.0), 0.1, 0)
    s = build_global(p, Grid(1, 4, 1.0), 0.5, 2, extended=True)
    files = export_global(s, tmp_path / "new" / "dir", header="mode = analyze")
    text = files["structure"].read_text()
    assert "kind = extended" in text and "n_blocks = 4" in text
    assert files["matrix"].exists()
