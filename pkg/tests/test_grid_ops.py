import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from platelab.grid_ops import (BoundaryCondition, FactorizationError, Grid, GridError,
                               assemble_bilaplacian, assemble_dirichlet_laplacian, solve_shifted)


def test_grid_basics():
    g = Grid.uniform(9)
    assert g.h == (0.1,)
    assert g.size == 9 and g.cell == pytest.approx(0.1)
    g2 = Grid((1.2, 2.0), (5, 9))
    assert g2.size == 45 and g2.h == pytest.approx((0.2, 0.2))
    x = g2.coordinates()
    # axis 0 runs fastest
    assert x[1, 0] > x[0, 0] and x[1, 1] == x[0, 1]


@pytest.mark.parametrize("lengths,n", [((0.0,), (5,)), ((1.0,), (0,)), ((1, 1, 1), (4, 4, 4))])
def test_grid_rejects_bad_input(lengths, n):
    with pytest.raises(GridError):
        Grid(lengths, n)


def test_laplacian_matches_dense_stencil():
    g = Grid.uniform(6)
    a = assemble_dirichlet_laplacian(g).matrix.toarray()
    h2 = g.h[0] ** 2
    ref = (2 * np.eye(6) - np.eye(6, k=1) - np.eye(6, k=-1)) / h2
    np.testing.assert_allclose(a, ref)


@pytest.mark.parametrize("n", [50, 500])
def test_hinged_is_square_of_laplacian(n):
    g = Grid.uniform(n)
    a = assemble_dirichlet_laplacian(g).matrix
    b = assemble_bilaplacian(g, "hinged").matrix
    diff = (b - a @ a).tocsr()
    diff.eliminate_zeros()
    assert diff.nnz == 0


def test_hinged_is_square_in_2d():
    g = Grid((1.0, 1.5), (7, 11))
    a = assemble_dirichlet_laplacian(g).matrix
    b = assemble_bilaplacian(g, "hinged").matrix
    assert abs(b - a @ a).max() <= 1e-12 * abs(b).max()


def test_clamped_differs_only_next_to_boundary():
    g = Grid.uniform(8)
    h4 = g.h[0] ** 4
    a = assemble_dirichlet_laplacian(g).matrix
    b = assemble_bilaplacian(g, BoundaryCondition.CLAMPED).matrix
    diff = (b - a @ a).toarray() * h4
    expected = np.zeros((8, 8))
    expected[0, 0] = expected[-1, -1] = 2.0
    np.testing.assert_allclose(diff, expected, atol=1e-12)


@pytest.mark.parametrize("bc", ["clamped", "hinged"])
def test_operator_exactly_symmetric(bc):
    b = assemble_bilaplacian(Grid((1.0, 1.0), (9, 12)), bc).matrix
    assert (b - b.T).nnz == 0


def test_clamped_1d_five_point_stencil():
    b = assemble_bilaplacian(Grid.uniform(10), "clamped").matrix.toarray() * (1 / 11) ** 4
    assert np.allclose(b[5, 3:8], [1, -4, 6, -4, 1])
    assert b[0, 0] == pytest.approx(7.0)


def test_solve_shifted_residual_and_guard():
    op = assemble_bilaplacian(Grid.uniform(200), "clamped")
    rng = np.random.default_rng(0)
    f = rng.standard_normal(op.n)
    for mu in (0.0, 10.0, 1e4):
        u = solve_shifted(op, mu, f)
        r = op @ u + mu * u - f
        assert np.linalg.norm(r) <= 1e-10 * np.linalg.norm(f)
    with pytest.raises(ValueError):
        solve_shifted(op, -1.0, f)


def test_factorization_error_on_indefinite_shift():
    op = assemble_bilaplacian(Grid.uniform(20), "clamped")
    with pytest.raises((FactorizationError, np.linalg.LinAlgError)):
        op.cholesky(-1e9)


def test_export_triplets_roundtrip(tmp_path):
    op = assemble_bilaplacian(Grid((1.0, 1.0), (5, 6)), "clamped")
    p = tmp_path / "b.txt"
    op.export_triplets(p)
    rows, cols, vals = [], [], []
    for line in p.read_text().splitlines():
        r, c, v = line.split()
        rows.append(int(r)); cols.append(int(c)); vals.append(float(v))
    m = sp.csr_matrix((vals, (rows, cols)), shape=op.matrix.shape)
    assert (m - op.matrix).nnz == 0


@settings(max_examples=25, deadline=None)
@given(n=st.integers(5, 40), seed=st.integers(0, 10_000), bc=st.sampled_from(["clamped", "hinged"]))
def test_operator_positive_definite(n, seed, bc):
    op = assemble_bilaplacian(Grid.uniform(n), bc)
    v = np.random.default_rng(seed).standard_normal(op.n)
    assert v @ (op @ v) > 0
