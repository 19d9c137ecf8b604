import numpy as np
import pytest

from liehomog import HeisenbergHomogenizer, ValidationError, build_grid, heisenberg_homogenize, horizontal_fields
from liehomog.coefficients import CoefficientField
from liehomog.forms import assemble
from liehomog.heat import evolve
from liehomog.nilgrid import heisenberg_stencil, horizontal_moves, theta_function


def test_build_grid_sizes_and_divisibility():
    g = build_grid(8, 8, 8)
    assert g.n_nodes == 512
    with pytest.raises(ValidationError, match="multiple"):
        build_grid(8, 8, 12)
    with pytest.raises(ValidationError):
        build_grid(1, 8, 8)


def test_wraps_are_bijective():
    g = build_grid(4, 6, 8)
    idx = g.node_indices()
    for step in np.eye(3, dtype=int):
        assert np.unique(g.wrap(idx + step)).size == g.n_nodes
        assert np.unique(g.wrap(idx - step)).size == g.n_nodes


def test_y_wrap_applies_twist():
    g = build_grid(4, 4, 8)
    # node (x = 0.25, y = max, z = 0.5) stepped once in +y reaches y = 1 ~ (0.25, 0, 0.5 - 0.25)
    up = g.wrap([[1, 4, 4]])[0]
    assert np.unravel_index(up, g.shape) == (1, 0, 2)
    # and (0.25, -1/4, z) ~ (0.25, 3/4, z + 0.25) going down
    down = g.wrap([[1, -1, 4]])[0]
    assert np.unravel_index(down, g.shape) == (1, 3, 6)


def test_wrap_matches_continuous_identification():
    g = build_grid(4, 4, 16)
    cell = g.cell
    idx = np.array([[i, j, k] for i in range(-4, 8) for j in range(-4, 8) for k in (-3, 0, 5)])
    pts = idx / np.array(g.shape, dtype=float)
    q, _ = cell.reduce(pts)
    expect = np.rint(q * np.array(g.shape)).astype(int) % np.array(g.shape)
    np.testing.assert_array_equal(g.wrap(idx), np.ravel_multi_index(expect.T, g.shape))


def test_stencils_annihilate_constants():
    st = horizontal_fields(build_grid(8, 8, 16))
    one = np.ones(st.grid.n_nodes)
    for D in (st.A1, st.A2, st.A3, *st.quadrature.gradients):
        assert np.abs(D @ one).max() < 1e-12


def test_a2_of_y_is_one_inside():
    g = build_grid(8, 8, 16)
    st = horizontal_fields(g)
    y = g.lift(lambda x, y, z: y)
    mask = g.interior_mask()
    np.testing.assert_allclose((st.A2 @ y)[mask], 1.0, atol=1e-12)


def test_a1_matches_symbolic_value_inside():
    # f = z - x y / 2 gives A_1 f = -y/2 + y = y/2 away from all seams
    g = build_grid(8, 8, 16)
    st = horizontal_fields(g)
    f = g.lift(lambda x, y, z: z - x * y / 2)
    i, j, k = g.node_indices().T
    inner = (i > 0) & (i < g.nx - 1) & (j > 0) & (j < g.ny - 1) & (k > 0) & (k < g.nz - 1)
    y = g.nodes()[:, 1]
    np.testing.assert_allclose((st.A1 @ f)[inner], y[inner] / 2, atol=1e-12)


def test_bracket_converges_to_minus_dz():
    errs = []
    for n in (8, 16, 32):
        g = build_grid(n, n, n)
        st = horizontal_fields(g)
        x, y, z = g.nodes().T
        f, fz = theta_function(x, y, z)
        errs.append(np.abs(st.bracket() @ f + fz).max())
    assert errs[1] < errs[0] and errs[2] < errs[1]
    assert errs[2] / errs[1] < 0.6


def test_theta_function_is_invariant():
    rng = np.random.default_rng(3)
    x, y, z = rng.uniform(0, 1, (3, 50))
    v = theta_function(x, y, z)[0]
    np.testing.assert_allclose(theta_function(x + 1, y, z)[0], v, atol=1e-12)
    np.testing.assert_allclose(theta_function(x, y + 1, z + x)[0], v, atol=1e-12)
    np.testing.assert_allclose(theta_function(x, y, z + 1)[0], v, atol=1e-12)


def test_horizontal_moves_need_fine_z():
    with pytest.raises(ValidationError):
        horizontal_moves(build_grid(4, 4, 16))
    src, dst, a, b = horizontal_moves(build_grid(4, 4, 32))
    assert src.size == 8 * 4 * 4 * 32


def _form(expr, n=8):
    g = build_grid(n, n, n)
    c = CoefficientField.from_expression(expr, 3, m=2, lattice="heisenberg")
    return assemble(g.cell, c, stencil=heisenberg_stencil(g))


def test_assembled_operator_is_hermitian_psd_with_constant_kernel():
    form = _form([["2 + sin(2*pi*x)", "0.3"], [None, "1.5 + cos(2*pi*y)"]])
    K = form.matrix.toarray()
    np.testing.assert_allclose(K, K.T, atol=1e-12)
    lam = np.linalg.eigvalsh(K)
    assert lam[0] > -1e-10 and lam[1] > 1e-8
    assert np.abs(K @ np.ones(len(K))).max() < 1e-10


def test_constant_coefficient_is_reproduced():
    c0 = np.array([[2.0, 0.3], [0.3, 1.0]])
    c = CoefficientField.constant(c0, 3, lattice="heisenberg")
    C, chi, _ = heisenberg_homogenize(c, (8, 8, 8))
    np.testing.assert_allclose(C.matrix, c0, atol=1e-8)
    assert np.abs(chi.values).max() < 1e-8


def test_laminate_gives_harmonic_and_arithmetic_means():
    c = CoefficientField.from_expression([["2 + sin(2*pi*x)", "0"], [None, "2 + sin(2*pi*x)"]], 3,
                                         lattice="heisenberg")
    C, _, _ = heisenberg_homogenize(c, (16, 16, 16))
    np.testing.assert_allclose(C.matrix, [[np.sqrt(3), 0], [0, 2]], atol=1e-3)


def test_heisenberg_sandwich_and_estimator():
    expr = [["2 + cos(2*pi*x)*sin(2*pi*y)", "0.2*sin(2*pi*y)"], [None, "1.5 + 0.5*cos(2*pi*x)"]]
    est = HeisenbergHomogenizer(resolution=(8, 8, 8)).fit(expr)
    lower, upper = est.homogenized_.sandwich_gaps()
    assert lower > -1e-10 and upper > -1e-10
    np.testing.assert_allclose(est.homogenized_matrix_, est.homogenized_matrix_.T, atol=1e-12)
    assert est.get_params() == {"resolution": (8, 8, 8), "tol": 1e-10}
    k = np.array([[1.0, 0.0], [0.5, -1.0]])
    np.testing.assert_allclose(est.predict(k), np.einsum("ia,ab,ib->i", k, est.homogenized_matrix_, k))


def test_heisenberg_rejects_wrong_size():
    with pytest.raises(ValidationError):
        HeisenbergHomogenizer(resolution=(8, 8, 8)).fit(CoefficientField.constant(2.0, 3, m=3,
                                                                                  lattice="heisenberg"))


def test_heat_spreads_in_z():
    g = build_grid(8, 8, 8)
    form = _form("1")
    f0 = np.zeros(g.n_nodes)
    center = np.ravel_multi_index((4, 4, 4), g.shape)
    f0[center] = 1 / form.node_measure
    f = evolve(form, f0, 0.1).f
    assert f.sum() * form.node_measure == pytest.approx(1.0, abs=1e-12)
    marginal = f.reshape(g.shape).sum(axis=(0, 1)) * form.node_measure
    z = np.arange(g.nz) / g.nz - 0.5
    assert marginal @ z**2 > 1e-3
