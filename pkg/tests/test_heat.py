import numpy as np
import pytest
import scipy.sparse as sps
from hypothesis import given, settings
from hypothesis import strategies as st

from liehomog import HeatSemigroup, ValidationError, build_grid
from liehomog.coefficients import CoefficientField, fundamental_cell
from liehomog.forms import assemble
from liehomog.heat import (cc_distance, evolve, expm_action, kernel, kernel_comparison, l2_norm,
                           semigroup_convergence)

SMOOTH = "2 + sin(2*pi*x)"
SMOOTH_2D = [["2 + sin(2*pi*x1)*cos(2*pi*x2)", "0.3*sin(2*pi*x2)"], [None, "1.5 + 0.5*cos(2*pi*x1)"]]


def _form(expr, shape):
    c = CoefficientField.from_expression(expr, len(shape))
    return assemble(fundamental_cell("cubic", shape), c)


@pytest.fixture(scope="module")
def form1d():
    return _form(SMOOTH, (32,))


@pytest.fixture(scope="module")
def form2d():
    return _form(SMOOTH_2D, (12, 12))


def test_time_zero_is_identity(form1d):
    f0 = np.random.default_rng(0).standard_normal(32)
    np.testing.assert_array_equal(evolve(form1d, f0, 0.0).f, f0)
    with pytest.raises(ValidationError):
        evolve(form1d, f0, -1.0)


def test_krylov_matches_dense(form1d, form2d):
    for form in (form1d, form2d):
        f0 = np.random.default_rng(1).standard_normal(form.n_nodes)
        dense = evolve(form, f0, 0.05, method="dense").f
        krylov = evolve(form, f0, 0.05, method="krylov").f
        assert np.abs(dense - krylov).max() <= 1e-8


def test_expm_action_small_time_steps():
    H = np.diag(np.linspace(0, 5000, 200))
    v = np.ones(200)
    out = expm_action(sps.csr_matrix(H), v, 0.01)
    np.testing.assert_allclose(out, np.exp(-0.01 * np.diag(H)), atol=1e-10)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 1000), st.floats(0.001, 0.2), st.floats(0.001, 0.2))
def test_semigroup_properties(seed, s, t):
    form = _form(SMOOTH_2D, (8, 8))
    rng = np.random.default_rng(seed)
    f, g = rng.standard_normal((2, form.n_nodes))
    ft = evolve(form, f, t)
    assert ft.mass == pytest.approx(evolve(form, f, 0).mass, abs=1e-10)
    np.testing.assert_allclose(evolve(form, ft.f, s).f, evolve(form, f, s + t).f, atol=1e-8)
    lhs = np.dot(ft.f, g)
    rhs = np.dot(f, evolve(form, g, t).f)
    assert lhs == pytest.approx(rhs, abs=1e-9 * max(1.0, abs(lhs)))
    assert ft.norm() <= l2_norm(form, f) + 1e-12


def test_nonnegative_data_stays_nonnegative(form2d):
    f0 = np.zeros(form2d.n_nodes)
    f0[5] = 1.0
    assert evolve(form2d, f0, 0.02).f.min() > -1e-12


def test_kernel_symmetry_and_row_sums(form2d):
    K = kernel(form2d, 0.03)
    assert np.abs(K.values - K.values.T).max() <= 1e-9
    np.testing.assert_allclose(K.row_sums() * K.node_measure, 1.0, atol=1e-8)


def test_kernel_size_limit():
    form = _form("1", (129, 129))
    with pytest.raises(ValidationError):
        kernel(form, 1.0)


def test_constant_kernel_is_wrapped_gaussian():
    chat, t, n = 0.5, 0.2, 1024
    form = _form(str(chat), (n,))
    K = kernel(form, t).values[:, 0]
    x = np.arange(n) / n
    m = np.arange(-5, 6)[:, None]
    ref = np.sum(np.exp(-(x - m) ** 2 / (4 * chat * t)), axis=0) / np.sqrt(4 * np.pi * chat * t)
    assert np.abs(K - ref).max() <= 1e-6


def test_semigroup_convergence_constant_is_exact():
    table = semigroup_convergence("3", 0.1, eps_list=(1.0, 0.5), resolution=64, cell_resolution=16)
    assert max(table.errors) < 1e-10


def test_semigroup_convergence_validates_grid():
    with pytest.raises(ValidationError, match="8 nodes"):
        semigroup_convergence(SMOOTH, 0.1, eps_list=(1.0, 0.125), resolution=64)
    with pytest.raises(ValidationError, match="integer"):
        semigroup_convergence(SMOOTH, 0.1, eps_list=(0.3,), resolution=256)
    with pytest.raises(ValidationError):
        semigroup_convergence("sin(2*pi*x)", 0.1)


def test_semigroup_convergence_decreases_on_small_run():
    table = semigroup_convergence(SMOOTH, 0.1, eps_list=(1.0, 0.5, 0.25), resolution=256, cell_resolution=128)
    assert table.strictly_decreasing()


def test_kernel_comparison_constant_is_zero():
    diag = kernel_comparison("2", np.array([[2.0]]), t_list=(0.5, 1.0), periods=8, per_period=8)
    assert max(diag.supnorm_scaled + diag.norm_inf + diag.norm_1) < 1e-10
    assert len(diag.rows()) == 2


def test_cc_distance_flat_identity():
    n = 32
    cell = fundamental_cell("cubic", (n,))
    c = CoefficientField.constant(1.0, 1)
    d = cc_distance(c, cell).values
    x = np.arange(n) / n
    np.testing.assert_allclose(d, np.minimum(x, 1 - x), atol=1 / n)
    assert d[0] == 0


def test_cc_distance_scales_with_coefficient():
    cell = fundamental_cell("cubic", (16, 16))
    c = CoefficientField.from_expression(SMOOTH_2D, 2)
    c4 = CoefficientField(2, 2, sampler=lambda p: 4 * c(p))
    np.testing.assert_allclose(cc_distance(c4, cell).values, 0.5 * cc_distance(c, cell).values, atol=1e-10)


def test_cc_distance_triangle_and_symmetry():
    cell = fundamental_cell("cubic", (12, 12))
    c = CoefficientField.from_expression(SMOOTH_2D, 2)
    full = np.stack([cc_distance(c, cell, s).values for s in range(cell.node_points().shape[0])])
    np.testing.assert_allclose(full, full.T, atol=1e-12)
    rng = np.random.default_rng(5)
    i, j, k = rng.integers(0, len(full), (3, 1000))
    assert np.all(full[i, k] <= full[i, j] + full[j, k] + 1e-12)


@pytest.mark.parametrize("n", [8, 16])
@pytest.mark.parametrize("h", [0.25, 1 / 16])
def test_heisenberg_central_distance_scales_like_sqrt(n, h):
    g = build_grid(n, n, 2 * n * n)
    c = CoefficientField.constant(np.eye(2), 3, lattice="heisenberg")
    d = cc_distance(c, g).values
    target = np.ravel_multi_index((0, 0, int(round(h * g.nz))), g.shape)
    assert 0.5 <= d[target] / np.sqrt(h) <= 4.0


def test_estimator():
    est = HeatSemigroup(t=0.05, resolution=16, dim=1).fit(SMOOTH)
    F = np.random.default_rng(2).standard_normal((3, 16))
    out = est.transform(F)
    assert out.shape == (3, 16)
    np.testing.assert_allclose(out.sum(axis=1), F.sum(axis=1), atol=1e-10)
    assert est.kernel().values.shape == (16, 16)
    with pytest.raises(ValidationError):
        HeatSemigroup().transform(F)


def test_unit_torus_band_edge_regression():
    # on the unit torus the data is the k = 1 mode, which sits on the Brillouin
    # edge of the eps = 1/2 lattice; frozen values from a Fourier-Galerkin oracle
    table = semigroup_convergence(SMOOTH, 0.1, length=1.0, resolution=256, cell_resolution=256)
    np.testing.assert_allclose(table.errors, [2.5906e-4, 1.9052e-3, 1.0775e-4, 3.97e-5], rtol=2e-2)
    assert not table.strictly_decreasing()
