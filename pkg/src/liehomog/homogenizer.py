"""Cell problems and the homogenized matrix.

For each horizontal direction ``i`` the corrector ``chi_i`` is the periodic
minimizer of ``h(chi + y_i)``; since ``A_k y_i = delta_ki`` the coordinate
function only enters as a constant source.  With the correctors in hand

    C_hat_ij = |Y|^{-1} sum_q w_q (A chi_i + e_i)^H c (A chi_j + e_j).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .coefficients import CoefficientField, fundamental_cell
from .exceptions import ValidationError
from .forms import DiscreteForm, assemble
from .nilgrid import build_grid, heisenberg_stencil
from .solvers import conjugate_gradient
from .validation import check_field, check_resolution

logger = logging.getLogger(__name__)

__all__ = [
    "CorrectorSet",
    "HomogenizedMatrix",
    "solve_cell_problem",
    "homogenized_matrix",
    "heisenberg_homogenize",
    "richardson",
    "random_competitors",
    "PeriodicHomogenizer",
    "HeisenbergHomogenizer",
]

CG_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class CorrectorSet:
    """Mean-zero periodic correctors, one row per horizontal direction."""

    values: np.ndarray
    iterations: tuple
    residuals: tuple
    shape: tuple

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, i):
        return self.values[i]

    def grid(self, i):
        return self.values[i].reshape(self.shape)


@dataclass(frozen=True, eq=False)
class HomogenizedMatrix:
    """Constant hermitian positive definite matrix ``C_hat``."""

    matrix: np.ndarray
    mu: float
    average: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    @property
    def eigenvalues(self):
        return np.linalg.eigvalsh(self.matrix)

    def quadratic(self, k):
        """``<k | C_hat k>`` for one vector or a stack of them."""
        k = np.asarray(k)
        return np.real(np.einsum("...i,ij,...j->...", k.conj(), self.matrix, k))

    def sandwich_gaps(self):
        """Smallest eigenvalues of ``C_hat - mu I`` and ``average - C_hat``."""
        m = self.matrix.shape[0]
        lower = float(np.linalg.eigvalsh(self.matrix - self.mu * np.eye(m))[0])
        upper = float(np.linalg.eigvalsh(self.average - self.matrix)[0])
        return lower, upper


def solve_cell_problem(form: DiscreteForm, tol=CG_TOL, max_iter=None):
    """Solve ``K chi_i = -sum_k A_k^H (w c_ki)`` for every direction in the mean-zero gauge."""
    m = form.stencil.n_fields
    sols, its, res = [], [], []
    for i in range(m):
        rhs = -form.source(i)
        chi, it, r = conjugate_gradient(form.matrix, rhs, tol=tol, max_iter=max_iter)
        logger.debug("cell problem %d: %d CG iterations, residual %.2e", i, it, r)
        sols.append(chi)
        its.append(it)
        res.append(r)
    values = np.stack(sols)
    if np.iscomplexobj(values) and np.allclose(values.imag, 0):
        values = values.real.copy()
    return CorrectorSet(values, tuple(its), tuple(res), form.shape)


def homogenized_matrix(correctors: CorrectorSet, form: DiscreteForm):
    """Quadrature of the corrected energies; exactly hermitian."""
    C = form.competitor_matrix(correctors.values)
    if np.allclose(C.imag, 0, atol=1e-15):
        C = C.real.copy()
    w = form.stencil.weights
    average = np.einsum("q,qkl->kl", w, form.coeffs) / form.measure
    average = 0.5 * (average + average.conj().T)
    return HomogenizedMatrix(C, float(form.mu), average)


def random_competitors(form, count=20, seed=0, scale=1.0):
    """Seeded random periodic competitor tuples ``g``, shape ``(count, m, N)``."""
    rng = np.random.default_rng(seed)
    m = form.stencil.n_fields
    return scale * rng.standard_normal((count, m, form.n_nodes))


def competitor_gaps(form, C_hat, competitors):
    """Smallest eigenvalue of ``C(g) - C_hat`` for each competitor tuple."""
    C_hat = np.asarray(C_hat)
    return np.array([np.linalg.eigvalsh(form.competitor_matrix(g) - C_hat)[0] for g in competitors])


def richardson(values, ratio=2.0, orders=(2, 4)):
    """Repeated Richardson extrapolation of a sequence computed at ``h, h/r, h/r^2, ...``.

    Each pass eliminates ``h^p`` for the next order in ``orders``; returns the
    final extrapolated value (array-valued entries are supported).
    """
    vals = [np.asarray(v, dtype=float) for v in values]
    if len(vals) < 2:
        raise ValidationError("Richardson extrapolation needs at least two values")
    for p in orders:
        if len(vals) < 2:
            break
        f = ratio**p
        vals = [(f * fine - coarse) / (f - 1) for coarse, fine in zip(vals[:-1], vals[1:])]
    return vals[-1]


def homogenize(c, resolution, tol=CG_TOL):
    """Assemble, solve and integrate on the flat period cell; returns ``(C_hat, correctors, form)``."""
    cell = fundamental_cell("cubic", resolution, period=getattr(c, "period", None))
    form = assemble(cell, c)
    chi = solve_cell_problem(form, tol=tol)
    return homogenized_matrix(chi, form), chi, form


def heisenberg_homogenize(c, resolution=(16, 16, 16), tol=CG_TOL):
    """Homogenized ``2 x 2`` matrix of ``sum_ij A_i^* c_ij A_j`` on the Heisenberg nilmanifold.

    ``c`` is a Heisenberg-lattice field (unit scale) or a grid tensor of
    shape ``(n_x, n_y, n_z, 2, 2)``.  Returns ``(C_hat, correctors, form)``.
    """
    if isinstance(c, CoefficientField):
        if c.lattice != "heisenberg" or c.scale != 1.0:
            raise ValidationError("expected a unit-scale Heisenberg-lattice field")
    grid = build_grid(*resolution)
    form = assemble(grid.cell, c, stencil=heisenberg_stencil(grid))
    chi = solve_cell_problem(form, tol=tol)
    return homogenized_matrix(chi, form), chi, form


def _k_vectors(X, m):
    X = np.asarray(X)
    if X.ndim == 1 and m == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] != m:
        raise ValidationError(f"expected wave vectors of shape (n, {m}), got {X.shape}")
    return X


class PeriodicHomogenizer(BaseEstimator):
    """Estimator wrapper around the flat cell problem.

    ``fit(c)`` takes a coefficient field, an expression string (with
    ``dim``) or a grid tensor and learns ``homogenized_matrix_``;
    ``predict(k)`` returns the symbol ``<k | C_hat k>`` of the homogenized
    operator and ``transform(k)`` the flux ``C_hat k``.

    With ``extrapolate=True`` the matrix is computed at ``resolution``,
    twice and four times it and Richardson-extrapolated.
    """

    def __init__(self, resolution=64, dim=None, tol=CG_TOL, extrapolate=False):
        self.resolution = resolution
        self.dim = dim
        self.tol = tol
        self.extrapolate = extrapolate

    def fit(self, X, y=None):
        field = check_field(X, "cubic", self.dim)
        res = check_resolution(self.resolution, field.dim)
        if self.extrapolate:
            mats = []
            for f in (1, 2, 4):
                C, chi, form = homogenize(field, tuple(f * n for n in res), self.tol)
                mats.append(C.matrix)
            mat = richardson(mats)
            C = HomogenizedMatrix(0.5 * (mat + mat.conj().T), C.mu, C.average)
        else:
            C, chi, form = homogenize(field, res, self.tol)
        self.field_ = field
        self.form_ = form
        self.correctors_ = chi
        self.homogenized_ = C
        self.homogenized_matrix_ = C.matrix
        self.mu_ = C.mu
        self.n_features_in_ = field.m
        return self

    def _check_fitted(self):
        if not hasattr(self, "homogenized_matrix_"):
            raise ValidationError(f"{type(self).__name__} is not fitted yet; call fit first")

    def predict(self, X):
        self._check_fitted()
        return self.homogenized_.quadratic(_k_vectors(X, self.n_features_in_))

    def transform(self, X):
        self._check_fitted()
        return _k_vectors(X, self.n_features_in_) @ self.homogenized_matrix_.T

    def competitor_gaps(self, count=20, seed=0):
        self._check_fitted()
        return competitor_gaps(self.form_, self.homogenized_matrix_,
                               random_competitors(self.form_, count, seed))


class HeisenbergHomogenizer(PeriodicHomogenizer):
    """Same interface on the Heisenberg nilmanifold with ``d_1 = 2`` horizontal fields."""

    def __init__(self, resolution=(16, 16, 16), tol=CG_TOL):
        self.resolution = resolution
        self.tol = tol

    def fit(self, X, y=None):
        field = check_field(X, "heisenberg", 3)
        if field.m != 2:
            raise ValidationError(f"Heisenberg coefficients are 2 x 2, got {field.m} x {field.m}")
        res = check_resolution(self.resolution, 3)
        C, chi, form = heisenberg_homogenize(field, res, self.tol)
        self.field_ = field
        self.form_ = form
        self.correctors_ = chi
        self.homogenized_ = C
        self.homogenized_matrix_ = C.matrix
        self.mu_ = C.mu
        self.n_features_in_ = 2
        return self
