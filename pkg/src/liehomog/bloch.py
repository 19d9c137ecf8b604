"""Bloch-Floquet fibers of ``-div(c grad)`` with unit-periodic ``c`` on ``R^d``.

The fiber at quasimomentum ``theta`` acts on functions with
``u(x + e_j) = exp(i theta_j) u(x)``.  The default discretization is
plane-wave Galerkin in the basis ``exp(i (2 pi k + theta) . x)``,
``k`` in a box of ``n`` wave numbers per axis, with the coefficient's Fourier
series taken by FFT; for ``c = const`` it is exact.  ``scheme='fd'`` uses the
corner stencil of :mod:`liehomog.forms` with the boundary couplings
multiplied by ``exp(+-i theta_j)``, which makes the union of fibers over
``theta = 2 pi m / N`` coincide with the grid operator on ``N`` periods.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .coefficients import fundamental_cell
from .exceptions import ValidationError
from .forms import assemble, flat_stencil
from .homogenizer import homogenize
from .validation import check_field, check_resolution, check_theta

__all__ = [
    "BlochFiber",
    "BandTable",
    "fiber_operator",
    "band_structure",
    "spectral_refinement",
    "limit_set",
    "refinement_gap",
    "BlochBands",
]


@dataclass(frozen=True, eq=False)
class BlochFiber:
    theta: np.ndarray
    matrix: np.ndarray
    eigenvalues: np.ndarray
    scheme: str


@dataclass(frozen=True, eq=False)
class BandTable:
    """``values[s, b]`` is band ``b`` at path sample ``thetas[s]``."""

    thetas: np.ndarray
    values: np.ndarray

    def max_jump(self):
        return float(np.abs(np.diff(self.values, axis=0)).max()) if len(self.values) > 1 else 0.0

    def rows(self):
        return [tuple(th) + tuple(v) for th, v in zip(self.thetas, self.values)]


def _wave_numbers(n, d):
    ks = np.arange(n) - n // 2
    return np.stack(np.meshgrid(*([ks] * d), indexing="ij"), -1).reshape(-1, d)


def _fourier_coefficients(field, n):
    """``c_hat[m]`` for index offsets ``m`` in ``[-n, n)^d`` (FFT of a ``2n`` midpoint grid)."""
    d = field.dim
    shape = (2 * n,) * d
    vals = field.sample(shape)
    axes = tuple(range(d))
    coef = np.fft.fftn(vals, axes=axes) / np.prod(shape)
    # midpoint sampling shifts the phase by half a cell
    freqs = np.meshgrid(*([np.fft.fftfreq(2 * n, 1.0 / (2 * n))] * d), indexing="ij")
    shift = np.exp(1j * np.pi * sum(f for f in freqs) / (2 * n))
    return coef * shift[(...,) + (None, None)]


def _fourier_matrix(field, theta, n):
    d, m = field.dim, field.m
    if m != d:
        raise ValidationError(f"Bloch fibers need a {d} x {d} coefficient, got {m} x {m}")
    ks = _wave_numbers(n, d)
    coef = _fourier_coefficients(field, n)
    q = 2 * np.pi * ks + theta
    diff = ks[:, None, :] - ks[None, :, :]
    idx = tuple(np.mod(diff[..., k], 2 * n) for k in range(d))
    block = coef[idx]  # (K, K, d, d)
    H = np.einsum("ja,jkab,kb->jk", q, block, q)
    return 0.5 * (H + H.conj().T)


def _fd_matrix(field, theta, n):
    cell = fundamental_cell("cubic", (n,) * field.dim)
    form = assemble(cell, field, stencil=flat_stencil(cell, theta))
    H = form.operator.toarray()
    return 0.5 * (H + H.conj().T)


def fiber_operator(c, theta, n=64, scheme="fourier", dim=None):
    """Hermitian fiber matrix at ``theta`` and its ordered eigenvalues."""
    field = check_field(c, "cubic", dim)
    if any(p != 1.0 for p in field.period):
        raise ValidationError("Bloch fibers are defined for unit-periodic fields")
    theta = check_theta(theta, field.dim)
    if scheme == "fourier":
        n = check_resolution(n, 1, minimum=2)[0]
        H = _fourier_matrix(field, theta, n)
    elif scheme == "fd":
        n = check_resolution(n, 1)[0]
        H = _fd_matrix(field, theta, n)
    else:
        raise ValidationError(f"unknown scheme {scheme!r}; expected 'fourier' or 'fd'")
    lam = np.linalg.eigvalsh(H)
    return BlochFiber(theta, H, lam, scheme)


def band_structure(c, path, n_max=6, n=64, scheme="fourier", dim=None):
    field = check_field(c, "cubic", dim)
    path = np.asarray(path, dtype=float)
    if path.ndim == 1:
        path = path[:, None]
    if path.ndim != 2 or path.shape[1] != field.dim or len(path) == 0:
        raise ValidationError(f"path must be a nonempty sequence of {field.dim}-vectors")
    vals = []
    for th in path:
        lam = fiber_operator(field, th, n, scheme).eigenvalues
        if lam.size < n_max:
            raise ValidationError(f"only {lam.size} eigenvalues available, {n_max} requested")
        vals.append(lam[:n_max])
    return BandTable(path, np.array(vals))


def spectral_refinement(c, theta, N, M=5, n=64, scheme="fourier", dim=None):
    """First ``M`` sorted values of ``N^2 lambda_k(w)`` over the ``N^d`` roots ``w^N = e^{i theta}``.

    The roots have quasimomenta ``(theta + 2 pi m) / N`` with ``m`` in ``{0, ..., N-1}^d``.
    """
    field = check_field(c, "cubic", dim)
    theta = check_theta(theta, field.dim)
    N = int(N)
    if N < 1:
        raise ValidationError(f"N must be a positive integer, got {N}")
    vals = []
    for m in itertools.product(range(N), repeat=field.dim):
        th = (theta + 2 * np.pi * np.asarray(m)) / N
        vals.append(fiber_operator(field, th, n, scheme).eigenvalues)
    vals = np.sort(np.concatenate(vals)) * N**2
    if M > vals.size:
        raise ValidationError(f"requested {M} values but only {vals.size} were computed")
    return vals[:M]


def limit_set(C_hat, theta, M=5, n_box=None):
    """First ``M`` sorted values of ``<(2 pi n - theta) | C_hat (2 pi n - theta)>``, ``n`` in ``Z^d``.

    Multiplicities are kept.  The box ``|n_i| <= n_box`` grows until the
    ``M``-th value is stable.
    """
    C_hat = np.atleast_2d(np.asarray(C_hat))
    d = C_hat.shape[0]
    theta = check_theta(theta, d)

    def values(box):
        ns = _wave_numbers(2 * box + 1, d)
        k = 2 * np.pi * ns - theta
        return np.sort(np.real(np.einsum("ia,ab,ib->i", k, C_hat, k)))

    box = max(1, int(n_box or 1))
    while True:
        cur = values(box)
        nxt = values(box + 1)
        if cur.size >= M and np.array_equal(cur[:M], nxt[:M]):
            return cur[:M]
        box += 1
        if n_box is not None and box > 64 * n_box:
            raise ValidationError("limit set did not stabilize")


def refinement_gap(values, limit, floor=1e-12):
    """Max relative difference of two sorted lists."""
    values, limit = np.asarray(values), np.asarray(limit)
    return float(np.max(np.abs(values - limit) / np.maximum(np.abs(limit), floor)))


class BlochBands(BaseEstimator):
    """Band structure estimator.

    ``fit(c)`` validates the field and computes ``homogenized_matrix_``;
    ``transform(thetas)`` returns the lowest ``n_bands`` fiber eigenvalues at
    each quasimomentum; ``predict(thetas)`` returns the homogenized
    parabola ``<theta | C_hat theta>`` that the bottom band matches to
    second order at ``theta = 0``.
    """

    def __init__(self, n_bands=6, resolution=64, scheme="fourier", dim=None, cell_resolution=256):
        self.n_bands = n_bands
        self.resolution = resolution
        self.scheme = scheme
        self.dim = dim
        self.cell_resolution = cell_resolution

    def fit(self, X, y=None):
        field = check_field(X, "cubic", self.dim)
        C, _, _ = homogenize(field, check_resolution(self.cell_resolution, field.dim))
        self.field_ = field
        self.homogenized_matrix_ = C.matrix
        self.n_features_in_ = field.dim
        return self

    def _check(self, X):
        if not hasattr(self, "field_"):
            raise ValidationError("BlochBands is not fitted yet; call fit first")
        X = np.asarray(X, dtype=float)
        return X[:, None] if X.ndim == 1 and self.n_features_in_ == 1 else np.atleast_2d(X)

    def transform(self, X):
        return band_structure(self.field_, self._check(X), self.n_bands, self.resolution, self.scheme).values

    def predict(self, X):
        X = self._check(X)
        return np.real(np.einsum("ia,ab,ib->i", X, self.homogenized_matrix_, X))

    def refine(self, theta, N, M=5):
        return spectral_refinement(self.field_, theta, N, M, self.resolution, self.scheme)

    def limit(self, theta, M=5):
        return limit_set(self.homogenized_matrix_, theta, M)
