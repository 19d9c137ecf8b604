"""Discrete quadratic forms ``h(f) = sum_ij <A_i f | c_ij A_j f>`` on periodic grids.

Derivatives are taken cell by cell: every grid cell carries ``2^d``
quadrature points, one per corner, and at the corner ``s`` the derivative
along axis ``k`` is the difference quotient along the cell edge through that
corner.  The coefficient is sampled once per cell at its midpoint.  In one
dimension this is exactly the staggered stencil
``-(c_{i+1/2}(u_{i+1} - u_i) - c_{i-1/2}(u_i - u_{i-1})) / h^2``; in higher
dimension the form is positive semidefinite with only constants in its
kernel, and laminate coefficients are reproduced exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .coefficients import ellipticity, CoefficientField
from .exceptions import EllipticityError, ValidationError

__all__ = ["Stencil", "DiscreteForm", "corner_stencil", "flat_stencil", "assemble"]

MIN_RESOLUTION = 4


@dataclass(frozen=True, eq=False)
class Stencil:
    """Discrete horizontal derivatives at the quadrature points.

    ``gradients[k]`` is a sparse ``(Q, N)`` matrix taking nodal values to the
    ``k``-th field derivative at each quadrature point; ``weights`` are the
    quadrature weights (summing to the cell measure) and ``cell_of_point``
    maps each quadrature point to the raveled grid cell whose coefficient it
    uses.
    """

    shape: tuple
    gradients: tuple
    weights: np.ndarray
    cell_of_point: np.ndarray
    measure: float

    @property
    def n_nodes(self):
        return int(np.prod(self.shape))

    @property
    def n_fields(self):
        return len(self.gradients)


def _ravel(idx, shape):
    return np.ravel_multi_index(tuple(idx.T), shape)


def corner_stencil(shape, spacing, index_map):
    """Per-axis corner differences on a grid with arbitrary wrap rules.

    ``index_map(unwrapped)`` takes integer node coordinates of shape
    ``(M, d)``, possibly outside the grid, and returns ``(flat_index,
    phase)`` with ``phase`` either ``None`` or a complex array multiplying the
    nodal value (Bloch conditions).
    Returns the list of ``(Q, N)`` axis-difference matrices, the cell index of
    each quadrature point and the cell-midpoint chart coordinates.
    """
    shape = tuple(int(n) for n in shape)
    d = len(shape)
    n_cells = int(np.prod(shape))
    cells = np.stack(np.meshgrid(*[np.arange(n) for n in shape], indexing="ij"), -1).reshape(-1, d)
    corners = list(itertools.product((0, 1), repeat=d))
    rows = np.arange(n_cells)
    mats = [[] for _ in range(d)]
    for s in corners:
        s = np.array(s)
        for k in range(d):
            lo, hi = s.copy(), s.copy()
            lo[k], hi[k] = 0, 1
            i_lo, p_lo = index_map(cells + lo)
            i_hi, p_hi = index_map(cells + hi)
            v_hi = np.full(n_cells, 1.0 / spacing[k]) if p_hi is None else p_hi / spacing[k]
            v_lo = np.full(n_cells, -1.0 / spacing[k]) if p_lo is None else -p_lo / spacing[k]
            m = sps.coo_matrix(
                (np.concatenate([v_hi, v_lo]), (np.concatenate([rows, rows]), np.concatenate([i_hi, i_lo]))),
                shape=(n_cells, n_cells),
            ).tocsr()
            mats[k].append(m)
    gradients = [sps.vstack(blocks, format="csr") for blocks in mats]
    cell_of_point = np.tile(np.arange(n_cells), len(corners))
    centers = (cells + 0.5) * np.asarray(spacing)
    return gradients, cell_of_point, np.tile(centers, (len(corners), 1))


def flat_stencil(cell, theta=None):
    """Gradient stencil on the flat torus; ``theta`` imposes ``u(x + L_j e_j) = e^{i theta_j} u(x)``."""
    shape = cell.resolution
    if theta is not None:
        theta = np.broadcast_to(np.asarray(theta, dtype=float), (len(shape),))

    def index_map(idx):
        wraps = np.floor_divide(idx, shape)
        flat = _ravel(np.mod(idx, shape), shape)
        if theta is None:
            return flat, None
        return flat, np.exp(1j * (wraps @ theta))

    grads, cop, _ = corner_stencil(shape, cell.spacing, index_map)
    n_q = grads[0].shape[0]
    weights = np.full(n_q, cell.measure / n_q)
    return Stencil(shape, tuple(grads), weights, cop, cell.measure)


@dataclass(frozen=True, eq=False)
class DiscreteForm:
    """Sparse hermitian PSD matrix of ``h`` together with its ingredients."""

    matrix: sps.csr_matrix
    stencil: Stencil
    coeffs: np.ndarray
    mu: float
    lattice: str = "cubic"

    @property
    def shape(self):
        return self.stencil.shape

    @property
    def n_nodes(self):
        return self.stencil.n_nodes

    @property
    def measure(self):
        return self.stencil.measure

    @property
    def node_measure(self):
        return self.stencil.measure / self.stencil.n_nodes

    @property
    def operator(self):
        """Generator ``H`` with ``<f, H g> = h(f, g)`` in the lumped nodal inner product."""
        return self.matrix / self.node_measure

    def gradient(self, u):
        """Field derivatives at the quadrature points, shape ``(Q, m)``."""
        return np.stack([D @ u for D in self.stencil.gradients], axis=-1)

    def source(self, i):
        """``sum_k D_k^H (w c_{ki})``: the load of the constant gradient ``A y_i = e_i``."""
        w = self.stencil.weights
        out = None
        for k, D in enumerate(self.stencil.gradients):
            term = D.conj().T @ (w * self.coeffs[:, k, i])
            out = term if out is None else out + term
        return out

    def competitor_matrix(self, competitors):
        """``C(g)_{ij} = h(g_i + y_i, g_j + y_j) / |Y|`` for periodic grid functions ``g_i``."""
        competitors = np.asarray(competitors)
        m = self.coeffs.shape[-1]
        if competitors.shape != (m, self.n_nodes):
            raise ValidationError(f"expected competitors of shape {(m, self.n_nodes)}, got {competitors.shape}")
        grads = np.stack([self.gradient(g) + np.eye(m)[i] for i, g in enumerate(competitors)])
        w = self.stencil.weights
        flux = np.einsum("qkl,jql->jqk", self.coeffs, grads)
        out = np.einsum("q,iqk,jqk->ij", w, grads.conj(), flux) / self.measure
        return 0.5 * (out + out.conj().T)

    def energy(self, u):
        return float(np.real(np.vdot(u, self.matrix @ u)))


def _coefficient_values(c, shape):
    if isinstance(c, CoefficientField):
        return c.sample(shape)
    vals = np.asarray(c)
    if vals.shape[: len(shape)] != tuple(shape):
        raise ValidationError(f"coefficient grid {vals.shape} does not match resolution {shape}")
    return vals


def assemble(cell, c, stencil=None):
    """Assemble the discrete form of ``c`` on ``cell``.

    ``stencil`` defaults to the flat corner stencil; the Heisenberg grid
    passes its horizontal-field stencil.
    """
    if min(cell.resolution) < MIN_RESOLUTION:
        raise ValidationError(f"resolution must be at least {MIN_RESOLUTION} per axis, got {cell.resolution}")
    stencil = flat_stencil(cell) if stencil is None else stencil
    vals = _coefficient_values(c, cell.resolution)
    m = vals.shape[-1]
    if m != stencil.n_fields:
        raise ValidationError(f"coefficient has size {m} but the stencil has {stencil.n_fields} fields")
    flat = vals.reshape(-1, m, m)
    grid_field = CoefficientField(len(cell.resolution), m, values=vals, lattice=cell.lattice,
                                  **({"period": cell.period} if cell.lattice == "cubic" else {"scale": cell.period[0]}))
    mu = ellipticity(grid_field, strict=False)
    if not mu > 0:
        raise EllipticityError(f"coefficient field is not strongly elliptic (smallest eigenvalue {mu:.6g})")
    coeffs = flat[stencil.cell_of_point]
    w = stencil.weights
    K = None
    for k, Dk in enumerate(stencil.gradients):
        DkH = Dk.conj().T
        for l, Dl in enumerate(stencil.gradients):
            ckl = coeffs[:, k, l]
            if not np.any(ckl):
                continue
            term = DkH @ sps.diags(w * ckl) @ Dl
            K = term if K is None else K + term
    K = (0.5 * (K + K.conj().T)).tocsr()
    K.sum_duplicates()
    return DiscreteForm(K, stencil, coeffs, mu, cell.lattice)
