"""Discretization of the Heisenberg nilmanifold ``M = G / Gamma``.

Points are written in the matrix coordinates ``(x, y, z)`` of the
upper-triangular model and ``Gamma`` is the integer lattice acting on the
right, ``(x, y, z)(a, b, c) = (x + a, y + b, z + c + x b)``.  The unit cube
is a fundamental domain; its faces are glued by ``(x + 1, y, z) ~ (x, y, z)``,
``(x, y + 1, z + x) ~ (x, y, z)`` and ``(x, y, z + 1) ~ (x, y, z)``.

The horizontal fields are ``A_1 = d/dx + y d/dz`` and ``A_2 = d/dy``; they
generate left translations and therefore descend to ``M``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .coefficients import fundamental_cell
from .exceptions import ValidationError
from .forms import Stencil, corner_stencil

__all__ = [
    "TwistedGrid",
    "HorizontalStencil",
    "build_grid",
    "horizontal_fields",
    "heisenberg_stencil",
    "theta_function",
]


@dataclass(frozen=True)
class TwistedGrid:
    """Uniform ``n_x x n_y x n_z`` node grid on the unit cube with twisted wraps.

    A node index ``(i, j, k)`` stands for ``(i / n_x, j / n_y, k / n_z)``.
    Wrapping across ``y = 1`` shifts ``z`` by ``-x``, i.e. by ``i * n_z / n_x``
    grid rows, which is why ``n_z`` must be a multiple of ``n_x``.
    """

    nx: int
    ny: int
    nz: int

    @property
    def shape(self):
        return (self.nx, self.ny, self.nz)

    @property
    def n_nodes(self):
        return self.nx * self.ny * self.nz

    @property
    def spacing(self):
        return (1.0 / self.nx, 1.0 / self.ny, 1.0 / self.nz)

    @property
    def shift(self):
        return self.nz // self.nx

    @property
    def cell(self):
        return fundamental_cell("heisenberg", self.shape)

    def wrap(self, idx):
        """Flat node index of unwrapped integer coordinates ``idx`` of shape ``(M, 3)``.

        ``(i, j, k)`` is reduced by the lattice element ``(a, b, c)`` with
        ``a = i // n_x``, ``b = j // n_y``; in index units the ``z`` row
        becomes ``k - b * i * n_z / n_x`` modulo ``n_z``.
        """
        idx = np.atleast_2d(np.asarray(idx, dtype=np.int64))
        i, j, k = idx.T
        b = np.floor_divide(j, self.ny)
        i2 = np.mod(i, self.nx)
        j2 = j - b * self.ny
        k2 = np.mod(k - b * i * self.shift, self.nz)
        return np.ravel_multi_index((i2, j2, k2), self.shape)

    def nodes(self):
        """Chart coordinates of all nodes, shape ``(N, 3)`` in raveled order."""
        return self.cell.node_points()

    def node_indices(self):
        return np.stack(np.meshgrid(*[np.arange(n) for n in self.shape], indexing="ij"), -1).reshape(-1, 3)

    def lift(self, f):
        """Evaluate ``f(x, y, z)`` at every node."""
        x, y, z = self.nodes().T
        return np.asarray(f(x, y, z), dtype=float)

    def interior_mask(self, margin=1):
        """Nodes at least ``margin`` rows away from the ``y`` seam."""
        j = self.node_indices()[:, 1]
        return (j >= margin) & (j < self.ny - margin)


def build_grid(nx, ny, nz):
    nx, ny, nz = int(nx), int(ny), int(nz)
    if min(nx, ny, nz) < 2:
        raise ValidationError(f"each resolution must be at least 2, got {(nx, ny, nz)}")
    if nz % nx:
        raise ValidationError(f"n_z = {nz} must be a multiple of n_x = {nx} so the twisted wrap lands on nodes")
    grid = TwistedGrid(nx, ny, nz)
    _check_wraps(grid)
    return grid


def _check_wraps(grid):
    idx = grid.node_indices()
    n = grid.n_nodes
    for axis in range(3):
        step = np.zeros(3, dtype=np.int64)
        step[axis] = 1
        image = grid.wrap(idx + step)
        if np.unique(image).size != n:
            raise ValidationError(f"wrap along axis {axis} is not a bijection")
    # a full period in y followed by a full period in x and the reverse
    # order must agree once the central z correction is accounted for
    def unravel(flat):
        return np.column_stack(np.unravel_index(flat, grid.shape))

    xy = grid.wrap(unravel(grid.wrap(idx + [grid.nx, 0, 0])) + [0, grid.ny, 0])
    yx = grid.wrap(unravel(grid.wrap(idx + [0, grid.ny, 0])) + [grid.nx, 0, 0])
    if np.unique(xy).size != n or np.unique(yx).size != n:
        raise ValidationError("wrap composition is not a bijection")


@dataclass(frozen=True, eq=False)
class HorizontalStencil:
    """Node-centred difference operators for ``A_1``, ``A_2`` (and ``A_3 = d/dz``)
    plus the corner-quadrature stencil used to assemble quadratic forms."""

    grid: TwistedGrid
    A1: sps.csr_matrix
    A2: sps.csr_matrix
    A3: sps.csr_matrix
    quadrature: Stencil

    def bracket(self):
        """Discrete commutator ``[A_1, A_2]``."""
        return (self.A1 @ self.A2 - self.A2 @ self.A1).tocsr()


def _centered(grid, axis):
    idx = grid.node_indices()
    step = np.zeros(3, dtype=np.int64)
    step[axis] = 1
    h = grid.spacing[axis]
    rows = np.arange(grid.n_nodes)
    fwd, bwd = grid.wrap(idx + step), grid.wrap(idx - step)
    data = np.concatenate([np.full(rows.size, 0.5 / h), np.full(rows.size, -0.5 / h)])
    return sps.coo_matrix((data, (np.concatenate([rows, rows]), np.concatenate([fwd, bwd]))),
                          shape=(grid.n_nodes, grid.n_nodes)).tocsr()


def heisenberg_stencil(grid):
    """Corner-quadrature stencil of ``(A_1, A_2)``.

    Inside each cell the chart is continuous, so ``A_1 = D_x + y D_z`` with
    ``y`` taken at the cell midpoint; corners on the far faces are mapped to
    nodes through :meth:`TwistedGrid.wrap`.
    """
    grads, cop, centers = corner_stencil(grid.shape, grid.spacing, lambda idx: (grid.wrap(idx), None))
    Dx, Dy, Dz = grads
    A1 = (Dx + sps.diags(centers[:, 1]) @ Dz).tocsr()
    n_q = A1.shape[0]
    return Stencil(grid.shape, (A1, Dy.tocsr()), np.full(n_q, 1.0 / n_q), cop, 1.0)


def horizontal_fields(grid):
    Cx, Cy, Cz = (_centered(grid, k) for k in range(3))
    y = grid.nodes()[:, 1]
    A1 = (Cx + sps.diags(y) @ Cz).tocsr()
    return HorizontalStencil(grid, A1, Cy, Cz, heisenberg_stencil(grid))


def theta_function(x, y, z, width=1.0, terms=8):
    """Smooth real function on ``M`` with ``z``-frequency one.

    ``Re exp(2 pi i z) sum_m phi(y + m) exp(2 pi i m x)`` with a Gaussian
    ``phi``; invariant under the three identifications.  Returns the value
    and its ``z`` derivative.
    """
    x, y, z = (np.asarray(v, dtype=float) for v in (x, y, z))
    val = np.zeros(np.broadcast(x, y, z).shape)
    dz = np.zeros_like(val)
    for m in range(-terms, terms + 1):
        g = np.exp(-np.pi * (y + m) ** 2 / width**2)
        phase = 2 * np.pi * (z + m * x)
        val += g * np.cos(phase)
        dz -= 2 * np.pi * g * np.sin(phase)
    return val, dz


def horizontal_moves(grid, diagonal=True):
    """Edges of the horizontal graph: left translations by ``exp(a X_1 + b X_2)``.

    In matrix coordinates ``(a, b, ab/2) (x, y, z) = (x + a, y + b, z + ab/2 + a y)``.
    Steps are ``a = +-h_x``, ``b = 0`` / ``a = 0``, ``b = +-h_y`` and, with
    ``diagonal``, both nonzero.  Returns ``(src, dst, a, b)`` arrays; the
    ``z`` jumps must land on nodes, which needs ``n_z`` divisible by
    ``2 n_x n_y`` when diagonals are used and by ``n_x n_y`` otherwise.
    """
    need = (2 if diagonal else 1) * grid.nx * grid.ny
    if grid.nz % need:
        raise ValidationError(f"horizontal moves need n_z divisible by {need}, got {grid.nz}")
    idx = grid.node_indices()
    src_all, dst_all, a_all, b_all = [], [], [], []
    steps = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    if diagonal:
        steps += [(1, 1), (1, -1), (-1, 1), (-1, -1)]
    per_xy = grid.nz // (grid.nx * grid.ny)
    for sa, sb in steps:
        # z jump in rows: n_z (ab/2 + a y) with a = sa/n_x, b = sb/n_y, y = j/n_y
        dz2 = per_xy * (sa * sb + 2 * sa * idx[:, 1])
        if np.any(dz2 % 2):
            raise ValidationError("horizontal step does not land on a node")
        target = idx + np.column_stack([np.full(len(idx), sa), np.full(len(idx), sb), dz2 // 2])
        src_all.append(np.arange(grid.n_nodes))
        dst_all.append(grid.wrap(target))
        a_all.append(np.full(len(idx), sa / grid.nx))
        b_all.append(np.full(len(idx), sb / grid.ny))
    return (np.concatenate(src_all), np.concatenate(dst_all), np.concatenate(a_all), np.concatenate(b_all))
