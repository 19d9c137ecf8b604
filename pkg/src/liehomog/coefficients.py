"""Periodic coefficient fields, their scaling and mollification, and fundamental cells.

A :class:`CoefficientField` is a hermitian ``m x m`` matrix-valued function on
``R^d`` (lattice ``'cubic'``, periods along each axis) or on the Heisenberg
group in matrix coordinates (lattice ``'heisenberg'``, invariant under right
multiplication by the integer lattice dilated by ``scale``).  It is backed by
either a vectorized sampler or a grid tensor of cell-midpoint values; grid
tensors are evaluated piecewise constantly, so discontinuous (L-infinity)
fields are represented exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .exceptions import EllipticityError, ValidationError
from .expr import compile_expression

__all__ = [
    "CoefficientField",
    "FundamentalCell",
    "ellipticity",
    "scale_epsilon",
    "mollify",
    "bump_kernel",
    "fundamental_cell",
    "load_field",
    "save_field",
]

LATTICES = ("cubic", "heisenberg")
FORMAT_TAG = "liehomog-coefficient-field/1"


def _midpoints(shape, box):
    axes = [(np.arange(n) + 0.5) * (L / n) for n, L in zip(shape, box)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


class CoefficientField:
    """Hermitian matrix-valued periodic coefficient field.

    Parameters
    ----------
    dim : int
        Spatial dimension (3 for the Heisenberg lattice).
    m : int, optional
        Matrix size; defaults to ``dim`` for the cubic lattice and 2 for the
        Heisenberg lattice (the number of horizontal fields).
    sampler : callable, optional
        ``sampler(points) -> (N, m, m)`` or ``(N,)`` (scalar times identity).
    values : ndarray, optional
        Grid tensor of shape ``(*grid, m, m)`` holding cell-midpoint values.
    lattice : {'cubic', 'heisenberg'}
    period : sequence of float, optional
        Box lengths for the cubic lattice (default all ones).
    scale : float
        Dilation of the Heisenberg lattice.
    """

    def __init__(self, dim, m=None, *, sampler=None, values=None, lattice="cubic",
                 period=None, scale=1.0, name=None):
        if lattice not in LATTICES:
            raise ValidationError(f"unsupported lattice {lattice!r}; expected one of {LATTICES}")
        if (sampler is None) == (values is None):
            raise ValidationError("exactly one of sampler or values must be given")
        self.dim = int(dim)
        self.lattice = lattice
        if lattice == "heisenberg":
            if self.dim != 3:
                raise ValidationError("the Heisenberg lattice lives in dimension 3")
            if not scale > 0:
                raise ValidationError(f"lattice scale must be positive, got {scale}")
            self.scale = float(scale)
            self.period = (self.scale, self.scale, self.scale**2)
            default_m = 2
        else:
            self.scale = 1.0
            period = (1.0,) * self.dim if period is None else tuple(float(p) for p in period)
            if len(period) != self.dim or any(not p > 0 for p in period):
                raise ValidationError(f"period must be {self.dim} positive lengths, got {period}")
            self.period = period
            default_m = self.dim
        self.m = default_m if m is None else int(m)
        self.name = name
        self._sampler = sampler
        self.values = None
        if values is not None:
            values = np.asarray(values)
            if values.ndim == self.dim:
                values = values[..., None, None] * np.eye(self.m)
            if values.ndim != self.dim + 2 or values.shape[-2:] != (self.m, self.m):
                raise ValidationError(
                    f"grid tensor must have shape (*grid, {self.m}, {self.m}) with {self.dim} grid axes, "
                    f"got {values.shape}"
                )
            if not np.all(np.isfinite(values)):
                raise ValidationError("grid tensor contains non-finite entries")
            values = values.astype(complex if np.iscomplexobj(values) else float)
            values.setflags(write=False)
            self.values = values

    # -- construction helpers --------------------------------------------------

    @classmethod
    def from_expression(cls, expr, dim, lattice="cubic", m=None, **kwargs):
        """Closed-form field from a scalar expression or an ``m x m`` nested list of them.

        A scalar expression multiplies the identity.  In a nested list, entries
        below the diagonal may be ``None`` to mirror the upper triangle.
        """
        if isinstance(expr, (str, int, float)):
            fn = compile_expression(expr)
            sampler = _ScalarSampler(fn)
            sampler.source = str(expr)
            return cls(dim, m, sampler=sampler, lattice=lattice, name=str(expr), **kwargs)
        rows = [list(r) for r in expr]
        size = len(rows)
        if any(len(r) != size for r in rows):
            raise ValidationError("matrix expression must be square")
        fns = [[None if rows[i][j] is None else compile_expression(rows[i][j]) for j in range(size)]
               for i in range(size)]
        for i in range(size):
            for j in range(size):
                if fns[i][j] is None:
                    if fns[j][i] is None:
                        raise ValidationError(f"entry ({i}, {j}) and its mirror are both missing")
        sampler = _MatrixSampler(fns)
        sampler.source = [[None if e is None else str(e) for e in r] for r in rows]
        return cls(dim, size if m is None else m, sampler=sampler, lattice=lattice,
                   name=json.dumps(sampler.source), **kwargs)

    @classmethod
    def constant(cls, matrix, dim, lattice="cubic", **kwargs):
        matrix = np.asarray(matrix)
        if matrix.ndim == 0:
            size = kwargs.pop("m", None) or (2 if lattice == "heisenberg" else dim)
            matrix = matrix * np.eye(size)
        else:
            kwargs.pop("m", None)
        matrix = np.atleast_2d(matrix)
        size = matrix.shape[0]

        def sampler(points):
            return np.broadcast_to(matrix, (len(points), size, size)).copy()

        return cls(dim, size, sampler=sampler, lattice=lattice, name="constant", **kwargs)

    @classmethod
    def from_grid(cls, values, dim=None, lattice="cubic", m=None, **kwargs):
        values = np.asarray(values)
        if dim is None:
            dim = 3 if lattice == "heisenberg" else values.ndim
        return cls(dim, m, values=values, lattice=lattice, **kwargs)

    # -- evaluation ------------------------------------------------------------

    @property
    def grid_shape(self):
        return None if self.values is None else self.values.shape[: self.dim]

    def reduce(self, points):
        """Representatives of ``points`` in the fundamental box."""
        return fundamental_cell(self.lattice, (1,) * self.dim, period=self.period,
                                scale=self.scale).reduce(points)[0]

    def __call__(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.dim:
            raise ValidationError(f"expected points of dimension {self.dim}, got {points.shape[1]}")
        if self._sampler is not None:
            out = np.asarray(self._sampler(points))
            if out.ndim == 1:
                out = out[:, None, None] * np.eye(self.m)
            if out.shape != (len(points), self.m, self.m):
                raise ValidationError(f"sampler returned shape {out.shape}, expected {(len(points), self.m, self.m)}")
            return out
        reduced = self.reduce(points)
        shape = self.grid_shape
        idx = tuple(
            np.clip(np.floor(reduced[:, k] / self.period[k] * shape[k]).astype(int), 0, shape[k] - 1)
            for k in range(self.dim)
        )
        return self.values[idx]

    def sample(self, shape, box=None):
        """Grid tensor of cell-midpoint values on ``box`` (default: the period box)."""
        shape = tuple(int(n) for n in shape)
        if len(shape) != self.dim:
            raise ValidationError(f"grid shape must have {self.dim} entries, got {shape}")
        box = self.period if box is None else tuple(box)
        if self.values is not None and shape == self.grid_shape and np.allclose(box, self.period, rtol=0, atol=0):
            return np.array(self.values)
        return self(_midpoints(shape, box)).reshape(shape + (self.m, self.m))

    def is_real(self, samples=16):
        vals = self.values if self.values is not None else self.sample((samples,) * self.dim)
        return not np.iscomplexobj(vals) or np.all(vals.imag == 0)

    def __repr__(self):
        kind = f"grid{self.grid_shape}" if self.values is not None else (self.name or "sampler")
        return f"CoefficientField(dim={self.dim}, m={self.m}, lattice={self.lattice!r}, {kind})"


class _ScalarSampler:
    def __init__(self, fn):
        self.fn = fn

    def __call__(self, points):
        return self.fn(points)


class _MatrixSampler:
    def __init__(self, fns):
        self.fns = fns

    def __call__(self, points):
        size = len(self.fns)
        out = np.zeros((len(points), size, size))
        for i in range(size):
            for j in range(size):
                if self.fns[i][j] is not None:
                    out[:, i, j] = self.fns[i][j](points)
        for i in range(size):
            for j in range(size):
                if self.fns[i][j] is None:
                    out[:, i, j] = out[:, j, i]
        return out


def _check_hermitian(vals, points, tol=1e-12):
    err = np.abs(vals - np.conj(np.swapaxes(vals, -1, -2))).max(axis=(-1, -2))
    scale = np.maximum(1.0, np.abs(vals).max(axis=(-1, -2)))
    bad = np.flatnonzero(err > tol * scale)
    if bad.size:
        k = bad[0]
        raise ValidationError(
            f"coefficient matrix is not hermitian at point {np.round(points[k], 12).tolist()} "
            f"(asymmetry {err[k]:.3g})"
        )


def _sample_points(c, samples):
    """Node and midpoint sample cloud used for validation."""
    if c.values is not None:
        return _midpoints(c.grid_shape, c.period), c.values.reshape(-1, c.m, c.m)
    n = 2 * int(samples)
    shape = (n,) * c.dim
    axes = [np.arange(k) * (L / k) for k, L in zip(shape, c.period)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    return pts, c(pts)


def ellipticity(c, samples=64, strict=True):
    """Smallest eigenvalue of ``c(x)`` over a sample cloud.

    Samplers are probed on a grid with ``2 * samples`` points per axis (nodes
    and midpoints of a ``samples`` grid); grid tensors use every stored value.
    With ``strict`` a non-positive result raises :class:`EllipticityError`.
    """
    pts, vals = _sample_points(c, samples)
    if not np.all(np.isfinite(vals)):
        raise ValidationError("coefficient field is not bounded on the sample cloud")
    _check_hermitian(vals, pts)
    herm = 0.5 * (vals + np.conj(np.swapaxes(vals, -1, -2)))
    eig = np.linalg.eigvalsh(herm)[:, 0]
    mu = float(eig.min())
    if strict and not mu > 0:
        k = int(np.argmin(eig))
        raise EllipticityError(
            f"coefficient field is not strongly elliptic: smallest eigenvalue {mu:.6g} "
            f"at point {np.round(pts[k], 12).tolist()}"
        )
    return mu


def _lattice_generators(c):
    if c.lattice == "cubic":
        return [tuple(c.period[k] * (i == k) for i in range(c.dim)) for k in range(c.dim)]
    s = c.scale
    return [(s, 0.0, 0.0), (0.0, s, 0.0), (0.0, 0.0, s * s)]


def _right_translate(lattice, points, gamma):
    points = np.asarray(points, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if lattice == "cubic":
        return points + gamma
    x, y, z = points.T
    a, b, cc = np.broadcast_to(gamma, points.shape).T
    return np.stack([x + a, y + b, z + cc + x * b], axis=1)


def check_periodicity(c, samples=256, seed=0, tol=1e-12):
    """Largest deviation of ``c(x gamma) - c(x)`` over lattice generators on random points."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 1, size=(samples, c.dim)) * np.asarray(c.period)
    base = c(pts)
    scale = max(1.0, float(np.abs(base).max()))
    worst = 0.0
    for gamma in _lattice_generators(c):
        worst = max(worst, float(np.abs(c(_right_translate(c.lattice, pts, gamma)) - base).max()) / scale)
    if worst > tol:
        raise ValidationError(f"coefficient field is not lattice periodic (deviation {worst:.3g})")
    return worst


def validate_field(c, samples=64):
    """Hermiticity, boundedness and (for samplers) lattice periodicity."""
    ellipticity(c, samples, strict=False)
    if c.values is None:
        check_periodicity(c)
    return c


def scale_epsilon(c, eps):
    """The field ``x -> c(x / eps)`` (cubic) or ``x -> c(delta_{1/eps} x)`` (Heisenberg).

    Its period lattice is ``eps * Gamma`` resp. ``delta_eps(Gamma)``.
    """
    if not eps > 0:
        raise ValidationError(f"scaling parameter must be positive, got {eps}")
    eps = float(eps)
    if c.lattice == "cubic":
        weights = np.ones(c.dim)
        kwargs = {"period": tuple(eps * p for p in c.period)}
    else:
        weights = np.array([1.0, 1.0, 2.0])
        kwargs = {"scale": eps * c.scale}
    if c.values is not None:
        return CoefficientField(c.dim, c.m, values=c.values, lattice=c.lattice, name=c.name, **kwargs)
    factors = eps ** (-weights)
    inner = c._sampler
    while isinstance(inner, _ScaledSampler):
        factors = factors * inner.factors
        inner = inner.inner
    return CoefficientField(c.dim, c.m, sampler=_ScaledSampler(inner, factors), lattice=c.lattice,
                            name=c.name, **kwargs)


class _ScaledSampler:
    def __init__(self, inner, factors):
        self.inner = inner
        self.factors = np.asarray(factors, dtype=float)

    def __call__(self, points):
        return self.inner(np.asarray(points) * self.factors)


def bump_kernel(points):
    """Product bump ``prod_k (35/32) (1 - s_k^2)^3`` on ``[-1, 1]^d``; unit mass, C^2."""
    points = np.atleast_2d(points)
    inside = np.abs(points) < 1
    vals = np.where(inside, 35.0 / 32.0 * (1.0 - points**2) ** 3, 0.0)
    return vals.prod(axis=1)


def _kernel_mass(tau, dim, support, nodes=48):
    s, w = np.polynomial.legendre.leggauss(nodes)
    mesh = np.meshgrid(*([s * support] * dim), indexing="ij")
    wmesh = np.meshgrid(*([w * support] * dim), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    weights = np.prod(np.stack([m.ravel() for m in wmesh], axis=1), axis=1)
    vals = np.asarray(tau(pts), dtype=float)
    return float(weights @ vals), vals


def mollify(c, n, tau=None, resolution=None, support=1.0, tol=1e-8):
    """Grid field ``c^(n)(x) = n^d integral tau(n y) c(x - y) dy``.

    The convolution is discrete and periodic on the grid; the kernel samples
    are nonnegative and renormalized to unit discrete mass, so cell averages
    are preserved exactly and every value is a convex combination of values
    of ``c``.  ``tau`` must be nonnegative with unit integral (checked by
    Gauss-Legendre quadrature over ``[-support, support]^d``).
    """
    if int(n) != n or n < 1:
        raise ValidationError(f"mollification index must be a positive integer, got {n}")
    if c.lattice != "cubic":
        raise ValidationError("mollification is implemented for the cubic lattice")
    tau = bump_kernel if tau is None else tau
    mass, vals = _kernel_mass(tau, c.dim, support)
    if np.any(vals < 0) or not np.any(vals > 0):
        raise ValidationError("mollifier must be nonnegative with positive mass")
    if abs(mass - 1.0) > tol:
        raise ValidationError(f"mollifier integral is {mass:.12g}, expected 1")
    if resolution is None:
        shape = c.grid_shape
    else:
        shape = (int(resolution),) * c.dim if np.isscalar(resolution) else tuple(int(r) for r in resolution)
    if shape is None:
        raise ValidationError("a grid resolution is required to mollify a closed-form field")
    if isinstance(shape, int):
        shape = (shape,) * c.dim
    grid = c.sample(shape)
    # periodic offsets y in [-L/2, L/2) on the grid
    axes = []
    for k, (m, L) in enumerate(zip(shape, c.period)):
        off = np.arange(m) * (L / m)
        axes.append(np.where(off >= L / 2, off - L, off))
    mesh = np.meshgrid(*axes, indexing="ij")
    offsets = np.stack([g.ravel() for g in mesh], axis=1)
    weights = np.asarray(tau(n * offsets), dtype=float).reshape(shape)
    if weights.sum() <= 0:
        raise ValidationError("mollifier is not resolved by the grid")
    weights = weights / weights.sum()
    axes_fft = tuple(range(c.dim))
    kernel_hat = np.fft.fftn(weights)
    out = np.fft.ifftn(np.fft.fftn(grid, axes=axes_fft) * kernel_hat[(...,) + (None, None)], axes=axes_fft)
    if not np.iscomplexobj(grid):
        out = out.real
    out = 0.5 * (out + np.conj(np.swapaxes(out, -1, -2)))
    return CoefficientField(c.dim, c.m, values=out, lattice=c.lattice, period=c.period,
                            name=f"mollified({c.name}, n={n})")


# -- fundamental cells --------------------------------------------------------


@dataclass(frozen=True)
class FundamentalCell:
    """Coordinate box ``[0, L_1) x ... x [0, L_d)`` with its lattice identifications.

    For the Heisenberg lattice (matrix coordinates, right action
    ``(x, y, z)(a, b, c) = (x + a, y + b, z + c + x b)``) the box is
    ``[0, s) x [0, s) x [0, s^2)`` and the identifications are
    ``(x + s, y, z) ~ (x, y, z)``, ``(x, y + s, z + s x) ~ (x, y, z)`` and
    ``(x, y, z + s^2) ~ (x, y, z)``.
    """

    lattice: str
    resolution: tuple
    period: tuple

    @property
    def dim(self):
        return len(self.resolution)

    @property
    def measure(self):
        return float(np.prod(self.period))

    @property
    def spacing(self):
        return tuple(L / n for L, n in zip(self.period, self.resolution))

    def generators(self):
        if self.lattice == "cubic":
            return [tuple(self.period[k] * (i == k) for i in range(self.dim)) for k in range(self.dim)]
        s = self.period[0]
        return [(s, 0.0, 0.0), (0.0, s, 0.0), (0.0, 0.0, s * s)]

    def translate(self, points, gamma):
        """Right action ``p -> p gamma`` of a lattice element."""
        return _right_translate(self.lattice, points, gamma)

    def inverse(self, gamma):
        gamma = np.asarray(gamma, dtype=float)
        if self.lattice == "cubic":
            return -gamma
        a, b, c = gamma.T
        return np.stack([-a, -b, -c + a * b], axis=-1)

    def reduce(self, points):
        """Return ``(q, gamma)`` with ``q`` in the box and ``points = q gamma``."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        L = np.asarray(self.period)
        if self.lattice == "cubic":
            gamma = np.floor(points / L) * L
            q = points - gamma
            q = np.where(q >= L, q - L, q)
            return q, gamma
        s = self.period[0]
        x, y, z = points.T
        a = np.floor(x / s) * s
        b = np.floor(y / s) * s
        z1 = z + a * b - x * b
        c = np.floor(z1 / (s * s)) * s * s
        q = np.stack([x - a, y - b, z1 - c], axis=1)
        gamma = np.stack([a, b, c], axis=1)
        return q, gamma

    def contains(self, points):
        points = np.atleast_2d(points)
        return np.all((points >= 0) & (points < np.asarray(self.period)), axis=1)

    def check_tiling(self, samples=10_000, seed=0, window=3):
        """Count, for random points, the translates ``Y gamma`` containing them.

        Returns ``(uncovered, overlaps)``: points in no translate and points in
        more than one, over a window of lattice elements.
        """
        rng = np.random.default_rng(seed)
        L = np.asarray(self.period)
        pts = rng.uniform(-1, 2, size=(samples, self.dim)) * L
        counts = np.zeros(samples, dtype=int)
        ranges = [range(-window, window + 1)] * self.dim
        if self.lattice == "heisenberg":
            zspan = 4 * window * window + 2 * window + 2
            ranges = [range(-window, window + 1)] * 2 + [range(-zspan, zspan + 1)]
        gens = np.asarray(self.generators())
        for idx in np.stack(np.meshgrid(*[np.array(r) for r in ranges], indexing="ij"), -1).reshape(-1, self.dim):
            if self.lattice == "cubic":
                gamma = idx @ gens
            else:
                s = self.period[0]
                gamma = np.array([idx[0] * s, idx[1] * s, idx[2] * s * s])
            counts += self.contains(self.translate(pts, self.inverse(gamma)))
        return int(np.sum(counts == 0)), int(np.sum(counts > 1))

    def node_points(self):
        axes = [np.arange(n) * h for n, h in zip(self.resolution, self.spacing)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def midpoints(self):
        return _midpoints(self.resolution, self.period)


def fundamental_cell(lattice="cubic", resolution=(8,), period=None, scale=1.0):
    """Coordinate fundamental cell of ``Z^d`` (scaled by ``period``) or of the
    integer Heisenberg lattice dilated by ``scale``."""
    if isinstance(resolution, int):
        resolution = (resolution,)
    resolution = tuple(int(n) for n in resolution)
    if any(n < 1 for n in resolution):
        raise ValidationError(f"resolution must be positive, got {resolution}")
    if lattice == "cubic":
        period = (1.0,) * len(resolution) if period is None else tuple(float(p) for p in period)
        if len(period) != len(resolution):
            raise ValidationError("period and resolution dimensions differ")
    elif lattice == "heisenberg":
        if len(resolution) != 3:
            raise ValidationError("the Heisenberg cell needs three resolutions")
        s = float(scale)
        period = (s, s, s * s)
    else:
        raise ValidationError(f"unsupported lattice {lattice!r}")
    return FundamentalCell(lattice, resolution, period)


# -- file format --------------------------------------------------------------


def save_field(c, path, resolution=None):
    """Write a grid field as self-describing JSON.

    Layout: ``{"format", "lattice", "dim", "m", "grid", "period", "scale",
    "data"}`` where ``data`` lists, in row-major grid order and row-major
    matrix order, interleaved ``re, im`` doubles.
    """
    if c.values is None:
        if resolution is None:
            raise ValidationError("resolution required to save a closed-form field")
        vals = c.sample(resolution if not isinstance(resolution, int) else (resolution,) * c.dim)
    else:
        vals = c.values
    vals = np.asarray(vals, dtype=complex)
    data = np.stack([vals.real, vals.imag], axis=-1).ravel()
    doc = {
        "format": FORMAT_TAG,
        "lattice": c.lattice,
        "dim": c.dim,
        "m": c.m,
        "grid": list(vals.shape[: c.dim]),
        "period": list(c.period),
        "scale": c.scale,
        "data": [float(v) for v in data],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_field(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not a valid coefficient file ({exc})") from None
    if doc.get("format") != FORMAT_TAG:
        raise ValidationError(f"{path}: unknown format tag {doc.get('format')!r}")
    dim, m, grid = int(doc["dim"]), int(doc["m"]), tuple(int(n) for n in doc["grid"])
    data = np.asarray(doc["data"], dtype=float)
    expected = int(np.prod(grid)) * m * m * 2
    if data.size != expected:
        raise ValidationError(f"{path}: expected {expected} doubles, found {data.size}")
    pairs = data.reshape(grid + (m, m, 2))
    vals = pairs[..., 0] + 1j * pairs[..., 1]
    if np.all(pairs[..., 1] == 0):
        vals = vals.real
    kwargs = {"scale": doc.get("scale", 1.0)} if doc["lattice"] == "heisenberg" else {"period": doc.get("period")}
    return CoefficientField(dim, m, values=vals, lattice=doc["lattice"], name=str(path), **kwargs)
