"""Heat semigroups ``S_t = exp(-t H)`` of discrete forms and their large-scale diagnostics.

``H`` is the form matrix divided by the nodal measure, so that
``<f, H g> = h(f, g)`` in the lumped inner product ``<f, g> = |cell node| sum f g``.
Small problems use a cached dense eigendecomposition; larger ones a Lanczos
approximation of the exponential action.
"""

from __future__ import annotations

import logging
import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
from scipy.sparse.csgraph import dijkstra
from sklearn.base import BaseEstimator

from .coefficients import fundamental_cell, scale_epsilon
from .exceptions import SolverError, ValidationError
from .forms import DiscreteForm, assemble
from .homogenizer import homogenize
from .nilgrid import TwistedGrid, horizontal_moves
from .validation import check_field, check_positive, check_resolution

logger = logging.getLogger(__name__)

__all__ = [
    "HeatState",
    "KernelMatrix",
    "DistanceField",
    "evolve",
    "expm_action",
    "kernel",
    "semigroup_convergence",
    "kernel_comparison",
    "cc_distance",
    "HeatSemigroup",
]

DENSE_LIMIT = 4096
KERNEL_LIMIT = 16384

_EIG_CACHE = weakref.WeakKeyDictionary()


@dataclass(frozen=True, eq=False)
class HeatState:
    f: np.ndarray
    t: float
    form: DiscreteForm

    @property
    def mass(self):
        return complex(self.f.sum() * self.form.node_measure) if np.iscomplexobj(self.f) \
            else float(self.f.sum() * self.form.node_measure)

    def norm(self):
        return l2_norm(self.form, self.f)


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Dense ``K_t(x_i, y_j)``; integrating over ``y`` is ``sum_j K_ij * node_measure``."""

    values: np.ndarray
    t: float
    node_measure: float

    def row_sums(self):
        return self.values.sum(axis=1)


@dataclass(frozen=True, eq=False)
class DistanceField:
    values: np.ndarray
    source: int
    shape: tuple

    def grid(self):
        return self.values.reshape(self.shape)


def l2_norm(form, f):
    return float(np.sqrt(form.node_measure * np.sum(np.abs(f) ** 2)))


def _dense_eig(form):
    cached = _EIG_CACHE.get(form)
    if cached is None:
        H = form.operator.toarray()
        H = 0.5 * (H + H.conj().T)
        cached = np.linalg.eigh(H)
        _EIG_CACHE[form] = cached
    return cached


def expm_action(H, v, t, m=80, tol=1e-12, max_steps=100_000):
    """Lanczos approximation of ``exp(-t H) v`` for hermitian PSD sparse ``H``.

    A Krylov basis of size at most ``m`` is built from the current vector;
    the step ``tau`` is halved until the a-posteriori estimate
    ``beta_m |e_m^T exp(-tau T) e_1|`` falls below ``tol * ||v||``, then the
    remaining time is covered by further restarts.
    """
    u = np.array(v, dtype=np.result_type(H.dtype, np.asarray(v).dtype, float))
    remaining, tau, steps = float(t), float(t), 0
    while remaining > 0:
        beta0 = np.linalg.norm(u)
        if beta0 == 0:
            return u
        V, alpha, beta = [u / beta0], [], []
        for j in range(m):
            w = H @ V[j]
            a = np.vdot(V[j], w).real
            w = w - a * V[j] - (beta[-1] * V[j - 1] if j else 0)
            for q in V:
                w = w - np.vdot(q, w) * q
            alpha.append(a)
            b = np.linalg.norm(w)
            beta.append(b)
            if b <= 1e-14 * max(1.0, abs(a)):
                break
            V.append(w / b)
        k = len(alpha)
        T = np.diag(alpha) + np.diag(beta[: k - 1], 1) + np.diag(beta[: k - 1], -1)
        lam, Q = np.linalg.eigh(T)
        tau = min(tau, remaining)
        while True:
            y = Q @ (np.exp(-tau * lam) * Q[0])
            err = beta0 * beta[k - 1] * abs(y[-1])
            if err <= tol * beta0 or beta[k - 1] <= 1e-14 * max(1.0, abs(alpha[-1])):
                break
            tau *= 0.5
            if tau < 1e-300:
                raise SolverError("Lanczos step size underflow", residual=float(err))
        u = beta0 * (np.stack(V[:k], axis=1) @ y)
        remaining -= tau
        tau *= 2
        steps += 1
        if steps > max_steps:
            raise SolverError("Lanczos exponential did not finish within the step cap")
    return u


def evolve(form, f0, t, method="auto", tol=1e-12):
    """``S_t f0`` for the generator of ``form``; returns a :class:`HeatState`."""
    t = float(t)
    if t < 0:
        raise ValidationError(f"time must be nonnegative, got {t}")
    f0 = np.asarray(f0)
    if f0.shape != (form.n_nodes,):
        raise ValidationError(f"initial data must have {form.n_nodes} nodal values, got shape {f0.shape}")
    if t == 0:
        return HeatState(f0.copy(), 0.0, form)
    if method == "auto":
        method = "dense" if form.n_nodes < DENSE_LIMIT else "krylov"
    if method == "dense":
        lam, V = _dense_eig(form)
        f = V @ (np.exp(-t * lam) * (V.conj().T @ f0))
    elif method == "krylov":
        f = expm_action(form.operator.tocsr(), f0, t, tol=tol)
    else:
        raise ValidationError(f"unknown method {method!r}")
    if not np.iscomplexobj(f0) and np.iscomplexobj(f):
        f = f.real
    return HeatState(f, t, form)


def kernel(form, t):
    """Dense heat kernel: column ``j`` is the evolution of the normalized delta at node ``j``."""
    t = float(t)
    if t < 0:
        raise ValidationError(f"time must be nonnegative, got {t}")
    if form.n_nodes > KERNEL_LIMIT:
        raise ValidationError(f"grid of {form.n_nodes} nodes is too large for a dense kernel (limit {KERNEL_LIMIT})")
    lam, V = _dense_eig(form)
    K = (V * np.exp(-t * lam)) @ V.conj().T / form.node_measure
    if np.isrealobj(form.matrix.data) or np.allclose(K.imag, 0):
        K = K.real
    return KernelMatrix(K, t, form.node_measure)


def _torus_form(c, shape, box):
    """Form of ``c`` sampled on a torus ``box`` that may span many periods of ``c``."""
    cell = fundamental_cell("cubic", shape, period=box)
    return assemble(cell, c.sample(shape, box=box))


def _constant_form(C_hat, shape, box):
    C_hat = np.atleast_2d(np.asarray(C_hat))
    vals = np.broadcast_to(C_hat, tuple(shape) + C_hat.shape)
    return assemble(fundamental_cell("cubic", shape, period=box), vals)


@dataclass(frozen=True)
class ConvergenceTable:
    eps: tuple
    errors: tuple
    C_hat: np.ndarray

    @property
    def ratios(self):
        e = np.asarray(self.errors)
        return tuple(e[1:] / e[:-1])

    def strictly_decreasing(self):
        return bool(np.all(np.diff(self.errors) < 0))


def _default_dim(c, dim):
    # a bare expression string is read as a one-dimensional field
    return 1 if dim is None and isinstance(c, str) else dim


def _default_initial(length):
    def f(points):
        return np.prod(np.cos(2 * np.pi * points / length), axis=1)
    return f


def semigroup_convergence(c, t, f=None, eps_list=(1.0, 0.5, 0.25, 0.125), length=4.0, resolution=1024,
                          cell_resolution=256, dim=None):
    """``||(S_t^eps - S_hat_t) f||_2`` on the torus ``[0, length)^d`` for each ``eps``.

    Every ``eps`` shares one grid, which must resolve the smallest ``eps``
    with at least 8 nodes per period.  ``f`` is a callable of the node
    coordinates or an array of nodal values; the default is the lowest
    torus mode ``prod_k cos(2 pi x_k / length)``.

    On the unit torus the lowest mode sits at the edge of the Brillouin
    zone of the ``eps = 1/2`` lattice, where the first harmonic of ``c``
    splits it at first order; a torus of several periods keeps the data
    away from band edges so the ``eps`` trend is visible at moderate ``t``.
    """
    t = check_positive(t, "t")
    field = check_field(c, "cubic", _default_dim(c, dim))
    if any(p != 1.0 for p in field.period):
        raise ValidationError("semigroup convergence expects a unit-periodic cubic field")
    length = check_positive(length, "length")
    shape = check_resolution(resolution, field.dim)
    eps_list = tuple(float(e) for e in eps_list)
    for e in eps_list:
        check_positive(e, "eps")
        cells = length / e
        if abs(round(cells) - cells) > 1e-9:
            raise ValidationError(f"length/eps must be an integer so eps-periodic fields live on the torus, got eps={e}")
        if min(shape) / cells < 8:
            raise ValidationError(f"resolution {shape} does not resolve eps={e} with 8 nodes per period")
    box = (length,) * field.dim
    C, _, _ = homogenize(field, check_resolution(cell_resolution, field.dim))
    cell = fundamental_cell("cubic", shape, period=box)
    f = _default_initial(length) if f is None else f
    f0 = np.asarray(f(cell.node_points()) if callable(f) else f, dtype=float)
    if f0.shape != (cell.node_points().shape[0],):
        raise ValidationError(f"initial data must have {np.prod(shape)} nodal values, got shape {f0.shape}")
    ref = evolve(_constant_form(C.matrix, shape, box), f0, t).f
    errors = []
    for e in eps_list:
        form = _torus_form(scale_epsilon(field, e), shape, box)
        errors.append(l2_norm(form, evolve(form, f0, t).f - ref))
        logger.info("eps=%g error=%.6e", e, errors[-1])
    return ConvergenceTable(eps_list, tuple(errors), C.matrix)


@dataclass(frozen=True)
class KernelDiagnostics:
    """Rows ``(t, supnorm_scaled, norm_inf, norm_1)``.

    ``supnorm_scaled = t^{D/2} max_{|x|^2 + |y|^2 <= a t} |K_t - K_hat_t|``,
    ``norm_inf = max |K_t - K_hat_t|`` and
    ``norm_1 = max_x integral |K_t(x, y) - K_hat_t(x, y)| dy``.
    """

    t: tuple
    supnorm_scaled: tuple
    norm_inf: tuple
    norm_1: tuple
    D: int

    def rows(self):
        return list(zip(self.t, self.supnorm_scaled, self.norm_inf, self.norm_1))

    @property
    def scaled_inf(self):
        return tuple(t ** (self.D / 2) * v for t, v in zip(self.t, self.norm_inf))


def kernel_comparison(c, C_hat, t_list=(1.0, 2.0, 4.0, 8.0), a=1.0, periods=64, per_period=16, D=None,
                      dim=None):
    """Compare ``K_t`` with the homogenized kernel ``K_hat_t`` on a torus of ``periods`` cells.

    ``|x|`` is the distance ``d_c(x; e)`` from the node at the origin.  The
    torus is large enough that the kernels do not feel the wrap at the
    supplied times.
    """
    field = check_field(c, "cubic", _default_dim(c, dim))
    d = field.dim
    D = d if D is None else int(D)
    a = check_positive(a, "a")
    shape = (int(periods * per_period),) * d
    box = tuple(float(periods) * p for p in field.period)
    if np.prod(shape) > KERNEL_LIMIT:
        raise ValidationError(f"torus of {np.prod(shape)} nodes is too large for dense kernels")
    form = _torus_form(field, shape, box)
    hat = _constant_form(C_hat, shape, box)
    dist = cc_distance(field, fundamental_cell("cubic", shape, period=box), 0).values
    r2 = dist**2
    sup_s, n_inf, n_1 = [], [], []
    for t in t_list:
        t = check_positive(t, "t")
        diff = kernel(form, t).values - kernel(hat, t).values
        mask = (r2[:, None] + r2[None, :]) <= a * t
        local = np.abs(diff[mask]).max() if mask.any() else 0.0
        sup_s.append(t ** (D / 2) * float(local))
        n_inf.append(float(np.abs(diff).max()))
        n_1.append(float((np.abs(diff).sum(axis=1) * form.node_measure).max()))
    return KernelDiagnostics(tuple(float(t) for t in t_list), tuple(sup_s), tuple(n_inf), tuple(n_1), D)


def _metric_length(cinv, v):
    return np.sqrt(np.maximum(np.real(np.einsum("ni,nij,nj->n", v.conj(), cinv, v)), 0.0))


def cc_distance(c, cell, source=0):
    """Coefficient-adapted distance from node ``source`` by Dijkstra on the grid graph.

    Flat cells use nearest-neighbour steps ``v = +-h_k e_k`` with length
    ``sqrt(v^H c^{-1} v)`` at the edge midpoint.  On a :class:`TwistedGrid`
    the steps are the horizontal left translations of
    :func:`~liehomog.nilgrid.horizontal_moves` and the length uses ``c``
    averaged over the two endpoints.
    """
    if isinstance(cell, TwistedGrid):
        src, dst, a, b = horizontal_moves(cell)
        pts = cell.nodes()
        cinv = np.linalg.inv(c(pts))
        v = np.stack([a, b], axis=1)
        w = 0.5 * (_metric_length(cinv[src], v) + _metric_length(cinv[dst], v))
        n, shape = cell.n_nodes, cell.shape
    else:
        shape = cell.resolution
        n = int(np.prod(shape))
        nodes = cell.node_points()
        idx = np.stack(np.unravel_index(np.arange(n), shape), axis=1)
        srcs, dsts, ws = [], [], []
        for k, h in enumerate(cell.spacing):
            step = np.zeros(len(shape), dtype=int)
            step[k] = 1
            nb = np.ravel_multi_index(tuple(np.mod(idx + step, shape).T), shape)
            v = np.zeros((n, len(shape)))
            v[:, k] = h
            cinv = np.linalg.inv(c(nodes + 0.5 * v))
            length = _metric_length(cinv, v)
            srcs += [np.arange(n), nb]
            dsts += [nb, np.arange(n)]
            ws += [length, length]
        src, dst, w = np.concatenate(srcs), np.concatenate(dsts), np.concatenate(ws)
    if np.any(w <= 0):
        raise ValidationError("nonpositive edge length; coefficient is not elliptic")
    # duplicate edges (tiny grids wrap onto themselves) keep the shortest
    graph = _min_duplicates(src, dst, w, n)
    dist = dijkstra(graph, directed=True, indices=int(source))
    if not np.all(np.isfinite(dist)):
        raise SolverError("grid graph is disconnected")
    return DistanceField(dist, int(source), tuple(shape))


def _min_duplicates(src, dst, w, n):
    order = np.lexsort((w, dst, src))
    src, dst, w = src[order], dst[order], w[order]
    keep = np.ones(src.size, dtype=bool)
    keep[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
    keep &= src != dst
    return sps.csr_matrix((w[keep], (src[keep], dst[keep])), shape=(n, n))


class HeatSemigroup(BaseEstimator):
    """Heat flow of a periodic coefficient field as an estimator.

    ``fit(c)`` assembles the form on the period cell at ``resolution``;
    ``transform(F)`` evolves each row of ``F`` (nodal values) to time ``t``.
    """

    def __init__(self, t=0.1, resolution=64, dim=None, method="auto"):
        self.t = t
        self.resolution = resolution
        self.dim = dim
        self.method = method

    def fit(self, X, y=None):
        field = check_field(X, "cubic", self.dim)
        shape = check_resolution(self.resolution, field.dim)
        self.form_ = assemble(fundamental_cell("cubic", shape, period=field.period), field)
        self.field_ = field
        self.n_features_in_ = self.form_.n_nodes
        return self

    def transform(self, X):
        if not hasattr(self, "form_"):
            raise ValidationError("HeatSemigroup is not fitted yet; call fit first")
        X = np.atleast_2d(np.asarray(X))
        return np.stack([evolve(self.form_, row, self.t, self.method).f for row in X])

    def kernel(self):
        return kernel(self.form_, self.t)
