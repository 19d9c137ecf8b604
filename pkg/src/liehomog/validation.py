"""Input checks shared by the estimators."""

import numpy as np

from .coefficients import CoefficientField, validate_field
from .exceptions import ValidationError


def _is_matrix_expression(X):
    """Nested list whose entries are expression strings, numbers or ``None``, with at least one string."""
    if not isinstance(X, (list, tuple)) or not all(isinstance(r, (list, tuple)) for r in X):
        return False
    entries = [e for r in X for e in r]
    return any(isinstance(e, str) for e in entries) and \
        all(e is None or isinstance(e, (str, int, float)) for e in entries)


def check_field(X, lattice="cubic", dim=None, samples=64):
    """Coerce ``X`` to a validated :class:`CoefficientField`.

    Accepts a field, a scalar or matrix expression string, or a grid tensor
    (``(*grid,)`` for scalar fields, ``(*grid, m, m)`` for matrix fields).
    """
    if isinstance(X, CoefficientField):
        field = X
    elif isinstance(X, str) or _is_matrix_expression(X):
        if dim is None:
            raise ValidationError("dim is required for expression inputs")
        field = CoefficientField.from_expression(X, dim, lattice=lattice)
    else:
        arr = np.asarray(X)
        if arr.dtype == object or arr.size == 0:
            raise ValidationError("expected a coefficient field, expression or numeric grid tensor")
        if dim is None:
            if lattice == "heisenberg":
                dim = 3
            elif arr.ndim >= 3 and arr.shape[-1] == arr.shape[-2] == arr.ndim - 2:
                dim = arr.ndim - 2
            else:
                dim = arr.ndim
        field = CoefficientField.from_grid(arr, dim=dim, lattice=lattice)
    return validate_field(field, samples)


def check_resolution(resolution, dim, minimum=4):
    if np.isscalar(resolution):
        resolution = (int(resolution),) * dim
    resolution = tuple(int(n) for n in resolution)
    if len(resolution) != dim:
        raise ValidationError(f"resolution needs {dim} entries, got {resolution}")
    if min(resolution) < minimum:
        raise ValidationError(f"resolution must be at least {minimum} per axis, got {resolution}")
    return resolution


def check_positive(value, name):
    value = float(value)
    if not value > 0:
        raise ValidationError(f"{name} must be positive, got {value}")
    return value


def check_theta(theta, dim):
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != (dim,):
        raise ValidationError(f"quasimomentum must have {dim} components, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise ValidationError("quasimomentum must be finite")
    return theta
