"""Conjugate gradients in the mean-zero subspace of a periodic grid."""

import logging

import numpy as np

from .exceptions import SolverError

logger = logging.getLogger(__name__)


def conjugate_gradient(A, b, tol=1e-10, max_iter=None, x0=None, mean_zero=True):
    """Solve ``A x = b`` for hermitian PSD ``A`` with Jacobi preconditioning.

    With ``mean_zero`` the right-hand side, the iterates and the search
    directions are kept orthogonal to constants, which fixes the gauge of a
    periodic problem whose kernel is spanned by constants.  Stops when
    ``||b - A x|| <= tol * ||b||``.

    Returns ``(x, n_iter, relative_residual)``; raises :class:`SolverError`
    if the iteration cap is hit first.
    """
    n = b.shape[0]
    max_iter = 10 * n if max_iter is None else int(max_iter)

    def project(v):
        return v - v.mean() if mean_zero else v

    b = project(np.asarray(b))
    bnorm = np.linalg.norm(b)
    dtype = np.result_type(A.dtype, b.dtype)
    x = np.zeros(n, dtype=dtype) if x0 is None else project(np.asarray(x0, dtype=dtype))
    if bnorm == 0:
        return x, 0, 0.0
    diag = np.real(A.diagonal())
    inv_diag = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)
    r = b - A @ x if x0 is not None else b.astype(dtype, copy=True)
    r = project(r)
    z = project(inv_diag * r)
    p = z.copy()
    rz = np.vdot(r, z)
    res = np.linalg.norm(r) / bnorm
    for it in range(1, max_iter + 1):
        Ap = A @ p
        pAp = np.vdot(p, Ap)
        if pAp.real <= 0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        r = project(r)
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            return project(x), it, float(res)
        z = project(inv_diag * r)
        rz_new = np.vdot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    # true residual check guards against drift in the recurrence
    res = np.linalg.norm(project(b - A @ x)) / bnorm
    if res <= tol:
        return project(x), max_iter, float(res)
    raise SolverError(f"conjugate gradients stalled at relative residual {res:.3e} "
                      f"after {max_iter} iterations", residual=float(res))
