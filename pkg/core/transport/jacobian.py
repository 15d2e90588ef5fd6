# ============================================================
# ChaosBound — Jacobian of the transport map
# Lambda = det2(I + Hess phi) exp(-L phi - |grad phi|^2 / 2),
# where det2 is the Carleman-Fredholm determinant and L the
# OU generator. At finite dimension this equals
# det(I + Hess phi) exp(-<x, grad phi> - |grad phi|^2 / 2).
# ============================================================

import numpy as np
import scipy.linalg

from core.gaussian_core import as_points, ou_generator
from core.linalg import as_square
from core.transport.solution import TransportSolution


def _signed_det(M: np.ndarray) -> float:
    lu, piv = scipy.linalg.lu_factor(M, check_finite=True)
    diag = np.diag(lu)
    if np.any(diag == 0):
        return 0.0
    swaps = np.sum(piv != np.arange(len(piv)))
    return float((-1.0) ** swaps * np.prod(diag))


def det2(A) -> float:
    """det(I + A) exp(-trace A)."""
    A = as_square(A, name="det2 argument")
    return _signed_det(np.eye(A.shape[0]) + A) * float(np.exp(-np.trace(A)))


def _derivatives(sol: TransportSolution, x):
    pts, single = as_points(x, sol.dim)
    grads = sol.potential.grad(pts).reshape(len(pts), sol.dim)
    hessians = sol.potential.hess(pts).reshape(len(pts), sol.dim, sol.dim)
    return pts, single, grads, hessians


def jacobian_lambda(sol: TransportSolution, x):
    pts, single, grads, hessians = _derivatives(sol, x)
    generator = np.atleast_1d(ou_generator(sol.potential, pts))
    half_sq = 0.5 * np.sum(grads * grads, axis=1)
    values = np.array([det2(H) for H in hessians]) * np.exp(-generator - half_sq)
    return float(values[0]) if single else values


def jacobian_crosscheck(sol: TransportSolution, x) -> float:
    """Largest relative gap between the det2 form and the plain determinant form."""
    pts, _, grads, hessians = _derivatives(sol, x)
    eye = np.eye(sol.dim)
    plain = np.array([_signed_det(eye + H) for H in hessians]) * np.exp(
        -np.einsum("ni,ni->n", pts, grads) - 0.5 * np.sum(grads * grads, axis=1))
    carleman = np.atleast_1d(jacobian_lambda(sol, pts))
    scale = np.maximum(1.0, np.abs(plain))
    return float(np.max(np.abs(carleman - plain) / scale))
