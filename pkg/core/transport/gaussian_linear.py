# ============================================================
# ChaosBound — Gaussian-to-Gaussian optimal map
# gamma_d -> N(m, Sigma): T(x) = m + Sigma^{1/2} x.
# ============================================================

import numpy as np
import scipy.linalg

from core.gaussian_core import ScalarField, VectorField
from core.linalg import as_square, psd_sqrt, symmetrize
from core.transport.solution import TransportSolution


def solve_gaussian_linear(Sigma, mean=None) -> TransportSolution:
    Sigma = as_square(Sigma, name="target covariance")
    d = Sigma.shape[0]
    mean = np.zeros(d) if mean is None else np.atleast_1d(np.asarray(mean, dtype=float)).reshape(d)
    A = psd_sqrt(Sigma)
    Sigma = symmetrize(Sigma)
    shift_hessian = A - np.eye(d)

    def forward(pts):
        return mean + pts @ A

    def potential(pts):
        return 0.5 * np.einsum("ni,ij,nj->n", pts, shift_hessian, pts) + pts @ mean

    inverse_fn = None
    if np.min(scipy.linalg.eigvalsh(A)) > 1e-12:
        A_inv = scipy.linalg.inv(A)

        def inverse_fn(pts):
            return (pts - mean) @ A_inv

    cost = float(mean @ mean + np.trace(Sigma + np.eye(d) - 2.0 * A))
    return TransportSolution(
        method="gaussian_linear",
        map=VectorField(forward, d, name="linear map"),
        potential=ScalarField(potential, d,
                              gradient=lambda pts: pts @ shift_hessian + mean,
                              hessian=lambda pts: np.broadcast_to(shift_hessian, (len(pts), d, d)),
                              name="quadratic potential"),
        mean_hessian=shift_hessian,
        wasserstein_sq=cost,
        diagnostics={"sqrt_residual": float(np.max(np.abs(A @ A - Sigma)))},
        inverse_fn=inverse_fn,
    )

