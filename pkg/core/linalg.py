# ============================================================
# ChaosBound — Small symmetric-matrix toolkit
# Every operator inequality in the engine is decided here:
# a matrix inequality A >= B is read as min-eig(A - B) >= -tol.
# ============================================================

import numpy as np
import scipy.linalg

from core.errors import MatrixError


def as_square(A, dim=None, name="matrix") -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise MatrixError(f"{name} must be square, got shape {A.shape}")
    if dim is not None and A.shape[0] != dim:
        raise MatrixError(f"{name} must be {dim}x{dim}, got {A.shape}")
    return A


def symmetrize(A) -> np.ndarray:
    """(A + A^T) / 2."""
    A = as_square(A)
    return 0.5 * (A + A.T)


def symmetry_defect(A) -> float:
    A = as_square(A)
    return float(np.max(np.abs(A - A.T))) if A.size else 0.0


def min_eigenvalue(A) -> float:
    """Smallest eigenvalue of the symmetric part of A."""
    return float(scipy.linalg.eigvalsh(symmetrize(A))[0])


def psd_sqrt(Sigma, tol=1e-12) -> np.ndarray:
    """
    Symmetric square root of a PSD matrix through its eigendecomposition.
    Eigenvalues in [-tol, 0) are clipped to zero; anything more negative
    means the input is not PSD.
    """
    Sigma = as_square(Sigma, name="covariance")
    if symmetry_defect(Sigma) > 1e-10 * max(1.0, np.max(np.abs(Sigma))):
        raise MatrixError("covariance must be symmetric")
    vals, vecs = scipy.linalg.eigh(symmetrize(Sigma))
    scale = max(1.0, float(np.max(np.abs(vals))))
    if vals[0] < -tol * scale:
        raise MatrixError(f"covariance is not PSD (min eigenvalue {vals[0]:.3e})")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T
