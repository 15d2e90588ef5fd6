# ============================================================
# ChaosBound — Wiener chaos at finite dimension
# Stroock moments (E[L], E[grad L], E[Hess L]) through the
# Gaussian integration by parts, truncated Hermite expansions,
# the second-chaos quadratic form and r-convexity margins.
# ============================================================

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from core.densities import DensityModel, check_nonnegative, ensure_dim
from core.errors import DensityError, DimensionError
from core.gaussian_core import (
    GaussianSpace,
    MultiIndex,
    QuadratureGrid,
    as_points,
    expect,
    expect_adaptive,
    hermite_table,
    multi_indices,
)
from core.linalg import as_square, min_eigenvalue, symmetrize
from core.settings import DEFAULTS

logger = logging.getLogger(__name__)


# ---------------------------------------------------------
# STROOCK MOMENTS
# ---------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ChaosMoments:
    mass: float
    m1: np.ndarray
    m2: np.ndarray
    provenance: str = "quadrature"
    route_gap: Optional[float] = None
    converged: bool = True
    degree: Optional[int] = None

    def __post_init__(self):
        m1 = np.atleast_1d(np.asarray(self.m1, dtype=float))
        m2 = as_square(self.m2, len(m1), name="second moment kernel")
        object.__setattr__(self, "m1", m1)
        object.__setattr__(self, "m2", symmetrize(m2))
        object.__setattr__(self, "mass", float(self.mass))

    @property
    def dim(self) -> int:
        return len(self.m1)

    @property
    def routes_agree(self) -> Optional[bool]:
        if self.route_gap is None:
            return None
        return self.route_gap <= DEFAULTS.route_tol

    def scaled(self, factor: float) -> "ChaosMoments":
        return ChaosMoments(self.mass * factor, self.m1 * factor, self.m2 * factor,
                            self.provenance, self.route_gap, self.converged, self.degree)

    def as_dict(self) -> dict:
        return {"mass": self.mass, "m1": self.m1.tolist(), "m2": self.m2.tolist(),
                "provenance": self.provenance, "route_gap": self.route_gap,
                "converged": self.converged, "degree": self.degree}


def _moment_integrand(L: DensityModel):
    dim = L.dim
    eye = np.eye(dim)

    def integrand(pts):
        values = check_nonnegative(L, pts)
        second = pts[:, :, None] * pts[:, None, :] - eye
        return np.concatenate([values[:, None],
                               values[:, None] * pts,
                               (values[:, None, None] * second).reshape(len(pts), dim * dim)],
                              axis=1)

    return integrand


def _unpack(vector: np.ndarray, dim: int):
    return vector[0], vector[1:1 + dim], vector[1 + dim:].reshape(dim, dim)


def quadrature_moments(L: DensityModel, grid: QuadratureGrid) -> ChaosMoments:
    """Moments by quadrature on the given grid only, closed form or not."""
    ensure_dim(L, grid)
    mass, m1, m2 = _unpack(np.asarray(expect(_moment_integrand(L), grid)), L.dim)
    return ChaosMoments(mass, m1, m2, "quadrature", None, True, grid.degree)


def stroock_moments(L: DensityModel, grid: QuadratureGrid, adaptive: bool = False,
                    rtol: float = DEFAULTS.adaptive_rtol,
                    max_degree: int = DEFAULTS.adaptive_max_degree) -> ChaosMoments:
    """
    E[L], E[grad L] = E[L x], E[Hess L] = E[L (x x^T - I)].
    Closed-form families also get the analytic nu-moments; those become
    the reported values and the quadrature gap is kept as route_gap.
    """
    ensure_dim(L, grid)
    integrand = _moment_integrand(L)
    if adaptive:
        estimate = expect_adaptive(integrand, L.dim, degree=grid.degree, rtol=rtol, max_degree=max_degree)
        quad, converged, degree = estimate.value, estimate.converged, estimate.degree
    else:
        quad, converged, degree = expect(integrand, grid), True, grid.degree
    mass_q, m1_q, m2_q = _unpack(np.asarray(quad), L.dim)

    if not L.is_closed_form:
        return ChaosMoments(mass_q, m1_q, m2_q, "quadrature", None, converged, degree)

    m1_c = L.nu_mean()
    m2_c = L.nu_second_moment() - np.eye(L.dim)
    gap = max(abs(mass_q - 1.0), float(np.max(np.abs(m1_q - m1_c))),
              float(np.max(np.abs(symmetrize(m2_q) - m2_c))))
    if gap > DEFAULTS.route_tol:
        logger.warning("quadrature moments differ from closed form by %.3e at degree %d", gap, degree)
    return ChaosMoments(1.0, m1_c, m2_c, "both", gap, converged, degree)


# ---------------------------------------------------------
# TRUNCATED CHAOS EXPANSION
# ---------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ChaosExpansion:
    space: GaussianSpace
    max_degree: int
    coefficients: dict = field(repr=False)

    @property
    def c0(self) -> float:
        return self.coefficients[MultiIndex((0,) * self.space.dim)]

    def coefficient(self, alpha) -> float:
        alpha = alpha if isinstance(alpha, MultiIndex) else MultiIndex(tuple(np.atleast_1d(alpha)))
        return self.coefficients.get(alpha, 0.0)

    def truncate(self, degree: int) -> "ChaosExpansion":
        kept = {a: c for a, c in self.coefficients.items() if a.degree <= degree}
        return ChaosExpansion(self.space, degree, kept)


def _axis_tables(pts: np.ndarray, max_degree: int):
    return [hermite_table(max_degree, pts[:, axis]) for axis in range(pts.shape[1])]


def _basis_values(tables, alpha: MultiIndex) -> np.ndarray:
    values = np.ones(tables[0].shape[1])
    for axis, order in enumerate(alpha.entries):
        if order:
            values = values * tables[axis][order]
    return values


def chaos_coefficients(L, grid: QuadratureGrid, max_degree: int = DEFAULTS.chaos_degree) -> ChaosExpansion:
    """c_alpha = E[L H_alpha] / alpha! for |alpha| <= max_degree; L may be any scalar field."""
    if max_degree < 0:
        raise ValueError(f"truncation degree must be >= 0, got {max_degree}")
    if grid.degree < max_degree + 2:
        raise DimensionError(f"grid degree {grid.degree} is too low for chaos degree {max_degree}")
    if isinstance(L, DensityModel):
        ensure_dim(L, grid)
        values = check_nonnegative(L, grid.nodes)
    else:
        values = np.asarray(L(grid.nodes), dtype=float).reshape(grid.size)
    weighted = grid.weights * values
    tables = _axis_tables(grid.nodes, max_degree)
    coefficients = {alpha: float(np.sum(weighted * _basis_values(tables, alpha))) / alpha.factorial
                    for alpha in multi_indices(grid.dim, max_degree)}
    return ChaosExpansion(GaussianSpace(grid.dim), max_degree, coefficients)


def reconstruct(e: ChaosExpansion, x):
    """sum_{|alpha| <= N} c_alpha H_alpha(x)."""
    pts, single = as_points(x, e.space.dim)
    tables = _axis_tables(pts, e.max_degree)
    values = np.zeros(len(pts))
    for alpha, c in e.coefficients.items():
        if c:
            values += c * _basis_values(tables, alpha)
    return float(values[0]) if single else values


def parseval_partial_sums(e: ChaosExpansion) -> list:
    """sum_{|alpha| <= n} c_alpha^2 alpha! for n = 0..N."""
    by_degree = np.zeros(e.max_degree + 1)
    for alpha, c in e.coefficients.items():
        by_degree[alpha.degree] += c * c * alpha.factorial
    return np.cumsum(by_degree).tolist()


# ---------------------------------------------------------
# SECOND CHAOS + CONVEXITY
# ---------------------------------------------------------
@dataclass(frozen=True, eq=False)
class QuadraticForm:
    """x -> (<Kx, x> - trace K) / 2 + offset, i.e. delta^2(K)/2 + offset."""

    kernel: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kernel", symmetrize(self.kernel))

    @property
    def dim(self) -> int:
        return self.kernel.shape[0]

    def __call__(self, x):
        pts, single = as_points(x, self.dim)
        quad = np.einsum("ni,ij,nj->n", pts, self.kernel, pts)
        values = 0.5 * (quad - np.trace(self.kernel)) + self.offset
        return float(values[0]) if single else values


def second_chaos_form(m: ChaosMoments) -> QuadraticForm:
    if m.mass <= 0:
        raise DensityError(f"mass must be positive, got {m.mass}")
    return QuadraticForm(m.m2 / m.mass, 0.0)


def r_convexity(q: QuadraticForm, r: float) -> float:
    """min-eig(K) + r; the form is r-convex iff this is >= -tol."""
    return min_eigenvalue(q.kernel) + float(r)
