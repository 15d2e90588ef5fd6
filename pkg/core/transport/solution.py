# ============================================================
# ChaosBound — Transport solutions
# The common result object of every solver plus the functionals
# computed from it: E[Hess phi] through the Stein identity, the
# quadratic cost, the inverse map and the convexity probes.
# ============================================================

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from core.errors import DimensionError, NonInjectiveMapError
from core.gaussian_core import QuadratureGrid, ScalarField, VectorField, as_points
from core.linalg import min_eigenvalue, symmetrize
from core.settings import DEFAULTS

logger = logging.getLogger(__name__)

CLOSED_FORM_METHODS = ("quantile_1d", "gaussian_linear")


@dataclass(frozen=True)
class SinkhornParams:
    epsilon_start: float = DEFAULTS.epsilon_start
    epsilon_final: float = DEFAULTS.epsilon_final
    epsilon_ratio: float = DEFAULTS.epsilon_ratio
    max_iter: int = DEFAULTS.sinkhorn_max_iter
    warm_iter: int = DEFAULTS.sinkhorn_warm_iter
    tol: float = DEFAULTS.marginal_tol
    sampling: str = "quadrature"          # or "monte_carlo"
    target_support: str = "adapted"       # or "reweighted"
    source_degree: Optional[int] = None
    target_degree: Optional[int] = None
    n_source: int = 400
    n_target: int = 400
    seed: int = DEFAULTS.seed
    check_every: int = 10

    def __post_init__(self):
        if not 0 < self.epsilon_final <= self.epsilon_start:
            raise ValueError("epsilon schedule must satisfy 0 < final <= start")
        if not 0 < self.epsilon_ratio < 1:
            raise ValueError("epsilon ratio must lie in (0, 1)")
        if self.max_iter < 1 or self.warm_iter < 1 or self.tol <= 0:
            raise ValueError("max_iter, warm_iter and tol must be positive")
        if self.sampling not in ("quadrature", "monte_carlo"):
            raise ValueError(f"unknown sampling {self.sampling!r}")
        if self.target_support not in ("adapted", "reweighted"):
            raise ValueError(f"unknown target support {self.target_support!r}")

    def schedule(self) -> tuple:
        """Strictly decreasing geometric schedule ending exactly at epsilon_final."""
        eps, out = self.epsilon_start, []
        while eps > self.epsilon_final * (1 + 1e-12):
            out.append(eps)
            eps *= self.epsilon_ratio
        out.append(self.epsilon_final)
        return tuple(out)


@dataclass(frozen=True, eq=False)
class TransportSolution:
    """
    T = I + grad phi pushing gamma_d to nu. phi is known up to a constant;
    only its derivatives feed the checks.
    """

    method: str
    map: VectorField
    potential: ScalarField
    mean_hessian: np.ndarray
    wasserstein_sq: float
    dual_potentials: Optional[dict] = field(default=None, repr=False)
    epsilon_final: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)
    inverse_fn: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)
    coupling_rule: Optional[Callable[[QuadratureGrid], tuple]] = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "mean_hessian", symmetrize(self.mean_hessian))
        object.__setattr__(self, "wasserstein_sq", max(0.0, float(self.wasserstein_sq)))

    @property
    def dim(self) -> int:
        return self.map.dim

    @property
    def is_closed_form(self) -> bool:
        return self.method in CLOSED_FORM_METHODS


# ---------------------------------------------------------
# EXPECTATIONS OF (x, T(x)) UNDER gamma_d
# ---------------------------------------------------------
def coupling_nodes(sol: TransportSolution, grid: QuadratureGrid):
    """
    Nodes (x_k, y_k = T(x_k)) and weights of a rule for the optimal coupling.
    Solutions may carry their own rule: the quantile solver integrates in y
    with x = S(y), which stays accurate when T is steep; the entropic solver
    uses its discrete source.
    """
    if grid.dim != sol.dim:
        raise DimensionError(f"grid dimension {grid.dim} != solution dimension {sol.dim}")
    if sol.coupling_rule is not None:
        return sol.coupling_rule(grid)
    return grid.nodes, sol.map(grid.nodes), grid.weights


def transport_expect(sol: TransportSolution, g, grid: QuadratureGrid):
    """E_gamma[g(x, T(x))] for g: ((n, d), (n, d)) -> (n,) or (n, k)."""
    x, y, w = coupling_nodes(sol, grid)
    values = np.asarray(g(x, y), dtype=float)
    if values.ndim == 1:
        return float(np.sum(w * values))
    return np.tensordot(w, values, axes=(0, 0))


def stein_hessian(sol: TransportSolution, grid: QuadratureGrid) -> np.ndarray:
    """E[(T(x) - x) x^T] before symmetrisation."""
    d = sol.dim
    flat = transport_expect(sol, lambda x, y: ((y - x)[:, :, None] * x[:, None, :]).reshape(len(x), d * d),
                            grid)
    return np.asarray(flat).reshape(d, d)


def mean_potential_hessian(sol: TransportSolution, grid: QuadratureGrid) -> np.ndarray:
    """E[Hess phi]_{ij} = E[(T(x) - x)_i x_j], symmetrised."""
    return symmetrize(stein_hessian(sol, grid))


def wasserstein_sq(sol: TransportSolution, grid: QuadratureGrid) -> float:
    """E|T(x) - x|^2 under gamma_d."""
    return transport_expect(sol, lambda x, y: np.sum((y - x) ** 2, axis=1), grid)


def displacement_moments(sol: TransportSolution, grid: QuadratureGrid):
    """(E[grad phi], E[grad phi (x) grad phi])."""
    d = sol.dim
    first = np.atleast_1d(transport_expect(sol, lambda x, y: y - x, grid))
    second = transport_expect(
        sol, lambda x, y: ((y - x)[:, :, None] * (y - x)[:, None, :]).reshape(len(x), d * d), grid)
    return first, symmetrize(np.asarray(second).reshape(d, d))


# ---------------------------------------------------------
# INVERSE MAP
# ---------------------------------------------------------
def inverse_map(sol: TransportSolution, grid: QuadratureGrid) -> VectorField:
    """S with S(T(x)) = x; the round-trip error on the grid lands in diagnostics."""
    if sol.inverse_fn is None:
        raise NonInjectiveMapError(f"{sol.method} solution carries no inverse")
    inverse = VectorField(sol.inverse_fn, sol.dim, name="inverse map")
    roundtrip = float(np.max(np.abs(inverse(sol.map(grid.nodes)) - grid.nodes)))
    sol.diagnostics["inverse_roundtrip_error"] = roundtrip
    logger.debug("inverse map round-trip error %.3e on %d nodes", roundtrip, grid.size)
    return inverse


# ---------------------------------------------------------
# CONVEXITY PROBES
# ---------------------------------------------------------
def potential_convexity_margin(sol: TransportSolution, points) -> float:
    """min over points of min-eig(I + Hess phi(x)); >= 0 means phi is 1-convex there."""
    pts, _ = as_points(points, sol.dim)
    hessians = sol.potential.hess(pts).reshape(len(pts), sol.dim, sol.dim)
    eye = np.eye(sol.dim)
    return min(min_eigenvalue(eye + H) for H in hessians)


def monotonicity_probe(sol: TransportSolution, n_pairs: int = 1000, seed: int = DEFAULTS.seed) -> float:
    """min over seeded gamma-distributed pairs of <T(x) - T(y), x - y>."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_pairs, sol.dim))
    y = rng.standard_normal((n_pairs, sol.dim))
    return float(np.min(np.sum((sol.map(x) - sol.map(y)) * (x - y), axis=1)))
