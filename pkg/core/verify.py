# ============================================================
# ChaosBound — Verification checks
# The two proof identities, the operator inequality between
# the second-chaos kernel and E[Hess phi], the discriminant
# inequality, their measure-valued versions and the Jacobian
# (Monge-Ampere) identity, each reduced to one number.
# ============================================================

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from core.chaos import ChaosMoments, QuadraticForm, quadrature_moments, r_convexity, second_chaos_form
from core.densities import DensityModel, relative_entropy
from core.errors import DensityError
from core.gaussian_core import QuadratureGrid, expect, wick_exp
from core.linalg import min_eigenvalue, symmetrize
from core.measures import MomentFunctionals, PositiveMeasure, ou_regularize, regularized_moments
from core.settings import DEFAULTS
from core.transport import (
    SinkhornParams,
    TransportSolution,
    displacement_moments,
    jacobian_lambda,
    mean_potential_hessian,
    solve_entropic,
    solve_gaussian_linear,
    solve_quantile_1d,
    transport_expect,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------
# RESULT TYPES
# ---------------------------------------------------------
@dataclass(frozen=True)
class CheckResult:
    """One verified quantity. Residuals pass when <= tol, margins and slacks when >= -tol."""

    name: str
    kind: str
    value: float
    tolerance: float
    details: dict = field(default_factory=dict)
    diagnostic_only: bool = False

    @property
    def passed(self) -> bool:
        if not np.isfinite(self.value):
            return False
        if self.kind == "residual":
            return self.value <= self.tolerance
        return self.value >= -self.tolerance

    def as_dict(self) -> dict:
        return {self.kind: float(self.value), "tolerance": float(self.tolerance),
                "pass": bool(self.passed), "diagnostic_only": self.diagnostic_only, **self.details}


@dataclass
class VerificationReport:
    case_id: str
    dim: int
    descriptor: dict
    tolerances: dict
    checks: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    runtime_ms: float = 0.0
    error: Optional[dict] = None

    def add(self, check: CheckResult):
        self.checks[check.name] = check
        logger.info("%s: %s %.6g (tol %.1e) %s", check.name, check.kind, check.value,
                    check.tolerance, "pass" if check.passed else "FAIL")

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks.values() if not c.diagnostic_only)

    @property
    def exit_code(self) -> int:
        if self.error is not None:
            return 1
        return 0 if self.passed else 2


def tolerance_for(sol: Optional[TransportSolution], settings=DEFAULTS) -> float:
    if sol is None or sol.is_closed_form:
        return settings.closed_form_tol
    return settings.entropic_tol


# ---------------------------------------------------------
# PROOF IDENTITIES
# ---------------------------------------------------------
def first_order_identity(m: ChaosMoments, sol: TransportSolution, grid: QuadratureGrid) -> float:
    """|E[grad L] - E[T(x) - x]|_2."""
    transport_side = np.atleast_1d(transport_expect(sol, lambda x, y: y - x, grid))
    return float(np.linalg.norm(m.m1 / m.mass - transport_side))


def second_order_identity(m: ChaosMoments, sol: TransportSolution, grid: QuadratureGrid) -> float:
    """max |E[Hess L] - E[grad phi (x) grad phi] - 2 E[Hess phi]|."""
    _, second = displacement_moments(sol, grid)
    defect = m.m2 / m.mass - second - 2.0 * mean_potential_hessian(sol, grid)
    return float(np.max(np.abs(defect)))


def covariance_gap(sol: TransportSolution, grid: QuadratureGrid) -> float:
    """min-eig of Cov_gamma(grad phi); zero for constant displacements."""
    first, second = displacement_moments(sol, grid)
    return min_eigenvalue(second - np.outer(first, first))


# ---------------------------------------------------------
# INEQUALITIES
# ---------------------------------------------------------
def theorem_sides(m: ChaosMoments, sol: TransportSolution):
    """LHS = (E[Hess L] - E[grad L] E[grad L]^T / E[L]) / (2 E[L]), RHS = E[Hess phi]."""
    if m.mass <= 0:
        raise DensityError(f"E[L] must be positive, got {m.mass}")
    lhs = (m.m2 - np.outer(m.m1, m.m1) / m.mass) / (2.0 * m.mass)
    return symmetrize(lhs), symmetrize(sol.mean_hessian)


def theorem_margin(m: ChaosMoments, sol: TransportSolution) -> float:
    lhs, rhs = theorem_sides(m, sol)
    return min_eigenvalue(lhs - rhs)


def proposition_matrix(m: ChaosMoments) -> np.ndarray:
    """I + E[Hess L]/E[L] - E[grad L] E[grad L]^T / E[L]^2."""
    if m.mass <= 0:
        raise DensityError(f"E[L] must be positive, got {m.mass}")
    return symmetrize(np.eye(m.dim) + m.m2 / m.mass - np.outer(m.m1, m.m1) / m.mass ** 2)


def proposition_margin(m: ChaosMoments) -> float:
    return min_eigenvalue(proposition_matrix(m))


def measure_corollary_margin(mf: MomentFunctionals):
    """
    (margin, convexity): margin = min-eig(I + M2/m(W) - M1 M1^T / m(W)^2),
    convexity = 1-convexity margin of the kernel M2/m(W).
    """
    matrix = np.eye(len(mf.M1)) + mf.M2 / mf.mass - np.outer(mf.M1, mf.M1) / mf.mass ** 2
    return min_eigenvalue(matrix), r_convexity(measure_chaos_form(mf), 1.0)


def measure_chaos_form(mf: MomentFunctionals) -> QuadraticForm:
    """Second-chaos projection of a positive measure, normalised by its mass."""
    return second_chaos_form(ChaosMoments(mf.mass, mf.M1, mf.M2, provenance="closed_form"))


# ---------------------------------------------------------
# MEASURE TRANSPORT (regularised measures)
# ---------------------------------------------------------
@dataclass(frozen=True)
class TransportMargin:
    t: float
    margin: float
    method: str
    converged: bool

    def as_dict(self) -> dict:
        return {"t": self.t, "margin": self.margin, "method": self.method, "converged": self.converged}


def solve_transport(L: DensityModel, grid: QuadratureGrid, method: str = "auto",
                    params: SinkhornParams = SinkhornParams()) -> TransportSolution:
    """auto: quantile coupling in 1D, linear map for one Gaussian, Sinkhorn otherwise."""
    if method == "auto":
        if L.dim == 1:
            method = "quantile"
        elif L.single_gaussian is not None:
            method = "gaussian"
        else:
            method = "entropic"
    if method == "gaussian":
        gaussian = L.single_gaussian
        if gaussian is None:
            raise DensityError(f"the linear map needs a single Gaussian target, got {L.family}")
        mean, cov = gaussian
        return solve_gaussian_linear(cov, mean)
    if method == "quantile":
        return solve_quantile_1d(L, grid)
    if method == "entropic":
        return solve_entropic(L, grid, params)
    raise ValueError(f"unknown transport method {method!r}")


def measure_transport_margin(m: PositiveMeasure, t: float, grid: QuadratureGrid,
                             p: SinkhornParams = SinkhornParams(), method: str = "auto") -> TransportMargin:
    """
    min-eig((M2 - M1 M1^T / m(W)) / (2 m(W)) - E[Hess phi]) with the moments of
    P_t m and phi the potential between gamma_d and P_t m / m(W).
    """
    density = ou_regularize(m, t)
    sol = solve_transport(density, grid, method, p)
    mf = regularized_moments(m, t)
    moments = ChaosMoments(mf.mass, mf.M1, mf.M2, provenance="closed_form")
    converged = bool(sol.diagnostics.get("converged", True))
    if not converged:
        logger.warning("transport for P_%g m did not converge", t)
    return TransportMargin(float(t), theorem_margin(moments, sol), sol.method, converged)


def corollary_trend(m: PositiveMeasure, ts, grid: QuadratureGrid,
                    p: SinkhornParams = SinkhornParams(), method: str = "auto") -> list:
    """Margins over a decreasing t-list; monotonicity is recorded, not asserted."""
    ts = sorted((float(t) for t in ts), reverse=True)
    return [measure_transport_margin(m, t, grid, p, method) for t in ts]


# ---------------------------------------------------------
# JACOBIAN + GENERATING FUNCTION
# ---------------------------------------------------------
def monge_ampere_residual(L: DensityModel, sol: TransportSolution, grid: QuadratureGrid,
                          quantile: float = DEFAULTS.interior_quantile) -> float:
    """sup over interior nodes of |L(T(x)) Lambda(x) - 1|."""
    interior = grid.nodes[grid.interior_mask(quantile)]
    if len(interior) == 0:
        return 0.0
    products = L(sol.map(interior)) * np.atleast_1d(jacobian_lambda(sol, interior))
    return float(np.max(np.abs(products - 1.0)))


def _nu_wick_expectation(L: DensityModel, h: np.ndarray, grid: QuadratureGrid) -> float:
    """E[L rho(delta h)] = E_nu[exp(<h, y> - |h|^2/2)]."""
    if L.is_closed_form:
        half_sq = 0.5 * float(h @ h)
        return float(sum(c.weight * np.exp(h @ c.mean + 0.5 * h @ c.cov @ h - half_sq)
                         for c in L.components))
    return expect(lambda pts: L(pts) * wick_exp(h, pts), grid)


def wick_pushforward_residual(L: DensityModel, sol: TransportSolution, h, ts,
                              grid: QuadratureGrid) -> float:
    """max over t of |E[L rho(delta(t h))] - E[rho(delta(t h)) o T]|."""
    h = np.atleast_1d(np.asarray(h, dtype=float))
    worst = 0.0
    for t in ts:
        th = float(t) * h
        left = _nu_wick_expectation(L, th, grid)
        right = transport_expect(sol, lambda x, y: wick_exp(th, y), grid)
        worst = max(worst, abs(left - right) / max(1.0, abs(left)))
    return worst


@dataclass(frozen=True)
class DiscriminantResult:
    slack: float
    l1_moment: float
    l2_moment: float
    l1_difference: float
    l2_difference: float

    @property
    def route_gap(self) -> float:
        return max(abs(self.l1_moment - self.l1_difference), abs(self.l2_moment - self.l2_difference))

    def as_dict(self) -> dict:
        return {"l1_moment": self.l1_moment, "l2_moment": self.l2_moment,
                "l1_difference": self.l1_difference, "l2_difference": self.l2_difference,
                "route_gap": self.route_gap}


def discriminant_check(L: DensityModel, h, grid: QuadratureGrid, step: float = 1e-2) -> DiscriminantResult:
    """
    With l(t) = E[L rho(delta(t h))]: slack = |h|^2 + l''(0) - l'(0)^2, l' and l''
    taken from the moments and, independently, from central differences in t.
    """
    h = np.atleast_1d(np.asarray(h, dtype=float))
    norm_sq = float(h @ h)
    if norm_sq <= 0:
        raise ValueError("direction h must be non-zero")

    def l(t):
        return expect(lambda pts: L(pts) * wick_exp(t * h, pts), grid)

    # five-point central stencils
    l_m2, l_m1, l_0, l_p1, l_p2 = (l(k * step) for k in (-2, -1, 0, 1, 2))
    l1_fd = (-l_p2 + 8.0 * l_p1 - 8.0 * l_m1 + l_m2) / (12.0 * step)
    l2_fd = (-l_p2 + 16.0 * l_p1 - 30.0 * l_0 + 16.0 * l_m1 - l_m2) / (12.0 * step ** 2)

    m = quadrature_moments(L, grid)
    l1 = float(m.m1 @ h)
    l2 = float(h @ m.m2 @ h)
    slack = norm_sq + l2 / m.mass - (l1 / m.mass) ** 2
    return DiscriminantResult(slack, l1, l2, l1_fd, l2_fd)


# ---------------------------------------------------------
# ENTROPY
# ---------------------------------------------------------
def entropy_margin(L: DensityModel, sol: TransportSolution, grid: QuadratureGrid) -> float:
    """2 E[L log L] - d_H^2; the transport cost is bounded by twice the entropy."""
    return 2.0 * relative_entropy(L, grid) - sol.wasserstein_sq
