# ------------------------------------------------------------
# ChaosBound Pipeline — Scenario -> Moments -> Transport -> Checks
# ------------------------------------------------------------

import logging
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from core import densities
from core.chaos import (
    ChaosMoments,
    QuadraticForm,
    chaos_coefficients,
    parseval_partial_sums,
    r_convexity,
    second_chaos_form,
    stroock_moments,
)
from core.errors import ChaosBoundError, DensityError, MeasureError
from core.gaussian_core import GaussianSpace, QuadratureGrid, build_grid
from core.measures import (
    PositiveMeasure,
    discretized_gaussian,
    moment_functionals,
    point_masses,
)
from core.settings import Settings
from core.transport import (
    TransportSolution,
    coupling_nodes,
    inverse_map,
    jacobian_crosscheck,
    monotonicity_probe,
    potential_convexity_margin,
    solve_gaussian_linear,
    solve_quantile_1d,
)
from core.verify import (
    CheckResult,
    VerificationReport,
    corollary_trend,
    covariance_gap,
    discriminant_check,
    entropy_margin,
    first_order_identity,
    measure_chaos_form,
    measure_corollary_margin,
    monge_ampere_residual,
    proposition_margin,
    proposition_matrix,
    second_order_identity,
    solve_transport,
    theorem_margin,
    theorem_sides,
    tolerance_for,
    wick_pushforward_residual,
)

logger = logging.getLogger(__name__)

TRANSPORT_CHECKS = {"identities", "theorem", "monge_ampere", "entropy", "potential_convexity",
                    "monotonicity", "wick_pushforward", "inverse", "oracle"}
ADAPTIVE_CAPS = {1: 640, 2: 160, 3: 40}
WICK_TIMES = (0.25, 0.5, 1.0)
ORACLE_RADIUS = 3.0


# ------------------------------------------------------------
# Input resolution
# ------------------------------------------------------------
def _sampled_expression(space: GaussianSpace, inner: densities.DensityModel, scale: float):
    """inner read point by point, so scale and normaliser go through quadrature."""
    def values(pts):
        return inner(pts)

    values.__name__ = inner.family
    return densities.point_expression(space, values, scale,
                                      entropy_certified=inner.entropy_certified,
                                      l2_certified=inner.l2_certified)


def build_density(space: GaussianSpace, entry: dict) -> densities.DensityModel:
    """Builds a DensityModel from a validated density entry."""
    family = entry["family"]
    scale = entry.get("scale", 1.0)
    if family == "uniform":
        return densities.uniform(space, scale)
    if family == "wick_shift":
        return densities.wick_shift(space, entry["h"], scale)
    if family == "scaled_gaussian":
        if "sigma" in entry:
            covariance = np.square(np.broadcast_to(np.asarray(entry["sigma"], dtype=float), (space.dim,)))
        else:
            covariance = entry["covariance"]
        return densities.scaled_gaussian(space, covariance, entry.get("mean"), scale)
    if family == "gaussian_mixture":
        return densities.gaussian_mixture(space, entry["weights"], entry["means"], entry["covariances"], scale)
    if family == "random_mixture":
        extra = {k: entry[k] for k in ("max_components", "mean_range") if k in entry}
        if "variance_range" in entry:
            extra["variance_range"] = tuple(entry["variance_range"])
        return densities.random_mixture(space, int(entry["seed"]), scale=scale, **extra)
    if family == "point_expression":
        return _sampled_expression(space, build_density(space, entry["of"]), scale)
    raise DensityError(f"unknown density family {family!r}")


def build_measure(space: GaussianSpace, entry: dict) -> PositiveMeasure:
    if "discretized_gaussian" in entry:
        return discretized_gaussian(space, int(entry["discretized_gaussian"]))
    if "atoms" in entry:
        return point_masses(space, [(a["location"], a["weight"]) for a in entry["atoms"]])
    raise MeasureError("measure entry needs 'atoms' or 'discretized_gaussian'")


@dataclass
class ScenarioContext:
    """Everything the checks and the exports share for one scenario."""

    space: GaussianSpace
    grid: QuadratureGrid
    settings: Settings
    density: Optional[densities.DensityModel] = None
    measure: Optional[PositiveMeasure] = None
    moments: Optional[ChaosMoments] = None
    solution: Optional[TransportSolution] = None


def resolve_grid(config, density) -> tuple:
    """(grid, moments); 'adaptive' lets the moment quadrature pick the degree."""
    settings = config.settings()
    if config.degree != "adaptive":
        grid = build_grid(config.dim, config.degree, settings.node_cap)
        moments = stroock_moments(density, grid) if density is not None else None
        return grid, moments
    if density is None:
        return build_grid(config.dim, settings.default_degree, settings.node_cap), None
    start = build_grid(config.dim, 10, settings.node_cap)
    moments = stroock_moments(density, start, adaptive=True, rtol=settings.adaptive_rtol,
                              max_degree=ADAPTIVE_CAPS.get(config.dim, settings.adaptive_max_degree))
    return build_grid(config.dim, moments.degree, settings.node_cap), moments


def prepare_scenario(config, with_transport: Optional[bool] = None) -> ScenarioContext:
    """Stages 0-2: space, density or measure, grid, moments and (when needed) the transport solve."""
    space = GaussianSpace(config.dim)
    density = build_density(space, config.density) if config.density is not None else None
    measure = build_measure(space, config.measure) if config.measure is not None else None
    grid, moments = resolve_grid(config, density)
    logger.info("[%s] grid degree %d (%d nodes)", config.case_id, grid.degree, grid.size)

    ctx = ScenarioContext(space, grid, config.settings(), density, measure, moments)
    if with_transport is None:
        with_transport = bool(TRANSPORT_CHECKS & set(config.check_names))
    if with_transport and density is not None:
        ctx.solution = solve_transport(density, grid, config.method, config.sinkhorn_params())
        logger.info("[%s] transport solved by %s, d^2 = %.6g", config.case_id,
                    ctx.solution.method, ctx.solution.wasserstein_sq)
    return ctx


# ------------------------------------------------------------
# Individual checks
# ------------------------------------------------------------
def _identities(ctx: ScenarioContext) -> CheckResult:
    sol, s = ctx.solution, ctx.settings
    first = first_order_identity(ctx.moments, sol, ctx.grid)
    second = second_order_identity(ctx.moments, sol, ctx.grid)
    tol = s.identity_tol if sol.is_closed_form else s.entropic_identity_tol
    return CheckResult("identities", "residual", max(first, second), tol,
                       {"first_order": first, "second_order": second,
                        "covariance_gap": covariance_gap(sol, ctx.grid)})


def _theorem(ctx: ScenarioContext) -> CheckResult:
    lhs, rhs = theorem_sides(ctx.moments, ctx.solution)
    return CheckResult("theorem", "margin", theorem_margin(ctx.moments, ctx.solution),
                       tolerance_for(ctx.solution, ctx.settings),
                       {"lhs": lhs.tolist(), "rhs": rhs.tolist()})


def _proposition(ctx: ScenarioContext) -> CheckResult:
    return CheckResult("proposition", "margin", proposition_margin(ctx.moments),
                       ctx.settings.closed_form_tol,
                       {"matrix": proposition_matrix(ctx.moments).tolist()})


def _corollary2(ctx: ScenarioContext) -> CheckResult:
    mf = moment_functionals(ctx.measure)
    margin, convexity = measure_corollary_margin(mf)
    return CheckResult("corollary2", "margin", margin, ctx.settings.closed_form_tol,
                       {"projection_convexity": convexity, **mf.as_dict()})


def _corollary1(ctx: ScenarioContext, config) -> CheckResult:
    ts = config.check("corollary1").args
    trend = corollary_trend(ctx.measure, ts, ctx.grid, config.sinkhorn_params(), config.method)
    worst = min(item.margin for item in trend)
    return CheckResult("corollary1", "margin", worst, ctx.settings.entropic_tol,
                       {"trend": [item.as_dict() for item in trend],
                        "converged": all(item.converged for item in trend)})


def _monge_ampere(ctx: ScenarioContext) -> CheckResult:
    sol, s = ctx.solution, ctx.settings
    residual = monge_ampere_residual(ctx.density, sol, ctx.grid, s.interior_quantile)
    interior = ctx.grid.nodes[ctx.grid.interior_mask(s.interior_quantile)]
    details = {"det2_crosscheck": jacobian_crosscheck(sol, interior) if len(interior) else 0.0}
    if sol.is_closed_form:
        return CheckResult("monge_ampere", "residual", residual, s.monge_ampere_tol, details)
    return CheckResult("monge_ampere", "residual", residual, s.entropic_monge_ampere_tol, details,
                       diagnostic_only=True)


def _discriminant(ctx: ScenarioContext, config) -> list:
    entry = config.check("discriminant")
    h = np.array(entry.args) if entry.args else np.ones(config.dim)
    result = discriminant_check(ctx.density, h, ctx.grid)
    return [
        CheckResult("discriminant", "slack", result.slack, ctx.settings.closed_form_tol,
                    {"h": h.tolist(), **result.as_dict()}),
        CheckResult("discriminant_routes", "residual", result.route_gap, ctx.settings.identity_tol),
    ]


def _chaos(ctx: ScenarioContext, config) -> CheckResult:
    """Stroock-Taylor consistency: c_alpha for |alpha| <= 2 against the moments."""
    entry = config.check("chaos")
    degree = int(entry.args[0]) if entry.args else ctx.settings.chaos_degree
    grid = ctx.grid if ctx.grid.degree >= degree + 2 else build_grid(config.dim, degree + 2)
    expansion = chaos_coefficients(ctx.density, grid, degree)
    m, d = ctx.moments, config.dim
    gaps = [abs(expansion.c0 - m.mass)]
    if degree >= 1:
        for i in range(d):
            gaps.append(abs(expansion.coefficient(np.eye(d, dtype=int)[i]) - m.m1[i]))
    if degree >= 2:
        for i in range(d):
            for j in range(i, d):
                alpha = np.eye(d, dtype=int)[i] + np.eye(d, dtype=int)[j]
                factor = 2.0 if i == j else 1.0
                gaps.append(abs(expansion.coefficient(alpha) - m.m2[i, j] / factor))
    details = {"degree": degree, "c0": expansion.c0}
    if ctx.density.l2_certified:
        details["parseval_partial_sums"] = parseval_partial_sums(expansion)
    return CheckResult("chaos", "residual", max(gaps), ctx.settings.route_tol, details)


def _convexity(ctx: ScenarioContext, config) -> CheckResult:
    entry = config.check("convexity")
    r = entry.args[0] if entry.args else 1.0
    if config.kernel is not None:
        form, source = QuadraticForm(np.asarray(config.kernel, dtype=float)), "config"
    elif ctx.measure is not None:
        form, source = measure_chaos_form(moment_functionals(ctx.measure)), "measure"
    else:
        form, source = second_chaos_form(ctx.moments), "density"
    return CheckResult("convexity", "margin", r_convexity(form, r), ctx.settings.closed_form_tol,
                       {"r": r, "kernel_source": source})


def _inverse(ctx: ScenarioContext) -> CheckResult:
    sol, s = ctx.solution, ctx.settings
    interior = ctx.grid.nodes[ctx.grid.interior_mask(s.interior_quantile)]
    inverse = inverse_map(sol, ctx.grid)
    residual = float(np.max(np.abs(inverse(sol.map(interior)) - interior))) if len(interior) else 0.0
    tol = s.monge_ampere_tol if sol.is_closed_form else s.entropic_identity_tol
    return CheckResult("inverse", "residual", residual, tol,
                       {"grid_roundtrip": sol.diagnostics.get("inverse_roundtrip_error")})


def _oracle_for(ctx: ScenarioContext) -> Optional[TransportSolution]:
    sol, L = ctx.solution, ctx.density
    gaussian = L.single_gaussian
    if sol.method != "gaussian_linear" and gaussian is not None:
        return solve_gaussian_linear(gaussian[1], gaussian[0])
    if sol.method == "entropic" and L.dim == 1:
        return solve_quantile_1d(L, ctx.grid)
    return None


def _oracle(ctx: ScenarioContext) -> Optional[CheckResult]:
    oracle = _oracle_for(ctx)
    if oracle is None:
        logger.warning("no closed-form oracle for %s solved by %s", ctx.density.family, ctx.solution.method)
        return None
    x, y, _ = coupling_nodes(ctx.solution, ctx.grid)
    inside = np.all(np.abs(x) <= ORACLE_RADIUS, axis=1)
    distance = float(np.max(np.abs(y[inside] - oracle.map(x[inside])))) if np.any(inside) else 0.0
    tol = ctx.settings.monge_ampere_tol if ctx.solution.is_closed_form else ctx.settings.entropic_identity_tol
    return CheckResult("oracle", "residual", distance, tol,
                       {"oracle_method": oracle.method, "oracle_wasserstein_sq": oracle.wasserstein_sq})


# ------------------------------------------------------------
# Main orchestrator
# ------------------------------------------------------------
def run_scenario(config) -> VerificationReport:
    """
    Runs one scenario end to end.

    Returns a VerificationReport; a hard error anywhere is caught and
    recorded in report.error instead of propagating.
    """
    started = time.perf_counter()
    report = VerificationReport(case_id=config.case_id, dim=config.dim, descriptor={},
                                tolerances={k: getattr(config.settings(), k) for k in
                                            ("closed_form_tol", "entropic_tol", "identity_tol",
                                             "entropic_identity_tol", "monge_ampere_tol", "route_tol")})
    try:
        # ------------------------------------------------------------
        # 0-2. Inputs, grid, moments, transport
        # ------------------------------------------------------------
        ctx = prepare_scenario(config)
        subject = ctx.density if ctx.density is not None else ctx.measure
        report.descriptor = subject.describe()
        report.diagnostics["grid"] = {"degree": ctx.grid.degree, "nodes": ctx.grid.size}
        if ctx.moments is not None:
            report.diagnostics["moments"] = ctx.moments.as_dict()
        if ctx.density is not None:
            interior = ctx.grid.nodes[ctx.grid.interior_mask(ctx.settings.interior_quantile)][:200]
            report.diagnostics["log_concavity_margin"] = densities.log_concavity_margin(ctx.density, interior)
        if ctx.solution is not None:
            report.diagnostics["solver"] = {"method": ctx.solution.method,
                                            "wasserstein_sq": ctx.solution.wasserstein_sq,
                                            "epsilon_final": ctx.solution.epsilon_final,
                                            **ctx.solution.diagnostics}

        # ------------------------------------------------------------
        # 3. Checks, in fixed order
        # ------------------------------------------------------------
        names = config.check_names
        if "identities" in names:
            report.add(_identities(ctx))
        if "theorem" in names:
            report.add(_theorem(ctx))
        if "proposition" in names:
            report.add(_proposition(ctx))
        if "corollary2" in names:
            report.add(_corollary2(ctx))
        if "corollary1" in names:
            report.add(_corollary1(ctx, config))
        if "monge_ampere" in names:
            report.add(_monge_ampere(ctx))
        if "discriminant" in names:
            for check in _discriminant(ctx, config):
                report.add(check)
        if "chaos" in names:
            report.add(_chaos(ctx, config))
        if "convexity" in names:
            report.add(_convexity(ctx, config))
        if "entropy" in names:
            report.add(CheckResult("entropy", "margin", entropy_margin(ctx.density, ctx.solution, ctx.grid),
                                   tolerance_for(ctx.solution, ctx.settings)))
        if "potential_convexity" in names:
            interior = ctx.grid.nodes[ctx.grid.interior_mask(ctx.settings.interior_quantile)]
            report.add(CheckResult("potential_convexity", "margin",
                                   potential_convexity_margin(ctx.solution, interior),
                                   tolerance_for(ctx.solution, ctx.settings)))
        if "monotonicity" in names:
            report.add(CheckResult("monotonicity", "margin",
                                   monotonicity_probe(ctx.solution, 1000, config.seed),
                                   tolerance_for(ctx.solution, ctx.settings)))
        if "wick_pushforward" in names:
            entry = config.check("wick_pushforward")
            h = np.array(entry.args) if entry.args else np.ones(config.dim)
            tol = (ctx.settings.identity_tol if ctx.solution.is_closed_form
                   else ctx.settings.entropic_identity_tol)
            report.add(CheckResult("wick_pushforward", "residual",
                                   wick_pushforward_residual(ctx.density, ctx.solution, h, WICK_TIMES, ctx.grid),
                                   tol, {"h": h.tolist(), "ts": list(WICK_TIMES)}))
        if "inverse" in names:
            report.add(_inverse(ctx))
        if "oracle" in names:
            check = _oracle(ctx)
            if check is not None:
                report.add(check)

    except (ChaosBoundError, ValueError, ArithmeticError, TypeError, KeyError) as exc:
        logger.error("[%s] %s: %s", config.case_id, type(exc).__name__, exc)
        report.error = {"type": type(exc).__name__, "message": str(exc)}

    # ------------------------------------------------------------
    # 4. Wall time
    # ------------------------------------------------------------
    report.runtime_ms = round(1000.0 * (time.perf_counter() - started), 3)
    return report
