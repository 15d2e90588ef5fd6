# ============================================================
# ChaosBound — Entropic transport (d <= 3)
# Log-domain Sinkhorn between a discretised gamma_d and nu with
# an epsilon-scaling schedule; the map is the barycentric
# projection of the plan, extended out of sample through the
# dual potentials.
# ============================================================

import logging

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp, softmax

from core.densities import DensityModel, check_nonnegative, ensure_dim
from core.errors import DimensionError, SolverError
from core.gaussian_core import QuadratureGrid, ScalarField, VectorField, build_grid
from core.linalg import symmetrize, symmetry_defect
from core.transport.solution import SinkhornParams, TransportSolution

logger = logging.getLogger(__name__)

MAX_DIM = 3
MAX_PLAN_ENTRIES = 50_000_000


# ---------------------------------------------------------
# DISCRETISATION
# ---------------------------------------------------------
def _source_points(grid: QuadratureGrid, p: SinkhornParams):
    if p.sampling == "monte_carlo":
        rng = np.random.default_rng(p.seed)
        x = rng.standard_normal((p.n_source, grid.dim))
        return x, np.full(p.n_source, 1.0 / p.n_source)
    return np.asarray(grid.nodes), np.asarray(grid.weights)


def _target_points(L: DensityModel, grid: QuadratureGrid, p: SinkhornParams):
    """
    Support and weights for nu. "adapted" uses one Gauss-Hermite rule per
    mixture component; "reweighted" puts L . w on a gamma rule. Densities
    without components always use the reweighted rule; the label returned
    is the support actually built.
    """
    if p.sampling == "monte_carlo":
        rng = np.random.default_rng(p.seed + 1)
        y = rng.standard_normal((p.n_target, L.dim))
        b = check_nonnegative(L, y)
        support = "sampled"
    elif p.target_support == "adapted" and L.is_closed_form:
        rule = build_grid(L.dim, p.target_degree or grid.degree)
        ys, bs = [], []
        for comp in L.components:
            ys.append(comp.mean + rule.nodes @ comp.chol.T)
            bs.append(comp.weight * rule.weights)
        y, b = np.concatenate(ys), np.concatenate(bs)
        support = "adapted"
    else:
        rule = grid if p.target_degree is None else build_grid(L.dim, p.target_degree)
        y = np.asarray(rule.nodes)
        b = rule.weights * check_nonnegative(L, rule.nodes)
        support = "reweighted"
    keep = b > 0
    if not np.any(keep):
        raise SolverError("target weights vanish on the whole support")
    return y[keep], b[keep] / b[keep].sum(), support


# ---------------------------------------------------------
# SINKHORN ENGINE
# ---------------------------------------------------------
class SinkhornEngine:
    """
    f_i = -eps LSE_j(log b_j + (g_j - C_ij) / eps)
    g_j = -eps LSE_i(log a_i + (f_i - C_ij) / eps)
    with C = |x - y|^2 / 2 and plan pi_ij = a_i b_j exp((f_i + g_j - C_ij) / eps).
    """

    def __init__(self, params: SinkhornParams):
        self.params = params

    def log_plan(self, f, g, eps):
        return (f[:, None] + g[None, :] - self.C) / eps + self.log_a[:, None] + self.log_b[None, :]

    def marginal_error(self, f, g, eps) -> float:
        rows = np.exp(logsumexp(self.log_plan(f, g, eps), axis=1))
        return float(np.sum(np.abs(rows - self.a)))

    def _run(self, f, g, eps, max_iter):
        p = self.params
        err = np.inf
        scaled = self.C / eps
        for it in range(1, max_iter + 1):
            f = -eps * logsumexp(self.log_b[None, :] + g[None, :] / eps - scaled, axis=1)
            g = -eps * logsumexp(self.log_a[:, None] + f[:, None] / eps - scaled, axis=0)
            if it % p.check_every == 0 or it == max_iter:
                err = self.marginal_error(f, g, eps)
                if not np.isfinite(err):
                    raise SolverError(f"Sinkhorn diverged at eps={eps:g}")
                if err < p.tol:
                    return f, g, it, err
        return f, g, max_iter, err

    def solve(self, x, a, y, b) -> dict:
        if len(x) * len(y) > MAX_PLAN_ENTRIES:
            raise SolverError(f"plan of {len(x)}x{len(y)} entries is too large; lower the degree")
        self.a, self.log_a = a, np.log(a)
        self.b, self.log_b = b, np.log(b)
        self.C = 0.5 * cdist(x, y, "sqeuclidean")
        f, g = np.zeros(len(x)), np.zeros(len(y))
        history = []
        err = np.inf
        schedule = self.params.schedule()
        for step, eps in enumerate(schedule, start=1):
            # intermediate epsilons only warm-start the duals
            budget = self.params.max_iter
            if step < len(schedule):
                budget = min(self.params.warm_iter, budget)
            f, g, iters, err = self._run(f, g, eps, budget)
            history.append({"epsilon": eps, "iterations": iters, "marginal_error": err})
            logger.debug("sinkhorn eps=%g: %d iterations, marginal error %.3e", eps, iters, err)
        converged = err < self.params.tol
        if not converged:
            logger.warning("Sinkhorn stopped with marginal error %.3e > %.1e", err, self.params.tol)
        eps = self.params.epsilon_final
        plan = np.exp(self.log_plan(f, g, eps))
        return {"f": f, "g": g, "plan": plan, "history": history,
                "converged": bool(converged), "marginal_error": float(err),
                "cost": float(2.0 * np.sum(plan * self.C))}


# ---------------------------------------------------------
# SOLVER
# ---------------------------------------------------------
def _barycentric(points, log_weights, potentials, support, eps):
    """Softmax-weighted average of support under log p = log w + (pot - |z - s|^2 / 2) / eps."""
    logits = log_weights[None, :] + (potentials[None, :] - 0.5 * cdist(points, support, "sqeuclidean")) / eps
    probs = softmax(logits, axis=1)
    return probs, logits


def solve_entropic(L: DensityModel, grid: QuadratureGrid, p: SinkhornParams = SinkhornParams()) -> TransportSolution:
    ensure_dim(L, grid)
    if L.dim > MAX_DIM:
        raise DimensionError(f"entropic transport is limited to d <= {MAX_DIM}, got {L.dim}")
    if p.source_degree is not None:
        grid = build_grid(L.dim, p.source_degree)
    x, a = _source_points(grid, p)
    y, b, support = _target_points(L, grid, p)
    result = SinkhornEngine(p).solve(x, a, y, b)
    eps = p.epsilon_final
    f, g = result["f"], result["g"]
    log_a, log_b = np.log(a), np.log(b)
    d = L.dim

    def forward(pts):
        probs, _ = _barycentric(pts, log_b, g, y, eps)
        return probs @ y

    def potential(pts):
        _, logits = _barycentric(pts, log_b, g, y, eps)
        return eps * logsumexp(logits, axis=1)

    def potential_grad(pts):
        return forward(pts) - pts

    def potential_hess(pts):
        probs, _ = _barycentric(pts, log_b, g, y, eps)
        mean = probs @ y
        second = np.einsum("nj,ja,jb->nab", probs, y, y)
        cov = second - mean[:, :, None] * mean[:, None, :]
        return cov / eps - np.eye(d)[None, :, :]

    def inverse(pts):
        probs, _ = _barycentric(pts, log_a, f, x, eps)
        return probs @ x

    source_image = forward(x)
    displacement = source_image - x
    stein = np.tensordot(a, displacement[:, :, None] * x[:, None, :], axes=(0, 0))
    diagnostics = {
        "sampling": p.sampling,
        "target_support": support,
        "n_source": len(x),
        "n_target": len(y),
        "schedule": result["history"],
        "converged": result["converged"],
        "marginal_error": result["marginal_error"],
        "stein_symmetry_defect": symmetry_defect(stein),
        "plan_mass": float(result["plan"].sum()),
        "barycentric_gap": float(np.max(np.abs(
            result["plan"] @ y / a[:, None] - source_image))),
    }
    if diagnostics["stein_symmetry_defect"] > 1e-2:
        logger.warning("entropic Stein Hessian is far from symmetric (%.3e)", diagnostics["stein_symmetry_defect"])

    return TransportSolution(
        method="entropic",
        map=VectorField(forward, d, name="barycentric map"),
        potential=ScalarField(potential, d, gradient=potential_grad, hessian=potential_hess,
                              name="entropic potential"),
        mean_hessian=symmetrize(stein),
        wasserstein_sq=result["cost"],
        dual_potentials={"f": f, "g": g},
        epsilon_final=eps,
        diagnostics=diagnostics,
        inverse_fn=inverse,
        coupling_rule=lambda _grid: (x, source_image, a),
    )

