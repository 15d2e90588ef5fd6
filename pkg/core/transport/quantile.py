# ============================================================
# ChaosBound — One-dimensional monotone rearrangement
# T = F_nu^{-1} o Phi. CDFs are handled in log space on both
# tails so that extreme quadrature nodes invert cleanly.
# ============================================================

import logging

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import logsumexp, ndtri_exp
from scipy.stats import norm

from core.densities import DensityModel
from core.errors import DimensionError, NonInjectiveMapError, SolverError
from core.gaussian_core import QuadratureGrid, ScalarField, VectorField
from core.transport.solution import TransportSolution

logger = logging.getLogger(__name__)


# ---------------------------------------------------------
# TARGET LAWS
# ---------------------------------------------------------
class MixtureLaw1D:
    """nu = sum_k w_k N(mu_k, sd_k^2) on the line."""

    def __init__(self, components):
        self.log_w = np.log([c.weight for c in components])
        self.mu = np.array([float(c.mean[0]) for c in components])
        self.sd = np.array([float(np.sqrt(c.cov[0, 0])) for c in components])

    def _z(self, y):
        return (np.atleast_1d(y)[None, :] - self.mu[:, None]) / self.sd[:, None]

    def logcdf(self, y):
        return logsumexp(self.log_w[:, None] + norm.logcdf(self._z(y)), axis=0)

    def logsf(self, y):
        return logsumexp(self.log_w[:, None] + norm.logsf(self._z(y)), axis=0)

    def logpdf(self, y):
        return logsumexp(self.log_w[:, None] + norm.logpdf(self._z(y)) - np.log(self.sd)[:, None], axis=0)

    def bracket(self, x):
        ends = self.mu + self.sd * x
        return float(ends.min()), float(ends.max())

    def rule(self, z, wz):
        """Component-wise Gauss-Hermite rule for nu."""
        y = (self.mu[:, None] + self.sd[:, None] * z[None, :]).ravel()
        w = (np.exp(self.log_w)[:, None] * wz[None, :]).ravel()
        return y, w / w.sum()


class QuadratureLaw1D:
    """
    nu = L . gamma for a density without closed-form CDF.

    The integrand is exp(log L + log phi) on a finite window; breakpoints
    are placed over the region carrying the mass so quad cannot step over
    a narrow bump.
    """

    TAIL = 40.0

    def __init__(self, L: DensityModel):
        self.L = L
        window = np.linspace(-self.TAIL, self.TAIL, 8001)
        log_density = self.logpdf(window)
        log_density = np.where(np.isfinite(log_density), log_density, -np.inf)
        bulk = window[log_density >= np.max(log_density) - 40.0]
        self.breaks = np.linspace(bulk.min(), bulk.max(), 17)

    def _density(self, s: float) -> float:
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            value = float(np.exp(self.logpdf(s)[0]))
        return value if np.isfinite(value) else 0.0

    def _mass(self, lo: float, hi: float) -> float:
        if hi <= lo:
            return 0.0
        inside = [b for b in self.breaks if lo < b < hi]
        value, _ = quad(self._density, lo, hi, points=inside or None,
                        epsabs=0.0, epsrel=1e-11, limit=400)
        return value

    def logcdf(self, y):
        return np.log([max(self._mass(min(float(v), 0.0) - self.TAIL, float(v)), 1e-300)
                       for v in np.atleast_1d(y)])

    def logsf(self, y):
        return np.log([max(self._mass(float(v), max(float(v), 0.0) + self.TAIL), 1e-300)
                       for v in np.atleast_1d(y)])

    def logpdf(self, y):
        y = np.atleast_1d(y)
        with np.errstate(divide="ignore"):
            return self.L.log_value(y) + norm.logpdf(y)

    def bracket(self, x):
        return x - 1.0, x + 1.0


# ---------------------------------------------------------
# FORWARD + INVERSE MAPS
# ---------------------------------------------------------
def _forward_point(law, x: float) -> float:
    if x <= 0:
        target = float(norm.logcdf(x))

        def gap(y):
            return float(law.logcdf(y)[0]) - target
    else:
        target = float(norm.logsf(x))

        def gap(y):
            return target - float(law.logsf(y)[0])

    lo, hi = law.bracket(x)
    if hi - lo <= 1e-15 * max(1.0, abs(lo)):
        return lo
    pad = 1e-9 * (1.0 + abs(lo) + abs(hi))
    lo, hi = lo - pad, hi + pad
    for _ in range(60):
        g_lo, g_hi = gap(lo), gap(hi)
        if g_lo <= 0 <= g_hi:
            return brentq(gap, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
        width = hi - lo
        if g_lo > 0:
            lo -= width
        if g_hi < 0:
            hi += width
    raise NonInjectiveMapError(f"could not bracket the quantile at x={x}")


def _inverse_values(law, y: np.ndarray) -> np.ndarray:
    lower, upper = law.logcdf(y), law.logsf(y)
    return np.where(lower <= upper, ndtri_exp(np.minimum(lower, 0.0)), -ndtri_exp(np.minimum(upper, 0.0)))


def solve_quantile_1d(L: DensityModel, grid: QuadratureGrid) -> TransportSolution:
    """Monotone rearrangement between gamma_1 and nu = L . gamma_1."""
    if L.dim != 1 or grid.dim != 1:
        raise DimensionError("the quantile coupling is only defined in dimension 1")
    law = MixtureLaw1D(L.components) if L.is_closed_form else QuadratureLaw1D(L)

    solved = {}

    def forward_point(v: float) -> float:
        if v not in solved:
            solved[v] = _forward_point(law, v)
        return solved[v]

    def forward(pts):
        return np.array([[forward_point(float(v))] for v in pts[:, 0]])

    def derivative(pts):
        t = forward(pts)[:, 0]
        return np.exp(norm.logpdf(pts[:, 0]) - law.logpdf(t))

    def potential(pts):
        out = []
        for v in pts[:, 0]:
            value, _ = quad(lambda s: forward_point(s) - s, 0.0, float(v), epsabs=1e-12, limit=200)
            out.append(value)
        return np.array(out)

    def inverse(pts):
        return _inverse_values(law, pts[:, 0])[:, None]

    target_rule = None
    if isinstance(law, MixtureLaw1D):
        def target_rule(g: QuadratureGrid):
            z, wz = g.axis_rule()
            y, w = law.rule(np.asarray(z), np.asarray(wz))
            return _inverse_values(law, y)[:, None], y[:, None], w

    if target_rule is not None:
        x, y, w = target_rule(grid)
    else:
        x, w = grid.nodes, grid.weights
        y = forward(x)
    displacement = (y - x)[:, 0]
    mean_hessian = np.array([[np.sum(w * displacement * x[:, 0])]])
    cost = float(np.sum(w * displacement ** 2))

    if target_rule is not None:
        pushforward_error = max(abs(np.sum(w * x[:, 0])), abs(np.sum(w * x[:, 0] ** 2) - 1.0))
    else:
        nu_mean = float(np.sum(grid.weights * L(grid.nodes) * grid.nodes[:, 0]))
        pushforward_error = abs(float(np.sum(w * y[:, 0])) - nu_mean)
    if pushforward_error > 1e-6:
        logger.warning("quantile pushforward moments off by %.3e", pushforward_error)
    if not np.all(np.diff(forward(grid.nodes)[:, 0]) >= -1e-12):
        raise SolverError("quantile map is not monotone on the grid")

    return TransportSolution(
        method="quantile_1d",
        map=VectorField(forward, 1, name="quantile map"),
        potential=ScalarField(potential, 1,
                              gradient=lambda pts: forward(pts) - pts,
                              hessian=lambda pts: (derivative(pts) - 1.0).reshape(-1, 1, 1),
                              name="quantile potential"),
        mean_hessian=mean_hessian,
        wasserstein_sq=cost,
        diagnostics={"pushforward_error": float(pushforward_error),
                     "route": "target" if target_rule is not None else "source"},
        inverse_fn=inverse,
        coupling_rule=target_rule,
    )
