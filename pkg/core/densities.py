# ============================================================
# ChaosBound — Density models
# A positive density L with respect to gamma_d, i.e. the
# probability nu = L . gamma_d. Closed-form families are all
# Gaussian mixtures for nu and carry their components so the
# moments, CDFs and entropies can be read off analytically.
# ============================================================

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from core.errors import DensityError, DimensionError, MatrixError, NegativeDensityError
from core.gaussian_core import (
    GaussianSpace,
    QuadratureGrid,
    ScalarField,
    as_points,
    build_grid,
    expect,
    expect_adaptive,
    numeric_derivatives,
)
from core.linalg import as_square, min_eigenvalue, symmetrize
from core.settings import DEFAULTS

logger = logging.getLogger(__name__)

FAMILIES = ("uniform", "wick_shift", "scaled_gaussian", "gaussian_mixture", "point_expression")


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    weight: float
    mean: np.ndarray
    cov: np.ndarray

    @property
    def chol(self) -> np.ndarray:
        return scipy.linalg.cholesky(self.cov, lower=True)

    def log_ratio(self, pts: np.ndarray) -> np.ndarray:
        """log of N(x; mean, cov) / N(x; 0, I), without the weight."""
        chol = self.chol
        z = scipy.linalg.solve_triangular(chol, (pts - self.mean).T, lower=True)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        return -0.5 * np.sum(z * z, axis=0) - 0.5 * logdet + 0.5 * np.sum(pts * pts, axis=1)


@dataclass(frozen=True, eq=False)
class DensityModel:
    """
    L(x) = scale * raw(x) / normalizer, with normalizer chosen so E[L] = 1.

    total_mass is metadata: densities built from a positive measure keep
    the measure's mass here while L itself stays a probability density.
    """

    space: GaussianSpace
    family: str
    log_raw: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    normalizer: float = 1.0
    scale: float = 1.0
    params: dict = field(default_factory=dict)
    components: Optional[tuple] = field(default=None, repr=False)
    entropy_certified: bool = False
    l2_certified: bool = False
    total_mass: float = 1.0

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def is_closed_form(self) -> bool:
        return self.components is not None

    @property
    def single_gaussian(self):
        """(mean, cov) when nu is one Gaussian, else None."""
        if self.components is not None and len(self.components) == 1:
            comp = self.components[0]
            return comp.mean, comp.cov
        return None

    def __call__(self, x):
        pts, single = as_points(x, self.dim)
        values = (self.scale * np.exp(self.log_raw(pts))) / self.normalizer
        return float(values[0]) if single else values

    def log_value(self, x):
        pts, single = as_points(x, self.dim)
        values = self.log_raw(pts) + np.log(self.scale) - np.log(self.normalizer)
        return float(values[0]) if single else values

    def as_field(self) -> ScalarField:
        return ScalarField(self.__call__, self.dim, name=self.family)

    def describe(self) -> dict:
        return {"family": self.family, "dim": self.dim, **_jsonable(self.params),
                "entropy_certified": self.entropy_certified, "l2_certified": self.l2_certified}

    # ---------------------------------------------------------
    # closed-form nu moments
    # ---------------------------------------------------------
    def nu_mean(self) -> Optional[np.ndarray]:
        if self.components is None:
            return None
        return sum(c.weight * c.mean for c in self.components)

    def nu_second_moment(self) -> Optional[np.ndarray]:
        if self.components is None:
            return None
        return symmetrize(sum(c.weight * (c.cov + np.outer(c.mean, c.mean)) for c in self.components))


def check_nonnegative(L, pts: np.ndarray) -> np.ndarray:
    values = np.asarray(L(pts), dtype=float).reshape(len(pts))
    if np.any(values < 0):
        bad = pts[np.argmin(values)]
        raise NegativeDensityError(f"density is negative at {bad.tolist()}")
    return values


def _jsonable(params: dict) -> dict:
    out = {}
    for key, value in params.items():
        if isinstance(value, np.ndarray):
            out[key] = value.tolist()
        elif isinstance(value, (list, tuple)):
            out[key] = [v.tolist() if isinstance(v, np.ndarray) else v for v in value]
        elif callable(value):
            out[key] = getattr(value, "__name__", "callable")
        else:
            out[key] = value
    return out


# ---------------------------------------------------------
# FAMILY CONSTRUCTORS
# ---------------------------------------------------------
def _check_scale(scale: float) -> float:
    scale = float(scale)
    if not np.isfinite(scale) or scale <= 0:
        raise DensityError(f"scale must be a positive finite number, got {scale}")
    return scale


def _as_cov(cov, dim: int) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim <= 1:
        cov = np.diag(np.broadcast_to(np.atleast_1d(cov), (dim,)).astype(float))
    cov = as_square(cov, dim, name="covariance")
    cov = symmetrize(cov)
    if min_eigenvalue(cov) <= 0:
        raise MatrixError("covariance must be positive definite")
    return cov


def _l2_certified(components) -> bool:
    # L in L^2(gamma) iff every component covariance has spectrum below 2
    return all(np.max(scipy.linalg.eigvalsh(c.cov)) < 2.0 for c in components)


def _mixture_model(space, family, components, params, scale, total_mass=1.0, log_raw=None):
    weights = np.array([c.weight for c in components])
    log_w = np.log(weights)

    def mixture_log_raw(pts):
        terms = np.stack([lw + c.log_ratio(pts) for lw, c in zip(log_w, components)])
        return logsumexp(terms, axis=0)

    return DensityModel(
        space=space,
        family=family,
        log_raw=log_raw or mixture_log_raw,
        normalizer=scale,
        scale=scale,
        params=params,
        components=tuple(components),
        entropy_certified=True,
        l2_certified=_l2_certified(components),
        total_mass=total_mass,
    )


def uniform(space: GaussianSpace, scale: float = 1.0) -> DensityModel:
    scale = _check_scale(scale)
    comp = GaussianComponent(1.0, np.zeros(space.dim), np.eye(space.dim))
    return _mixture_model(space, "uniform", [comp], {"scale": scale}, scale,
                          log_raw=lambda pts: np.zeros(len(pts)))


def wick_shift(space: GaussianSpace, h, scale: float = 1.0) -> DensityModel:
    """L = rho(delta h); nu = N(h, I)."""
    scale = _check_scale(scale)
    h = space.vector(h)
    comp = GaussianComponent(1.0, h.copy(), np.eye(space.dim))
    half_sq = 0.5 * float(h @ h)
    return _mixture_model(space, "wick_shift", [comp], {"h": h, "scale": scale}, scale,
                          log_raw=lambda pts: pts @ h - half_sq)


def scaled_gaussian(space: GaussianSpace, covariance, mean=None, scale: float = 1.0) -> DensityModel:
    """nu = N(mean, covariance); covariance may be a per-axis variance vector."""
    scale = _check_scale(scale)
    cov = _as_cov(covariance, space.dim)
    mean = np.zeros(space.dim) if mean is None else space.vector(mean)
    comp = GaussianComponent(1.0, mean, cov)
    return _mixture_model(space, "scaled_gaussian", [comp],
                          {"covariance": cov, "mean": mean, "scale": scale}, scale)


def gaussian_mixture(space: GaussianSpace, weights, means, covariances,
                     scale: float = 1.0, total_mass: float = 1.0) -> DensityModel:
    scale = _check_scale(scale)
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 1 or len(weights) == 0 or np.any(weights <= 0):
        raise DensityError("mixture weights must be a non-empty list of positive numbers")
    if len(means) != len(weights) or len(covariances) != len(weights):
        raise DensityError("mixture needs one mean and one covariance per weight")
    weights = weights / weights.sum()
    components = [GaussianComponent(float(w), space.vector(m), _as_cov(c, space.dim))
                  for w, m, c in zip(weights, means, covariances)]
    params = {"weights": weights, "means": [c.mean for c in components],
              "covariances": [c.cov for c in components], "scale": scale}
    return _mixture_model(space, "gaussian_mixture", components, params, scale, total_mass)


def random_mixture(space: GaussianSpace, seed: int, max_components: int = 4,
                   mean_range: float = 2.0, variance_range=(0.25, 1.5),
                   scale: float = 1.0) -> DensityModel:
    """Seeded mixture with diagonal covariances, used by the property suites."""
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, max_components + 1))
    weights = rng.dirichlet(np.ones(k))
    means = rng.uniform(-mean_range, mean_range, size=(k, space.dim))
    variances = rng.uniform(variance_range[0], variance_range[1], size=(k, space.dim))
    model = gaussian_mixture(space, weights, list(means), list(variances), scale=scale)
    model.params["seed"] = int(seed)
    return model


def point_expression(space: GaussianSpace, fn, scale: float = 1.0,
                     degree: int = DEFAULTS.default_degree,
                     entropy_certified: bool = False, l2_certified: bool = False) -> DensityModel:
    """
    User-supplied vectorised fn: (n, d) -> (n,) values >= 0. Normalised by
    adaptive quadrature; negativity at any probed node is a hard error.
    """
    scale = _check_scale(scale)
    nodes = build_grid(space.dim, degree)
    check_nonnegative(fn, nodes.nodes)

    def scaled(pts):
        return scale * check_nonnegative(fn, pts)

    estimate = expect_adaptive(scaled, space.dim, degree=degree)
    if not estimate.converged:
        logger.warning("normalising constant of point_expression did not converge (degree %d)",
                       estimate.degree)
    if estimate.value <= 0:
        raise DensityError("density integrates to zero")

    def log_raw(pts):
        with np.errstate(divide="ignore"):
            return np.log(check_nonnegative(fn, pts))

    return DensityModel(
        space=space,
        family="point_expression",
        log_raw=log_raw,
        normalizer=float(estimate.value),
        scale=scale,
        params={"expression": fn, "scale": scale},
        components=None,
        entropy_certified=entropy_certified,
        l2_certified=l2_certified,
    )


# ---------------------------------------------------------
# DIAGNOSTICS
# ---------------------------------------------------------
def relative_entropy(L: DensityModel, grid: Optional[QuadratureGrid] = None) -> float:
    """E[L log L] = KL(nu || gamma_d)."""
    gaussian = L.single_gaussian
    if gaussian is not None:
        mean, cov = gaussian
        _, logdet = np.linalg.slogdet(cov)
        return 0.5 * float(np.trace(cov) + mean @ mean - L.dim - logdet)
    grid = grid or build_grid(L.dim, DEFAULTS.default_degree)

    def integrand(pts):
        log_l = L.log_value(pts)
        return np.exp(log_l) * log_l

    return expect(integrand, grid)


def log_concavity_margin(L: DensityModel, points) -> float:
    """min over points of min-eig Hess(-log L); >= 0 means H-log-concave there."""
    gaussian = L.single_gaussian
    if gaussian is not None:
        return min_eigenvalue(np.linalg.inv(gaussian[1]) - np.eye(L.dim))
    neg_log = ScalarField(lambda pts: -L.log_value(pts), L.dim)
    pts, _ = as_points(points, L.dim)
    return min(min_eigenvalue(numeric_derivatives(neg_log, p, 2)) for p in pts)


def ensure_dim(L: DensityModel, grid: QuadratureGrid):
    if L.dim != grid.dim:
        raise DimensionError(f"density has dimension {L.dim}, grid has {grid.dim}")
