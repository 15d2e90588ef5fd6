# ============================================================
# ChaosBound — Gaussian core
# The finite-dimensional Wiener space (R^d, R^d, gamma_d):
# Hermite basis, tensor Gauss-Hermite quadrature, Wick
# exponentials, the Ornstein-Uhlenbeck semigroup/generator
# and central finite differences.
# ============================================================

import functools
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import roots_hermitenorm
from scipy.stats import norm

from core.errors import DimensionError, GridCapError, NonFiniteValueError
from core.settings import DEFAULTS

logger = logging.getLogger(__name__)


# ---------------------------------------------------------
# SPACE + POINT HANDLING
# ---------------------------------------------------------
@dataclass(frozen=True)
class GaussianSpace:
    """R^d with the standard Gaussian measure; Cameron-Martin norm = Euclidean norm."""

    dim: int

    def __post_init__(self):
        if not isinstance(self.dim, (int, np.integer)) or self.dim < 1:
            raise DimensionError(f"dimension must be a positive integer, got {self.dim!r}")

    def inner(self, h, k) -> float:
        return float(np.dot(self.vector(h), self.vector(k)))

    def norm(self, h) -> float:
        return float(np.linalg.norm(self.vector(h)))

    def vector(self, h) -> np.ndarray:
        h = np.atleast_1d(np.asarray(h, dtype=float))
        if h.shape != (self.dim,):
            raise DimensionError(f"expected a {self.dim}-vector, got shape {h.shape}")
        return h


def as_points(x, dim: int):
    """
    Normalise x into an (n, dim) array.
    Returns (points, single) where single says x was one point.
    In dimension 1 a flat array is read as n points.
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
        single = True
    elif arr.ndim == 1:
        if dim == 1 and arr.shape[0] != 1:
            return arr.reshape(-1, 1), False
        arr = arr.reshape(1, -1)
        single = True
    else:
        single = False
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DimensionError(f"points must have dimension {dim}, got shape {np.shape(x)}")
    return arr, single


# ---------------------------------------------------------
# FIELDS
# A field wraps a vectorised callable (n, d) -> (n,) or (n, d).
# ---------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ScalarField:
    fn: Callable[[np.ndarray], np.ndarray]
    dim: int
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "field"

    def __call__(self, x):
        pts, single = as_points(x, self.dim)
        values = np.asarray(self.fn(pts), dtype=float).reshape(len(pts))
        return float(values[0]) if single else values

    def grad(self, x, step=None) -> np.ndarray:
        pts, single = as_points(x, self.dim)
        if self.gradient is not None:
            g = np.asarray(self.gradient(pts), dtype=float).reshape(len(pts), self.dim)
        else:
            g = np.array([numeric_derivatives(self, p, 1, step) for p in pts])
        return g[0] if single else g

    def hess(self, x, step=None) -> np.ndarray:
        pts, single = as_points(x, self.dim)
        if self.hessian is not None:
            H = np.asarray(self.hessian(pts), dtype=float).reshape(len(pts), self.dim, self.dim)
        else:
            H = np.array([numeric_derivatives(self, p, 2, step) for p in pts])
        return H[0] if single else H


@dataclass(frozen=True, eq=False)
class VectorField:
    fn: Callable[[np.ndarray], np.ndarray]
    dim: int
    name: str = "map"

    def __call__(self, x):
        pts, single = as_points(x, self.dim)
        values = np.asarray(self.fn(pts), dtype=float).reshape(len(pts), self.dim)
        return values[0] if single else values


def _evaluate(f, pts: np.ndarray) -> np.ndarray:
    values = np.asarray(f(pts), dtype=float)
    if values.ndim == 0:
        values = np.full(len(pts), float(values))
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values.reshape(len(pts), -1)))[0][0]
        raise NonFiniteValueError(f"non-finite value at node {pts[bad].tolist()}")
    return values


# ---------------------------------------------------------
# MULTI-INDICES + HERMITE BASIS
# ---------------------------------------------------------
@dataclass(frozen=True, order=True)
class MultiIndex:
    entries: tuple

    def __post_init__(self):
        entries = tuple(int(a) for a in self.entries)
        if any(a < 0 for a in entries):
            raise DimensionError(f"multi-index entries must be non-negative, got {entries}")
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self) -> int:
        return len(self.entries)

    @property
    def degree(self) -> int:
        return sum(self.entries)

    @property
    def factorial(self) -> int:
        return math.prod(math.factorial(a) for a in self.entries)

    def __str__(self):
        return ";".join(str(a) for a in self.entries)


def multi_indices(dim: int, max_degree: int):
    """All alpha with |alpha| <= max_degree, in lexicographic order."""
    for entries in itertools.product(range(max_degree + 1), repeat=dim):
        if sum(entries) <= max_degree:
            yield MultiIndex(entries)


def hermite_table(max_order: int, t) -> np.ndarray:
    """h_0..h_max_order (probabilists') at t; shape (max_order + 1, *t.shape)."""
    t = np.asarray(t, dtype=float)
    table = np.empty((max_order + 1,) + t.shape)
    table[0] = 1.0
    if max_order >= 1:
        table[1] = t
    for k in range(1, max_order):
        table[k + 1] = t * table[k] - k * table[k - 1]
    return table


def hermite_1d(n: int, t):
    return hermite_table(n, t)[n]


def hermite(alpha, x):
    """H_alpha(x) = prod_i h_{alpha_i}(x_i)."""
    alpha = alpha if isinstance(alpha, MultiIndex) else MultiIndex(tuple(np.atleast_1d(alpha)))
    pts, single = as_points(x, alpha.dim)
    values = np.ones(len(pts))
    for axis, order in enumerate(alpha.entries):
        if order:
            values *= hermite_1d(order, pts[:, axis])
    return float(values[0]) if single else values


# ---------------------------------------------------------
# QUADRATURE
# ---------------------------------------------------------
@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    dim: int
    degree: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.weights)

    def axis_rule(self):
        """The 1D rule the tensor grid was built from."""
        return _hermite_rule(self.degree)

    def interior_mask(self, quantile: float) -> np.ndarray:
        """Nodes whose every coordinate lies inside the central (1 - 2*quantile) band."""
        bound = norm.isf(quantile)
        return np.all(np.abs(self.nodes) <= bound, axis=1)


@functools.lru_cache(maxsize=64)
def _hermite_rule(degree: int):
    x, w = roots_hermitenorm(degree)
    w = w / w.sum()
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@functools.lru_cache(maxsize=32)
def _build_grid_cached(dim: int, degree: int) -> QuadratureGrid:
    x, w = _hermite_rule(degree)
    mesh = np.meshgrid(*([x] * dim), indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=1)
    weights = functools.reduce(np.multiply.outer, [w] * dim).ravel()
    weights = weights / weights.sum()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureGrid(dim=dim, degree=degree, nodes=nodes, weights=weights)


def build_grid(dim: int, degree: int, node_cap: int = DEFAULTS.node_cap) -> QuadratureGrid:
    """Tensor Gauss-Hermite rule normalised to gamma_d (weights sum to 1)."""
    GaussianSpace(dim)
    if int(degree) < 1:
        raise DimensionError(f"quadrature degree must be >= 1, got {degree}")
    if dim * math.log(degree) > math.log(node_cap) + 1e-12:
        raise GridCapError(f"{degree}^{dim} nodes exceeds the cap of {node_cap}")
    return _build_grid_cached(int(dim), int(degree))


@dataclass(frozen=True, eq=False)
class AdaptiveEstimate:
    value: object
    degree: int
    converged: bool
    history: tuple = ()


def expect(f, grid: QuadratureGrid):
    """sum_i w_i f(node_i); scalar fields give a float, vector fields a vector."""
    values = _evaluate(f, grid.nodes)
    if values.ndim == 1:
        return float(np.sum(grid.weights * values))
    return np.tensordot(grid.weights, values, axes=(0, 0))


def expect_adaptive(f, dim: int, degree: int = 10, rtol: float = DEFAULTS.adaptive_rtol,
                    node_cap: int = DEFAULTS.node_cap,
                    max_degree: int = DEFAULTS.adaptive_max_degree) -> AdaptiveEstimate:
    """
    Doubles the per-axis degree until two successive estimates differ by
    less than rtol * max(1, |estimate|), or the node cap is reached.
    """
    previous = expect(f, build_grid(dim, degree, node_cap))
    history = [(degree, previous)]
    while True:
        nxt = 2 * degree
        if nxt > max_degree or dim * math.log(nxt) > math.log(node_cap):
            logger.warning("adaptive quadrature stopped at degree %d without convergence", degree)
            return AdaptiveEstimate(previous, degree, False, tuple(history))
        current = expect(f, build_grid(dim, nxt, node_cap))
        history.append((nxt, current))
        change = np.max(np.abs(np.asarray(current) - np.asarray(previous)))
        scale = max(1.0, float(np.max(np.abs(current))))
        degree, previous = nxt, current
        if change < rtol * scale:
            return AdaptiveEstimate(current, degree, True, tuple(history))


# ---------------------------------------------------------
# WICK EXPONENTIAL
# ---------------------------------------------------------
def wick_exp(h, x):
    """rho(delta h)(x) = exp(<h, x> - |h|^2 / 2)."""
    h = np.atleast_1d(np.asarray(h, dtype=float))
    pts, single = as_points(x, len(h))
    values = np.exp(pts @ h - 0.5 * float(h @ h))
    return float(values[0]) if single else values


# ---------------------------------------------------------
# ORNSTEIN-UHLENBECK SEMIGROUP + GENERATOR
# ---------------------------------------------------------
def ou_apply(f, t: float, x, grid: QuadratureGrid, chunk: int = 1_000_000):
    """Mehler formula: P_t f(x) = E_y[f(e^-t x + sqrt(1 - e^-2t) y)]."""
    if t < 0:
        raise ValueError(f"semigroup time must be non-negative, got {t}")
    pts, single = as_points(x, grid.dim)
    if t == 0:
        values = _evaluate(f, pts)
    else:
        decay = math.exp(-t)
        spread = math.sqrt(-math.expm1(-2.0 * t))
        rows = max(1, chunk // grid.size)
        values = np.empty(len(pts))
        for start in range(0, len(pts), rows):
            block = pts[start:start + rows]
            shifted = decay * block[:, None, :] + spread * grid.nodes[None, :, :]
            inner = _evaluate(f, shifted.reshape(-1, grid.dim)).reshape(len(block), grid.size)
            values[start:start + rows] = inner @ grid.weights
    return float(values[0]) if single else values


def ou_generator(f, x, step=None):
    """Number operator at finite dimension: <x, grad f> - Laplacian f."""
    dim = f.dim if hasattr(f, "dim") else len(np.atleast_1d(x))
    field_ = f if isinstance(f, ScalarField) else ScalarField(f, dim)
    pts, single = as_points(x, dim)
    grads = field_.grad(pts, step).reshape(len(pts), dim)
    hessians = field_.hess(pts, step).reshape(len(pts), dim, dim)
    values = np.einsum("ij,ij->i", pts, grads) - np.trace(hessians, axis1=1, axis2=2)
    return float(values[0]) if single else values


# ---------------------------------------------------------
# FINITE DIFFERENCES
# ---------------------------------------------------------
def numeric_derivatives(f, x, order: int, step: Optional[float] = None) -> np.ndarray:
    """Central differences; the Hessian comes back symmetrised."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = len(x)
    h = (DEFAULTS.fd_step if step is None else step) * max(1.0, float(np.max(np.abs(x))))
    eye = np.eye(d) * h

    if order == 1:
        stencil = np.concatenate([x + eye, x - eye])
        values = _stencil_values(f, stencil)
        return (values[:d] - values[d:]) / (2.0 * h)

    if order == 2:
        pairs = [(i, j) for i in range(d) for j in range(i, d)]
        stencil = []
        for i, j in pairs:
            stencil += [x + eye[i] + eye[j], x + eye[i] - eye[j],
                        x - eye[i] + eye[j], x - eye[i] - eye[j]]
        values = _stencil_values(f, np.array(stencil)).reshape(len(pairs), 4)
        H = np.empty((d, d))
        for k, (i, j) in enumerate(pairs):
            pp, pm, mp, mm = values[k]
            H[i, j] = H[j, i] = (pp - pm - mp + mm) / (4.0 * h * h)
        return 0.5 * (H + H.T)

    raise ValueError(f"order must be 1 or 2, got {order}")


def _stencil_values(f, stencil: np.ndarray) -> np.ndarray:
    if isinstance(f, ScalarField):
        values = np.asarray(f.fn(stencil), dtype=float).reshape(len(stencil))
    else:
        values = np.asarray(f(stencil), dtype=float).reshape(len(stencil))
    if not np.all(np.isfinite(values)):
        raise NonFiniteValueError("non-finite value inside the finite-difference stencil")
    return values
