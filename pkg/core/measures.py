# ============================================================
# ChaosBound — Positive measures
# Finitely supported measures m = sum_k w_k delta_{a_k}, their
# moment functionals against the first two chaoses, and the
# Ornstein-Uhlenbeck regularisation P_t m (a Gaussian mixture).
# ============================================================

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from core.densities import DensityModel, gaussian_mixture
from core.errors import MeasureError
from core.gaussian_core import GaussianSpace, build_grid
from core.linalg import symmetrize

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PositiveMeasure:
    space: GaussianSpace
    locations: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    label: str = "atoms"

    def __post_init__(self):
        locations = np.asarray(self.locations, dtype=float)
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if locations.size == 0 or weights.size == 0:
            raise MeasureError("a positive measure needs at least one atom")
        locations = locations.reshape(len(weights), self.space.dim) if locations.ndim < 2 else locations
        if locations.shape != (len(weights), self.space.dim):
            raise MeasureError(f"atom locations must have shape ({len(weights)}, {self.space.dim}), "
                               f"got {locations.shape}")
        if np.any(~np.isfinite(weights)) or np.any(weights <= 0):
            raise MeasureError("atom weights must be positive and finite")
        object.__setattr__(self, "locations", locations)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    def describe(self) -> dict:
        return {"kind": "measure", "label": self.label, "dim": self.dim,
                "atoms": len(self.weights), "mass": self.mass}


def point_masses(space: GaussianSpace, atoms) -> PositiveMeasure:
    """atoms: iterable of (location, weight)."""
    atoms = list(atoms)
    if not atoms:
        raise MeasureError("empty atom list")
    locations = np.array([space.vector(a) for a, _ in atoms])
    weights = np.array([float(w) for _, w in atoms])
    return PositiveMeasure(space, locations, weights)


def discretized_gaussian(space: GaussianSpace, degree: int) -> PositiveMeasure:
    """gamma_d spread over Gauss-Hermite nodes with unit total mass."""
    grid = build_grid(space.dim, degree)
    return PositiveMeasure(space, np.array(grid.nodes), np.array(grid.weights), label="discretized_gaussian")


# ---------------------------------------------------------
# MOMENT FUNCTIONALS
# ---------------------------------------------------------
@dataclass(frozen=True, eq=False)
class MomentFunctionals:
    mass: float
    M1: np.ndarray
    M2: np.ndarray

    def __post_init__(self):
        if not self.mass > 0:
            raise MeasureError(f"mass must be positive, got {self.mass}")
        object.__setattr__(self, "M2", symmetrize(self.M2))

    def as_dict(self) -> dict:
        return {"mass": float(self.mass), "M1": self.M1.tolist(), "M2": self.M2.tolist()}


def moment_functionals(m: PositiveMeasure) -> MomentFunctionals:
    """M1 = sum w a, M2 = sum w (a a^T - I)."""
    w, a = m.weights, m.locations
    M1 = w @ a
    M2 = np.einsum("k,ki,kj->ij", w, a, a) - m.mass * np.eye(m.dim)
    return MomentFunctionals(m.mass, M1, M2)


# ---------------------------------------------------------
# ORNSTEIN-UHLENBECK REGULARISATION
# ---------------------------------------------------------
def ou_regularize(m: PositiveMeasure, t: float) -> DensityModel:
    """
    Density of P_t m w.r.t. gamma_d, normalised to a probability:
    components N(e^-t a_k, (1 - e^-2t) I) with weights w_k / m(W).
    The true mass m(W) travels in total_mass.
    """
    if not t > 0:
        raise MeasureError(f"regularisation time must be positive, got {t}")
    decay = math.exp(-t)
    variance = -math.expm1(-2.0 * t)
    covariances = [np.full(m.dim, variance)] * len(m.weights)
    model = gaussian_mixture(m.space, m.weights / m.mass, list(decay * m.locations), covariances,
                             total_mass=m.mass)
    model.params.update({"regularization_time": float(t), "atoms": len(m.weights)})
    logger.debug("P_%g of %d atoms: component variance %.3e", t, len(m.weights), variance)
    return model


def regularized_moments(m: PositiveMeasure, t: float) -> MomentFunctionals:
    """(m(W), e^-t M1, e^-2t M2): P_t acts on the n-th chaos as e^-nt."""
    base = moment_functionals(m)
    return MomentFunctionals(base.mass, math.exp(-t) * base.M1, math.exp(-2.0 * t) * base.M2)
