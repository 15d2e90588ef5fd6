from core.transport.entropic import SinkhornEngine, solve_entropic
from core.transport.gaussian_linear import solve_gaussian_linear
from core.transport.jacobian import det2, jacobian_crosscheck, jacobian_lambda
from core.transport.quantile import solve_quantile_1d
from core.transport.solution import (
    SinkhornParams,
    TransportSolution,
    coupling_nodes,
    displacement_moments,
    inverse_map,
    mean_potential_hessian,
    monotonicity_probe,
    potential_convexity_margin,
    stein_hessian,
    transport_expect,
    wasserstein_sq,
)

__all__ = [
    "SinkhornEngine",
    "SinkhornParams",
    "TransportSolution",
    "coupling_nodes",
    "det2",
    "displacement_moments",
    "inverse_map",
    "jacobian_crosscheck",
    "jacobian_lambda",
    "mean_potential_hessian",
    "monotonicity_probe",
    "potential_convexity_margin",
    "solve_entropic",
    "solve_gaussian_linear",
    "solve_quantile_1d",
    "stein_hessian",
    "transport_expect",
    "wasserstein_sq",
]
