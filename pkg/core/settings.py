# ============================================================
# ChaosBound — Engine defaults
# One place for every numeric knob; scenario configs and CLI
# flags override these per run via dataclasses.replace().
# ============================================================

from dataclasses import dataclass


@dataclass(frozen=True)
class Settings:
    # quadrature
    node_cap: int = 10**7
    adaptive_rtol: float = 1e-9
    adaptive_max_degree: int = 640
    default_degree: int = 40

    # finite differences
    fd_step: float = 1e-4

    # chaos
    chaos_degree: int = 8

    # entropic transport
    epsilon_start: float = 1.0
    epsilon_final: float = 0.005
    epsilon_ratio: float = 0.7
    sinkhorn_max_iter: int = 2000
    sinkhorn_warm_iter: int = 100
    marginal_tol: float = 1e-7
    seed: int = 42

    # verification tolerances
    closed_form_tol: float = 1e-8
    entropic_tol: float = 1e-3
    identity_tol: float = 1e-5
    entropic_identity_tol: float = 5e-2
    monge_ampere_tol: float = 1e-6
    entropic_monge_ampere_tol: float = 0.1
    route_tol: float = 1e-6

    # interior band excluded from Monge-Ampere probes (per tail)
    interior_quantile: float = 0.05


DEFAULTS = Settings()
