import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import norm

from core import densities
from core.errors import DimensionError, MatrixError, NonInjectiveMapError
from core.gaussian_core import GaussianSpace, build_grid, ou_generator
from core.transport import (
    SinkhornEngine,
    SinkhornParams,
    det2,
    displacement_moments,
    inverse_map,
    jacobian_crosscheck,
    jacobian_lambda,
    mean_potential_hessian,
    monotonicity_probe,
    potential_convexity_margin,
    solve_entropic,
    solve_gaussian_linear,
    solve_quantile_1d,
    wasserstein_sq,
)
from core.transport.quantile import QuadratureLaw1D


# ---------------------------------------------------------
# Gaussian linear map
# ---------------------------------------------------------
def test_identity_covariance_gives_identity_map():
    sol = solve_gaussian_linear(np.eye(2))
    pts = np.array([[0.5, -1.0], [2.0, 0.1]])
    np.testing.assert_allclose(sol.map(pts), pts)
    assert sol.wasserstein_sq == pytest.approx(0.0, abs=1e-14)


def test_one_dimensional_scaling():
    sol = solve_gaussian_linear([[4.0]])
    assert sol.map(1.5)[0] == pytest.approx(3.0)
    assert sol.potential.hess(0.3)[0, 0] == pytest.approx(1.0)
    assert sol.wasserstein_sq == pytest.approx(1.0)
    assert sol.mean_hessian[0, 0] == pytest.approx(1.0)


def test_diagonal_covariance():
    sol = solve_gaussian_linear(np.diag([4.0, 1.0]))
    np.testing.assert_allclose(sol.map(np.array([1.0, 1.0])), [2.0, 1.0])
    assert sol.wasserstein_sq == pytest.approx(1.0)


def test_linear_inverse_maps():
    grid = build_grid(1, 10)
    halve = inverse_map(solve_gaussian_linear([[4.0]]), grid)
    assert halve(3.0)[0] == pytest.approx(1.5)
    shift = inverse_map(solve_gaussian_linear(np.eye(2), mean=[1.0, -1.0]), build_grid(2, 4))
    np.testing.assert_allclose(shift(np.array([1.0, 0.0])), [0.0, 1.0])


def test_singular_covariance_has_no_inverse():
    sol = solve_gaussian_linear(np.zeros((1, 1)))
    with pytest.raises(NonInjectiveMapError):
        inverse_map(sol, build_grid(1, 4))


def test_covariance_must_be_symmetric_psd():
    with pytest.raises(MatrixError):
        solve_gaussian_linear([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(MatrixError):
        solve_gaussian_linear([[1.0, 2.0], [2.0, 1.0]])


@given(st.lists(st.floats(0.05, 9.0), min_size=1, max_size=3))
def test_linear_map_is_monotone(variances):
    sol = solve_gaussian_linear(np.diag(variances))
    assert monotonicity_probe(sol, 1000, seed=1) >= -1e-12
    assert potential_convexity_margin(sol, np.zeros((1, len(variances)))) >= -1e-12


# ---------------------------------------------------------
# Quantile coupling
# ---------------------------------------------------------
def test_quantile_uniform_is_identity(line, grid1):
    sol = solve_quantile_1d(densities.uniform(line), grid1)
    x = np.linspace(-4, 4, 9)
    np.testing.assert_allclose(sol.map(x)[:, 0], x, atol=1e-12)
    assert sol.wasserstein_sq == pytest.approx(0.0, abs=1e-12)


def test_quantile_scaled_gaussian(line, grid1):
    sol = solve_quantile_1d(densities.scaled_gaussian(line, 4.0), grid1)
    x = np.linspace(-4, 4, 17)
    np.testing.assert_allclose(sol.map(x)[:, 0], 2.0 * x, atol=1e-6)
    assert sol.wasserstein_sq == pytest.approx(1.0, abs=1e-6)
    assert sol.mean_hessian[0, 0] == pytest.approx(1.0, abs=1e-6)
    assert sol.diagnostics["route"] == "target"


def test_quantile_wick_shift(line, grid1):
    sol = solve_quantile_1d(densities.wick_shift(line, [1.0]), grid1)
    x = np.linspace(-4, 4, 17)
    np.testing.assert_allclose(sol.map(x)[:, 0], x + 1.0, atol=1e-6)
    assert sol.wasserstein_sq == pytest.approx(1.0, abs=1e-6)
    assert sol.mean_hessian[0, 0] == pytest.approx(0.0, abs=1e-6)


def test_quantile_inverse(line, grid1):
    sol = solve_quantile_1d(densities.scaled_gaussian(line, 4.0), grid1)
    inverse = inverse_map(sol, build_grid(1, 20))
    np.testing.assert_allclose(inverse(np.array([-3.0, 1.0, 5.0]))[:, 0], [-1.5, 0.5, 2.5], atol=1e-9)
    assert sol.diagnostics["inverse_roundtrip_error"] <= 1e-8


def test_quantile_mixture_is_monotone(line, grid1):
    L = densities.gaussian_mixture(line, [0.5, 0.5], [[-2.0], [2.0]], [0.3, 0.3])
    sol = solve_quantile_1d(L, grid1)
    assert monotonicity_probe(sol, 1000) >= 0.0
    assert potential_convexity_margin(sol, np.linspace(-3, 3, 13)) >= 0.0


def test_quantile_for_expression_density(line):
    L = densities.point_expression(line, lambda pts: np.exp(pts[:, 0]))
    sol = solve_quantile_1d(L, build_grid(1, 12))
    assert sol.diagnostics["route"] == "source"
    np.testing.assert_allclose(sol.map(np.array([-1.0, 0.0, 1.5]))[:, 0], [0.0, 1.0, 2.5], atol=1e-6)
    np.testing.assert_allclose(sol.inverse_fn(np.array([[0.0], [2.5]]))[:, 0], [-1.0, 1.5], atol=1e-6)


def test_expression_law_tails_stay_finite(line):
    law = QuadratureLaw1D(densities.point_expression(line, lambda pts: np.exp(pts[:, 0])))
    y = np.array([-6.0, -0.556, 1.444, 3.44, 9.0])
    lower, upper = law.logcdf(y), law.logsf(y)
    assert np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))
    # nu = N(1, 1)
    np.testing.assert_allclose(upper[:4], norm.logsf(y[:4] - 1.0), rtol=1e-8)
    np.testing.assert_allclose(lower[:4], norm.logcdf(y[:4] - 1.0), rtol=1e-8)


def test_quantile_for_heavy_tilt_expression(line):
    # L ~ exp(x^2 / 4) pushes gamma onto N(0, 2)
    L = densities.point_expression(line, lambda pts: np.exp(pts[:, 0] ** 2 / 4.0))
    sol = solve_quantile_1d(L, build_grid(1, 10))
    x = np.array([-2.0, -0.5, 0.0, 1.0, 3.0])
    np.testing.assert_allclose(sol.map(x)[:, 0], math.sqrt(2.0) * x, atol=1e-6)


def test_quantile_rejects_higher_dimensions(plane, grid2):
    with pytest.raises(DimensionError):
        solve_quantile_1d(densities.uniform(plane), grid2)


# ---------------------------------------------------------
# Functionals of a solution
# ---------------------------------------------------------
def test_stein_functionals_for_shift(plane, grid2):
    h = np.array([1.0, -0.5])
    sol = solve_gaussian_linear(np.eye(2), mean=h)
    np.testing.assert_allclose(mean_potential_hessian(sol, grid2), 0.0, atol=1e-12)
    assert wasserstein_sq(sol, grid2) == pytest.approx(float(h @ h))
    first, second = displacement_moments(sol, grid2)
    np.testing.assert_allclose(first, h)
    np.testing.assert_allclose(second, np.outer(h, h), atol=1e-12)


def test_stein_functionals_for_scaling(line, grid1):
    sol = solve_quantile_1d(densities.scaled_gaussian(line, 4.0), grid1)
    assert mean_potential_hessian(sol, grid1)[0, 0] == pytest.approx(1.0, abs=1e-6)
    assert wasserstein_sq(sol, grid1) == pytest.approx(1.0, abs=1e-6)


# ---------------------------------------------------------
# det2 + Jacobian
# ---------------------------------------------------------
@pytest.mark.parametrize("A, expected", [
    (np.zeros((2, 2)), 1.0),
    (np.diag([1.0]), 2.0 * math.exp(-1.0)),
    (np.diag([1.0, -0.5]), math.exp(-0.5)),
])
def test_det2(A, expected):
    assert det2(A) == pytest.approx(expected)


def test_det2_of_singular_shift():
    assert det2(np.diag([-1.0, 0.3])) == 0.0


def test_jacobian_of_identity_is_one(plane):
    sol = solve_gaussian_linear(np.eye(2))
    np.testing.assert_allclose(jacobian_lambda(sol, np.array([[0.0, 1.0], [2.0, -3.0]])), 1.0)


def test_jacobian_of_scaling(line, grid1):
    L = densities.scaled_gaussian(line, 4.0)
    for sol in (solve_gaussian_linear([[4.0]]), solve_quantile_1d(L, grid1)):
        lam = jacobian_lambda(sol, 1.0)
        assert lam == pytest.approx(2.0 * math.exp(-1.5), rel=1e-8)
        assert L(sol.map(1.0)) * lam == pytest.approx(1.0, rel=1e-8)
        assert jacobian_crosscheck(sol, np.array([-1.0, 0.0, 1.0])) <= 1e-12


def test_jacobian_uses_the_number_operator(plane):
    sol = solve_gaussian_linear(np.diag([4.0, 1.0]))
    x = np.array([[1.0, 0.7], [0.0, -2.0], [-1.5, 0.3]])
    # phi = x1^2 / 2, so L phi = x1^2 - 1 and |grad phi|^2 = x1^2
    np.testing.assert_allclose(ou_generator(sol.potential, x), x[:, 0] ** 2 - 1.0, atol=1e-12)
    np.testing.assert_allclose(jacobian_lambda(sol, x), 2.0 * np.exp(-1.5 * x[:, 0] ** 2), rtol=1e-10)


# ---------------------------------------------------------
# Entropic transport
# ---------------------------------------------------------
def test_sinkhorn_params_validation():
    with pytest.raises(ValueError):
        SinkhornParams(epsilon_start=0.01, epsilon_final=0.1)
    with pytest.raises(ValueError):
        SinkhornParams(sampling="grid")
    schedule = SinkhornParams().schedule()
    assert schedule[0] == 1.0 and schedule[-1] == 0.005
    assert all(a > b for a, b in zip(schedule, schedule[1:]))


def test_sinkhorn_engine_matches_marginals():
    rng = np.random.default_rng(3)
    x, y = rng.standard_normal((5, 2)), rng.standard_normal((6, 2)) + 1.0
    a, b = np.full(5, 0.2), rng.dirichlet(np.ones(6))
    result = SinkhornEngine(SinkhornParams(epsilon_start=2.0, epsilon_final=1.0, tol=1e-9)).solve(x, a, y, b)
    assert result["converged"]
    np.testing.assert_allclose(result["plan"].sum(axis=1), a, atol=1e-8)
    np.testing.assert_allclose(result["plan"].sum(axis=0), b, atol=1e-12)
    assert result["cost"] > 0


def test_sinkhorn_warm_steps_are_capped():
    rng = np.random.default_rng(5)
    x, y = rng.standard_normal((8, 1)), 2.0 * rng.standard_normal((9, 1))
    a, b = np.full(8, 1.0 / 8), np.full(9, 1.0 / 9)
    p = SinkhornParams(epsilon_final=0.05, warm_iter=3, tol=1e-9)
    history = SinkhornEngine(p).solve(x, a, y, b)["history"]
    assert [step["epsilon"] for step in history] == list(p.schedule())
    assert all(step["iterations"] <= 3 for step in history[:-1])
    with pytest.raises(ValueError):
        SinkhornParams(warm_iter=0)


def test_entropic_dimension_limit():
    space = GaussianSpace(4)
    with pytest.raises(DimensionError):
        solve_entropic(densities.uniform(space), build_grid(4, 2))


@pytest.mark.slow
def test_entropic_uniform_is_near_identity(line):
    sol = solve_entropic(densities.uniform(line), build_grid(1, 60))
    assert sol.wasserstein_sq <= 0.02
    assert sol.diagnostics["plan_mass"] == pytest.approx(1.0, abs=1e-6)


@pytest.mark.slow
def test_entropic_scaling_matches_quantile(line):
    L = densities.scaled_gaussian(line, 4.0)
    grid = build_grid(1, 60)
    sol = solve_entropic(L, grid)
    x = grid.nodes[np.abs(grid.nodes[:, 0]) <= 3.0]
    np.testing.assert_allclose(sol.map(x), 2.0 * x, atol=5e-2)
    assert sol.mean_hessian[0, 0] == pytest.approx(1.0, abs=5e-2)


@pytest.mark.slow
def test_entropic_shift_in_the_plane(plane):
    grid = build_grid(2, 20)
    sol = solve_entropic(densities.wick_shift(plane, [1.0, 0.0]), grid)
    x = grid.nodes[np.all(np.abs(grid.nodes) <= 3.0, axis=1)]
    np.testing.assert_allclose(sol.map(x), x + np.array([1.0, 0.0]), atol=5e-2)
    assert sol.diagnostics["stein_symmetry_defect"] <= 1e-2


@pytest.mark.slow
def test_entropic_monte_carlo_is_seeded(line):
    p = SinkhornParams(sampling="monte_carlo", n_source=150, n_target=150, seed=7, epsilon_final=0.05)
    L = densities.wick_shift(line, [0.5])
    first = solve_entropic(L, build_grid(1, 10), p)
    second = solve_entropic(L, build_grid(1, 10), p)
    assert first.wasserstein_sq == second.wasserstein_sq
    assert first.diagnostics["target_support"] == "sampled"


def test_entropic_target_support_follows_the_density(line):
    p = SinkhornParams(epsilon_final=0.1, source_degree=12, target_degree=12)
    mixture = densities.gaussian_mixture(line, [0.5, 0.5], [[-1.0], [1.0]], [[[0.5]], [[0.5]]])
    expression = densities.point_expression(line, lambda pts: np.exp(pts[:, 0]))
    assert solve_entropic(mixture, build_grid(1, 12), p).diagnostics["target_support"] == "adapted"
    assert solve_entropic(expression, build_grid(1, 12), p).diagnostics["target_support"] == "reweighted"
    reweighted = SinkhornParams(epsilon_final=0.1, source_degree=12, target_support="reweighted")
    assert solve_entropic(mixture, build_grid(1, 12), reweighted).diagnostics["target_support"] == "reweighted"


@pytest.mark.slow
def test_entropic_cost_tightens_towards_the_quantile_cost(line):
    L = densities.scaled_gaussian(line, 4.0)
    grid = build_grid(1, 60)
    exact = solve_quantile_1d(L, grid).wasserstein_sq
    gaps = [solve_entropic(L, grid, SinkhornParams(epsilon_final=eps)).wasserstein_sq - exact
            for eps in (0.2, 0.05, 0.01)]
    assert exact == pytest.approx(1.0, abs=1e-10)
    assert all(gap >= -1e-6 for gap in gaps)
    assert all(a >= b - 1e-6 for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] <= 5e-2
