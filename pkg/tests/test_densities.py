import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from core import densities
from core.chaos import quadrature_moments, stroock_moments
from core.errors import DensityError, DimensionError, MatrixError, NegativeDensityError
from core.gaussian_core import GaussianSpace, build_grid, wick_exp


def test_uniform_is_one_everywhere(line):
    L = densities.uniform(line)
    np.testing.assert_allclose(L(np.array([-3.0, 0.0, 2.5])), 1.0)
    assert L.describe()["family"] == "uniform"
    assert L.entropy_certified and L.l2_certified


def test_wick_shift_matches_wick_exponential(plane):
    h = [1.0, -0.5]
    L = densities.wick_shift(plane, h)
    pts = np.array([[0.0, 0.0], [1.0, 2.0], [-2.0, 0.5]])
    np.testing.assert_allclose(L(pts), wick_exp(h, pts), rtol=1e-14)


def test_scaled_gaussian_values(line):
    L = densities.scaled_gaussian(line, 4.0)
    assert L(0.0) == pytest.approx(0.5)
    assert L(2.0) == pytest.approx(0.5 * math.exp(1.5))
    assert not L.l2_certified
    assert densities.scaled_gaussian(line, 1.5).l2_certified


def test_scale_leaves_closed_form_density_unchanged(line):
    plain = densities.scaled_gaussian(line, 4.0)
    scaled = densities.scaled_gaussian(line, 4.0, scale=7.3)
    x = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(scaled(x), plain(x), rtol=1e-14)


def test_invalid_parameters(line, plane):
    with pytest.raises(DensityError):
        densities.uniform(line, scale=0.0)
    with pytest.raises(MatrixError):
        densities.scaled_gaussian(plane, [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(DensityError):
        densities.gaussian_mixture(line, [0.5, -0.5], [[0.0], [1.0]], [1.0, 1.0])
    with pytest.raises(DimensionError):
        densities.wick_shift(plane, [1.0])


def test_mixture_moments_are_closed_form(line):
    L = densities.gaussian_mixture(line, [1.0, 3.0], [[-1.0], [1.0]], [0.5, 2.0])
    assert L.nu_mean()[0] == pytest.approx(0.25 * -1.0 + 0.75 * 1.0)
    assert L.nu_second_moment()[0, 0] == pytest.approx(0.25 * 1.5 + 0.75 * 3.0)
    assert quadrature_moments(L, build_grid(1, 160)).mass == pytest.approx(1.0, abs=1e-8)


def test_point_expression_is_normalised(line):
    L = densities.point_expression(line, lambda pts: 7.3 * np.exp(pts[:, 0]))
    x = np.array([-1.0, 0.0, 2.0])
    np.testing.assert_allclose(L(x), wick_exp([1.0], x), rtol=1e-8)
    assert not L.is_closed_form


def test_point_expression_rejects_negative_values(line):
    with pytest.raises(NegativeDensityError):
        densities.point_expression(line, lambda pts: pts[:, 0])


def test_relative_entropy_closed_form(line):
    L = densities.scaled_gaussian(line, 4.0)
    assert densities.relative_entropy(L) == pytest.approx(0.5 * (4.0 - 1.0 - math.log(4.0)))


def test_relative_entropy_by_quadrature(line):
    L = densities.point_expression(line, lambda pts: np.exp(pts[:, 0]))
    assert densities.relative_entropy(L) == pytest.approx(0.5, abs=1e-8)


def test_log_concavity_margin(line):
    assert densities.log_concavity_margin(densities.scaled_gaussian(line, 4.0), [0.0]) == pytest.approx(-0.75)
    shift = densities.point_expression(line, lambda pts: np.exp(pts[:, 0]))
    assert densities.log_concavity_margin(shift, [-1.0, 0.5]) == pytest.approx(0.0, abs=1e-5)


def test_ensure_dim(line):
    with pytest.raises(DimensionError):
        densities.ensure_dim(densities.uniform(line), build_grid(2, 4))


@given(st.integers(0, 10_000))
def test_random_mixture_is_seeded(seed):
    space = GaussianSpace(1)
    first = densities.random_mixture(space, seed)
    second = densities.random_mixture(space, seed)
    np.testing.assert_array_equal(first.params["weights"], second.params["weights"])
    assert 1 <= len(first.components) <= 4
    assert first.params["seed"] == seed


@given(st.integers(0, 10_000))
def test_random_mixture_quadrature_matches_closed_form(seed):
    L = densities.random_mixture(GaussianSpace(1), seed)
    m = stroock_moments(L, build_grid(1, 10), adaptive=True)
    assert m.converged
    assert m.route_gap <= 1e-6
