import logging
import math

import numpy as np
import pytest

from django_autostop.bo.exception import DimensionMismatch, InvalidArgument
from django_autostop.bo.gp import GPPosterior, KernelParams, factorize, fit, kernel_eval, log_marginal_likelihood
from django_autostop.bo.space import Candidate, LinearDimension, SearchSpace


def _dense_posterior(params, points, values, query):
    def kernel(a, b):
        r = np.sqrt(np.sum(((a[:, None, :] - b[None, :, :]) / np.asarray(params.lengthscales)) ** 2, axis=-1))
        s = math.sqrt(5.0) * r
        return params.signal_variance * (1 + s + s**2 / 3) * np.exp(-s)

    covariance = kernel(points, points) + params.noise_variance * np.eye(len(points))
    cross = kernel(query, points)
    means = params.mean_const + cross @ np.linalg.solve(covariance, values - params.mean_const)
    variances = params.signal_variance - np.sum(cross * np.linalg.solve(covariance, cross.T).T, axis=1)
    return means, variances


def _space(dim):
    return SearchSpace(dims=tuple(LinearDimension(f"x{j}", 0, 1) for j in range(dim)))


class TestKernel:
    def test_zero_distance_is_signal_variance(self):
        params = KernelParams(2.5, (0.3, 0.7))
        point = Candidate((0.1, 0.9))
        assert kernel_eval(params, point, point) == pytest.approx(2.5)

    def test_decreasing_with_distance(self):
        params = KernelParams(1.0, (0.2,))
        origin = Candidate((0.0,))
        values = [kernel_eval(params, origin, Candidate((x,))) for x in (0.1, 0.2, 0.5)]
        assert values[0] > values[1] > values[2] > 0

    def test_unit_distance(self):
        expected = (1 + math.sqrt(5) + 5 / 3) * math.exp(-math.sqrt(5))
        value = kernel_eval(KernelParams(1.0, (1.0,)), Candidate((0.0,)), Candidate((1.0,)))
        assert value == pytest.approx(expected, rel=1e-12)
        assert value == pytest.approx(0.524, abs=1e-3)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            kernel_eval(KernelParams(1.0, (0.2,)), Candidate((0.1,)), Candidate((0.1, 0.2)))

    def test_invalid_parameters(self):
        with pytest.raises(InvalidArgument):
            KernelParams(0.0, (0.2,))
        with pytest.raises(InvalidArgument):
            KernelParams(1.0, (0.2, -1.0))

    def test_vector_round_trip(self):
        params = KernelParams(1.5, (0.2, 3.0), noise_variance=1e-3, mean_const=-0.4)
        restored = KernelParams.from_vector(params.to_vector())
        assert restored.signal_variance == pytest.approx(1.5)
        np.testing.assert_allclose(restored.lengthscales, (0.2, 3.0))
        assert restored.noise_variance == pytest.approx(1e-3)
        assert restored.mean_const == pytest.approx(-0.4)


class TestPosterior:
    def test_prior_without_data(self):
        params = KernelParams(1.7, (0.3,), mean_const=0.5)
        gp = GPPosterior.condition(params, np.zeros((0, 1)), [])
        means, variances = gp.predict(np.array([[0.2], [0.8]]))
        np.testing.assert_allclose(means, 0.5)
        np.testing.assert_allclose(variances, 1.7)

    def test_noiseless_interpolation(self):
        params = KernelParams(1.0, (0.3,))
        points = np.array([[0.1], [0.5], [0.9]])
        gp = GPPosterior.condition(params, points, [1.0, 2.0, 3.0])
        means, variances = gp.predict(points)
        np.testing.assert_allclose(means, [1.0, 2.0, 3.0], atol=1e-5)
        np.testing.assert_allclose(variances, 0.0, atol=1e-6)

    def test_matches_dense_formula(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            dim = int(rng.integers(1, 5))
            n = int(rng.integers(1, 9))
            params = KernelParams(
                float(rng.uniform(0.5, 2.0)),
                tuple(rng.uniform(0.1, 1.0, size=dim)),
                noise_variance=float(rng.uniform(1e-3, 1e-1)),
                mean_const=float(rng.normal()),
            )
            points = rng.random((n, dim))
            values = rng.normal(size=n)
            query = rng.random((7, dim))
            gp = GPPosterior.condition(params, points, values)
            means, variances = gp.predict(query, clamp=False)
            expected_means, expected_variances = _dense_posterior(params, points, values, query)
            np.testing.assert_allclose(means, expected_means, rtol=0, atol=1e-8)
            np.testing.assert_allclose(variances, expected_variances, rtol=0, atol=1e-8)

    def test_noiseless_linear_interpolation(self):
        points = np.linspace(0, 1, 8)[:, None]
        values = 3.0 * points[:, 0] - 1.0
        params = KernelParams(1.0, (0.2,), noise_variance=1e-10, mean_const=float(np.mean(values)))
        means, _ = GPPosterior.condition(params, points, values).predict(points)
        np.testing.assert_allclose(means, values, rtol=0, atol=1e-6)

    def test_variances_non_negative(self):
        rng = np.random.default_rng(1)
        points = rng.random((20, 2))
        gp = GPPosterior.condition(KernelParams(1.0, (0.5, 0.5), noise_variance=1e-6), points, rng.normal(size=20))
        query = np.vstack([points, rng.random((100, 2))])
        _, variances = gp.predict(query)
        assert np.all(variances >= 0)
        _, raw = gp.predict(query, clamp=False)
        assert np.all(raw >= -1e-8)

    def test_shrinkage(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            dim = int(rng.integers(1, 4))
            params = KernelParams(1.0, tuple(rng.uniform(0.1, 1.0, size=dim)), noise_variance=1e-4)
            points = rng.random((int(rng.integers(1, 8)), dim))
            extra = np.vstack([points, rng.random((1, dim))])
            query = rng.random((20, dim))
            _, before = GPPosterior.condition(params, points, rng.normal(size=len(points))).predict(query)
            _, after = GPPosterior.condition(params, extra, rng.normal(size=len(extra))).predict(query)
            assert np.all(after <= before + 1e-9)

    def test_query_dimension_mismatch(self):
        gp = GPPosterior.condition(KernelParams(1.0, (0.5,)), np.array([[0.1], [0.2]]), [0.0, 1.0])
        with pytest.raises(DimensionMismatch):
            gp.predict(np.array([[0.1, 0.2]]))


class TestFactorize:
    def test_jitter_for_singular_matrix(self):
        lower, jitter = factorize(np.ones((3, 3)))
        assert jitter > 0
        np.testing.assert_allclose(lower @ lower.T, np.ones((3, 3)) + jitter * np.eye(3), atol=1e-12)

    def test_no_jitter_for_well_conditioned(self):
        _, jitter = factorize(np.eye(4))
        assert jitter == 0.0


class TestLikelihood:
    def _instance(self, rng, max_points):
        dim = int(rng.integers(1, 5))
        n = int(rng.integers(1, max_points + 1))
        params = KernelParams(
            float(rng.uniform(0.5, 2.0)),
            tuple(rng.uniform(0.2, 1.5, size=dim)),
            noise_variance=float(rng.uniform(1e-2, 1e-1)),
            mean_const=float(rng.normal()),
        )
        return params, rng.random((n, dim)), rng.normal(size=n)

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            params, points, values = self._instance(rng, 8)
            r = np.sqrt(np.sum(((points[:, None, :] - points[None, :, :]) / np.asarray(params.lengthscales)) ** 2, -1))
            s = math.sqrt(5.0) * r
            covariance = params.signal_variance * (1 + s + s**2 / 3) * np.exp(-s)
            covariance += params.noise_variance * np.eye(len(values))
            residual = values - params.mean_const
            _, logdet = np.linalg.slogdet(covariance)
            expected = (
                -0.5 * residual @ np.linalg.solve(covariance, residual)
                - 0.5 * logdet
                - 0.5 * len(values) * math.log(2 * math.pi)
            )
            assert log_marginal_likelihood(params, points, values) == pytest.approx(expected, rel=0, abs=1e-8)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        step = 1e-6
        for _ in range(50):
            params, points, values = self._instance(rng, 6)
            _, gradient = log_marginal_likelihood(params, points, values, with_gradient=True)
            theta = params.to_vector()
            numeric = np.empty_like(theta)
            for index in range(len(theta)):
                shift = np.zeros_like(theta)
                shift[index] = step
                upper = log_marginal_likelihood(KernelParams.from_vector(theta + shift), points, values)
                lower = log_marginal_likelihood(KernelParams.from_vector(theta - shift), points, values)
                numeric[index] = (upper - lower) / (2 * step)
            np.testing.assert_allclose(gradient, numeric, rtol=1e-4, atol=1e-6)


class TestFit:
    def test_fits_smooth_function(self):
        points = np.linspace(0, 1, 12)[:, None]
        values = np.sin(4 * points[:, 0])
        gp = fit(_space(1), points, values, restarts=3, stream=np.random.default_rng(0))
        means, _ = gp.predict(points)
        np.testing.assert_allclose(means, values, atol=0.05)
        assert gp.params.noise_variance < 0.01

    def test_deterministic_for_stream(self):
        rng = np.random.default_rng(4)
        points, values = rng.random((9, 2)), rng.normal(size=9)
        first = fit(_space(2), points, values, restarts=3, stream=np.random.default_rng(11))
        second = fit(_space(2), points, values, restarts=3, stream=np.random.default_rng(11))
        assert first.params == second.params

    def test_constant_values(self, caplog):
        points = np.array([[0.1], [0.4], [0.8]])
        with caplog.at_level(logging.WARNING, logger="django_autostop.bo.gp"):
            gp = fit(_space(1), points, [2.0, 2.0, 2.0])
        assert any("constant" in record.getMessage() for record in caplog.records)
        means, _ = gp.predict(np.array([[0.3], [0.9]]))
        np.testing.assert_allclose(means, 2.0)

    def test_requires_two_points(self):
        with pytest.raises(InvalidArgument):
            fit(_space(1), np.array([[0.5]]), [1.0])

    def test_space_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            fit(_space(2), np.array([[0.1], [0.2]]), [0.0, 1.0])
