"""
Copyright (C) 2026  bcnet developers

This library is free software; you can redistribute it and/or
modify it under the terms of the GNU Lesser General Public
License as published by the Free Software Foundation; either
version 2.1 of the License, or (at your option) any later version.

This library is distributed in the hope that it will be useful,
but WITHOUT ANY WARRANTY; without even the implied warranty of
MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the GNU
Lesser General Public License for more details.

You should have received a copy of the GNU Lesser General Public
License along with this library; if not, write to the Free Software
Foundation, Inc., 51 Franklin Street, Fifth Floor, Boston, MA  02110-1301  USA
"""
from __future__ import absolute_import

import numpy as np
import pytest
from flexmock import flexmock

from bcnet import model, plfit, sampler
from bcnet.exceptions import (BCConfigError, DataDegeneracyError, DimensionError,
                              SingularMatrixError)
from bcnet.model import BCParameters
from bcnet.plfit import FitConfig, NodeParams
from bcnet.sampler import GibbsConfig


def random_data(n, m, seed):
    return np.random.default_rng(seed).integers(-1, 2, size=(n, m))


def random_theta(m, seed):
    return np.random.default_rng(seed).normal(0, 0.5, size=m + 1)


def chain_network(m=4, sigma=0.6, alpha2=0.5):
    """Path graph with moderate couplings; every state stays frequent"""
    matrix = np.zeros((m, m))
    for s in range(m - 1):
        matrix[s, s + 1] = matrix[s + 1, s] = sigma
    return BCParameters(np.zeros(m), matrix, alpha2)


def simulate(p, n, seed=0):
    return sampler.sample(p, GibbsConfig(n_iter=30, burn_in=20, seed=seed), n)


def finite_difference(func, theta, h=1e-6):
    grad = []
    for j in range(theta.size):
        step = np.zeros_like(theta)
        step[j] = h
        grad.append((func(theta + step) - func(theta - step)) / (2 * h))
    return np.array(grad)


class TestObjective(object):
    def test_uniform_value(self):
        data = random_data(30, 4, 0)
        assert plfit.node_negloglik(2, data, np.zeros(5)) == pytest.approx(np.log(3))

    def test_matches_conditionals(self):
        rng = np.random.default_rng(1)
        sigma = np.triu(rng.normal(0, 0.5, size=(4, 4)), k=1)
        p = BCParameters(rng.normal(size=4), sigma + sigma.T, rng.normal(size=4))
        data = random_data(25, 4, 2)
        s = 1
        theta = NodeParams(p.tau[s], np.delete(p.sigma[s], s), p.alpha2_vector()[s])
        expected = -np.mean([np.log(model.conditional_distribution(s, row, p)[row[s] + 1])
                             for row in data])
        assert plfit.node_negloglik(s, data, theta) == pytest.approx(expected)

    def test_uniform_weights(self):
        data = random_data(20, 3, 3)
        theta = random_theta(3, 4)
        assert plfit.node_negloglik(0, data, theta, weights=np.full(20, 7.0)) == \
            pytest.approx(plfit.node_negloglik(0, data, theta))

    def test_gradient_at_zero(self):
        grad = plfit.node_gradient(0, np.zeros((10, 3), dtype=int), np.zeros(4))
        assert np.allclose(grad, [0, 0, 0, -2.0 / 3])

    @pytest.mark.parametrize('seed', range(10))
    def test_gradient_finite_differences(self, seed):
        m = 2 + seed % 4
        data = random_data(40, m, seed)
        theta = random_theta(m, seed + 100)
        s = seed % m
        numeric = finite_difference(lambda t: plfit.node_negloglik(s, data, t), theta)
        assert np.allclose(plfit.node_gradient(s, data, theta), numeric,
                           rtol=1e-6, atol=1e-8)

    @pytest.mark.parametrize('seed', range(10))
    def test_hessian_finite_differences(self, seed):
        m = 2 + seed % 4
        data = random_data(40, m, seed)
        theta = random_theta(m, seed + 200)
        s = seed % m
        hessian = plfit.node_hessian(s, data, theta)
        numeric = np.array([finite_difference(
            lambda t, j=j: plfit.node_gradient(s, data, t)[j], theta) for j in range(m + 1)])
        assert np.allclose(hessian, numeric, rtol=1e-5, atol=1e-7)
        assert np.allclose(hessian, hessian.T, atol=1e-12)
        assert np.linalg.eigvalsh(hessian).min() >= -1e-10

    def test_convex_along_segments(self):
        data = random_data(50, 4, 5)
        rng = np.random.default_rng(6)
        for _ in range(10):
            a, b = rng.normal(size=5), rng.normal(size=5)
            mid = plfit.node_negloglik(1, data, (a + b) / 2)
            ends = (plfit.node_negloglik(1, data, a) + plfit.node_negloglik(1, data, b)) / 2
            assert mid <= ends + 1e-10

    def test_observation_gradients_average(self):
        data = random_data(30, 3, 7)
        theta = random_theta(3, 8)
        per_obs = plfit.node_observation_gradients(2, data, theta)
        assert per_obs.shape == (30, 4)
        assert np.allclose(per_obs.mean(axis=0), plfit.node_gradient(2, data, theta))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError) as exc_info:
            plfit.node_negloglik(0, random_data(5, 3, 0), np.zeros(3))
        assert str(exc_info.value) == "theta has 3 entries, expected 4"

    def test_population_gradient_vanishes_at_truth(self):
        rng = np.random.default_rng(9)
        sigma = np.triu(rng.normal(0, 0.7, size=(3, 3)), k=1)
        p = BCParameters(rng.normal(0, 0.5, size=3), sigma + sigma.T, 0.4)
        configs, probs = model.exact_distribution(p)
        for s in range(3):
            theta = NodeParams(p.tau[s], np.delete(p.sigma[s], s), p.alpha2)
            grad = plfit.node_gradient(s, configs, theta, weights=probs)
            assert np.allclose(grad, 0, atol=1e-10)
            fit = plfit.fit_node(s, configs, FitConfig(lam=0.0), weights=probs)
            assert np.allclose(fit.theta_hat.to_vector(), theta.to_vector(), atol=1e-4)


class TestFitNode(object):
    def test_full_shrinkage(self):
        data = simulate(chain_network(), 400).data
        fit = plfit.fit_node(1, data, FitConfig(lam=1e3))
        assert not np.any(fit.theta_hat.sigma_row)
        frequencies = [np.mean(data[:, 1] == v) for v in (-1, 0, 1)]
        probs = model.conditional_probabilities(fit.theta_hat.tau_s, fit.theta_hat.alpha2_s)
        assert np.allclose(probs, frequencies, atol=1e-5)

    @pytest.mark.parametrize('lam', [0.0, 0.05, 0.2])
    def test_kkt(self, lam):
        data = simulate(chain_network(), 300, seed=1).data
        fit = plfit.fit_node(0, data, FitConfig(lam=lam))
        assert fit.converged
        assert fit.kkt_residual <= 1e-6
        sigma = fit.theta_hat.sigma_row
        grad = fit.gradient[1:-1]
        assert np.all(np.abs(grad[sigma == 0]) <= lam + 1e-6)
        assert np.allclose(grad[sigma != 0] + lam * np.sign(sigma[sigma != 0]), 0, atol=1e-6)
        assert abs(fit.gradient[0]) < 1e-6 and abs(fit.gradient[-1]) < 1e-6

    def test_regularization_path(self):
        data = simulate(chain_network(5), 300, seed=2).data
        norms = [np.abs(plfit.fit_node(2, data, FitConfig(lam=lam)).theta_hat.sigma_row).sum()
                 for lam in (0.0, 0.02, 0.05, 0.1, 0.2, 2.0)]
        assert all(a >= b - 1e-6 for a, b in zip(norms, norms[1:]))
        assert norms[-1] == 0

    def test_consistency(self):
        p = chain_network(3)
        data = simulate(p, 5000, seed=3).data
        for s in range(3):
            fit = plfit.fit_node(s, data, FitConfig(lam=0.0))
            truth = NodeParams(p.tau[s], np.delete(p.sigma[s], s), p.alpha2).to_vector()
            assert np.allclose(fit.theta_hat.to_vector(), truth, atol=0.15)

    @pytest.mark.parametrize(('column', 'msg'), [
        ([0, 1, 1, 0, 1, 0], "node 0: column never takes the value(s) -1; the estimate "
                             "of tau and alpha2 diverges"),
        ([1, 1, 1, 1, 1, 1], "node 0: column never takes the value(s) -1, 0; the estimate "
                             "of tau and alpha2 diverges"),
    ])
    def test_degenerate_column(self, column, msg):
        data = np.column_stack([column, [1, -1, 0, 0, 1, -1]])
        with pytest.raises(DataDegeneracyError) as exc_info:
            plfit.fit_node(0, data, FitConfig(lam=0.1, missing_states='error'))
        assert str(exc_info.value) == msg
        assert exc_info.value.node == 0

    @pytest.mark.parametrize(('column', 'missing'), [
        ([0, 1, 1, 0, 1, 0], (-1,)),
        ([1, 1, 1, 1, 1, 1], (-1, 0)),
        ([1, -1, 1, -1, 1, 1], (0,)),
        ([1, -1, 0, 1, 0, -1], ()),
    ])
    def test_check_node_support(self, column, missing):
        data = np.column_stack([column, [1, -1, 0, 0, 1, -1]])
        assert plfit.check_node_support(0, data) == missing

    @pytest.mark.parametrize('column', [
        [0, 1, 1, 0, 1, 0],
        [1, 1, 1, 1, 1, 1],
        [1, -1, 1, -1, 1, 1],
    ])
    def test_missing_value_smoothed(self, column):
        data = np.column_stack([column, [1, -1, 0, 0, 1, -1]])
        fit = plfit.fit_node(0, data, FitConfig(lam=0.1))
        assert fit.smoothed
        assert fit.missing == plfit.check_node_support(0, data)
        assert fit.n_used == 6
        assert fit.converged
        theta = fit.theta_hat.to_vector()
        assert np.all(np.abs(theta) < plfit.DIVERGENCE_BOUND)
        assert abs(fit.gradient[0]) < 1e-5
        assert abs(fit.gradient[-1]) < 1e-5
        assert np.all(np.linalg.eigvalsh(fit.hessian) > 0)

    def test_pseudo_observation_is_an_extra_row(self):
        # the other column has mean 0, so the mean design row is a real row
        other = [1, -1, 0, 0, 1, -1]
        column = [0, 1, 1, 0, 1, 0]
        smoothed = plfit.fit_node(0, np.column_stack([column, other]), FitConfig(lam=0.1))
        extended = plfit.fit_node(0, np.column_stack([column + [-1], other + [0]]),
                                  FitConfig(lam=0.1))
        assert not extended.smoothed
        assert np.allclose(smoothed.theta_hat.to_vector(), extended.theta_hat.to_vector(),
                           atol=1e-5)
        assert smoothed.objective == pytest.approx(extended.objective)

    def test_smoothing_grows_with_n(self):
        # one pseudo-observation weighs less as real rows accumulate
        rows = [[0, 1], [1, -1], [1, 0], [0, 0], [1, 1], [0, -1]]
        small = plfit.fit_node(0, np.array(rows), FitConfig(lam=0.0))
        large = plfit.fit_node(0, np.array(rows * 20), FitConfig(lam=0.0))
        small_sum = small.theta_hat.tau_s + small.theta_hat.alpha2_s
        large_sum = large.theta_hat.tau_s + large.theta_hat.alpha2_s
        assert large_sum > small_sum + 1.0

    def test_degenerate_column_penalized(self):
        data = np.column_stack([[0, 1, 1, 0, 1, 0], [1, -1, 0, 0, 1, -1]])
        cfg = FitConfig(lam=0.5, penalize_tau=True, penalize_alpha2=True)
        fit = plfit.fit_node(0, data, cfg)
        assert np.all(np.isfinite(fit.theta_hat.to_vector()))

    def test_divergence_guard(self):
        with pytest.raises(DataDegeneracyError) as exc_info:
            plfit._check_divergence(np.array([0.5, -31.0, 2.0]), 2)
        assert exc_info.value.node == 2
        plfit._check_divergence(np.array([0.5, -29.0]), 2)


class TestFitNetwork(object):
    def test_symmetric(self):
        data = simulate(chain_network(5), 300, seed=4)
        estimate = plfit.fit_network(data, FitConfig(lam=0.05))
        assert np.array_equal(estimate.params.sigma, estimate.params.sigma.T)
        assert np.array_equal(estimate.support, estimate.support.T)
        assert estimate.lam == 0.05
        assert not estimate.params.per_node

    def test_average_of_directions(self):
        data = simulate(chain_network(2), 400, seed=5)
        estimate = plfit.fit_network(data, FitConfig(lam=0.0))
        first = plfit.fit_node(0, data.data, FitConfig(lam=0.0))
        second = plfit.fit_node(1, data.data, FitConfig(lam=0.0))
        expected = (first.theta_hat.sigma_row[0] + second.theta_hat.sigma_row[0]) / 2
        assert estimate.params.sigma[0, 1] == pytest.approx(expected)

    def test_rules(self):
        data = simulate(chain_network(5, sigma=0.3), 200, seed=6)
        union = plfit.fit_network(data, FitConfig(lam=0.08, rule='or'))
        both = plfit.fit_network(data, FitConfig(lam=0.08, rule='and'))
        assert np.all(union.support | ~both.support)
        assert np.all((both.params.sigma != 0) <= both.support)

    def test_per_node_alpha2(self):
        data = simulate(chain_network(4), 300, seed=7)
        shared = plfit.fit_network(data, FitConfig(lam=0.05))
        per_node = plfit.fit_network(data, FitConfig(lam=0.05, alpha2_mode='per_node'))
        assert per_node.params.per_node
        assert shared.params.alpha2 == pytest.approx(np.mean(per_node.params.alpha2_vector()))

    def test_threads(self):
        data = simulate(chain_network(5), 300, seed=8)
        serial = plfit.fit_network(data)
        parallel = plfit.fit_network(data, threads=3)
        assert np.array_equal(serial.params.sigma, parallel.params.sigma)
        assert np.array_equal(serial.params.tau, parallel.params.tau)

    def test_column_swap(self):
        data = simulate(chain_network(4), 300, seed=9).data
        order = [1, 0, 2, 3]
        plain = plfit.fit_network(data, FitConfig(lam=0.05))
        swapped = plfit.fit_network(data[:, order], FitConfig(lam=0.05))
        assert np.allclose(swapped.params.sigma, plain.params.sigma[np.ix_(order, order)],
                           atol=1e-4)

    def test_empty_graph_false_positives(self):
        p = BCParameters(np.zeros(6), np.zeros((6, 6)), 0.3)
        data = simulate(p, 500, seed=10)
        estimate = plfit.fit_network(data)
        assert len(estimate.edges()) <= 4

    def test_default_lambda_used(self):
        data = simulate(chain_network(4), 200, seed=11)
        assert plfit.fit_network(data).lam == pytest.approx(np.sqrt(np.log(4) / 200))

    def test_thresholded(self):
        data = simulate(chain_network(4), 300, seed=12)
        estimate = plfit.fit_network(data, FitConfig(lam=0.0))
        adjacency = estimate.thresholded(1e6)
        assert not adjacency.any()
        assert np.array_equal(estimate.thresholded(0.0),
                              (estimate.params.sigma != 0).astype(int))

    def test_alpha2_tracks_zero_frequency(self):
        m = 19
        alpha2 = np.linspace(-1.0, 1.5, m)
        p = BCParameters(np.zeros(m), chain_network(m, sigma=0.3).sigma, alpha2)
        data = simulate(p, 10000, seed=14)
        estimate = plfit.fit_network(data, FitConfig(alpha2_mode='per_node'))
        alpha2_hat = estimate.params.alpha2_vector()
        zeros = np.mean(data.data == 0, axis=0)
        assert np.corrcoef(zeros, alpha2_hat)[0, 1] >= 0.9
        assert np.allclose(alpha2_hat, alpha2, atol=0.3)

    def test_missing_value_in_network(self):
        data = simulate(chain_network(4), 200, seed=15).data.copy()
        data[data[:, 2] == -1, 2] = 0
        estimate = plfit.fit_network(data, FitConfig(lam=0.05))
        assert [fit.smoothed for fit in estimate.node_fits] == [False, False, True, False]
        assert np.all(np.isfinite(estimate.params.tau))
        with pytest.raises(DataDegeneracyError) as exc_info:
            plfit.fit_network(data, FitConfig(lam=0.05, missing_states='error'))
        assert exc_info.value.node == 2

    def test_node_error_carries_index(self):
        data = simulate(chain_network(3), 100, seed=13)
        (flexmock(plfit)
            .should_receive('fit_node')
            .and_raise(SingularMatrixError, "Hessian is singular"))
        with pytest.raises(SingularMatrixError) as exc_info:
            plfit.fit_network(data, FitConfig(lam=0.1))
        assert str(exc_info.value) == "node 0: Hessian is singular"
        assert exc_info.value.node == 0


class TestConfig(object):
    @pytest.mark.parametrize(('m', 'n', 'expected'), [
        (19, 10000, 0.017159),
        (30, 260, 0.114374),
    ])
    def test_default_lambda(self, m, n, expected):
        assert plfit.default_lambda(m, n) == pytest.approx(expected, abs=1e-6)

    def test_default_lambda_identity(self):
        assert plfit.default_lambda(np.e, 1) == pytest.approx(1.0)

    def test_invalid_rule(self):
        with pytest.raises(BCConfigError) as exc_info:
            FitConfig(rule='xor')
        assert exc_info.value.path == ['rule']

    def test_missing_states(self):
        assert FitConfig().missing_states == 'smooth'
        with pytest.raises(BCConfigError) as exc_info:
            FitConfig(missing_states='drop')
        assert exc_info.value.path == ['missing_states']

    def test_negative_lambda(self):
        with pytest.raises(BCConfigError):
            FitConfig(lam=-0.1)
