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

from bcnet import experiments, plfit, sampler
from bcnet.exceptions import BCConfigError, BCInputError, DataDegeneracyError
from bcnet.experiments import ExperimentConfig
from bcnet.model import BCParameters
from bcnet.sampler import GibbsConfig


TINY = {
    'm_list': [4],
    'n_grid': [200],
    'reps': 2,
    'p_e': 0.5,
    'tau0': 0.0,
    'sigma0': 0.5,
    'alpha2_0': 0.5,
    'beta': 1.0,
    'gibbs': {'n_iter': 30, 'burn_in': 20},
}


def edge_row(s, t, sigma_hat, lower=-1.0, upper=1.0):
    return {'s': s, 't': t, 'sigma_hat': sigma_hat, 'sigma_d': sigma_hat, 'se': 0.1,
            'ci_lower': lower, 'ci_upper': upper,
            'fisher_lower': lower, 'fisher_upper': upper}


def node_row(s):
    row = {'s': s}
    for name in ('tau', 'alpha2'):
        row.update({name + '_hat': 0.0, name + '_d': 0.0, name + '_se': 0.1,
                    name + '_lower': -1.0, name + '_upper': 1.0,
                    name + '_fisher_lower': -0.5, name + '_fisher_upper': 0.5})
    return row


class TestExperimentConfig(object):
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.m_list == [10, 20, 30]
        assert cfg.n_grid == [50, 80, 110, 140, 170, 200, 230, 260]
        assert (cfg.tau0, cfg.sigma0, cfg.alpha2_0, cfg.beta) == (1.2, 1.0, 1.2, 2.0)

    def test_nested_merge(self):
        cfg = ExperimentConfig(gibbs={'n_iter': 30, 'burn_in': 20})
        assert cfg.gibbs == {'n_iter': 30, 'burn_in': 20, 'thinning': 1,
                             'random_scan': False}
        assert cfg.gibbs_config(7).seed == 7
        assert cfg.gibbs_config(7).beta == 2.0
        assert cfg.fit_config().rule == 'or'

    def test_invalid_probability(self):
        with pytest.raises(BCConfigError) as exc_info:
            ExperimentConfig(p_e=1.5)
        assert exc_info.value.path == ['p_e']

    def test_unknown_key(self):
        with pytest.raises(BCConfigError):
            ExperimentConfig.from_dict({'reps': 3, 'replications': 3})

    def test_inconsistent_sampler(self):
        with pytest.raises(BCConfigError) as exc_info:
            ExperimentConfig(gibbs={'n_iter': 10, 'burn_in': 10})
        assert exc_info.value.path == ['burn_in']

    def test_dict(self):
        cfg = ExperimentConfig.from_dict(TINY)
        assert ExperimentConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


class TestGraphs(object):
    def test_empty_and_complete(self):
        assert not experiments.erdos_renyi(6, 0.0, 1).any()
        full = experiments.erdos_renyi(6, 1.0, 1)
        assert np.array_equal(full, 1 - np.eye(6, dtype=int))

    def test_symmetric(self):
        adjacency = experiments.erdos_renyi(8, 0.4, 3)
        assert np.array_equal(adjacency, adjacency.T)
        assert not np.diag(adjacency).any()

    def test_mean_edge_count(self):
        counts = [np.triu(experiments.erdos_renyi(10, 0.3, seed), k=1).sum()
                  for seed in range(200)]
        assert np.mean(counts) == pytest.approx(13.5, abs=1.0)

    @pytest.mark.parametrize(('m', 'p_e'), [(1, 0.5), (4, -0.1), (4, 2.0)])
    def test_invalid(self, m, p_e):
        with pytest.raises(BCInputError):
            experiments.erdos_renyi(m, p_e, 0)

    def test_generating_parameters(self):
        p = experiments.generating_parameters([[0, 1], [1, 0]], 1.2, 1.0, 1.2)
        assert p.tau.tolist() == [1.2, 1.2]
        assert p.sigma[0, 1] == 1.0
        assert p.alpha2 == 1.2

    def test_class_truth(self):
        cfg = ExperimentConfig.from_dict({})
        assert experiments.class_truth(cfg) == {'sigma': 2.0, 'tau': 2.4, 'alpha2': 2.4}
        cfg = ExperimentConfig.from_dict({'beta': 0.5, 'sigma0': -1.0})
        assert experiments.class_truth(cfg)['sigma'] == -0.5

    def test_replication_seed(self):
        seeds = experiments.replication_seed(0, 10, 50, 3)
        assert seeds == experiments.replication_seed(0, 10, 50, 3)
        assert seeds != experiments.replication_seed(0, 10, 50, 4)
        assert seeds != experiments.replication_seed(0, 10, 80, 3)
        assert seeds[0] != seeds[1]


class TestRecoveryMetrics(object):
    def test_counts(self):
        truth = BCParameters(np.zeros(3), [[0, 1, 0], [1, 0, 0], [0, 0, 0]], 0.5)
        inference = flexmock(
            edge_rows=[edge_row(0, 1, 0.8, 0.5, 1.5), edge_row(0, 2, 0.2),
                       edge_row(1, 2, 0.0)],
            node_rows=[node_row(s) for s in range(3)])
        metrics = experiments.recovery_metrics(flexmock(m=3), truth, inference)
        assert (metrics.tp, metrics.fn, metrics.fp, metrics.tn) == (1, 0, 1, 1)
        assert metrics.tpr == 1.0
        assert metrics.fpr == 0.5
        assert metrics.coverage('sigma') == 1.0
        assert metrics.coverage('tau') == 1.0
        # alpha2 truth 0.5 lies inside [-1, 1] but on the edge of [-0.5, 0.5]
        assert metrics.coverage('alpha2', fisher=True) == 1.0
        assert metrics.total['tau'] == 3

    def test_no_true_edges(self):
        truth = BCParameters(np.zeros(2), np.zeros((2, 2)), 0.0)
        inference = flexmock(edge_rows=[edge_row(0, 1, 0.0)],
                             node_rows=[node_row(0), node_row(1)])
        metrics = experiments.recovery_metrics(flexmock(m=2), truth, inference)
        assert metrics.tpr is None
        assert metrics.fpr == 0.0
        assert metrics.coverage('sigma') is None

    def test_size_mismatch(self):
        truth = BCParameters(np.zeros(2), np.zeros((2, 2)), 0.0)
        with pytest.raises(BCInputError):
            experiments.recovery_metrics(flexmock(m=3), truth,
                                         flexmock(edge_rows=[], node_rows=[]))


class TestRecoveryExperiment(object):
    def test_report(self):
        report = experiments.run_recovery_experiment(ExperimentConfig.from_dict(TINY))
        assert not report.partial
        cell = report.cell(4, 200)
        assert cell['reps'] == 2
        assert cell['failures'] == 0
        assert 0 <= cell['coverage_tau'] <= 1
        assert cell['mean_se_alpha2'] > 0
        assert len(report.to_rows()) == 1
        with pytest.raises(KeyError):
            report.cell(5, 200)

    def test_deterministic(self):
        cfg = ExperimentConfig.from_dict(TINY)
        first = experiments.run_recovery_experiment(cfg).to_dict()
        assert experiments.run_recovery_experiment(cfg).to_dict() == first
        assert experiments.run_recovery_experiment(cfg, threads=2).to_dict() == first

    def test_all_replications_fail(self):
        (flexmock(experiments)
            .should_receive('run_replication')
            .and_raise(DataDegeneracyError, "column never takes the value(s) 0"))
        report = experiments.run_recovery_experiment(ExperimentConfig.from_dict(TINY))
        assert report.partial
        assert len(report.failures) == 2
        assert report.failures[0]['error'] == 'DataDegeneracyError'
        assert report.failures[0]['message'] == "column never takes the value(s) 0"
        cell = report.cell(4, 200)
        assert (cell['reps'], cell['failures']) == (0, 2)
        assert cell['tpr'] is None
        assert cell['coverage_sigma'] is None

    def test_one_replication_fails(self):
        run_replication = experiments.run_replication

        def flaky(cfg, m, n, rep):
            if rep == 1:
                raise DataDegeneracyError("estimate diverges", node=2)
            return run_replication(cfg, m, n, rep)

        flexmock(experiments).should_receive('run_replication').replace_with(flaky)
        report = experiments.run_recovery_experiment(ExperimentConfig.from_dict(TINY))
        assert report.partial
        assert report.failures == [{'m': 4, 'n': 200, 'rep': 1,
                                    'error': 'DataDegeneracyError',
                                    'message': 'node 2: estimate diverges'}]
        assert report.cell(4, 200)['reps'] == 1


# default generating values (tau = alpha2 = 2.4, sigma = 2 after scaling):
# nearly every observation is +1 or 0 and most columns never take -1
DEFAULT_DESIGN = {
    'm_list': [10],
    'n_grid': [50, 260],
    'reps': 10,
    'gibbs': {'n_iter': 300, 'burn_in': 250},
}

WEAK_FIELD_DESIGN = dict(DEFAULT_DESIGN, tau0=0.0, sigma0=0.5, alpha2_0=0.5, beta=1.0,
                         gibbs={'n_iter': 200, 'burn_in': 150})


class TestRecoveryDesign(object):
    def test_default_design(self):
        report = experiments.run_recovery_experiment(
            ExperimentConfig.from_dict(DEFAULT_DESIGN))
        small, large = report.cell(10, 50), report.cell(10, 260)
        assert report.failures == []
        assert small['reps'] == large['reps'] == 10
        assert small['fpr'] <= 0.07
        assert large['fpr'] <= 0.07
        assert large['tpr'] >= small['tpr']
        assert large['bias_tau'] < small['bias_tau']
        assert large['bias_alpha2'] < small['bias_alpha2']
        assert large['bias_sigma'] <= small['bias_sigma']

    def test_weak_field_design(self):
        report = experiments.run_recovery_experiment(
            ExperimentConfig.from_dict(WEAK_FIELD_DESIGN))
        small, large = report.cell(10, 50), report.cell(10, 260)
        assert report.failures == []
        assert large['tpr'] - small['tpr'] >= 0.1
        assert large['bias_sigma'] < small['bias_sigma']
        # about 135 true edges at n=260: Monte Carlo error of a coverage near 0.02
        assert 0.85 <= large['coverage_sigma'] <= 0.99
        assert large['coverage_sigma'] >= large['coverage_fisher_sigma'] - 0.05


def subsample_data(n=300, seed=0):
    sigma = np.zeros((4, 4))
    sigma[0, 1] = sigma[1, 0] = sigma[2, 3] = sigma[3, 2] = 0.8
    p = BCParameters(np.zeros(4), sigma, 0.5, labels=['a', 'b', 'c', 'd'])
    return sampler.sample(p, GibbsConfig(n_iter=30, burn_in=20, seed=seed), n)


class TestSubsample(object):
    def test_full_fraction(self):
        data = subsample_data()
        result = experiments.subsample_analysis(data, fraction=1.0, reps=1)
        full = plfit.fit_network(data)
        assert result.n_subsample == data.n
        assert np.allclose(result.estimates[0].params.sigma, full.params.sigma)

    def test_support_within_union(self):
        data = subsample_data()
        result = experiments.subsample_analysis(data, fraction=0.7, reps=5, seed=2)
        union = np.any([estimate.support for estimate in result.estimates], axis=0)
        assert not np.any(result.support & ~union)
        assert result.n_subsample == 210
        assert result.params.node_labels() == ['a', 'b', 'c', 'd']

    def test_rows(self):
        result = experiments.subsample_analysis(subsample_data(), fraction=0.5, reps=2)
        rows = result.edge_rows()
        assert len(rows) == 6
        assert all(0 <= row['selection_frequency'] <= 1 for row in rows)
        assert len(result.subsample_rows()) == 12
        assert {row['subsample'] for row in result.subsample_rows()} == {0, 1}

    def test_deterministic(self):
        data = subsample_data()
        first = experiments.subsample_analysis(data, reps=3, seed=4)
        second = experiments.subsample_analysis(data, reps=3, seed=4, threads=2)
        assert first.edge_rows() == second.edge_rows()

    @pytest.mark.parametrize(('fraction', 'reps'), [(0.0, 1), (1.5, 1), (0.005, 1),
                                                    (0.5, 0)])
    def test_invalid(self, fraction, reps):
        with pytest.raises(BCInputError):
            experiments.subsample_analysis(subsample_data(), fraction=fraction, reps=reps)


class TestMagnetisationSweep(object):
    def test_zero_state_grows(self):
        p = BCParameters(np.zeros(4), np.zeros((4, 4)), 0.0)
        rows = experiments.magnetisation_sweep(p, [0.0, 1.0, 3.0],
                                               GibbsConfig(n_iter=5, burn_in=1), 500)
        zeros = [row['p_zero'] for row in rows]
        assert zeros[0] < zeros[1] < zeros[2]
        for row in rows:
            assert row['p_minus'] + row['p_zero'] + row['p_plus'] == pytest.approx(1.0)
