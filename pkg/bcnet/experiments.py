"""Simulation experiments

Recovery of random networks from Gibbs samples (true and false positive
rates, interval coverage and bias over a grid of network and sample sizes),
stability of estimates over random subsamples, and the proportions of the
three states against alpha2."""

# Copyright (C) 2026  bcnet developers
#
# This library is free software; you can redistribute it and/or
# modify it under the terms of the GNU Lesser General Public
# License as published by the Free Software Foundation; either
# version 2.1 of the License, or (at your option) any later version.
#
# This library is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the GNU
# Lesser General Public License for more details.
#
# You should have received a copy of the GNU Lesser General Public
# License along with this library; if not, write to the Free Software
# Foundation, Inc., 51 Franklin Street, Fifth Floor, Boston, MA  02110-1301
# USA

from __future__ import absolute_import, division

import copy
import logging
from concurrent.futures import ThreadPoolExecutor

import jsonschema
import numpy as np

from bcnet.exceptions import BCConfigError, BCError, BCInputError
from bcnet.inference import ShrinkageConfig, infer_network
from bcnet.model import BCParameters
from bcnet.plfit import FitConfig, default_lambda, fit_network
from bcnet.sampler import GibbsConfig, SampleMatrix, magnetisation_stats, sample

logger = logging.getLogger('bcnet.experiments')

CLASSES = ('sigma', 'tau', 'alpha2')

DEFAULT_EXPERIMENT = {
    'm_list': [10, 20, 30],
    'p_e': 0.3,
    'n_grid': list(range(50, 261, 30)),
    'reps': 100,
    'tau0': 1.2,
    'sigma0': 1.0,
    'alpha2_0': 1.2,
    'beta': 2.0,
    'seed': 0,
    'level': 0.95,
    'gibbs': {'n_iter': 2500, 'burn_in': 2000, 'thinning': 1, 'random_scan': False},
    'fit': {'penalize_tau': False, 'penalize_alpha2': False, 'max_iter': 5000,
            'rule': 'or'},
}

EXPERIMENT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "description": "Network recovery experiment.",

    "type": "object",
    "properties": {
        "m_list": {
            "type": "array",
            "items": {"type": "integer", "minimum": 2},
            "minItems": 1,
            "description": "Network sizes."
        },
        "p_e": {
            "type": "number", "minimum": 0, "maximum": 1,
            "description": "Edge probability of the random graphs."
        },
        "n_grid": {
            "type": "array",
            "items": {"type": "integer", "minimum": 2},
            "minItems": 1,
            "description": "Sample sizes."
        },
        "reps": {"type": "integer", "minimum": 1},
        "tau0": {"type": "number"},
        "sigma0": {"type": "number"},
        "alpha2_0": {"type": "number"},
        "beta": {"type": "number", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "level": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "gibbs": {
            "type": "object",
            "properties": {
                "n_iter": {"type": "integer", "minimum": 1},
                "burn_in": {"type": "integer", "minimum": 0},
                "thinning": {"type": "integer", "minimum": 1},
                "random_scan": {"type": "boolean"},
            },
            "additionalProperties": False
        },
        "fit": {
            "type": "object",
            "properties": {
                "penalize_tau": {"type": "boolean"},
                "penalize_alpha2": {"type": "boolean"},
                "max_iter": {"type": "integer", "minimum": 1},
                "rule": {"type": "string", "enum": ["or", "and"]},
                "missing_states": {"type": "string", "enum": ["smooth", "error"]},
            },
            "additionalProperties": False
        },
    },
    "additionalProperties": False
}


class ExperimentConfig(object):
    """Resolved experiment settings; missing keys take the default grid"""
    def __init__(self, **kwargs):
        try:
            jsonschema.validate(kwargs, EXPERIMENT_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise BCConfigError(exc.message, path=exc.absolute_path)
        values = copy.deepcopy(DEFAULT_EXPERIMENT)
        for key in ('gibbs', 'fit'):
            values[key].update(kwargs.pop(key, {}))
        values.update(kwargs)
        for key, value in values.items():
            setattr(self, key, value)
        # fail early on inconsistent sampler settings
        self.gibbs_config(0)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise BCConfigError("experiment config must be a JSON object")
        return cls(**copy.deepcopy(data))

    def to_dict(self):
        return {key: copy.deepcopy(getattr(self, key)) for key in DEFAULT_EXPERIMENT}

    def gibbs_config(self, seed):
        return GibbsConfig(seed=seed, beta=self.beta, **self.gibbs)

    def fit_config(self):
        return FitConfig(**self.fit)


class RecoveryMetrics(object):
    """Counts of one replication; rates are pooled by the report"""
    def __init__(self):
        self.tp = self.fp = self.tn = self.fn = 0
        self.covered = dict.fromkeys(CLASSES, 0)
        self.covered_fisher = dict.fromkeys(CLASSES, 0)
        self.total = dict.fromkeys(CLASSES, 0)
        self.sum_hat = dict.fromkeys(CLASSES, 0.0)
        self.sum_d = dict.fromkeys(CLASSES, 0.0)
        self.sum_se = dict.fromkeys(CLASSES, 0.0)

    @property
    def tpr(self):
        positives = self.tp + self.fn
        return self.tp / positives if positives else None

    @property
    def fpr(self):
        negatives = self.fp + self.tn
        return self.fp / negatives if negatives else None

    def coverage(self, name, fisher=False):
        covered = self.covered_fisher if fisher else self.covered
        return covered[name] / self.total[name] if self.total[name] else None

    def add(self, name, truth, hat, d, se, lower, upper, fisher_lower, fisher_upper):
        self.total[name] += 1
        self.covered[name] += int(lower <= truth <= upper)
        self.covered_fisher[name] += int(fisher_lower <= truth <= fisher_upper)
        self.sum_hat[name] += hat
        self.sum_d[name] += d
        self.sum_se[name] += se


def recovery_metrics(estimate, truth, inference):
    """Compare an estimate with the (beta-scaled) generating parameters

    An edge counts as identified when its symmetrized sigma_hat is nonzero.
    sigma coverage and bias are taken over the true edges only.
    """
    if estimate.m != truth.m:
        raise BCInputError("estimate has %d nodes, truth has %d" % (estimate.m, truth.m))
    metrics = RecoveryMetrics()
    for row in inference.edge_rows:
        s, t = row['s'], row['t']
        present = truth.sigma[s, t] != 0
        identified = row['sigma_hat'] != 0
        if present:
            metrics.tp += int(identified)
            metrics.fn += int(not identified)
            metrics.add('sigma', truth.sigma[s, t], row['sigma_hat'], row['sigma_d'],
                        row['se'], row['ci_lower'], row['ci_upper'],
                        row['fisher_lower'], row['fisher_upper'])
        else:
            metrics.fp += int(identified)
            metrics.tn += int(not identified)
    alpha2 = truth.alpha2_vector()
    for row in inference.node_rows:
        s = row['s']
        for name, value in (('tau', truth.tau[s]), ('alpha2', alpha2[s])):
            metrics.add(name, value, row[name + '_hat'], row[name + '_d'],
                        row[name + '_se'], row[name + '_lower'], row[name + '_upper'],
                        row[name + '_fisher_lower'], row[name + '_fisher_upper'])
    return metrics


def erdos_renyi(m, p_e, seed):
    """Symmetric 0/1 adjacency with independent Bernoulli(p_e) upper entries"""
    if m < 2:
        raise BCInputError("a random graph needs at least two nodes")
    if not 0 <= p_e <= 1:
        raise BCInputError("edge probability must lie in [0, 1], got %r" % (p_e,))
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((m, m)) < p_e, k=1)
    return (upper | upper.T).astype(int)


def generating_parameters(adjacency, tau0, sigma0, alpha2_0):
    adjacency = np.asarray(adjacency)
    m = adjacency.shape[0]
    return BCParameters(np.full(m, float(tau0)), sigma0 * adjacency.astype(float),
                        float(alpha2_0))


def replication_seed(seed, m, n, rep):
    """(graph seed, Gibbs seed) of one replication"""
    state = np.random.SeedSequence([seed, m, n, rep]).generate_state(2, dtype=np.uint64)
    return int(state[0]), int(state[1])


def class_truth(cfg):
    """True sigma, tau and alpha2 on the scale of the estimates"""
    pair = generating_parameters([[0, 1], [1, 0]], cfg.tau0, cfg.sigma0, cfg.alpha2_0)
    scaled = pair.scaled(cfg.beta)
    return {'sigma': float(scaled.sigma[0, 1]), 'tau': float(scaled.tau[0]),
            'alpha2': float(scaled.alpha2_vector()[0])}


def run_replication(cfg, m, n, rep):
    graph_seed, gibbs_seed = replication_seed(cfg.seed, m, n, rep)
    truth = generating_parameters(erdos_renyi(m, cfg.p_e, graph_seed),
                                  cfg.tau0, cfg.sigma0, cfg.alpha2_0)
    data = sample(truth, cfg.gibbs_config(gibbs_seed), n)
    estimate = fit_network(data, cfg.fit_config())
    inference = infer_network(estimate, data, ShrinkageConfig(), level=cfg.level)
    return recovery_metrics(estimate, truth.scaled(cfg.beta), inference)


def _aggregate(m, n, truth, results):
    done = [result for result in results if isinstance(result, RecoveryMetrics)]
    failures = [result for result in results if not isinstance(result, RecoveryMetrics)]
    tp = sum(r.tp for r in done)
    fn = sum(r.fn for r in done)
    fp = sum(r.fp for r in done)
    tn = sum(r.tn for r in done)
    cell = {
        'm': m, 'n': n,
        'reps': len(done),
        'failures': len(failures),
        'tpr': tp / (tp + fn) if tp + fn else None,
        'fpr': fp / (fp + tn) if fp + tn else None,
    }
    for name in CLASSES:
        total = sum(r.total[name] for r in done)
        if not total:
            cell.update({key % name: None for key in (
                'coverage_%s', 'coverage_fisher_%s', 'bias_%s', 'bias_d_%s', 'mean_se_%s')})
            continue
        cell['coverage_%s' % name] = sum(r.covered[name] for r in done) / total
        cell['coverage_fisher_%s' % name] = sum(r.covered_fisher[name] for r in done) / total
        cell['bias_%s' % name] = abs(sum(r.sum_hat[name] for r in done) / total - truth[name])
        cell['bias_d_%s' % name] = abs(sum(r.sum_d[name] for r in done) / total - truth[name])
        cell['mean_se_%s' % name] = sum(r.sum_se[name] for r in done) / total
    return cell, failures


class ExperimentReport(object):
    def __init__(self, config, cells, failures):
        self.config = config
        self.cells = cells
        self.failures = failures

    @property
    def partial(self):
        return bool(self.failures)

    def cell(self, m, n):
        for cell in self.cells:
            if cell['m'] == m and cell['n'] == n:
                return cell
        raise KeyError((m, n))

    def to_rows(self):
        """One row per (m, n) cell"""
        return [dict(cell) for cell in self.cells]

    def to_dict(self):
        return {
            'config': self.config.to_dict(),
            'cells': self.to_rows(),
            'failures': [dict(failure) for failure in self.failures],
        }


def run_recovery_experiment(cfg, threads=1):
    """Every (m, n) cell of the grid, cfg.reps replications each

    Replications that raise a bcnet error are logged and left out of the
    rates; the report lists them.
    """
    threads = max(1, int(threads or 1))
    truth = class_truth(cfg)
    cells = []
    failures = []
    for m in cfg.m_list:
        for n in cfg.n_grid:
            def work(rep, m=m, n=n):
                try:
                    return run_replication(cfg, m, n, rep)
                except BCError as exc:
                    logger.warning("m=%d n=%d replication %d excluded: %s", m, n, rep, exc)
                    return {'m': m, 'n': n, 'rep': rep, 'error': type(exc).__name__,
                            'message': str(exc)}

            if threads > 1:
                with ThreadPoolExecutor(max_workers=threads) as executor:
                    results = list(executor.map(work, range(cfg.reps)))
            else:
                results = [work(rep) for rep in range(cfg.reps)]
            cell, failed = _aggregate(m, n, truth, results)
            cells.append(cell)
            failures.extend(failed)
            logger.info("m=%d n=%d: %d replications, %d excluded", m, n, cell['reps'],
                        cell['failures'])
    return ExperimentReport(cfg, cells, failures)


class SubsampleResult(object):
    """Network averaged over subsamples; edges kept when mean |sigma| > threshold"""
    def __init__(self, params, support, threshold, n_subsample, estimates, inferences):
        self.params = params
        self.support = support
        self.threshold = threshold
        self.n_subsample = n_subsample
        self.estimates = estimates
        self.inferences = inferences

    @property
    def mean_sigma(self):
        return np.mean([estimate.params.sigma for estimate in self.estimates], axis=0)

    def edge_rows(self):
        labels = self.params.node_labels()
        mean_sigma = self.mean_sigma
        selected = np.mean([estimate.support for estimate in self.estimates], axis=0)
        rows = []
        for s in range(self.params.m):
            for t in range(s + 1, self.params.m):
                rows.append({
                    's': s, 't': t,
                    'label_s': labels[s], 'label_t': labels[t],
                    'mean_sigma': float(mean_sigma[s, t]),
                    'selection_frequency': float(selected[s, t]),
                    'retained': bool(self.support[s, t]),
                })
        return rows

    def subsample_rows(self):
        rows = []
        for index, inference in enumerate(self.inferences):
            for row in inference.edge_rows:
                rows.append(dict(row, subsample=index))
        return rows


def subsample_analysis(data, fraction=0.7, reps=50, base_cfg=None, seed=0,
                       shrinkage=None, level=0.95, threads=1):
    """Analyse reps random subsamples of floor(fraction * n) rows

    The penalty and shrinkage follow the subsample size.
    """
    if not isinstance(data, SampleMatrix):
        data = SampleMatrix(data)
    if not 0 < fraction <= 1:
        raise BCInputError("fraction must lie in (0, 1], got %r" % (fraction,))
    if reps < 1:
        raise BCInputError("reps must be positive")
    n_s = int(np.floor(fraction * data.n))
    if n_s < 2:
        raise BCInputError("subsamples of %d rows are too small" % n_s)
    base_cfg = base_cfg or FitConfig()
    cfg = base_cfg.replace(lam=default_lambda(data.m, n_s))
    shrinkage = shrinkage or ShrinkageConfig()

    estimates = []
    inferences = []
    for rep in range(reps):
        rng = np.random.default_rng(np.random.SeedSequence([seed, rep]))
        index = np.sort(rng.choice(data.n, size=n_s, replace=False))
        subset = data.rows(index)
        estimate = fit_network(subset, cfg, threads=threads)
        estimates.append(estimate)
        inferences.append(infer_network(estimate, subset, shrinkage, level, threads=threads))
        logger.debug("subsample %d: %d edges", rep, len(estimate.edges()))

    threshold = default_lambda(data.m, n_s)
    mean_sigma = np.mean([estimate.params.sigma for estimate in estimates], axis=0)
    support = np.abs(mean_sigma) > threshold
    np.fill_diagonal(support, False)
    tau = np.mean([estimate.params.tau for estimate in estimates], axis=0)
    alpha2 = np.mean([estimate.params.alpha2_vector() for estimate in estimates], axis=0)
    if not estimates[0].params.per_node:
        alpha2 = float(np.mean(alpha2))
    params = BCParameters(tau, np.where(support, mean_sigma, 0.0), alpha2,
                          labels=data.labels)
    logger.info("%d subsamples of %d rows: %d edges retained above %.4g", reps, n_s,
                int(np.triu(support, k=1).sum()), threshold)
    return SubsampleResult(params, support, threshold, n_s, estimates, inferences)


def magnetisation_sweep(params, alpha2_grid, gibbs_cfg, n, threads=1):
    """Pooled proportions of -1, 0 and +1 in Gibbs samples for every alpha2"""
    rows = []
    for alpha2 in alpha2_grid:
        varied = BCParameters(params.tau, params.sigma, float(alpha2), labels=params.labels)
        pooled = magnetisation_stats(sample(varied, gibbs_cfg, n, threads=threads)).pooled
        rows.append({'alpha2': float(alpha2), 'p_minus': float(pooled[0]),
                     'p_zero': float(pooled[1]), 'p_plus': float(pooled[2])})
    return rows
