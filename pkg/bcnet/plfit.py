"""Node-wise pseudo-likelihood estimation

Every node s is regressed on the others: the negative log pseudo-likelihood
of X_s given the rest is smooth and convex in theta = (tau_s, sigma_s., alpha2_s).
The L1 penalty on sigma is handled by proximal gradient descent (FISTA with
backtracking) followed by a Newton polish on the selected support. Node fits
are then merged into one symmetric network estimate."""

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

import logging
import numbers
from concurrent.futures import ThreadPoolExecutor

import jsonschema
import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from bcnet.exceptions import (BCConfigError, BCError, BCInputError,
                              DataDegeneracyError, DimensionError, SingularMatrixError)
from bcnet.model import BCParameters, SPIN_VALUES, check_spins
from bcnet.sampler import SampleMatrix

logger = logging.getLogger('bcnet.plfit')

# |theta_j| above this means the estimate runs off to the boundary
DIVERGENCE_BOUND = 30.0

POLISH_STEPS = 50

FIT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "description": "Settings of the penalized pseudo-likelihood fit.",

    "type": "object",
    "properties": {
        "lam": {
            "type": ["number", "null"],
            "minimum": 0,
            "description": "L1 penalty; null selects sqrt(log(m)/n)."
        },
        "penalize_tau": {"type": "boolean"},
        "penalize_alpha2": {"type": "boolean"},
        "max_iter": {"type": "integer", "minimum": 1},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "kkt_tol": {"type": "number", "exclusiveMinimum": 0},
        "init": {"type": "string", "enum": ["zeros"]},
        "alpha2_mode": {"type": "string", "enum": ["per_node", "shared"]},
        "rule": {"type": "string", "enum": ["or", "and"]},
        "missing_states": {
            "type": "string",
            "enum": ["smooth", "error"],
            "description": "A column missing a value gets one pseudo-observation of it "
                           "(smooth) or is refused (error)."
        },
    },
    "additionalProperties": False
}


class NodeParams(object):
    """Parameters of one conditional: tau_s, sigma_st for t != s and alpha2_s"""
    def __init__(self, tau_s, sigma_row, alpha2_s):
        sigma_row = np.array(sigma_row, dtype=float).ravel()
        if not (np.isfinite(tau_s) and np.isfinite(alpha2_s)
                and np.all(np.isfinite(sigma_row))):
            raise BCInputError("node parameters must be finite")
        self.tau_s = float(tau_s)
        self.sigma_row = sigma_row
        self.alpha2_s = float(alpha2_s)

    @property
    def m(self):
        return self.sigma_row.size + 1

    def to_vector(self):
        """(tau, sigma_row..., alpha2), the component order used everywhere"""
        return np.concatenate([[self.tau_s], self.sigma_row, [self.alpha2_s]])

    @classmethod
    def from_vector(cls, theta):
        theta = np.asarray(theta, dtype=float)
        return cls(theta[0], theta[1:-1], theta[-1])

    @classmethod
    def zeros(cls, m):
        return cls(0.0, np.zeros(m - 1), 0.0)

    def __repr__(self):
        return "NodeParams(tau_s=%g, alpha2_s=%g, nonzero=%d)" % (
            self.tau_s, self.alpha2_s, np.count_nonzero(self.sigma_row))


class FitConfig(object):
    def __init__(self, lam=None, penalize_tau=False, penalize_alpha2=False,
                 max_iter=5000, tol=1e-9, kkt_tol=1e-6, init='zeros',
                 alpha2_mode='shared', rule='or', missing_states='smooth'):
        self.lam = lam
        self.penalize_tau = penalize_tau
        self.penalize_alpha2 = penalize_alpha2
        self.max_iter = max_iter
        self.tol = tol
        self.kkt_tol = kkt_tol
        self.init = init
        self.alpha2_mode = alpha2_mode
        self.rule = rule
        self.missing_states = missing_states
        try:
            jsonschema.validate(self.to_dict(), FIT_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise BCConfigError(exc.message, path=exc.absolute_path)

    def to_dict(self):
        return {
            'lam': self.lam,
            'penalize_tau': self.penalize_tau,
            'penalize_alpha2': self.penalize_alpha2,
            'max_iter': self.max_iter,
            'tol': self.tol,
            'kkt_tol': self.kkt_tol,
            'init': self.init,
            'alpha2_mode': self.alpha2_mode,
            'rule': self.rule,
            'missing_states': self.missing_states,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            jsonschema.validate(data, FIT_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise BCConfigError(exc.message, path=exc.absolute_path)
        return cls(**data)

    def replace(self, **changes):
        values = self.to_dict()
        values.update(changes)
        return FitConfig(**values)

    def resolve_lambda(self, m, n):
        return default_lambda(m, n) if self.lam is None else float(self.lam)


class NodeFit(object):
    """Result of fit_node

    gradient and hessian belong to the objective without the L1 term at
    theta_hat, pseudo-observations of the missing values included.
    """
    def __init__(self, node, theta_hat, objective, gradient, hessian, lam,
                 n_used, converged, n_iter, kkt_residual, missing=()):
        self.node = node
        self.theta_hat = theta_hat
        self.objective = objective
        self.gradient = gradient
        self.hessian = hessian
        self.lam = lam
        self.n_used = n_used
        self.converged = converged
        self.n_iter = n_iter
        self.kkt_residual = kkt_residual
        self.missing = tuple(missing)

    @property
    def smoothed(self):
        return bool(self.missing)

    @property
    def support(self):
        """Indices t (in full node numbering) with sigma_st != 0"""
        others = _other_nodes(self.node, self.theta_hat.m)
        return set(others[self.theta_hat.sigma_row != 0].tolist())

    def sigma_full(self):
        """Length-m row of sigma estimates with a zero at the node itself"""
        row = np.zeros(self.theta_hat.m)
        row[_other_nodes(self.node, self.theta_hat.m)] = self.theta_hat.sigma_row
        return row


class NetworkEstimate(object):
    def __init__(self, params, node_fits, lam, support, rule, n_used):
        self.params = params
        self.node_fits = node_fits
        self.lam = lam
        self.support = support
        self.rule = rule
        self.n_used = n_used

    @property
    def m(self):
        return self.params.m

    @property
    def converged(self):
        return all(fit.converged for fit in self.node_fits)

    def thresholded(self, threshold):
        """Adjacency matrix of the edges with |sigma_hat| > threshold"""
        adjacency = (np.abs(self.params.sigma) > threshold).astype(int)
        np.fill_diagonal(adjacency, 0)
        return adjacency

    def edges(self):
        rows, cols = np.nonzero(np.triu(self.support, k=1))
        return list(zip(rows.tolist(), cols.tolist()))


def default_lambda(m, n):
    """sqrt(log(m) / n)"""
    if m < 2 or n < 1:
        raise BCInputError("default penalty needs m >= 2 and n >= 1")
    return float(np.sqrt(np.log(m) / n))


def _as_data(data):
    if isinstance(data, SampleMatrix):
        return data.data
    data = check_spins(data)
    if data.ndim != 2:
        raise DimensionError("data must be an n x m matrix")
    return data


def _other_nodes(s, m):
    return np.delete(np.arange(m), s)


def _check_node(s, m):
    if not isinstance(s, numbers.Integral) or not 0 <= s < m:
        raise DimensionError("node index %r out of range for %d nodes" % (s, m))


def _theta_vector(theta, m):
    if theta is None:
        return np.zeros(m + 1)
    if isinstance(theta, NodeParams):
        theta = theta.to_vector()
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (m + 1,):
        raise DimensionError("theta has %d entries, expected %d" % (theta.size, m + 1))
    return theta


def _weights(weights, n):
    if weights is None:
        return np.full(n, 1.0 / n)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (n,):
        raise DimensionError("%d weights given for %d observations" % (weights.size, n))
    if np.any(weights < 0) or weights.sum() <= 0:
        raise BCInputError("weights must be nonnegative and not all zero")
    return weights / weights.sum()


class _NodeProblem(object):
    """Design of one node regression: z_i = (1, x_t for t != s), response x_s

    Every value in pseudo adds one observation of that value at the mean
    design row, weighted like a real observation. n counts real rows only.
    """
    def __init__(self, s, data, weights=None, pseudo=()):
        data = _as_data(data)
        n, m = data.shape
        if n < 1:
            raise BCInputError("no observations")
        _check_node(s, m)
        self.s = s
        self.m = m
        self.n = n
        self.x = data[:, s].astype(float)
        self.z = np.hstack([np.ones((n, 1)), data[:, _other_nodes(s, m)].astype(float)])
        self.w = _weights(weights, n)
        if pseudo:
            k = len(pseudo)
            self.x = np.concatenate([self.x, np.asarray(pseudo, dtype=float)])
            self.z = np.vstack([self.z, np.tile(self.z.mean(axis=0), (k, 1))])
            self.w = np.concatenate([self.w * n, np.ones(k)]) / (n + k)

    def _moments(self, theta):
        gamma = self.z.dot(theta[:-1])
        alpha2 = theta[-1]
        logits = np.stack([-gamma - alpha2, np.zeros_like(gamma), gamma - alpha2], axis=1)
        log_partition = logsumexp(logits, axis=1)
        probs = np.exp(logits - log_partition[:, np.newaxis])
        return gamma, log_partition, probs[:, 2] - probs[:, 0], probs[:, 2] + probs[:, 0]

    def objective(self, theta):
        gamma, log_partition, _, _ = self._moments(theta)
        x = self.x
        return float(self.w.dot(log_partition - x * gamma + theta[-1] * x * x))

    def observation_gradients(self, theta):
        _, _, mean, mean_sq = self._moments(theta)
        residual = mean - self.x
        grads = np.hstack([residual[:, np.newaxis] * self.z,
                           (self.x * self.x - mean_sq)[:, np.newaxis]])
        return grads[:self.n]

    def value_and_gradient(self, theta):
        gamma, log_partition, mean, mean_sq = self._moments(theta)
        x = self.x
        value = float(self.w.dot(log_partition - x * gamma + theta[-1] * x * x))
        grad = np.concatenate([(self.w * (mean - x)).dot(self.z),
                               [self.w.dot(x * x - mean_sq)]])
        return value, grad

    def hessian(self, theta):
        _, _, mean, mean_sq = self._moments(theta)
        var = mean_sq - mean ** 2
        cov = mean * (1.0 - mean_sq)
        var_sq = mean_sq * (1.0 - mean_sq)
        k = self.m
        hess = np.empty((k + 1, k + 1))
        hess[:k, :k] = (self.z * (self.w * var)[:, np.newaxis]).T.dot(self.z)
        cross = -(self.w * cov).dot(self.z)
        hess[:k, k] = cross
        hess[k, :k] = cross
        hess[k, k] = self.w.dot(var_sq)
        return hess


def node_negloglik(s, data, theta, weights=None):
    """Average negative log conditional likelihood of node s"""
    problem = _NodeProblem(s, data, weights)
    return problem.objective(_theta_vector(theta, problem.m))


def node_gradient(s, data, theta, weights=None):
    problem = _NodeProblem(s, data, weights)
    return problem.value_and_gradient(_theta_vector(theta, problem.m))[1]


def node_hessian(s, data, theta, weights=None):
    problem = _NodeProblem(s, data, weights)
    return problem.hessian(_theta_vector(theta, problem.m))


def node_observation_gradients(s, data, theta):
    """n x (m+1) matrix whose row i is the gradient of observation i's term"""
    problem = _NodeProblem(s, data)
    return problem.observation_gradients(_theta_vector(theta, problem.m))


def check_node_support(s, data, cfg=None):
    """Values node s never takes whose absence sends tau/alpha2 to infinity

    The returned values are the pseudo-observations fit_node adds. Nothing is
    returned when tau and alpha2 are both penalized; with missing_states
    'error' a missing value raises DataDegeneracyError instead.
    """
    cfg = cfg or FitConfig()
    data = _as_data(data)
    _check_node(s, data.shape[1])
    missing = tuple(value for value in SPIN_VALUES if not np.any(data[:, s] == value))
    if not missing:
        return ()
    if cfg.penalize_tau and cfg.penalize_alpha2 and cfg.lam != 0:
        logger.debug("node %d never takes %s; continuing with penalized tau and alpha2",
                     s, missing)
        return ()
    if cfg.missing_states == 'error':
        raise DataDegeneracyError("column never takes the value(s) %s; the estimate "
                                  "of tau and alpha2 diverges"
                                  % ', '.join(str(value) for value in missing), node=s)
    return missing


def _penalty_weights(m, lam, cfg):
    weights = np.full(m + 1, lam)
    if not cfg.penalize_tau:
        weights[0] = 0.0
    if not cfg.penalize_alpha2:
        weights[-1] = 0.0
    return weights


def _soft_threshold(theta, thresholds):
    return np.sign(theta) * np.maximum(np.abs(theta) - thresholds, 0.0)


def kkt_residual(grad, theta, penalty):
    """Largest violation of the optimality conditions of f + sum penalty_j |theta_j|"""
    at_zero = (theta == 0) & (penalty > 0)
    violation = np.where(at_zero,
                         np.maximum(np.abs(grad) - penalty, 0.0),
                         np.abs(grad + penalty * np.sign(theta)))
    return float(np.max(violation))


def _check_divergence(theta, s):
    if np.max(np.abs(theta)) > DIVERGENCE_BOUND:
        raise DataDegeneracyError("estimate diverges (|theta| > %g); the data lie on "
                                  "the boundary of the marginal polytope"
                                  % DIVERGENCE_BOUND, node=s)


def _fista(problem, theta, penalty, cfg, max_iter):
    """Accelerated proximal gradient with backtracking and adaptive restart"""
    step = 1.0
    value, grad = problem.value_and_gradient(theta)
    objective = value + penalty.dot(np.abs(theta))
    y, t = theta.copy(), 1.0
    iterations = 0
    while iterations < max_iter:
        iterations += 1
        y_value, y_grad = problem.value_and_gradient(y)
        while True:
            candidate = _soft_threshold(y - step * y_grad, step * penalty)
            diff = candidate - y
            cand_value, cand_grad = problem.value_and_gradient(candidate)
            if cand_value <= y_value + y_grad.dot(diff) + diff.dot(diff) / (2.0 * step) + 1e-15:
                break
            step /= 2.0
        cand_objective = cand_value + penalty.dot(np.abs(candidate))
        if cand_objective > objective:
            if t == 1.0:
                # no descent left from the iterate itself
                break
            # restart the momentum from the last iterate
            y, t = theta.copy(), 1.0
            continue
        t_next = (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0
        y = candidate + ((t - 1.0) / t_next) * (candidate - theta)
        change = abs(objective - cand_objective) / max(1.0, abs(objective))
        theta, grad, objective, t = candidate, cand_grad, cand_objective, t_next
        step *= 1.25
        _check_divergence(theta, problem.s)
        if change < cfg.tol or kkt_residual(grad, theta, penalty) < cfg.kkt_tol:
            break
    return theta, iterations


def _newton_polish(problem, theta, penalty, cfg):
    """Newton steps on the active set with the signs of the penalized terms fixed"""
    for _ in range(POLISH_STEPS):
        active = (theta != 0) | (penalty == 0)
        value, grad = problem.value_and_gradient(theta)
        rhs = grad[active] + penalty[active] * np.sign(theta[active])
        if np.max(np.abs(rhs), initial=0.0) < cfg.kkt_tol * 1e-2:
            break
        hess = problem.hessian(theta)[np.ix_(active, active)]
        try:
            direction = -scipy.linalg.solve(hess, rhs, assume_a='sym')
        except (np.linalg.LinAlgError, ValueError):
            logger.debug("node %d: singular Hessian on the active set, no polish", problem.s)
            break
        objective = value + penalty.dot(np.abs(theta))
        scale = 1.0
        while scale > 1e-8:
            candidate = theta.copy()
            candidate[active] += scale * direction
            # a sign change moves the coordinate to zero instead
            flipped = active & (penalty > 0) & (np.sign(candidate) != np.sign(theta))
            candidate[flipped] = 0.0
            cand_objective = problem.objective(candidate) + penalty.dot(np.abs(candidate))
            if cand_objective <= objective:
                break
            scale /= 2.0
        else:
            break
        if np.max(np.abs(candidate - theta)) < 1e-14:
            theta = candidate
            break
        theta = candidate
        _check_divergence(theta, problem.s)
    return theta


def fit_node(s, data, cfg=None, init=None, weights=None):
    """Minimize the node objective plus lam * |sigma_s.|_1"""
    cfg = cfg or FitConfig()
    problem = _NodeProblem(s, data, weights)
    if problem.n < 2 and weights is None:
        raise BCInputError("need at least two observations, got %d" % problem.n)
    missing = check_node_support(s, data, cfg) if weights is None else ()
    if missing:
        logger.warning("node %d never takes %s; adding one pseudo-observation of each",
                       s, ', '.join(str(value) for value in missing))
        problem = _NodeProblem(s, data, pseudo=missing)
    lam = cfg.resolve_lambda(problem.m, problem.n)
    penalty = _penalty_weights(problem.m, lam, cfg)
    theta = _theta_vector(init, problem.m).copy()

    iterations = 0
    residual = np.inf
    while iterations < cfg.max_iter:
        theta, used = _fista(problem, theta, penalty, cfg, cfg.max_iter - iterations)
        iterations += used
        theta = _newton_polish(problem, theta, penalty, cfg)
        value, grad = problem.value_and_gradient(theta)
        residual = kkt_residual(grad, theta, penalty)
        if residual <= cfg.kkt_tol:
            break

    value, grad = problem.value_and_gradient(theta)
    converged = residual <= cfg.kkt_tol
    if not converged:
        logger.warning("node %d: no convergence after %d iterations (KKT residual %.3g)",
                       s, iterations, residual)
    logger.debug("node %d: %d iterations, objective %.10g, %d edges", s, iterations,
                 value, np.count_nonzero(theta[1:-1]))
    return NodeFit(node=s, theta_hat=NodeParams.from_vector(theta), objective=value,
                   gradient=grad, hessian=problem.hessian(theta), lam=lam,
                   n_used=problem.n, converged=converged, n_iter=iterations,
                   kkt_residual=residual, missing=missing)


def _attach_node(exc, s):
    if getattr(exc, 'node', None) is not None:
        return exc
    if isinstance(exc, (DataDegeneracyError, SingularMatrixError)):
        return type(exc)(str(exc), node=s)
    new = type(exc)("node %d: %s" % (s, exc))
    new.node = s
    return new


def fit_network(data, cfg=None, threads=1):
    """Fit every node and merge the fits into one symmetric estimate

    sigma_st is the average of the estimates of nodes s and t. The support
    keeps an edge when either direction is nonzero ('or') or both are ('and').
    """
    cfg = cfg or FitConfig()
    labels = data.labels if isinstance(data, SampleMatrix) else None
    matrix = _as_data(data)
    n, m = matrix.shape
    if n < 2:
        raise BCInputError("need at least two observations, got %d" % n)
    if m < 2:
        raise DimensionError("need at least two nodes")
    lam = cfg.resolve_lambda(m, n)
    node_cfg = cfg.replace(lam=lam)
    logger.info("fitting %d nodes on %d observations (lambda %.4g)", m, n, lam)

    def work(s):
        try:
            return fit_node(s, matrix, node_cfg)
        except BCError as exc:
            raise _attach_node(exc, s)

    threads = max(1, int(threads or 1))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            fits = list(executor.map(work, range(m)))
    else:
        fits = [work(s) for s in range(m)]

    rows = np.array([fit.sigma_full() for fit in fits])
    sigma = (rows + rows.T) / 2.0
    nonzero = rows != 0
    if cfg.rule == 'and':
        support = nonzero & nonzero.T
    else:
        support = nonzero | nonzero.T
    # an edge kept by only one direction under the 'and' rule is dropped
    sigma = np.where(support, sigma, 0.0)
    np.fill_diagonal(sigma, 0.0)

    tau = np.array([fit.theta_hat.tau_s for fit in fits])
    alpha2 = np.array([fit.theta_hat.alpha2_s for fit in fits])
    if cfg.alpha2_mode == 'shared':
        alpha2 = float(np.mean(alpha2))
    params = BCParameters(tau, sigma, alpha2, labels=labels)
    return NetworkEstimate(params=params, node_fits=fits, lam=lam, support=support,
                           rule=cfg.rule, n_used=n)
