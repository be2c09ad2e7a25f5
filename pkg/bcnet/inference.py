"""Desparsified estimates and confidence intervals

The lasso estimate of every node is corrected by one Newton step with a
shrunk Hessian, and its variance is estimated with the sandwich formula
Sigma^-1 M Sigma^-1, where M averages the outer products of per-observation
gradients."""

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
from concurrent.futures import ThreadPoolExecutor

import jsonschema
import numpy as np
import scipy.linalg
from scipy.stats import norm

from bcnet.exceptions import (BCConfigError, BCInputError, DimensionError,
                              SingularMatrixError)
from bcnet.plfit import NodeParams, node_observation_gradients

logger = logging.getLogger('bcnet.inference')

SHRINKAGE_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "description": "Shrinkage of the Hessian before inversion.",

    "type": "object",
    "properties": {
        "rho": {
            "oneOf": [
                {"type": "number", "minimum": 0, "maximum": 1},
                {"type": "string", "enum": ["auto"]},
            ],
            "description": "Weight of the diagonal target; auto is n^(-5/4)."
        },
        "target_mu": {
            "oneOf": [
                {"type": "number"},
                {"type": "string", "enum": ["auto"]},
            ],
            "description": "Scale of the diagonal target; auto is the mean Hessian diagonal."
        },
        "diagonal_middle": {
            "type": "boolean",
            "description": "Keep only the diagonal of the gradient outer products."
        },
    },
    "additionalProperties": False
}


class ShrinkageConfig(object):
    def __init__(self, rho='auto', target_mu='auto', diagonal_middle=False):
        self.rho = rho
        self.target_mu = target_mu
        self.diagonal_middle = diagonal_middle
        try:
            jsonschema.validate(self.to_dict(), SHRINKAGE_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise BCConfigError(exc.message, path=exc.absolute_path)

    def to_dict(self):
        return {'rho': self.rho, 'target_mu': self.target_mu,
                'diagonal_middle': self.diagonal_middle}

    def resolve_rho(self, n):
        if self.rho == 'auto':
            if n is None:
                raise BCConfigError("rho 'auto' needs the number of observations",
                                    path=['rho'])
            return default_rho(n)
        return float(self.rho)


class InferenceResult(object):
    """Desparsified values with sandwich and Hessian-only intervals"""
    def __init__(self, theta_d, var_sandwich, var_fisher, n, level, theta_hat=None,
                 node=None):
        self.theta_d = np.asarray(theta_d, dtype=float)
        self.var_sandwich = np.asarray(var_sandwich, dtype=float)
        self.var_fisher = (np.asarray(var_fisher, dtype=float)
                           if var_fisher is not None else None)
        self.n = n
        self.level = level
        self.theta_hat = theta_hat
        self.node = node
        self.ci_lower, self.ci_upper = _intervals(self.theta_d, self.var_sandwich, n, level)

    @property
    def se(self):
        return np.sqrt(self.var_sandwich / self.n)

    def fisher_intervals(self):
        if self.var_fisher is None:
            raise BCInputError("no Hessian-only variances were computed")
        return _intervals(self.theta_d, self.var_fisher, self.n, self.level)


class NetworkInference(object):
    def __init__(self, node_results, edge_rows, node_rows, level):
        self.node_results = node_results
        self.edge_rows = edge_rows
        self.node_rows = node_rows
        self.level = level


def default_rho(n):
    """n^(-5/4)"""
    if n < 1:
        raise BCInputError("default shrinkage needs n >= 1")
    return float(n) ** -1.25


def normal_quantile(level):
    if not 0 < level < 1:
        raise BCInputError("confidence level must lie in (0, 1), got %r" % (level,))
    return float(norm.ppf((1.0 + level) / 2.0))


def _intervals(center, variance, n, level):
    half = normal_quantile(level) * np.sqrt(variance / n)
    return center - half, center + half


def _check_square(matrix, name):
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionError("%s must be a square matrix" % name)
    return matrix


def shrink_hessian(hessian, cfg=None, n=None):
    """rho * mu * I + (1 - rho) * H"""
    cfg = cfg or ShrinkageConfig()
    hessian = _check_square(hessian, "Hessian")
    if not np.allclose(hessian, hessian.T, rtol=0.0, atol=1e-10):
        raise BCInputError("Hessian must be symmetric")
    rho = cfg.resolve_rho(n)
    if cfg.target_mu == 'auto':
        mu = float(np.mean(np.diag(hessian)))
        if mu <= 0 and rho > 0:
            raise SingularMatrixError("diagonal target %g is not positive" % mu)
    else:
        mu = float(cfg.target_mu)
    shrunk = rho * mu * np.eye(hessian.shape[0]) + (1.0 - rho) * hessian
    return (shrunk + shrunk.T) / 2.0


def invert_symmetric(matrix, node=None):
    """Inverse of a symmetric positive definite matrix through Cholesky"""
    matrix = _check_square(matrix, "matrix")
    try:
        factor = scipy.linalg.cho_factor(matrix)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularMatrixError("matrix is not positive definite: %s" % exc, node=node)
    inverse = scipy.linalg.cho_solve(factor, np.eye(matrix.shape[0]))
    return (inverse + inverse.T) / 2.0


def desparsify(theta_hat, grad, sigma_inv):
    """theta_hat - Sigma^-1 grad, grad of the unpenalized objective at theta_hat"""
    if isinstance(theta_hat, NodeParams):
        theta_hat = theta_hat.to_vector()
    theta_hat = np.asarray(theta_hat, dtype=float)
    grad = np.asarray(grad, dtype=float)
    sigma_inv = _check_square(sigma_inv, "Sigma^-1")
    if not theta_hat.shape == grad.shape == sigma_inv.shape[:1]:
        raise DimensionError("theta, gradient and Sigma^-1 do not agree")
    return theta_hat - sigma_inv.dot(grad)


def sandwich_variance(per_obs_grads, sigma_inv, diagonal_middle=False):
    """diag(Sigma^-1 M Sigma^-1) with M = mean of g_i g_i^T"""
    grads = np.asarray(per_obs_grads, dtype=float)
    sigma_inv = _check_square(sigma_inv, "Sigma^-1")
    if grads.ndim != 2 or grads.shape[1] != sigma_inv.shape[0]:
        raise DimensionError("per-observation gradients have shape %s for a %d x %d "
                             "Sigma^-1" % (grads.shape, sigma_inv.shape[0],
                                           sigma_inv.shape[0]))
    middle = grads.T.dot(grads) / grads.shape[0]
    if diagonal_middle:
        middle = np.diag(np.diag(middle))
    return np.einsum('ij,jk,ki->i', sigma_inv, middle, sigma_inv)


def fisher_variance(sigma_inv):
    return np.diag(_check_square(sigma_inv, "Sigma^-1")).copy()


def confidence_intervals(theta_d, gamma, n, level=0.95, var_fisher=None):
    gamma = np.asarray(gamma, dtype=float)
    if np.any(~np.isfinite(gamma)) or np.any(gamma < 0):
        raise BCInputError("variances must be finite and nonnegative")
    if n < 1:
        raise BCInputError("number of observations must be positive")
    normal_quantile(level)
    return InferenceResult(theta_d, gamma, var_fisher, n, level)


def infer_node(node_fit, data, cfg=None, level=0.95):
    cfg = cfg or ShrinkageConfig()
    theta = node_fit.theta_hat.to_vector()
    grads = node_observation_gradients(node_fit.node, data, theta)
    n = grads.shape[0]
    shrunk = shrink_hessian(node_fit.hessian, cfg, n)
    sigma_inv = invert_symmetric(shrunk, node=node_fit.node)
    theta_d = desparsify(theta, node_fit.gradient, sigma_inv)
    gamma = sandwich_variance(grads, sigma_inv, cfg.diagonal_middle)
    result = confidence_intervals(theta_d, gamma, n, level,
                                  var_fisher=fisher_variance(sigma_inv))
    result.theta_hat = theta
    result.node = node_fit.node
    return result


def _sigma_index(s, t):
    """Position of sigma_st in the parameter vector of node s"""
    return 1 + (t if t < s else t - 1)


def infer_network(estimate, data, cfg=None, level=0.95, threads=1):
    """Per-node inference merged into edge and node tables

    The edge value is the mean of both directional desparsified values and
    its variance the mean of both directional sandwich variances.
    """
    cfg = cfg or ShrinkageConfig()
    fits = estimate.node_fits
    threads = max(1, int(threads or 1))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            results = list(executor.map(lambda fit: infer_node(fit, data, cfg, level), fits))
    else:
        results = [infer_node(fit, data, cfg, level) for fit in fits]

    m = estimate.m
    n = estimate.n_used
    labels = estimate.params.node_labels()
    z = normal_quantile(level)
    edge_rows = []
    for s in range(m):
        for t in range(s + 1, m):
            i, j = _sigma_index(s, t), _sigma_index(t, s)
            sigma_d = (results[s].theta_d[i] + results[t].theta_d[j]) / 2.0
            variance = (results[s].var_sandwich[i] + results[t].var_sandwich[j]) / 2.0
            fisher = (results[s].var_fisher[i] + results[t].var_fisher[j]) / 2.0
            se = np.sqrt(variance / n)
            fisher_se = np.sqrt(fisher / n)
            edge_rows.append({
                's': s, 't': t,
                'label_s': labels[s], 'label_t': labels[t],
                'sigma_hat': float(estimate.params.sigma[s, t]),
                'selected': bool(estimate.support[s, t]),
                'sigma_d': float(sigma_d),
                'se': float(se),
                'ci_lower': float(sigma_d - z * se),
                'ci_upper': float(sigma_d + z * se),
                'fisher_lower': float(sigma_d - z * fisher_se),
                'fisher_upper': float(sigma_d + z * fisher_se),
            })

    node_rows = []
    for s, result in enumerate(results):
        fisher_lower, fisher_upper = result.fisher_intervals()
        row = {'s': s, 'label': labels[s],
               'missing': ';'.join(str(value) for value in fits[s].missing)}
        for name, k in (('tau', 0), ('alpha2', m)):
            row.update({
                name + '_hat': float(result.theta_hat[k]),
                name + '_d': float(result.theta_d[k]),
                name + '_se': float(result.se[k]),
                name + '_lower': float(result.ci_lower[k]),
                name + '_upper': float(result.ci_upper[k]),
                name + '_fisher_lower': float(fisher_lower[k]),
                name + '_fisher_upper': float(fisher_upper[k]),
            })
        node_rows.append(row)
    logger.info("computed %.0f%% intervals for %d edges and %d nodes",
                100 * level, len(edge_rows), m)
    return NetworkInference(results, edge_rows, node_rows, level)
