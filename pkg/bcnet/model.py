"""Blume-Capel model core

Parameters, energies, sufficient statistics, conditional distributions and the
exhaustive-enumeration oracle used to check everything else on small graphs."""

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

import itertools
import logging
import numbers

import jsonschema
import numpy as np
import six
from scipy.special import logsumexp

from bcnet.exceptions import (BCConfigError, BCInputError, DimensionError,
                              EnumerationCapError, InvalidSpinError)

logger = logging.getLogger('bcnet.model')

# order of the three states everywhere in the package
SPIN_VALUES = (-1, 0, 1)

# 3^12 = 531441 configurations
MAX_ENUMERATION_NODES = 12

# JSON Schema for parameter files
PARAMS_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "description": "Parameters of a Blume-Capel network.",

    "type": "object",
    "properties": {
        "tau": {
            "type": "array",
            "items": {"type": "number"},
            "minItems": 1,
            "description": "External field (threshold) of every node."
        },
        "sigma": {
            "type": "array",
            "items": {
                "type": "array",
                "items": {"type": "number"}
            },
            "description": "Symmetric interaction matrix with zero diagonal."
        },
        "alpha2": {
            "type": ["number", "array"],
            "items": {"type": "number"},
            "description": "Zero-cost parameter, shared or one per node."
        },
        "labels": {
            "type": ["array", "null"],
            "items": {"type": "string"},
            "description": "Optional node names."
        },
    },
    "required": ["tau", "sigma", "alpha2"],
    "additionalProperties": False
}


class BCParameters(object):
    """Thresholds tau, interactions sigma and zero cost alpha2 of a network

    alpha2 is either one number shared by all nodes or a vector with one value
    per node. Arrays are stored read-only.
    """
    def __init__(self, tau, sigma, alpha2, labels=None):
        tau = np.array(tau, dtype=float)
        if tau.ndim != 1 or tau.size < 1:
            raise DimensionError("tau must be a non-empty vector")
        m = tau.size

        sigma = np.array(sigma, dtype=float)
        if sigma.shape != (m, m):
            raise DimensionError("sigma has shape %s, expected (%d, %d)"
                                 % (sigma.shape, m, m))
        if not np.allclose(sigma, sigma.T, rtol=0.0, atol=1e-12):
            raise BCInputError("sigma must be symmetric")
        if np.any(np.diag(sigma) != 0):
            raise BCInputError("sigma must have a zero diagonal")
        sigma = (sigma + sigma.T) / 2.0

        if np.ndim(alpha2) == 0:
            alpha2 = float(alpha2)
            finite_alpha2 = np.isfinite(alpha2)
        else:
            alpha2 = np.array(alpha2, dtype=float)
            if alpha2.shape != (m,):
                raise DimensionError("alpha2 has %d entries, expected %d"
                                     % (alpha2.size, m))
            finite_alpha2 = np.all(np.isfinite(alpha2))
            alpha2.setflags(write=False)

        if not (np.all(np.isfinite(tau)) and np.all(np.isfinite(sigma))
                and finite_alpha2):
            raise BCInputError("parameters must be finite")

        if labels is not None:
            labels = [six.text_type(label) for label in labels]
            if len(labels) != m:
                raise DimensionError("%d labels given for %d nodes"
                                     % (len(labels), m))

        tau.setflags(write=False)
        sigma.setflags(write=False)
        self.tau = tau
        self.sigma = sigma
        self.alpha2 = alpha2
        self.labels = labels

    @property
    def m(self):
        return self.tau.size

    @property
    def per_node(self):
        """True when every node has its own alpha2"""
        return not isinstance(self.alpha2, float)

    def alpha2_vector(self):
        if self.per_node:
            return np.array(self.alpha2)
        return np.full(self.m, self.alpha2)

    def node_labels(self):
        if self.labels is not None:
            return list(self.labels)
        return [six.text_type(s + 1) for s in range(self.m)]

    def scaled(self, beta):
        """Parameters with the inverse temperature absorbed"""
        beta = check_beta(beta)
        alpha2 = beta * self.alpha2_vector() if self.per_node else beta * self.alpha2
        return BCParameters(beta * self.tau, beta * self.sigma, alpha2,
                            labels=self.labels)

    def edges(self):
        """Upper-triangle pairs (s, t) with nonzero interaction"""
        rows, cols = np.nonzero(np.triu(self.sigma, k=1))
        return list(zip(rows.tolist(), cols.tolist()))

    def to_dict(self):
        data = {
            'tau': self.tau.tolist(),
            'sigma': self.sigma.tolist(),
            'alpha2': self.alpha2_vector().tolist() if self.per_node else self.alpha2,
        }
        if self.labels is not None:
            data['labels'] = list(self.labels)
        return data

    @classmethod
    def from_dict(cls, data):
        try:
            jsonschema.validate(data, PARAMS_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise BCConfigError(exc.message, path=exc.absolute_path)
        return cls(data['tau'], data['sigma'], data['alpha2'],
                   labels=data.get('labels'))

    def __repr__(self):
        mode = 'per-node' if self.per_node else 'shared'
        return "BCParameters(m=%d, edges=%d, alpha2=%s)" % (self.m, len(self.edges()), mode)


def check_beta(beta):
    if not isinstance(beta, numbers.Real) or not np.isfinite(beta) or beta < 0:
        raise BCInputError("inverse temperature must be a finite number >= 0, got %r"
                           % (beta,))
    return float(beta)


def check_spins(x, m=None):
    """Validate one configuration (vector) or a matrix of configurations"""
    x = np.asarray(x)
    if x.ndim not in (1, 2):
        raise DimensionError("configurations must be a vector or a matrix")
    if m is not None and x.shape[-1] != m:
        raise DimensionError("configuration has %d entries, model has %d nodes"
                             % (x.shape[-1], m))
    if x.size and not np.all(np.isin(x, SPIN_VALUES)):
        raise InvalidSpinError("spin values must be in {-1, 0, +1}")
    return x.astype(np.int8)


def energies(configs, p):
    """Hamiltonian of every row of a configuration matrix"""
    x = np.asarray(configs, dtype=float)
    pair = 0.5 * np.einsum('ij,jk,ik->i', x, p.sigma, x)
    return -x.dot(p.tau) - pair + (x * x).dot(p.alpha2_vector())


def hamiltonian(x, p):
    x = check_spins(x, p.m)
    if x.ndim != 1:
        raise DimensionError("hamiltonian takes a single configuration")
    return float(energies(x[np.newaxis, :], p)[0])


def _statistics(configs):
    x = np.asarray(configs, dtype=float)
    rows, cols = np.triu_indices(x.shape[1], k=1)
    return np.hstack([x, x[:, rows] * x[:, cols], np.sum(x * x, axis=1)[:, np.newaxis]])


def sufficient_statistics(x):
    """phi(x) = (x_s for s; x_s x_t for s < t, row-major; sum of x_s^2)"""
    x = check_spins(x)
    if x.ndim != 1:
        raise DimensionError("sufficient_statistics takes a single configuration")
    return _statistics(x[np.newaxis, :])[0]


def enumerate_configurations(m, cap=MAX_ENUMERATION_NODES):
    if m > cap:
        raise EnumerationCapError("exhaustive enumeration refused for %d nodes "
                                  "(cap is %d)" % (m, cap))
    if m < 1:
        raise DimensionError("need at least one node")
    return np.array(list(itertools.product(SPIN_VALUES, repeat=m)), dtype=np.int8)


def _log_weights(p, beta, cap):
    configs = enumerate_configurations(p.m, cap=cap)
    return configs, -check_beta(beta) * energies(configs, p)


def exact_log_partition_function(p, beta=1.0, cap=MAX_ENUMERATION_NODES):
    _, log_weights = _log_weights(p, beta, cap)
    return float(logsumexp(log_weights))


def exact_partition_function(p, beta=1.0, cap=MAX_ENUMERATION_NODES):
    return float(np.exp(exact_log_partition_function(p, beta, cap=cap)))


def exact_distribution(p, beta=1.0, cap=MAX_ENUMERATION_NODES):
    """All 3^m configurations with their probabilities"""
    configs, log_weights = _log_weights(p, beta, cap)
    logger.debug("enumerated %d configurations", len(configs))
    return configs, np.exp(log_weights - logsumexp(log_weights))


def exact_joint_probability(x, p, beta=1.0, cap=MAX_ENUMERATION_NODES):
    x = check_spins(x, p.m)
    log_z = exact_log_partition_function(p, beta, cap=cap)
    return float(np.exp(-check_beta(beta) * hamiltonian(x, p) - log_z))


def exact_moments(p, beta=1.0, cap=MAX_ENUMERATION_NODES):
    """Expected sufficient statistics by exhaustive enumeration"""
    configs, probs = exact_distribution(p, beta, cap=cap)
    return probs.dot(_statistics(configs))


def conditional_probabilities(fields, alpha2, beta=1.0):
    """(p_minus, p_zero, p_plus) for local fields gamma, stacked on the last axis

    The exponents are beta * (x * gamma - alpha2 * x^2) for x in (-1, 0, +1).
    """
    fields = np.asarray(fields, dtype=float)
    scaled_alpha2 = beta * np.asarray(alpha2, dtype=float)
    logits = np.stack(np.broadcast_arrays(-beta * fields - scaled_alpha2,
                                          np.zeros_like(fields),
                                          beta * fields - scaled_alpha2), axis=-1)
    return np.exp(logits - logsumexp(logits, axis=-1, keepdims=True))


def local_fields(states, p):
    """gamma_s = tau_s + sum_t sigma_st x_t for every row and node"""
    return p.tau + np.asarray(states, dtype=float).dot(p.sigma)


def conditional_distribution(s, x_rest, p, beta=1.0):
    """Distribution of X_s given the other nodes

    x_rest holds either the m - 1 values of the other nodes in node order or a
    full configuration whose entry s is ignored.
    """
    if not isinstance(s, numbers.Integral) or not 0 <= s < p.m:
        raise DimensionError("node index %r out of range for %d nodes" % (s, p.m))
    x_rest = check_spins(x_rest)
    if x_rest.ndim != 1:
        raise DimensionError("x_rest must be a vector")
    if x_rest.size == p.m - 1:
        x = np.insert(x_rest, s, 0)
    elif x_rest.size == p.m:
        x = x_rest.copy()
        x[s] = 0
    else:
        raise DimensionError("x_rest has %d entries for %d nodes" % (x_rest.size, p.m))
    field = p.tau[s] + p.sigma[s].dot(x)
    probs = conditional_probabilities(field, p.alpha2_vector()[s], check_beta(beta))
    return tuple(float(value) for value in probs)
