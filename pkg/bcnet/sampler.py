"""Gibbs sampler for the Blume-Capel model

Every observation is the final state of its own chain. Chains are advanced
together with numpy, but each row draws from its own generator so that rows
do not depend on how many chains run or how they are split across threads."""

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

import collections
import logging
import numbers
from concurrent.futures import ThreadPoolExecutor

import jsonschema
import numpy as np

from bcnet.exceptions import BCConfigError, BCInputError, DimensionError
from bcnet.model import check_beta, check_spins, conditional_probabilities

logger = logging.getLogger('bcnet.sampler')

# upper bound on uniforms held in memory per block of sweeps
CHUNK_DRAWS = 1 << 22

GIBBS_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "description": "Settings of the Gibbs sampler.",

    "type": "object",
    "properties": {
        "n_iter": {
            "type": "integer",
            "minimum": 1,
            "description": "Number of sweeps per chain."
        },
        "burn_in": {
            "type": "integer",
            "minimum": 0,
            "description": "Sweeps discarded before states are kept."
        },
        "thinning": {
            "type": "integer",
            "minimum": 1,
            "description": "Keep every k-th state of a chain."
        },
        "seed": {
            "type": "integer",
            "minimum": 0,
            "maximum": 18446744073709551615
        },
        "beta": {
            "type": "number",
            "minimum": 0,
            "description": "Inverse temperature."
        },
        "random_scan": {
            "type": "boolean",
            "description": "Pick nodes at random instead of sweeping 1..m."
        },
    },
    "additionalProperties": False
}

MagnetisationStats = collections.namedtuple('MagnetisationStats', ['per_node', 'pooled'])


class GibbsConfig(object):
    def __init__(self, n_iter=2500, burn_in=2000, thinning=1, seed=0, beta=1.0,
                 random_scan=False):
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.thinning = thinning
        self.seed = seed
        self.beta = beta
        self.random_scan = random_scan
        self.validate()

    def validate(self):
        try:
            jsonschema.validate(self.to_dict(), GIBBS_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise BCConfigError(exc.message, path=exc.absolute_path)
        if self.burn_in >= self.n_iter:
            raise BCConfigError("burn_in (%d) must be smaller than n_iter (%d)"
                                % (self.burn_in, self.n_iter), path=['burn_in'])
        if self.thinning > self.n_iter - self.burn_in:
            raise BCConfigError("thinning (%d) exceeds the %d sweeps after burn-in; no state "
                                "would be kept" % (self.thinning, self.n_iter - self.burn_in),
                                path=['thinning'])
        self.beta = check_beta(self.beta)

    def to_dict(self):
        return {
            'n_iter': self.n_iter,
            'burn_in': self.burn_in,
            'thinning': self.thinning,
            'seed': self.seed,
            'beta': self.beta,
            'random_scan': self.random_scan,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            jsonschema.validate(data, GIBBS_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise BCConfigError(exc.message, path=exc.absolute_path)
        return cls(**data)

    def replace(self, **changes):
        values = self.to_dict()
        values.update(changes)
        return GibbsConfig(**values)


class SampleMatrix(object):
    """n observations of m ternary variables"""
    def __init__(self, data, labels=None):
        data = np.asarray(data)
        if data.ndim != 2:
            raise DimensionError("samples must form an n x m matrix")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise BCInputError("sample matrix is empty")
        data = check_spins(data).copy()
        data.setflags(write=False)
        if labels is not None and len(labels) != data.shape[1]:
            raise DimensionError("%d labels given for %d columns" % (len(labels), data.shape[1]))
        self.data = data
        self.labels = list(labels) if labels is not None else None

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def m(self):
        return self.data.shape[1]

    def rows(self, index):
        return SampleMatrix(self.data[np.asarray(index)], labels=self.labels)

    def column(self, s):
        return self.data[:, s]

    def node_labels(self):
        if self.labels is not None:
            return list(self.labels)
        return [str(s + 1) for s in range(self.m)]


def row_generator(seed, row):
    """PCG64 stream of observation `row`, seeded by SeedSequence([seed, row])"""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(row)])))


def _initial_state(rng, m):
    return rng.integers(-1, 2, size=m)


def _assign(u, probs):
    # [0, p_minus) -> -1, [p_minus, p_minus + p_zero) -> 0, rest -> +1
    return np.where(u < probs[..., 0], -1.0,
                    np.where(u < probs[..., 0] + probs[..., 1], 0.0, 1.0))


def _update(states, nodes, uniforms, p, alpha2, beta):
    """Resample node nodes[i] of chain i in place"""
    rows = np.arange(states.shape[0])
    fields = p.tau[nodes] + np.einsum('ij,ij->i', states, p.sigma[nodes])
    probs = conditional_probabilities(fields, alpha2[nodes], beta)
    states[rows, nodes] = _assign(uniforms, probs)


def _sweep_nodes(draws, m, random_scan):
    """Split the draws of one sweep into (nodes, uniforms) per update

    draws has shape (chains, m) for sequential sweeps and (chains, m, 2) for
    random scans, where the first uniform of a pair picks the node.
    """
    for position in range(m):
        if random_scan:
            nodes = np.minimum((draws[:, position, 0] * m).astype(np.intp), m - 1)
            yield nodes, draws[:, position, 1]
        else:
            yield np.full(draws.shape[0], position, dtype=np.intp), draws[:, position]


def _draw_shape(m, sweeps, random_scan):
    return (sweeps, m, 2) if random_scan else (sweeps, m)


def gibbs_sweep(state, p, beta, rng, random_scan=False):
    """One sweep of m single-site updates of a single chain"""
    state = check_spins(state, p.m)
    if state.ndim != 1:
        raise DimensionError("gibbs_sweep takes a single configuration")
    beta = check_beta(beta)
    states = state[np.newaxis, :].astype(float)
    draws = rng.random(_draw_shape(p.m, 1, random_scan))
    alpha2 = p.alpha2_vector()
    for nodes, uniforms in _sweep_nodes(draws, p.m, random_scan):
        _update(states, nodes, uniforms, p, alpha2, beta)
    return states[0].astype(np.int8)


def _run_chains(p, cfg, rows):
    """Final states of the chains of the given observation indices"""
    m = p.m
    alpha2 = p.alpha2_vector()
    generators = [row_generator(cfg.seed, row) for row in rows]
    states = np.array([_initial_state(rng, m) for rng in generators], dtype=float)
    width = 2 if cfg.random_scan else 1
    chunk = max(1, CHUNK_DRAWS // (len(rows) * m * width))
    done = 0
    while done < cfg.n_iter:
        sweeps = min(chunk, cfg.n_iter - done)
        shape = _draw_shape(m, sweeps, cfg.random_scan)
        draws = np.stack([rng.random(shape) for rng in generators])
        for sweep in range(sweeps):
            for nodes, uniforms in _sweep_nodes(draws[:, sweep], m, cfg.random_scan):
                _update(states, nodes, uniforms, p, alpha2, cfg.beta)
        done += sweeps
    return states.astype(np.int8)


def sample(p, cfg, n, threads=1):
    """n independent observations, each the last state of its own chain"""
    if not isinstance(n, numbers.Integral) or n < 1:
        raise BCInputError("number of observations must be a positive integer, got %r" % (n,))
    threads = max(1, int(threads or 1))
    logger.debug("sampling %d chains of %d sweeps (burn-in %d) on %d nodes",
                 n, cfg.n_iter, cfg.burn_in, p.m)
    blocks = np.array_split(np.arange(n), min(threads, n))
    if len(blocks) == 1:
        data = _run_chains(p, cfg, blocks[0])
    else:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            parts = list(executor.map(lambda rows: _run_chains(p, cfg, rows), blocks))
        data = np.vstack(parts)
    return SampleMatrix(data, labels=p.labels)


def run_chain(p, cfg):
    """States of one long chain kept after burn-in every cfg.thinning sweeps"""
    rng = row_generator(cfg.seed, 0)
    state = _initial_state(rng, p.m)
    kept = []
    for sweep in range(1, cfg.n_iter + 1):
        state = gibbs_sweep(state, p, cfg.beta, rng, random_scan=cfg.random_scan)
        if sweep > cfg.burn_in and (sweep - cfg.burn_in) % cfg.thinning == 0:
            kept.append(state)
    return SampleMatrix(np.array(kept), labels=p.labels)


def magnetisation_stats(samples):
    """Proportions of -1, 0 and +1 per node and pooled over all nodes"""
    data = samples.data if isinstance(samples, SampleMatrix) else np.asarray(samples)
    if data.ndim != 2 or data.size == 0:
        raise BCInputError("cannot summarize an empty sample matrix")
    data = check_spins(data)
    per_node = np.stack([np.mean(data == value, axis=0) for value in (-1, 0, 1)], axis=1)
    pooled = np.array([np.mean(data == value) for value in (-1, 0, 1)])
    return MagnetisationStats(per_node=per_node, pooled=pooled)
