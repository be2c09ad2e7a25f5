"""Mean-field analysis of the Blume-Capel model

The self-consistency map for the average magnetisation, the Gibbs free
energy whose stationary points are its fixed points, fixed-point
classification and bifurcation scans over alpha2."""

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
from concurrent.futures import ThreadPoolExecutor

import jsonschema
import numpy as np
from scipy.optimize import bisect
from scipy.special import logsumexp

from bcnet.exceptions import BCConfigError, MeanFieldError
from bcnet.model import conditional_probabilities

logger = logging.getLogger('bcnet.meanfield')

ATTRACTING = 'attracting'
REPELLING = 'repelling'

ROOT_XTOL = 1e-10
DERIVATIVE_STEP = 1e-6
DEDUP_TOL = 1e-6

MEANFIELD_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "description": "Mean-field settings.",

    "type": "object",
    "properties": {
        "beta": {"type": "number", "minimum": 0},
        "tau": {"type": "number"},
        "sigma": {"type": "number"},
        "d": {"type": "number", "exclusiveMinimum": 0,
              "description": "Average number of connections."},
        "alpha2": {"type": "number"},
    },
    "additionalProperties": False
}

FixedPoint = collections.namedtuple('FixedPoint', ['mu', 'stability'])
ScanRow = collections.namedtuple('ScanRow', ['alpha2', 'terminal'])


class MeanFieldSpec(object):
    """Uniform-network settings; the defaults draw the three-minima picture"""
    def __init__(self, beta=2.0, tau=0.0, sigma=1.0, d=5.0, alpha2=2.0):
        self.beta = beta
        self.tau = tau
        self.sigma = sigma
        self.d = d
        self.alpha2 = alpha2
        try:
            jsonschema.validate(self.to_dict(), MEANFIELD_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise BCConfigError(exc.message, path=exc.absolute_path)
        if not all(np.isfinite(value) for value in self.to_dict().values()):
            raise BCConfigError("mean-field settings must be finite")

    def to_dict(self):
        return {'beta': self.beta, 'tau': self.tau, 'sigma': self.sigma,
                'd': self.d, 'alpha2': self.alpha2}

    def replace(self, **changes):
        values = self.to_dict()
        values.update(changes)
        return MeanFieldSpec(**values)


def _probabilities(mu, spec):
    fields = spec.tau + np.asarray(mu, dtype=float) * spec.d * spec.sigma
    return conditional_probabilities(fields, spec.alpha2, spec.beta)


def mf_map(mu, spec):
    """2 sinh(g) e^{-b a2} / (1 + 2 cosh(g) e^{-b a2}), g = b (tau + mu d sigma)"""
    probs = _probabilities(mu, spec)
    return probs[..., 2] - probs[..., 0]


def nonzero_fraction(mu, spec):
    """Expected fraction psi of nonzero variables at magnetisation mu"""
    probs = _probabilities(mu, spec)
    return probs[..., 2] + probs[..., 0]


def free_energy(mu, spec):
    if spec.beta <= 0:
        raise MeanFieldError("free energy is undefined at beta = 0")
    mu = np.asarray(mu, dtype=float)
    g = spec.beta * (spec.tau + spec.d * spec.sigma * mu)
    ba = spec.beta * spec.alpha2
    # log(1 + 2 e^{-ba} cosh g) without overflow
    log_partition = logsumexp(np.stack(np.broadcast_arrays(np.zeros_like(g), g - ba, -g - ba)),
                              axis=0)
    return 0.5 * spec.d * spec.sigma * mu ** 2 - log_partition / spec.beta


def free_energy_gradient(mu, spec):
    """dG/dmu = d sigma (mu - mf_map(mu))"""
    if spec.beta <= 0:
        raise MeanFieldError("free energy is undefined at beta = 0")
    return spec.d * spec.sigma * (np.asarray(mu, dtype=float) - mf_map(mu, spec))


def map_derivative(mu, spec, step=DERIVATIVE_STEP):
    return (mf_map(mu + step, spec) - mf_map(mu - step, spec)) / (2.0 * step)


def find_fixed_points(spec, grid_size=2001):
    """Solutions of mf_map(mu) = mu in [-1, 1], classified by |map'(mu)|"""
    if grid_size < 3:
        raise BCConfigError("grid_size must be at least 3", path=['grid_size'])
    grid = np.linspace(-1.0, 1.0, grid_size)
    excess = mf_map(grid, spec) - grid

    def residual(mu):
        return float(mf_map(mu, spec)) - mu

    roots = []
    for i in range(grid_size):
        if excess[i] == 0:
            roots.append(grid[i])
        elif i + 1 < grid_size and excess[i] * excess[i + 1] < 0:
            roots.append(bisect(residual, grid[i], grid[i + 1], xtol=ROOT_XTOL))

    points = []
    for mu in roots:
        slope = abs(float(map_derivative(mu, spec)))
        stability = ATTRACTING if slope < 1 else REPELLING
        points.append(FixedPoint(mu=float(mu), stability=stability))
    logger.debug("found %d fixed points for %r", len(points), spec.to_dict())
    return points


def global_minimum(spec, grid_size=2001):
    """Attracting fixed point with the lowest free energy"""
    attracting = [point for point in find_fixed_points(spec, grid_size)
                  if point.stability == ATTRACTING]
    if not attracting:
        raise MeanFieldError("no attracting fixed point for %r" % (spec.to_dict(),))
    return min(attracting, key=lambda point: float(free_energy(point.mu, spec)))


def _terminal_values(values, tol=DEDUP_TOL):
    terminal = []
    for value in np.sort(values):
        if not terminal or value - terminal[-1] > tol:
            terminal.append(float(value))
    return terminal


def _scan_point(spec, index, n_iterates, n_starts, seed):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), index])))
    mu = rng.uniform(-1.0, 1.0, size=n_starts)
    for _ in range(n_iterates):
        mu = mf_map(mu, spec)
    return ScanRow(alpha2=spec.alpha2, terminal=_terminal_values(mu))


def bifurcation_scan(spec_base, alpha2_range=(0.0, 4.0), n_points=81, n_iterates=500,
                     n_starts=20, seed=0, threads=1):
    """Terminal values of the iterated map from random starts for every alpha2

    Each grid point draws its starts from its own stream, so rows do not
    depend on the number of threads.
    """
    if n_iterates < 1 or n_starts < 1 or n_points < 1:
        raise BCConfigError("n_points, n_iterates and n_starts must be positive")
    lo, hi = alpha2_range
    grid = np.linspace(lo, hi, n_points)
    specs = [spec_base.replace(alpha2=float(alpha2)) for alpha2 in grid]

    def work(index):
        return _scan_point(specs[index], index, n_iterates, n_starts, seed)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            rows = list(executor.map(work, range(n_points)))
    else:
        rows = [work(index) for index in range(n_points)]
    logger.info("scanned %d alpha2 values in [%g, %g]", n_points, lo, hi)
    return rows


def collapse_alpha2(rows):
    """Smallest scanned alpha2 from which every row has one terminal value"""
    collapse = None
    for row in reversed(rows):
        if len(row.terminal) != 1:
            break
        collapse = row.alpha2
    return collapse


def first_order_transition(spec_base, alpha2_lo=0.0, alpha2_hi=6.0, tol=1e-6,
                           grid_size=2001):
    """alpha2 where the free-energy minimum jumps from |mu| > 0 to mu = 0"""
    def ordered(alpha2):
        minimum = global_minimum(spec_base.replace(alpha2=alpha2), grid_size)
        return abs(minimum.mu) > 1e-3

    if not ordered(alpha2_lo) or ordered(alpha2_hi):
        raise MeanFieldError("no ordered-to-disordered switch in [%g, %g]"
                             % (alpha2_lo, alpha2_hi))
    lo, hi = alpha2_lo, alpha2_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ordered(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
