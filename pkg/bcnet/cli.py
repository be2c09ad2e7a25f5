"""Command line interface of bcnet"""

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

from __future__ import absolute_import, print_function

import hashlib
import json
import logging
import os
import sys
from optparse import OptionParser

import numpy as np
import pandas as pd

import bcnet
from bcnet.exceptions import (BCConfigError, BCError, BCInputError, EXIT_OK,
                              EXIT_PARTIAL, MeanFieldError)
from bcnet.experiments import ExperimentConfig, run_recovery_experiment, subsample_analysis
from bcnet.inference import ShrinkageConfig, default_rho, infer_network
from bcnet.meanfield import (MeanFieldSpec, bifurcation_scan, collapse_alpha2,
                             find_fixed_points, first_order_transition, free_energy)
from bcnet.model import BCParameters
from bcnet.plfit import FitConfig, default_lambda, fit_network
from bcnet.sampler import GibbsConfig, SampleMatrix, run_chain, sample

logger = logging.getLogger('bcnet.cli')

LOG_FORMAT = '%(asctime)s - %(process)d - %(name)s - %(levelname)s - %(message)s'
LOG_FILE = 'bcnet.log'

COMMANDS = {}

_installed_handlers = []


def export_command(func):
    """Register handle_<name> as the command <name>"""
    COMMANDS[func.__name__[len('handle_'):]] = func
    return func


class RunManifest(object):
    """What a command did, enough to repeat it: resolved config and checksums"""
    def __init__(self, command, config, seed=None):
        self.command = command
        self.config = config
        self.seed = seed
        self.inputs = {}
        self.outputs = {}
        self.results = {}

    def add_input(self, path):
        self.inputs[path] = sha256sum(path)

    def add_output(self, path):
        self.outputs[path] = sha256sum(path)

    def to_dict(self):
        return {
            'bcnet_version': bcnet.__version__,
            'command': self.command,
            'config': self.config,
            'seed': self.seed,
            'inputs': self.inputs,
            'outputs': self.outputs,
            'results': self.results,
        }

    def write(self, path):
        write_json(path, self.to_dict())
        logger.info("wrote manifest %s", path)


def sha256sum(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 16), b''):
            digest.update(block)
    return digest.hexdigest()


def write_json(path, data):
    with open(path, 'w') as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write('\n')


def read_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except IOError as exc:
        raise BCInputError("cannot read %s: %s" % (path, exc))
    except ValueError as exc:
        raise BCInputError("%s is not valid JSON: %s" % (path, exc))


def write_table(path, rows, columns=None):
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False)
    logger.info("wrote %s", path)


def _is_integer(cell):
    try:
        int(cell)
    except (TypeError, ValueError):
        return False
    return True


def _missing(cell):
    return cell is None or (isinstance(cell, float) and np.isnan(cell)) or not str(cell).strip()


def read_samples(path):
    """Strict reader of n x m data with cells in {-1, 0, 1}

    A first row with any non-numeric cell is taken as the header and gives
    node labels. Row numbers in errors are file lines.
    """
    try:
        frame = pd.read_csv(path, header=None, dtype=str, keep_default_na=False,
                            skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        raise BCInputError("%s contains no data" % path)
    except pd.errors.ParserError as exc:
        raise BCInputError("%s is not a rectangular CSV table: %s" % (path, exc))
    except IOError as exc:
        raise BCInputError("cannot read %s: %s" % (path, exc))

    cells = frame.values
    labels = None
    first_line = 1
    if len(cells) and not all(_is_integer(cell) for cell in cells[0] if not _missing(cell)):
        labels = [str(cell).strip() for cell in cells[0]]
        cells = cells[1:]
        first_line = 2
    if not len(cells):
        raise BCInputError("%s contains no observations" % path)

    data = np.empty(cells.shape, dtype=np.int8)
    for i, row in enumerate(cells):
        for j, cell in enumerate(row):
            if _missing(cell):
                raise BCInputError("missing value", row=first_line + i, column=j + 1)
            cell = str(cell).strip()
            if not _is_integer(cell) or int(cell) not in (-1, 0, 1):
                raise BCInputError("value %r is not one of -1, 0, 1" % cell,
                                   row=first_line + i, column=j + 1)
            data[i, j] = int(cell)

    samples = SampleMatrix(data, labels=labels)
    for j, label in enumerate(samples.node_labels()):
        if np.all(data[:, j] == data[0, j]):
            logger.warning("column %s is constant (%d)", label, data[0, j])
    logger.info("read %d observations of %d nodes from %s", samples.n, samples.m, path)
    return samples


def write_samples(path, samples):
    frame = pd.DataFrame(samples.data, columns=samples.labels)
    frame.to_csv(path, index=False, header=samples.labels is not None)
    logger.info("wrote %d observations to %s", samples.n, path)


def setup_logging(verbose=False, quiet=False, log_dir=None):
    """Log to stderr and, when an output location is known, to bcnet.log"""
    root = logging.getLogger('bcnet')
    for handler in _installed_handlers:
        root.removeHandler(handler)
        handler.close()
    del _installed_handlers[:]

    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    root.setLevel(logging.DEBUG)
    formatter = logging.Formatter(LOG_FORMAT)
    stream = logging.StreamHandler(sys.stderr)
    stream.setLevel(level)
    stream.setFormatter(formatter)
    handlers = [stream]
    if log_dir is not None:
        log_file = logging.FileHandler(os.path.join(log_dir or '.', LOG_FILE))
        log_file.setLevel(logging.DEBUG)
        log_file.setFormatter(formatter)
        handlers.append(log_file)
    for handler in handlers:
        root.addHandler(handler)
        _installed_handlers.append(handler)


def add_common_options(parser):
    parser.add_option("--seed", type="int",
                      help="Seed of every random draw of the run")
    parser.add_option("--threads", type="int",
                      help="Number of worker threads (results do not depend on it)")
    parser.add_option("-v", "--verbose", action="store_true",
                      help="Log debugging messages")
    parser.add_option("-q", "--quiet", action="store_true",
                      help="Log warnings and errors only")


def _merge_common(options, opts):
    for key in ('seed', 'threads', 'verbose', 'quiet'):
        if getattr(opts, key, None) is None:
            setattr(opts, key, getattr(options, key, None))
    if opts.threads is not None and opts.threads < 1:
        raise BCInputError("--threads must be positive")
    if opts.seed is not None and opts.seed < 0:
        raise BCInputError("--seed must be nonnegative")
    opts.threads = opts.threads or 1


def _auto_or_float(parser, value, name, low=0.0, high=None):
    if value == 'auto':
        return 'auto'
    try:
        number = float(value)
    except ValueError:
        parser.error("%s must be 'auto' or a number" % name)
    if number < low or (high is not None and number > high) or not np.isfinite(number):
        parser.error("%s out of range: %s" % (name, value))
    return number


def _out_dir(prefix):
    return os.path.dirname(os.path.abspath(prefix))


def parse_simulate_arguments(options, args):
    "Simulate data from a parameter file"
    parser = OptionParser(usage="usage: %prog simulate [options] --params FILE -n N --out FILE")
    parser.add_option("--params", help="JSON file with tau, sigma, alpha2 and labels")
    parser.add_option("-n", "--n", type="int", dest="n", help="Number of observations")
    parser.add_option("--n-iter", type="int", default=2500, help="Sweeps per chain")
    parser.add_option("--burn-in", type="int", default=2000, help="Discarded sweeps")
    parser.add_option("--thinning", type="int", default=1,
                      help="Keep every k-th sweep (with --single-chain)")
    parser.add_option("--beta", type="float", default=1.0, help="Inverse temperature")
    parser.add_option("--random-scan", action="store_true", default=False,
                      help="Update randomly chosen nodes instead of sweeping in order")
    parser.add_option("--single-chain", action="store_true", default=False,
                      help="Take the observations from one long chain")
    parser.add_option("--out", help="Output CSV file")
    add_common_options(parser)
    opts, args = parser.parse_args(args)
    if args:
        parser.error("simulate takes no positional arguments")
    if not opts.params:
        parser.error("--params is required")
    if not opts.out:
        parser.error("--out is required")
    if opts.n is None or opts.n < 1:
        parser.error("-n must be a positive number of observations")
    _merge_common(options, opts)
    # create the parser in this function and return it to
    # simplify the unit test cases
    return opts, args, parser


@export_command
def handle_simulate(options, args):
    "Simulate observations with the Gibbs sampler"
    opts, _, parser = parse_simulate_arguments(options, args)
    setup_logging(opts.verbose, opts.quiet, _out_dir(opts.out))
    params = BCParameters.from_dict(read_json(opts.params))
    seed = opts.seed if opts.seed is not None else 0
    if opts.single_chain:
        n_iter = opts.burn_in + opts.n * opts.thinning
    else:
        n_iter = opts.n_iter
    cfg = GibbsConfig(n_iter=n_iter, burn_in=opts.burn_in, thinning=opts.thinning,
                      seed=seed, beta=opts.beta, random_scan=opts.random_scan)
    if opts.single_chain:
        samples = run_chain(params, cfg)
    else:
        samples = sample(params, cfg, opts.n, threads=opts.threads)
    write_samples(opts.out, samples)

    manifest = RunManifest('simulate', dict(cfg.to_dict(), n=opts.n,
                                            single_chain=opts.single_chain), seed)
    manifest.add_input(opts.params)
    manifest.add_output(opts.out)
    manifest.write(os.path.splitext(opts.out)[0] + '.manifest.json')
    return EXIT_OK


def _zero_table(samples, estimate):
    zero_frequency = np.mean(samples.data == 0, axis=0)
    alpha2 = np.array([fit.theta_hat.alpha2_s for fit in estimate.node_fits])
    rows = [{'label': label, 'zero_frequency': float(zero_frequency[s]),
             'alpha2_hat': float(alpha2[s])}
            for s, label in enumerate(samples.node_labels())]
    if np.std(zero_frequency) > 0 and np.std(alpha2) > 0:
        correlation = float(np.corrcoef(zero_frequency, alpha2)[0, 1])
    else:
        correlation = None
    return rows, correlation


def parse_estimate_arguments(options, args):
    "Estimate a network from a CSV file"
    parser = OptionParser(usage="usage: %prog estimate [options] DATA.csv --out-prefix P")
    parser.add_option("--lambda", dest="lam", default="auto",
                      help="L1 penalty, 'auto' for sqrt(log(m)/n)")
    parser.add_option("--rho", default="auto",
                      help="Hessian shrinkage weight, 'auto' for n^(-5/4)")
    parser.add_option("--alpha-mode", default="shared", choices=["shared", "per-node"],
                      help="One alpha2 for the network or one per node")
    parser.add_option("--rule", default="or", choices=["or", "and"],
                      help="Keep an edge if either ('or') or both ('and') fits select it")
    parser.add_option("--missing-states", default="smooth", choices=["smooth", "error"],
                      help="Add a pseudo-observation for every value a column never "
                           "takes, or stop with a numerical error")
    parser.add_option("--level", type="float", default=0.95, help="Confidence level")
    parser.add_option("--diagonal-middle", action="store_true", default=False,
                      help="Use only the diagonal of the gradient outer products")
    parser.add_option("--out-prefix", help="Prefix of the output files")
    add_common_options(parser)
    opts, args = parser.parse_args(args)
    if len(args) != 1:
        parser.error("Exactly one argument (a data file) is required")
    if not opts.out_prefix:
        parser.error("--out-prefix is required")
    if not 0 < opts.level < 1:
        parser.error("--level must lie in (0, 1)")
    opts.lam = _auto_or_float(parser, opts.lam, "--lambda")
    opts.rho = _auto_or_float(parser, opts.rho, "--rho", high=1.0)
    _merge_common(options, opts)
    return opts, args, parser


@export_command
def handle_estimate(options, args):
    "Estimate a network with intervals"
    opts, args, parser = parse_estimate_arguments(options, args)
    prefix = opts.out_prefix
    setup_logging(opts.verbose, opts.quiet, _out_dir(prefix))
    samples = read_samples(args[0])

    fit_cfg = FitConfig(lam=None if opts.lam == 'auto' else opts.lam,
                        alpha2_mode=opts.alpha_mode.replace('-', '_'), rule=opts.rule,
                        missing_states=opts.missing_states)
    shrinkage = ShrinkageConfig(rho=opts.rho, diagonal_middle=opts.diagonal_middle)
    estimate = fit_network(samples, fit_cfg, threads=opts.threads)
    inference = infer_network(estimate, samples, shrinkage, opts.level, threads=opts.threads)
    threshold = default_lambda(samples.m, samples.n)
    labels = samples.node_labels()

    outputs = {
        'edges': prefix + '.edges.csv',
        'nodes': prefix + '.nodes.csv',
        'adjacency': prefix + '.adjacency.csv',
        'zeros': prefix + '.zeros.csv',
        'json': prefix + '.json',
    }
    write_table(outputs['edges'], inference.edge_rows)
    write_table(outputs['nodes'], inference.node_rows)
    write_table(outputs['adjacency'], estimate.thresholded(threshold), columns=labels)
    zero_rows, correlation = _zero_table(samples, estimate)
    write_table(outputs['zeros'], zero_rows)
    rho = shrinkage.resolve_rho(samples.n)
    write_json(outputs['json'], {
        'lambda': estimate.lam,
        'rho': rho,
        'level': opts.level,
        'threshold': threshold,
        'converged': estimate.converged,
        'smoothed': [labels[fit.node] for fit in estimate.node_fits if fit.smoothed],
        'params': estimate.params.to_dict(),
        'edges': inference.edge_rows,
        'nodes': inference.node_rows,
    })

    config = dict(fit_cfg.to_dict(), rho=rho, diagonal_middle=opts.diagonal_middle,
                  level=opts.level)
    manifest = RunManifest('estimate', config, opts.seed)
    manifest.add_input(args[0])
    for path in sorted(outputs.values()):
        manifest.add_output(path)
    manifest.results = {'lambda': estimate.lam, 'threshold': threshold,
                        'zero_alpha2_correlation': correlation,
                        'converged': estimate.converged}
    manifest.write(prefix + '.manifest.json')
    return EXIT_OK


def parse_meanfield_arguments(options, args):
    "Mean-field fixed points and bifurcation scan"
    parser = OptionParser(usage="usage: %prog meanfield [options] --out-prefix P")
    parser.add_option("--beta", type="float", default=2.0)
    parser.add_option("--tau", type="float", default=0.0)
    parser.add_option("--sigma", type="float", default=1.0)
    parser.add_option("--degree", type="float", default=5.0, help="Average degree d")
    parser.add_option("--alpha2", type="float", default=2.0,
                      help="alpha2 of the fixed-point table")
    parser.add_option("--grid-size", type="int", default=2001,
                      help="Bracketing grid of the fixed-point search")
    parser.add_option("--alpha2-min", type="float", default=0.0)
    parser.add_option("--alpha2-max", type="float", default=4.0)
    parser.add_option("--points", type="int", default=81, help="alpha2 values scanned")
    parser.add_option("--iterates", type="int", default=500,
                      help="Iterations of the map per start")
    parser.add_option("--starts", type="int", default=20, help="Random starts per alpha2")
    parser.add_option("--out-prefix", help="Prefix of the output files")
    add_common_options(parser)
    opts, args = parser.parse_args(args)
    if args:
        parser.error("meanfield takes no positional arguments")
    if not opts.out_prefix:
        parser.error("--out-prefix is required")
    if opts.alpha2_min > opts.alpha2_max:
        parser.error("--alpha2-min must not exceed --alpha2-max")
    for name in ('grid_size', 'points', 'iterates', 'starts'):
        if getattr(opts, name) < 1:
            parser.error("--%s must be positive" % name.replace('_', '-'))
    _merge_common(options, opts)
    return opts, args, parser


@export_command
def handle_meanfield(options, args):
    "Mean-field fixed points and bifurcation scan"
    opts, _, parser = parse_meanfield_arguments(options, args)
    prefix = opts.out_prefix
    setup_logging(opts.verbose, opts.quiet, _out_dir(prefix))
    spec = MeanFieldSpec(beta=opts.beta, tau=opts.tau, sigma=opts.sigma, d=opts.degree,
                         alpha2=opts.alpha2)
    seed = opts.seed if opts.seed is not None else 0

    points = find_fixed_points(spec, opts.grid_size)
    fixed_rows = []
    for point in points:
        row = {'mu': point.mu, 'stability': point.stability}
        row['free_energy'] = float(free_energy(point.mu, spec)) if spec.beta > 0 else None
        fixed_rows.append(row)
    rows = bifurcation_scan(spec, (opts.alpha2_min, opts.alpha2_max), opts.points,
                            opts.iterates, opts.starts, seed, threads=opts.threads)
    scan_rows = [{'alpha2': row.alpha2, 'n_terminal': len(row.terminal),
                  'terminal': ';'.join(repr(value) for value in row.terminal)}
                 for row in rows]
    try:
        transition = first_order_transition(spec, opts.alpha2_min, max(opts.alpha2_max, 6.0),
                                            grid_size=opts.grid_size)
    except MeanFieldError as exc:
        logger.warning("no first-order transition: %s", exc)
        transition = None

    fixed_path = prefix + '.fixed.csv'
    scan_path = prefix + '.scan.csv'
    write_table(fixed_path, fixed_rows, columns=['mu', 'stability', 'free_energy'])
    write_table(scan_path, scan_rows, columns=['alpha2', 'n_terminal', 'terminal'])

    config = dict(spec.to_dict(), grid_size=opts.grid_size, alpha2_min=opts.alpha2_min,
                  alpha2_max=opts.alpha2_max, points=opts.points, iterates=opts.iterates,
                  starts=opts.starts)
    manifest = RunManifest('meanfield', config, seed)
    manifest.add_output(fixed_path)
    manifest.add_output(scan_path)
    manifest.results = {
        'attracting': sum(1 for point in points if point.stability == 'attracting'),
        'repelling': sum(1 for point in points if point.stability == 'repelling'),
        'first_order_transition': transition,
        'collapse_alpha2': collapse_alpha2(rows),
    }
    manifest.write(prefix + '.manifest.json')
    return EXIT_OK


def parse_experiment_arguments(options, args):
    "Network recovery experiment"
    parser = OptionParser(usage="usage: %prog experiment [options] [CONFIG.json] --out-dir DIR")
    parser.add_option("--out-dir", help="Directory of the report files")
    add_common_options(parser)
    opts, args = parser.parse_args(args)
    if len(args) > 1:
        parser.error("At most one argument (a config file) is accepted")
    if not opts.out_dir:
        parser.error("--out-dir is required")
    _merge_common(options, opts)
    return opts, args, parser


@export_command
def handle_experiment(options, args):
    "Recovery experiment over random networks"
    opts, args, parser = parse_experiment_arguments(options, args)
    if not os.path.isdir(opts.out_dir):
        os.makedirs(opts.out_dir)
    setup_logging(opts.verbose, opts.quiet, opts.out_dir)
    data = read_json(args[0]) if args else {}
    if opts.seed is not None:
        if not isinstance(data, dict):
            raise BCConfigError("experiment config must be a JSON object")
        data = dict(data, seed=opts.seed)
    cfg = ExperimentConfig.from_dict(data)
    report = run_recovery_experiment(cfg, threads=opts.threads)

    csv_path = os.path.join(opts.out_dir, 'report.csv')
    json_path = os.path.join(opts.out_dir, 'report.json')
    write_table(csv_path, report.to_rows())
    write_json(json_path, report.to_dict())
    manifest = RunManifest('experiment', cfg.to_dict(), cfg.seed)
    if args:
        manifest.add_input(args[0])
    manifest.add_output(csv_path)
    manifest.add_output(json_path)
    manifest.results = {'failures': len(report.failures)}
    manifest.write(os.path.join(opts.out_dir, 'manifest.json'))
    if report.partial:
        logger.warning("%d replications failed and were excluded", len(report.failures))
        return EXIT_PARTIAL
    return EXIT_OK


def parse_subsample_arguments(options, args):
    "Estimates averaged over random subsamples"
    parser = OptionParser(usage="usage: %prog subsample [options] DATA.csv --out-prefix P")
    parser.add_option("--fraction", type="float", default=0.7,
                      help="Share of the rows in every subsample")
    parser.add_option("--reps", type="int", default=50, help="Number of subsamples")
    parser.add_option("--alpha-mode", default="shared", choices=["shared", "per-node"])
    parser.add_option("--rule", default="or", choices=["or", "and"])
    parser.add_option("--level", type="float", default=0.95, help="Confidence level")
    parser.add_option("--out-prefix", help="Prefix of the output files")
    add_common_options(parser)
    opts, args = parser.parse_args(args)
    if len(args) != 1:
        parser.error("Exactly one argument (a data file) is required")
    if not opts.out_prefix:
        parser.error("--out-prefix is required")
    if not 0 < opts.fraction <= 1:
        parser.error("--fraction must lie in (0, 1]")
    if opts.reps < 1:
        parser.error("--reps must be positive")
    if not 0 < opts.level < 1:
        parser.error("--level must lie in (0, 1)")
    _merge_common(options, opts)
    return opts, args, parser


@export_command
def handle_subsample(options, args):
    "Estimates averaged over random subsamples"
    opts, args, parser = parse_subsample_arguments(options, args)
    prefix = opts.out_prefix
    setup_logging(opts.verbose, opts.quiet, _out_dir(prefix))
    samples = read_samples(args[0])
    seed = opts.seed if opts.seed is not None else 0
    fit_cfg = FitConfig(alpha2_mode=opts.alpha_mode.replace('-', '_'), rule=opts.rule)
    result = subsample_analysis(samples, opts.fraction, opts.reps, fit_cfg, seed,
                                level=opts.level, threads=opts.threads)

    edges_path = prefix + '.edges.csv'
    subsamples_path = prefix + '.subsamples.csv'
    write_table(edges_path, result.edge_rows())
    write_table(subsamples_path, result.subsample_rows())
    config = dict(fit_cfg.to_dict(), fraction=opts.fraction, reps=opts.reps,
                  level=opts.level, rho=default_rho(result.n_subsample))
    manifest = RunManifest('subsample', config, seed)
    manifest.add_input(args[0])
    manifest.add_output(edges_path)
    manifest.add_output(subsamples_path)
    manifest.results = {'n_subsample': result.n_subsample, 'threshold': result.threshold,
                        'retained_edges': int(np.triu(result.support, k=1).sum())}
    manifest.write(prefix + '.manifest.json')
    return EXIT_OK


def parse_global_arguments(argv):
    usage = "usage: %prog [options] COMMAND [command options]\n\ncommands: " + \
        ', '.join(sorted(COMMANDS))
    parser = OptionParser(usage=usage, version="%prog " + bcnet.__version__)
    parser.disable_interspersed_args()
    add_common_options(parser)
    options, args = parser.parse_args(argv)
    if not args:
        parser.error("a command is required")
    if args[0] not in COMMANDS:
        parser.error("unknown command: %s" % args[0])
    return options, args, parser


def main(argv=None):
    options, args, _ = parse_global_arguments(sys.argv[1:] if argv is None else argv)
    try:
        return COMMANDS[args[0]](options, args[1:])
    except BCError as exc:
        if not logging.getLogger('bcnet').handlers:
            setup_logging(options.verbose, options.quiet)
        logger.error("%s failed: %s", args[0], exc)
        return exc.exit_code


if __name__ == '__main__':
    sys.exit(main())
