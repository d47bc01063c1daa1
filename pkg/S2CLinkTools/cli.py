"""
Command-line interface.

    s2c-link [--seed N] [--config FILE] [--out DIR] [--verbose] [--plot] COMMAND

Commands: generate-dataset, train, eval, simulate-link, benchmark-all.
Every command writes the config it ran with to <out>/config.txt.
"""
import argparse
import logging
import os
import sys

import pandas as pd

from S2CLinkTools._version import version
from S2CLinkTools.core.cnn import load_weights
from S2CLinkTools.core.dataset import ExperimentSpec, split_dataset
from S2CLinkTools.core.graph import plot_training_curves
from S2CLinkTools.core.harness import (SNAPSHOT_FILE, HarnessConfig, benchmark_all, evaluate_model,
                                       prepare_dataset, run_experiment, run_link_benchmark)
from S2CLinkTools.core.sync import CodewordDetector

logger = logging.getLogger(__name__)

# package errors subclass these builtins; plain ones from numpy/pandas get the same one-line report
_HANDLED = (ValueError, KeyError, IOError, RuntimeError)


def build_parser():
    parser = argparse.ArgumentParser(prog='s2c-link', description=__doc__.strip().splitlines()[0])
    parser.add_argument('--version', action='version', version='%(prog)s ' + version)
    parser.add_argument('--seed', type=int, default=None, help='set every seed of the run')
    parser.add_argument('--config', default=None, help='flat key = value config file')
    parser.add_argument('--out', default='s2c-out', help='output directory (default: %(default)s)')
    parser.add_argument('--verbose', action='store_true', help='debug logging')
    parser.add_argument('--plot', action='store_true', help='also write PNG figures')
    parser.add_argument('--desk-scale', action='store_true',
                        help='200 images per class and 10 epochs')
    parser.add_argument('--jobs', type=int, default=None, help='worker threads')

    sub = parser.add_subparsers(dest='command')
    sub.required = True

    sub.add_parser('generate-dataset', help='render, augment and split the labelled dataset')

    p = sub.add_parser('train', help='train and evaluate one experiment')
    p.add_argument('--experiment', required=True, choices=['ex1', 'ex2', 'ex3'])

    p = sub.add_parser('eval', help='evaluate saved weights on the test split')
    p.add_argument('--experiment', required=True, choices=['ex1', 'ex2', 'ex3'])
    p.add_argument('--weights', required=True)

    p = sub.add_parser('simulate-link', help='send text over the simulated link and synchronize')
    p.add_argument('--weights', default=None,
                   help='ex3 model weights; without them the codeword detector is used')
    p.add_argument('--text', default=None, help='text to send (default: built-in text)')
    p.add_argument('--save-captures', action='store_true', help='write every capture as PGM')

    sub.add_parser('benchmark-all', help='run ex1-ex3, the summary table and the link benchmark')
    return parser


def load_config(args):
    config = HarnessConfig.from_file(args.config) if args.config else HarnessConfig()
    if args.desk_scale:
        config = config.desk_scale()
    if args.seed is not None:
        config = config.with_seed(args.seed)
    if args.jobs is not None:
        config = config.replace(n_jobs=args.jobs)
    return config


def _write_snapshot(config, out):
    with open(os.path.join(out, SNAPSHOT_FILE), 'wt') as f:
        f.write(config.to_config_text())


def _split_manifest(config, out):
    cache_dir = config.cache_dir or os.path.join(out, 'cache')
    manifest = prepare_dataset(config.dataset, cache_dir, config.n_jobs)
    return split_dataset(manifest, config.fractions, config.split_seed)


def cmd_generate_dataset(args, config):
    manifest = _split_manifest(config, args.out)
    path = manifest.save(os.path.join(args.out, 'manifest.csv'))
    _write_snapshot(config, args.out)
    logger.info('%d records %s -> %s', len(manifest), manifest.split_counts, path)


def cmd_train(args, config):
    out = os.path.join(args.out, args.experiment)
    report, _ = run_experiment(ExperimentSpec.get(args.experiment), config, out)
    print('{}: {}'.format(args.experiment, report.metrics))
    if args.plot:
        plot_training_curves(report.train_report, os.path.join(out, 'curves.png'), title=args.experiment)


def cmd_eval(args, config):
    experiment = ExperimentSpec.get(args.experiment)
    model = load_weights(args.weights, experiment=experiment, spec=config.model)
    cm, scores, mean_ms = evaluate_model(model, _split_manifest(config, args.out), experiment)
    path = os.path.join(args.out, 'eval_{}.csv'.format(experiment.id))
    row = dict(experiment=experiment.id, **cm._asdict())
    row.update(scores._asdict())
    pd.DataFrame([row], columns=list(row)).to_csv(path, index=False)
    _write_snapshot(config, args.out)
    print('{}: {} ({:.2f} ms per image)'.format(experiment.id, scores, mean_ms))


def cmd_simulate_link(args, config):
    if args.weights:
        model = load_weights(args.weights, experiment=ExperimentSpec.get('ex3'), spec=config.model)
    else:
        model = CodewordDetector(config.codec)
    timeline = os.path.join(args.out, 'timeline.png') if args.plot else None
    report, _ = run_link_benchmark(config.link, config.codec, model, args.text or config.text(),
                                   out_dir=args.out, channel=config.channel, seed=config.link_seed,
                                   dedup_threshold=config.dedup_threshold, n_jobs=config.n_jobs,
                                   keep_captures=args.save_captures, timeline_path=timeline)
    _write_snapshot(config, args.out)
    print('locked={} overhead={} bits={} errors={} gain={:.3f}'.format(
        report.locked, report.overhead_indices, len(report.recovered_bits), report.bit_errors, report.gain))


def cmd_benchmark_all(args, config):
    table, link_report = benchmark_all(config, args.out)
    print(table.to_string(index=False))
    print('link: locked={} errors={}'.format(link_report.locked, link_report.bit_errors))


COMMANDS = {
    'generate-dataset': cmd_generate_dataset,
    'train': cmd_train,
    'eval': cmd_eval,
    'simulate-link': cmd_simulate_link,
    'benchmark-all': cmd_benchmark_all,
}


def _message(error):
    if isinstance(error, KeyError) and error.args:
        return str(error.args[0])
    return str(error)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(levelname)s %(name)s: %(message)s', stream=sys.stderr)
    try:
        config = load_config(args)
        if not os.path.isdir(args.out):
            os.makedirs(args.out)
        COMMANDS[args.command](args, config)
    except _HANDLED as e:
        lines = _message(e).splitlines()
        sys.stderr.write('error: {}: {}\n'.format(type(e).__name__, lines[0] if lines else ''))
        return 1
    return 0
