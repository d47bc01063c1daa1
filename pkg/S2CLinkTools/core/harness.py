"""
Experiment orchestration: the frame identification experiments, the
end-to-end link benchmark and the summary table over all experiments.

Every run writes a config snapshot (config.txt) from which it can be
replayed. Wall-clock measurements go to *timing.csv files; every other
output is a pure function of the snapshot.
"""
import logging
import os
import time

import numpy as np
import pandas as pd

from S2CLinkTools.core.channel import (ChannelParams, LinkConfig, build_schedule, capture_stream,
                                       link_throughput, save_captures)
from S2CLinkTools.core.cnn import FrameClassifier, ModelSpec, TrainConfig, save_weights, train
from S2CLinkTools.core.common_doc import doc_replacer
from S2CLinkTools.core.config import ConfigBase, format_config, read_config
from S2CLinkTools.core.dataset import (DEFAULT_FRACTIONS, EXPERIMENTS, MANIFEST_FILE, SPEC_FILE,
                                       DatasetManifest, DatasetSpec, ExperimentSpec, generate_dataset,
                                       load_batch, split_dataset)
from S2CLinkTools.core.errors import ConfigurationError
from S2CLinkTools.core.graph import plot_capture_timeline
from S2CLinkTools.core.frame_codec import FrameKind, payload_capacity, segment_stream, text_to_bits
from S2CLinkTools.core.metrics import confusion, macro_average, metrics, metrics_table
from S2CLinkTools.core.sync import DEFAULT_DIFF_THRESHOLD, align_and_recover, dedup_stream, detect_overhead
from S2CLinkTools.core.utils import BaseObject

logger = logging.getLogger(__name__)

SNAPSHOT_FILE = 'config.txt'
WEIGHTS_FILE = 'weights.s2cw'

_LINK_SENTENCE = u'the quick brown fox jumps over the lazy dog while the screen talks to the camera. '


class HarnessConfig(ConfigBase):
    """
    Everything a run needs, readable from one flat config file.

    Keys
    ----
    fractions : train/val/test fractions (0.60, 0.15, 0.25)
    split_seed : seed of the split (0)
    link_seed : seeds the arrival offset and the capture noise of the link (0)
    link_text : text sent over the link, one line without '#'; empty for the built-in text ('')
    link_data_frames : data frames of the built-in text (20)
    dedup_threshold : mean absolute difference opening a new frame run (0.02)
    n_jobs : worker threads for generation and capture (1)
    cache_dir : dataset cache; empty for <out>/cache ('')

    The dataset keys (per_class_count, classes, seed, aug_*, frame_px, ...),
    the training keys (train_*), the model keys (model_*), the link keys
    (tx_data_fps, cam_fps, overhead_period, ...) and the receiver channel keys
    (noise_sigma, exposure_s, ...) are read by the nested configs.
    """
    _defaults = (
        ('fractions', DEFAULT_FRACTIONS),
        ('split_seed', 0),
        ('link_seed', 0),
        ('link_text', ''),
        ('link_data_frames', 20),
        ('dedup_threshold', DEFAULT_DIFF_THRESHOLD),
        ('n_jobs', 1),
        ('cache_dir', ''),
    )
    _children = (
        ('dataset', DatasetSpec, '', None),
        ('train', TrainConfig, 'train_', None),
        ('model', ModelSpec, 'model_', None),
        ('link', LinkConfig, '', None),
        ('channel', ChannelParams, '', None),
    )

    def validate_input(self):
        if len(self.fractions) != 3:
            raise ConfigurationError('fractions must hold 3 values, got {}'.format(self.fractions))
        if self.link_data_frames < 1:
            raise ConfigurationError('link_data_frames must be at least 1, got {}'.format(self.link_data_frames))
        if self.n_jobs < 1:
            raise ConfigurationError('n_jobs must be at least 1, got {}'.format(self.n_jobs))
        if self.model.input_px != self.dataset.codec.frame_px:
            raise ConfigurationError('model_input_px ({}) must equal frame_px ({})'.format(
                self.model.input_px, self.dataset.codec.frame_px))

    @property
    def codec(self):
        return self.dataset.codec

    def with_seed(self, seed):
        """Set every seed of the run (dataset, split, training, link) to ``seed``."""
        return self.replace(dataset=self.dataset.replace(seed=seed), train=self.train.replace(seed=seed),
                            split_seed=seed, link_seed=seed)

    def desk_scale(self):
        """200 images per class and 10 epochs."""
        return self.replace(dataset=self.dataset.replace(per_class_count=200),
                            train=self.train.replace(epochs=10))

    def text(self):
        """The text sent over the link."""
        if self.link_text:
            return self.link_text
        return default_link_text(self.link_data_frames, self.codec)


def default_link_text(n_frames, codec, kind=FrameKind.DATA_QR1):
    """Plain text filling exactly ``n_frames`` data frames."""
    n_chars = n_frames * payload_capacity(codec, kind) // 8
    repeats = n_chars // len(_LINK_SENTENCE) + 1
    return (_LINK_SENTENCE * repeats)[:n_chars]


# ----------------------
# Dataset cache
# ----------------------
def prepare_dataset(spec, cache_dir, n_jobs=1):
    """
    The dataset of a spec, generated once per content hash under ``cache_dir``.

    Returns
    -------
    DatasetManifest (splits unassigned)
    """
    directory = os.path.join(cache_dir, 'dataset-' + spec.content_hash()[:16])
    snapshot = os.path.join(directory, SPEC_FILE)
    if os.path.exists(os.path.join(directory, MANIFEST_FILE)) and os.path.exists(snapshot):
        with open(snapshot, 'rt') as f:
            if f.read() == spec.to_config_text():
                logger.info('Reusing cached dataset %s', directory)
                return DatasetManifest.load(directory)
    return generate_dataset(spec, directory, n_jobs)


# ----------------------
# Experiments
# ----------------------
class ExperimentReport(BaseObject):
    """
    Outcome of one experiment.

    Attributes
    ----------
    experiment : ExperimentSpec
    confusion : ConfusionMatrix
    metrics : Metrics
    train_report : TrainReport
    mean_inference_ms : float
        Wall-clock classifier time per test image.
    snapshot : str
        Config text that replays the run.
    """

    def __init__(self, experiment, confusion, metrics, train_report, mean_inference_ms, snapshot):
        self.experiment = experiment
        self.confusion = confusion
        self.metrics = metrics
        self.train_report = train_report
        self.mean_inference_ms = mean_inference_ms
        self.snapshot = snapshot

    def __repr__(self):
        return '<ExperimentReport {}: {}>'.format(self.experiment.id, self.metrics)

    def to_frame(self):
        row = dict(experiment=self.experiment.id, **self.confusion._asdict())
        row.update(self.metrics._asdict())
        return pd.DataFrame([row], columns=['experiment', 'tp', 'fp', 'fn', 'tn', 'precision', 'recall',
                                            'f1', 'accuracy', 'degenerate'])


def experiment_snapshot(experiment, config):
    """Config text of an experiment run: the experiment id and every key of the config."""
    values = config.to_dict()
    values['experiment'] = experiment.id
    values.move_to_end('experiment', last=False)
    return format_config(values)


@doc_replacer
def evaluate_model(model, manifest, experiment, split='test'):
    """
    Score a model on a split.

    Parameters
    ----------
    {_model}
    {_manifest}
    {_experiment}
    split : str

    Returns
    -------
    confusion : ConfusionMatrix
    metrics : Metrics
    mean_inference_ms : float
    """
    indices = manifest.select(split, experiment)
    if len(indices) == 0:
        raise ConfigurationError('No {} records for experiment {}.'.format(split, experiment.id))
    x, y = load_batch(manifest, indices, experiment)
    start = time.perf_counter()
    predictions = model.predict(x)
    mean_ms = (time.perf_counter() - start) * 1e3 / len(x)
    cm = confusion(y.reshape(-1).astype(int), predictions)
    return cm, metrics(cm), mean_ms


@doc_replacer
def run_experiment(experiment, config, out_dir):
    """
    Generate (or reuse) the dataset, split, train, evaluate on the test split
    and write the results.

    Parameters
    ----------
    {_experiment}
    config : HarnessConfig
        Dataset spec, training config, model spec and split.
    out_dir : str
        Receives report.csv, weights.s2cw, curves.csv, timing.csv,
        inference_timing.csv and config.txt.

    Returns
    -------
    report : ExperimentReport
    model : FrameClassifier
    """
    if not os.path.isdir(out_dir):
        os.makedirs(out_dir)
    cache_dir = config.cache_dir or os.path.join(out_dir, 'cache')
    manifest = prepare_dataset(config.dataset, cache_dir, config.n_jobs)
    missing = [k.label for k in experiment.kinds if k.label not in set(manifest.records['kind'])]
    if missing:
        raise ConfigurationError('Experiment {} needs classes missing from the dataset: {}'.format(
            experiment.id, ', '.join(missing)))
    manifest = split_dataset(manifest, config.fractions, config.split_seed)

    model = FrameClassifier(config.model, experiment=experiment)
    model, train_report = train(model, manifest, experiment, config.train)
    cm, scores, mean_ms = evaluate_model(model, manifest, experiment)
    logger.info('%s: %s', experiment.id, scores)

    snapshot = experiment_snapshot(experiment, config)
    report = ExperimentReport(experiment, cm, scores, train_report, mean_ms, snapshot)
    report.to_frame().to_csv(os.path.join(out_dir, 'report.csv'), index=False)
    train_report.to_csv(os.path.join(out_dir, 'curves.csv'), os.path.join(out_dir, 'timing.csv'))
    pd.DataFrame([{'mean_inference_ms': mean_ms, 'test_images': cm.total}]).to_csv(
        os.path.join(out_dir, 'inference_timing.csv'), index=False)
    save_weights(model, os.path.join(out_dir, WEIGHTS_FILE))
    with open(os.path.join(out_dir, SNAPSHOT_FILE), 'wt') as f:
        f.write(snapshot)
    return report, model


def replay_experiment(snapshot_path, out_dir):
    """Run an experiment again from the config.txt of an earlier run."""
    values = read_config(snapshot_path)
    if 'experiment' not in values:
        raise ConfigurationError('{} names no experiment.'.format(snapshot_path))
    return run_experiment(ExperimentSpec.get(values['experiment']), HarnessConfig.from_dict(values), out_dir)


# ----------------------
# Link benchmark
# ----------------------
@doc_replacer
def run_link_benchmark(link, codec, model, text, out_dir=None, channel=None, seed=0,
                       dedup_threshold=DEFAULT_DIFF_THRESHOLD, n_jobs=1, keep_captures=False,
                       timeline_path=None):
    """
    Send text over the simulated link and synchronize the received stream.

    Text -> data frames -> schedule with overhead frames -> camera capture
    -> dedup -> overhead detection -> lock and recovery.

    Parameters
    ----------
    {_link_cfg}
    {_codec_cfg}
    model : object with predict_proba
        Overhead detector (an ex3 FrameClassifier or a CodewordDetector).
    text : str
    out_dir : str | None
        Receives sync_report.csv, sync_timing.csv and link_summary.csv.
    channel : ChannelParams | None
        Receiver channel; defaults to ChannelParams() (noise only).
    {_seed}
    dedup_threshold : float
    {_n_jobs}
    keep_captures : bool
        Also write the raw captures (PGM + CSV index) to <out_dir>/captures.
    timeline_path : str | None
        Save a plot of the capture timeline here.

    Returns
    -------
    report : SyncReport
        Not locked when no overhead frame was found; this is reported, not raised.
    summary : dict
    """
    channel = channel if channel is not None else ChannelParams()
    bits = text_to_bits(text)
    payloads = segment_stream(bits, payload_capacity(codec, FrameKind.DATA_QR1), FrameKind.DATA_QR1)
    schedule = build_schedule(payloads, link, codec, seed=seed)
    captures = capture_stream(schedule, channel, link.cam_fps, seed=seed, n_jobs=n_jobs)
    frames = dedup_stream(captures, dedup_threshold)
    logger.info('Link: %d entries, %d captures, %d after dedup', len(schedule), len(captures), len(frames))

    start = time.perf_counter()
    overhead = detect_overhead(frames, model)
    T_cnn = (time.perf_counter() - start) / max(1, len(frames))

    report = align_and_recover(frames, overhead, codec, truth_bits=bits,
                               expected_period=link.overhead_period + 1, T_cnn=T_cnn)
    summary = {
        'tx_entries': len(schedule),
        'captures': len(captures),
        'kept': len(frames),
        'expected_overhead_indices': ' '.join(
            str(i) for i, f in enumerate(frames) if f.kind_truth is FrameKind.OVERHEAD),
        'kept_tx_indices': ' '.join(str(f.tx_index_truth) for f in frames),
        'throughput_bps': link_throughput(link, codec),
        'locked': report.locked,
        'bit_errors': report.bit_errors,
        'bits_sent': len(bits),
    }
    if out_dir is not None:
        if not os.path.isdir(out_dir):
            os.makedirs(out_dir)
        report.to_csv(os.path.join(out_dir, 'sync_report.csv'), os.path.join(out_dir, 'sync_timing.csv'))
        pd.DataFrame([summary], columns=list(summary)).to_csv(
            os.path.join(out_dir, 'link_summary.csv'), index=False)
        if keep_captures:
            save_captures(captures, os.path.join(out_dir, 'captures'))
    if timeline_path is not None:
        plot_capture_timeline(captures, frames, path=timeline_path)
    if not report.locked:
        logger.warning('The link never locked: no overhead frame was detected.')
    elif not report.gain_defined:
        logger.warning('Classifier time %.3f ms exceeds the conventional per-frame time %.3f ms; '
                       'the system gain is undefined.', report.T_cnn * 1e3, report.T * 1e3)
    return report, summary


# ----------------------
# All experiments
# ----------------------
def benchmark_all(config, out_dir):
    """
    Run ex1, ex2 and ex3, write the summary table, then run the link
    benchmark with the ex3 model.

    Writes summary.csv (one row per experiment plus their macro average),
    summary_timing.csv (mean inference time per experiment), the per-experiment
    directories and link/.

    Returns
    -------
    table : pandas.DataFrame
    link_report : SyncReport
    """
    if not os.path.isdir(out_dir):
        os.makedirs(out_dir)
    if not config.cache_dir:
        config = config.replace(cache_dir=os.path.join(out_dir, 'cache'))

    reports, models = [], {}
    for key in sorted(EXPERIMENTS):
        report, model = run_experiment(EXPERIMENTS[key], config, os.path.join(out_dir, key))
        reports.append(report)
        models[key] = model

    rows = [(r.experiment.id, r.metrics) for r in reports]
    rows.append(('average', macro_average([r.metrics for r in reports])))
    table = metrics_table(rows)
    table.to_csv(os.path.join(out_dir, 'summary.csv'), index=False)
    timing = [(r.experiment.id, r.mean_inference_ms) for r in reports]
    timing.append(('average', float(np.mean([t for _, t in timing]))))
    pd.DataFrame(timing, columns=['name', 'mean_inference_ms']).to_csv(
        os.path.join(out_dir, 'summary_timing.csv'), index=False)

    link_report, _ = run_link_benchmark(config.link, config.codec, models['ex3'], config.text(),
                                        out_dir=os.path.join(out_dir, 'link'), channel=config.channel,
                                        seed=config.link_seed, dedup_threshold=config.dedup_threshold,
                                        n_jobs=config.n_jobs)
    with open(os.path.join(out_dir, SNAPSHOT_FILE), 'wt') as f:
        f.write(config.to_config_text())
    return table, link_report
