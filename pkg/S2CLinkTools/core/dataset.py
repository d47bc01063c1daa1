"""
Labelled frame-image datasets for the frame identification experiments.

Every class is one base frame (see frame_codec.base_frame) and its
augmented variants, produced with channel.distort under per-image seeds.
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pandas as pd

from S2CLinkTools.core.channel import ChannelParams, distort
from S2CLinkTools.core.common_doc import doc_replacer
from S2CLinkTools.core.config import ConfigBase
from S2CLinkTools.core.errors import ConfigurationError, LabelMapError
from S2CLinkTools.core.frame_codec import CodecConfig, FrameKind, base_frame
from S2CLinkTools.core.pgm import read_pgm, write_pgm
from S2CLinkTools.core.utils import BaseObject, derive_seed, rng_for, to_list

logger = logging.getLogger(__name__)

MANIFEST_FILE = 'manifest.csv'
SPEC_FILE = 'dataset.txt'
SPLITS = ('train', 'val', 'test')
UNASSIGNED = 'unassigned'
DEFAULT_FRACTIONS = (0.60, 0.15, 0.25)


def default_augmentation():
    """Rotation +-15 deg, crop 80-100 %, blur sigma 0-1.2 px, brightness +-0.1, noise 0.02."""
    return ChannelParams(rotation_range_deg=(-15.0, 15.0),
                         crop_fraction_range=(0.8, 1.0),
                         blur_sigma_range=(0.0, 1.2),
                         brightness_delta_range=(-0.1, 0.1),
                         noise_sigma=0.02)


class DatasetSpec(ConfigBase):
    """
    What to generate.

    Keys
    ----
    per_class_count : images per class (1000)
    classes : frame labels to generate (d_f1, d_f2, a_f, o_f)
    seed : base seed of the augmentation (0)
    aug_* : augmentation ChannelParams
    frame_px, grid_cells, ... : CodecConfig of the base frames
    """
    _defaults = (
        ('per_class_count', 1000),
        ('classes', tuple(k.label for k in FrameKind)),
        ('seed', 0),
    )
    _children = (
        ('augmentation', ChannelParams, 'aug_', default_augmentation),
        ('codec', CodecConfig, '', None),
    )

    def validate_input(self):
        if self.per_class_count < 1:
            raise ConfigurationError('per_class_count must be at least 1, got {}'.format(
                self.per_class_count))
        if self.seed < 0:
            raise ConfigurationError('seed must be non-negative, got {}'.format(self.seed))
        kinds = [FrameKind.parse(c) for c in self.classes]
        if len(set(kinds)) != len(kinds):
            raise ConfigurationError('Duplicate classes in {}'.format(self.classes))
        if len(kinds) < 2:
            raise ConfigurationError('A dataset needs at least 2 classes, got {}'.format(self.classes))

    @property
    def kinds(self):
        return [FrameKind.parse(c) for c in self.classes]


class ExperimentSpec(BaseObject):
    """
    Binary label map of one experiment: positive classes are labelled 1, negative 0.

    Parameters
    ----------
    id : str
    positive, negative : iterables of FrameKind
    """

    def __init__(self, id, positive, negative):
        self.id = id
        self.positive = tuple(FrameKind.parse(k) for k in to_list(positive))
        self.negative = tuple(FrameKind.parse(k) for k in to_list(negative))
        self.validate_input()

    def validate_input(self):
        if not self.positive or not self.negative:
            raise ConfigurationError('Experiment {} needs positive and negative classes.'.format(self.id))
        if set(self.positive) & set(self.negative):
            raise ConfigurationError('Experiment {} labels a class both ways.'.format(self.id))

    def __repr__(self):
        return '<ExperimentSpec {}: {} vs {}>'.format(
            self.id, '+'.join(k.label for k in self.positive), '+'.join(k.label for k in self.negative))

    def __eq__(self, other):
        return (isinstance(other, ExperimentSpec) and self.id == other.id and
                self.positive == other.positive and self.negative == other.negative)

    def __ne__(self, other):
        return not self == other

    def __hash__(self):
        return hash((self.id, self.positive, self.negative))

    @property
    def kinds(self):
        return self.positive + self.negative

    def covers(self, kind):
        return FrameKind.parse(kind) in self.kinds

    def label(self, kind):
        """1 for a positive class, 0 for a negative class."""
        kind = FrameKind.parse(kind)
        if kind in self.positive:
            return 1
        if kind in self.negative:
            return 0
        raise LabelMapError('Experiment {} does not label frames of kind {}.'.format(self.id, kind.label))

    @classmethod
    def get(cls, id):
        """The experiment with the given id (ex1, ex2 or ex3, case-insensitive)."""
        key = str(id).strip().lower()
        if key not in EXPERIMENTS:
            raise ConfigurationError('Unknown experiment {!r}; choose one of {}'.format(
                id, ', '.join(sorted(EXPERIMENTS))))
        return EXPERIMENTS[key]


EXPERIMENTS = {
    # two kinds of QR data frames
    'ex1': ExperimentSpec('ex1', [FrameKind.DATA_QR1], [FrameKind.DATA_QR2]),
    # QR data frames against other barcodes
    'ex2': ExperimentSpec('ex2', [FrameKind.DATA_QR1, FrameKind.DATA_QR2], [FrameKind.ASCII]),
    # data frames against overhead frames
    'ex3': ExperimentSpec('ex3', [FrameKind.DATA_QR1, FrameKind.DATA_QR2], [FrameKind.OVERHEAD]),
}


class DatasetManifest(BaseObject):
    """
    The records of a generated dataset.

    Parameters
    ----------
    records : pandas.DataFrame
        Columns id, path, kind, seed, split. Paths are relative to ``root``.
    root : str
        Directory the paths are relative to.
    """
    columns = ['id', 'path', 'kind', 'seed', 'split']

    def __init__(self, records, root='.'):
        records = pd.DataFrame(records)
        missing = set(self.columns) - set(records.columns)
        if missing:
            raise ValueError('Manifest lacks column(s): {}'.format(', '.join(sorted(missing))))
        self.records = records[self.columns].reset_index(drop=True)
        self.root = root

    def __len__(self):
        return len(self.records)

    def __repr__(self):
        return '<DatasetManifest {} records in {}>'.format(len(self), self.root)

    def __eq__(self, other):
        return isinstance(other, DatasetManifest) and self.records.equals(other.records)

    def __ne__(self, other):
        return not self == other

    @property
    def kinds(self):
        return [FrameKind.parse(k) for k in self.records['kind']]

    @property
    def split_counts(self):
        """Number of records per split tag."""
        counts = self.records['split'].value_counts()
        return dict((tag, int(n)) for tag, n in counts.items())

    def path_of(self, i):
        return os.path.join(self.root, self.records['path'].iat[i])

    def select(self, split=None, experiment=None):
        """
        Positions of the records of a split, restricted to the classes of an experiment.

        Returns
        -------
        ndarray of int
        """
        mask = np.ones(len(self), dtype=bool)
        if split is not None:
            mask &= (self.records['split'] == split).values
        if experiment is not None:
            labels = set(k.label for k in experiment.kinds)
            mask &= self.records['kind'].isin(labels).values
        return np.flatnonzero(mask)

    def with_splits(self, splits):
        records = self.records.copy()
        records['split'] = list(splits)
        return self._constructor(records, self.root)

    def save(self, path=None):
        """Write the manifest CSV (default: <root>/manifest.csv)."""
        path = path or os.path.join(self.root, MANIFEST_FILE)
        self.records.to_csv(path, index=False)
        return path

    @classmethod
    def load(cls, path):
        """Read a manifest CSV; a directory stands for its manifest.csv."""
        if os.path.isdir(path):
            path = os.path.join(path, MANIFEST_FILE)
        records = pd.read_csv(path, dtype={'id': str, 'path': str, 'kind': str, 'split': str})
        return cls(records, os.path.dirname(os.path.abspath(path)))


def _record_id(kind, i):
    return '{}_{:05d}'.format(kind.label, i)


@doc_replacer
def generate_dataset(spec, directory, n_jobs=1):
    """
    Render and augment every image of a dataset, and write it to disk.

    Image i of class c is distort(base_frame(c), aug, derive_seed(seed, c.index, i)),
    written to ``images/<label>_<i>.pgm``.

    Parameters
    ----------
    spec : DatasetSpec
    directory : str
        Output directory, created if missing. It receives the images,
        ``manifest.csv`` and the DatasetSpec snapshot ``dataset.txt``.
    {_n_jobs}

    Returns
    -------
    {_manifest}
        All splits 'unassigned'.
    """
    image_dir = os.path.join(directory, 'images')
    if not os.path.isdir(image_dir):
        os.makedirs(image_dir)

    jobs = []
    for kind in spec.kinds:
        base = base_frame(kind, spec.codec)
        for i in range(spec.per_class_count):
            jobs.append((kind, i, base, derive_seed(spec.seed, kind.index, i)))
    logger.info('Generating %d images of %d classes in %s', len(jobs), len(spec.kinds), directory)

    def render(job):
        kind, i, base, seed = job
        rel = os.path.join('images', _record_id(kind, i) + '.pgm')
        write_pgm(os.path.join(directory, rel), distort(base, spec.augmentation, seed))
        return (_record_id(kind, i), rel, kind.label, seed, UNASSIGNED)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(pool.map(render, jobs))
    else:
        rows = [render(job) for job in jobs]

    records = pd.DataFrame(sorted(rows), columns=DatasetManifest.columns)
    manifest = DatasetManifest(records, directory)
    manifest.save()
    with open(os.path.join(directory, SPEC_FILE), 'wt') as f:
        f.write(spec.to_config_text())
    return manifest


def apportion(n, fractions):
    """
    Split n items into counts proportional to fractions (largest remainder,
    ties to the earlier fraction). The counts sum to n.
    """
    raw = [n * f for f in fractions]
    counts = [int(np.floor(r + 1e-9)) for r in raw]
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:n - sum(counts)]:
        counts[i] += 1
    return counts


@doc_replacer
def split_dataset(manifest, fractions=DEFAULT_FRACTIONS, seed=0):
    """
    Stratified train/val/test split.

    Each class is shuffled with its own seeded permutation and apportioned
    to the splits separately, so every split keeps the class ratios of the
    whole dataset to within one record.

    Parameters
    ----------
    {_manifest}
    fractions : (train, val, test)
        Non-negative, summing to 1.
    {_seed}

    Returns
    -------
    DatasetManifest
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != len(SPLITS) or any(f < 0 for f in fractions):
        raise ConfigurationError('fractions must be 3 non-negative numbers, got {}'.format(fractions))
    if abs(sum(fractions) - 1.0) > 1e-6:
        raise ConfigurationError('fractions must sum to 1, got {} (sum {})'.format(
            fractions, sum(fractions)))
    if len(manifest) == 0:
        raise ConfigurationError('Cannot split an empty manifest.')

    splits = np.empty(len(manifest), dtype=object)
    kinds = manifest.records['kind'].values
    for kind in sorted(set(manifest.kinds), key=lambda k: k.index):
        positions = np.flatnonzero(kinds == kind.label)
        positions = positions[rng_for(seed, kind.index).permutation(len(positions))]
        start = 0
        for tag, count in zip(SPLITS, apportion(len(positions), fractions)):
            splits[positions[start:start + count]] = tag
            start += count
    return manifest.with_splits(splits)


def load_images(manifest, indices):
    """Images of the given records as a float32 tensor B x 1 x H x W in [0, 1]."""
    images = [read_pgm(manifest.path_of(int(i))) for i in indices]
    if not images:
        return np.zeros((0, 1, 0, 0), dtype=np.float32)
    return np.stack(images)[:, np.newaxis].astype(np.float32)


@doc_replacer
def load_batch(manifest, indices, experiment):
    """
    Load records as a training batch.

    Parameters
    ----------
    {_manifest}
    indices : sequence of int
        Record positions in the manifest.
    {_experiment}

    Returns
    -------
    x : ndarray of float32, shape (B, 1, H, W)
    y : ndarray of float32, shape (B, 1)
        1 for the experiment's positive classes, 0 for its negative classes.
    """
    indices = [int(i) for i in indices]
    kinds = manifest.records['kind'].values
    labels = [experiment.label(kinds[i]) for i in indices]
    x = load_images(manifest, indices)
    y = np.asarray(labels, dtype=np.float32).reshape(-1, 1)
    return x, y
