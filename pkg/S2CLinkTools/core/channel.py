"""
The asynchronous screen-to-camera channel.

The transmitter shows a timed sequence of frames (a TxSchedule). The camera
samples it at its own rate; each sample integrates the screen over the exposure
window (a rectangular pulse), so a window that straddles a frame boundary
blends two frames. Every capture then goes through the optical/sensor
distortions of ``distort``: rotation, crop, blur, brightness and noise.

Computation time of the receiver is kept out of the optical path; it only
enters the synchronization gain (see sync.system_gain). Propagation delay is 0.
"""
import logging
import math
import os
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pandas as pd
from scipy import ndimage

from S2CLinkTools.core.common_doc import doc_replacer
from S2CLinkTools.core.config import ConfigBase
from S2CLinkTools.core.errors import ConfigurationError, OutOfStreamError, ShapeError
from S2CLinkTools.core.frame_codec import (FrameKind, encode_frame, make_overhead_frame,
                                           payload_capacity)
from S2CLinkTools.core.pgm import read_pgm, write_pgm
from S2CLinkTools.core.utils import derive_seed

logger = logging.getLogger(__name__)

_EPS = 1e-9


class LinkConfig(ConfigBase):
    """
    Parameters of the optical link.

    Keys
    ----
    tx_refresh_hz : display refresh rate (120)
    tx_data_fps : rate at which new frames are shown, F = 1 / tx_data_fps (0.75)
    cam_fps : camera frame rate (60)
    distance_cm, tilt_deg, rotation_deg : geometry of the setup, recorded only (20, 0, 0)
    overhead_period : data frames between two overhead frames, P (10)
    t_b : start time of the stream in seconds (0)
    """
    _defaults = (
        ('tx_refresh_hz', 120.0),
        ('tx_data_fps', 0.75),
        ('cam_fps', 60.0),
        ('distance_cm', 20.0),
        ('tilt_deg', 0.0),
        ('rotation_deg', 0.0),
        ('overhead_period', 10),
        ('t_b', 0.0),
    )

    def validate_input(self):
        for key in ('tx_refresh_hz', 'tx_data_fps', 'cam_fps'):
            if getattr(self, key) <= 0:
                raise ConfigurationError('{} must be positive, got {}'.format(key, getattr(self, key)))
        if self.overhead_period < 1:
            raise ConfigurationError('overhead_period must be at least 1, got {}'.format(
                self.overhead_period))
        if self.t_b < 0:
            raise ConfigurationError('t_b must be non-negative, got {}'.format(self.t_b))

    @property
    def frame_period(self):
        """F, the display time of one frame in seconds."""
        return 1.0 / self.tx_data_fps


def _check_range(name, value, lo=None, hi=None, lo_open=False):
    if len(value) != 2:
        raise ConfigurationError('{} must be a (low, high) pair, got {}'.format(name, value))
    low, high = value
    if low > high:
        raise ConfigurationError('{} is empty: {} > {}'.format(name, low, high))
    if lo is not None and (low < lo or (lo_open and low <= lo)):
        raise ConfigurationError('{} must lie above {}, got {}'.format(name, lo, value))
    if hi is not None and high > hi:
        raise ConfigurationError('{} must lie below {}, got {}'.format(name, hi, value))


class ChannelParams(ConfigBase):
    """
    Distortion magnitudes and camera exposure.

    Each ``*_range`` key is a (low, high) pair; a value is drawn uniformly in it
    for every image. Equal bounds give a fixed value.

    Keys
    ----
    rotation_range_deg : rotation angle about the image center ((0, 0))
    crop_fraction_range : kept fraction of each side, in (0, 1] ((1, 1))
    blur_sigma_range : Gaussian blur sigma in pixels ((0, 0))
    brightness_delta_range : additive brightness shift ((0, 0))
    noise_sigma : standard deviation of the additive Gaussian noise (0.02)
    exposure_s : exposure window of the camera (1/120 s)
    pulse_shape : temporal shape of a displayed frame; only 'rectangular'
    oversampling : samples per camera period, Q (1)
    """
    _defaults = (
        ('rotation_range_deg', (0.0, 0.0)),
        ('crop_fraction_range', (1.0, 1.0)),
        ('blur_sigma_range', (0.0, 0.0)),
        ('brightness_delta_range', (0.0, 0.0)),
        ('noise_sigma', 0.02),
        ('exposure_s', 1.0 / 120),
        ('pulse_shape', 'rectangular'),
        ('oversampling', 1),
    )

    def validate_input(self):
        _check_range('rotation_range_deg', self.rotation_range_deg)
        _check_range('crop_fraction_range', self.crop_fraction_range, lo=0.0, hi=1.0, lo_open=True)
        _check_range('blur_sigma_range', self.blur_sigma_range, lo=0.0)
        _check_range('brightness_delta_range', self.brightness_delta_range)
        if self.noise_sigma < 0:
            raise ConfigurationError('noise_sigma must be non-negative, got {}'.format(self.noise_sigma))
        if self.exposure_s < 0:
            raise ConfigurationError('exposure_s must be non-negative, got {}'.format(self.exposure_s))
        if self.pulse_shape != 'rectangular':
            raise ConfigurationError('Unsupported pulse shape: {}'.format(self.pulse_shape))
        if self.oversampling < 1:
            raise ConfigurationError('oversampling must be at least 1, got {}'.format(self.oversampling))

    @classmethod
    def identity(cls):
        """A channel that returns its input unchanged."""
        return cls(noise_sigma=0.0)


# ----------------------
# Distortions
# ----------------------
def _as_image(img):
    img = np.asarray(img, dtype=float)
    if img.ndim != 2 or 0 in img.shape:
        raise ShapeError('A frame image must be 2-d and non-empty, got shape {}'.format(img.shape))
    return img


def rotate(img, angle_deg, fill=1.0):
    """
    Rotate counterclockwise about the image center with bilinear resampling.

    Pixels that come from outside the image take the value ``fill`` (white).
    """
    img = _as_image(img)
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = np.deg2rad(angle_deg)
    cos, sin = np.cos(theta), np.sin(theta)

    rows, cols = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float), indexing='ij')
    x = cols - cx
    y = cy - rows
    src_x = cos * x + sin * y
    src_y = -sin * x + cos * y
    coords = np.round(np.stack([cy - src_y, cx + src_x]), 9)
    return ndimage.map_coordinates(img, coords, order=1, mode='constant', cval=fill)


def resize(img, shape):
    """Bilinear resize with the corner pixels aligned."""
    img = _as_image(img)
    h, w = img.shape
    rows = np.linspace(0.0, h - 1, shape[0])
    cols = np.linspace(0.0, w - 1, shape[1])
    coords = np.stack(np.meshgrid(rows, cols, indexing='ij'))
    return ndimage.map_coordinates(img, coords, order=1, mode='nearest')


def crop_resize(img, fraction, offset=(0.0, 0.0)):
    """
    Keep a window of ``fraction`` of each side and stretch it back to the original size.

    Parameters
    ----------
    fraction : float in (0, 1]
    offset : (float, float) in [0, 1)
        Position of the window, as a fraction of the free room along each axis.
    """
    img = _as_image(img)
    h, w = img.shape
    wh = min(h, max(1, int(round(fraction * h))))
    ww = min(w, max(1, int(round(fraction * w))))
    if (wh, ww) == (h, w):
        return img.copy()
    r0 = min(h - wh, int(math.floor(offset[0] * (h - wh + 1))))
    c0 = min(w - ww, int(math.floor(offset[1] * (w - ww + 1))))
    return resize(img[r0:r0 + wh, c0:c0 + ww], (h, w))


def gaussian_kernel(sigma):
    """Normalized 1-d Gaussian of radius ceil(3 sigma)."""
    radius = int(math.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=float)
    kernel = np.exp(-x ** 2 / (2.0 * sigma ** 2))
    return kernel / kernel.sum()


def gaussian_blur(img, sigma):
    """Separable Gaussian blur, edges clamped."""
    img = _as_image(img)
    if sigma <= 0:
        return img.copy()
    kernel = gaussian_kernel(sigma)
    out = ndimage.correlate1d(img, kernel, axis=0, mode='nearest')
    return ndimage.correlate1d(out, kernel, axis=1, mode='nearest')


@doc_replacer
def distort(img, params, seed):
    """
    Apply the channel distortions to an image.

    In order: rotation, crop and resize back, Gaussian blur, brightness shift,
    additive Gaussian noise. Brightness and noise are clamped to [0, 1].
    A step whose drawn value is the identity is skipped, so a zero-magnitude
    channel returns its input exactly.

    Parameters
    ----------
    {_frame_image}
    {_channel_params}
    {_seed}

    Returns
    -------
    ndarray, same shape as img
    """
    img = _as_image(img)
    rng = np.random.default_rng(seed)
    theta = rng.uniform(*params.rotation_range_deg)
    fraction = rng.uniform(*params.crop_fraction_range)
    offset = rng.random(2)
    sigma = rng.uniform(*params.blur_sigma_range)
    delta = rng.uniform(*params.brightness_delta_range)

    out = img.copy()
    if theta != 0:
        out = rotate(out, theta)
    if fraction != 1:
        out = crop_resize(out, fraction, offset)
    if sigma != 0:
        out = gaussian_blur(out, sigma)
    if delta != 0:
        out = np.clip(out + delta, 0.0, 1.0)
    if params.noise_sigma > 0:
        out = np.clip(out + rng.normal(0.0, params.noise_sigma, size=out.shape), 0.0, 1.0)
    return out


# ----------------------
# Transmit schedule
# ----------------------
TxEntry = namedtuple('TxEntry', ['image', 'kind', 'start', 'duration'])


class TxSchedule(object):
    """
    The timed sequence of displayed frames.

    Entry k is shown from ``t_b + k F`` for ``F`` seconds. The camera sees the
    whole schedule shifted by the arrival offset ``t_0``, which the receiver
    does not know.
    """

    def __init__(self, entries, t_b=0.0, t_0=0.0):
        self.entries = tuple(entries)
        if not self.entries:
            raise ValueError('A schedule needs at least one entry.')
        self.t_b = float(t_b)
        self.t_0 = float(t_0)
        self.frame_period = float(self.entries[0].duration)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, k):
        return self.entries[k]

    def __repr__(self):
        return '<TxSchedule {} entries, F={:.4g}s, t_0={:.4g}s>'.format(
            len(self), self.frame_period, self.t_0)

    @property
    def kinds(self):
        return [e.kind for e in self.entries]

    @property
    def rx_start(self):
        """Time at which the camera starts seeing the first entry."""
        return self.t_b + self.t_0

    @property
    def rx_end(self):
        return self.rx_start + len(self) * self.frame_period

    def rx_weights(self, t0, t1):
        """
        Exposure weights of the entries seen during [t0, t1].

        Returns
        -------
        list of (entry index, weight), in entry order, weights summing to 1.
        """
        if t0 < self.rx_start - _EPS or t0 >= self.rx_end - _EPS:
            raise OutOfStreamError('Capture time {:.6g}s lies outside the stream [{:.6g}, {:.6g}).'.format(
                t0, self.rx_start, self.rx_end))
        F = self.frame_period
        t1 = min(t1, self.rx_end)
        first = min(len(self) - 1, max(0, int(math.floor((t0 - self.rx_start) / F + _EPS))))
        if t1 - t0 <= _EPS:
            return [(first, 1.0)]

        overlaps = []
        for k in range(first, len(self)):
            start = self.rx_start + k * F
            if start >= t1:
                break
            overlap = min(t1, start + F) - max(t0, start)
            if overlap > _EPS:
                overlaps.append((k, overlap))
        if not overlaps:
            return [(first, 1.0)]
        total = sum(o for _, o in overlaps)
        return [(k, o / total) for k, o in overlaps]


@doc_replacer
def build_schedule(payloads, link, codec, seed=None):
    """
    Lay out payloads for display, with overhead frames inserted periodically.

    An overhead frame opens the stream and every group of P data frames.

    Parameters
    ----------
    payloads : list of FramePayload
    {_link_cfg}
    {_codec_cfg}
    seed : int | None
        Draws the arrival offset t_0 uniformly in [0, F). Without a seed t_0 = 0.

    Returns
    -------
    TxSchedule
    """
    if not payloads:
        raise ConfigurationError('Cannot build a schedule without payloads.')
    F = link.frame_period
    overhead = make_overhead_frame(codec)
    P = link.overhead_period

    frames = []
    for i, payload in enumerate(payloads):
        if i % P == 0:
            frames.append((overhead, FrameKind.OVERHEAD))
        frames.append((encode_frame(payload, codec), payload.kind))

    entries = [TxEntry(img, kind, link.t_b + k * F, F) for k, (img, kind) in enumerate(frames)]
    t_0 = 0.0 if seed is None else float(np.random.default_rng(seed).uniform(0.0, F))
    return TxSchedule(entries, t_b=link.t_b, t_0=t_0)


def link_throughput(link, codec, kind=FrameKind.DATA_QR1):
    """Payload bits per second after overhead: capacity * tx_data_fps * P / (P + 1)."""
    P = link.overhead_period
    return payload_capacity(codec, kind) * link.tx_data_fps * P / (P + 1.0)


# ----------------------
# Camera sampling
# ----------------------
_CapturedFrame = namedtuple('CapturedFrame', ['image', 'capture_time', 'sample_index', 'tx_index_truth',
                                              'kind_truth', 'blend_alpha', 'seed'])


class CapturedFrame(_CapturedFrame):
    """
    One camera sample.

    tx_index_truth is the entry with the largest exposure weight; blend_alpha
    is the weight of the earliest entry in the exposure window (1 when the
    window does not straddle a boundary).
    """
    __slots__ = ()

    def __repr__(self):
        return '<CapturedFrame n={} t={:.4f}s tx={} ({}) alpha={:.3f}>'.format(
            self.sample_index, self.capture_time, self.tx_index_truth, self.kind_truth.label,
            self.blend_alpha)


def sample_rate(params, cam_fps):
    """Samples per second: cam_fps * Q."""
    return float(cam_fps) * params.oversampling


@doc_replacer
def sample_rx(schedule, params, n, cam_fps, seed=0):
    """
    The n-th camera sample of a schedule.

    The capture time is t = n / (cam_fps Q). The exposure window
    [t, t + exposure_s] weighs the entries shown during it; the image is the
    weighted blend of those entries, then distorted.

    Parameters
    ----------
    schedule : TxSchedule
    {_channel_params}
    n : int
        Sample index.
    cam_fps : float
    {_seed}
        The distortion of sample n is seeded with derive_seed(seed, n).

    Returns
    -------
    CapturedFrame
    """
    t = n / sample_rate(params, cam_fps)
    weights = schedule.rx_weights(t, t + params.exposure_s)

    image = np.zeros_like(schedule[weights[0][0]].image, dtype=float)
    for k, w in weights:
        image += w * schedule[k].image
    image = np.clip(image, 0.0, 1.0)

    # ties go to the earliest entry
    truth = max(weights, key=lambda kw: (kw[1], -kw[0]))[0]
    sample_seed = derive_seed(seed, n)
    return CapturedFrame(image=distort(image, params, sample_seed), capture_time=t, sample_index=n,
                         tx_index_truth=truth, kind_truth=schedule[truth].kind,
                         blend_alpha=weights[0][1], seed=sample_seed)


def sample_indices(schedule, params, cam_fps):
    """Indices of the camera samples whose capture time lies in the stream."""
    rate = sample_rate(params, cam_fps)
    first = int(math.ceil(schedule.rx_start * rate - _EPS))
    last = int(math.ceil(schedule.rx_end * rate - _EPS))
    return range(first, last)


@doc_replacer
def capture_stream(schedule, params, cam_fps, seed=0, n_jobs=1):
    """
    Every camera sample taken while the schedule is on screen.

    Parameters
    ----------
    schedule : TxSchedule
    {_channel_params}
    cam_fps : float
    {_seed}
    {_n_jobs}

    Returns
    -------
    {_captures}
    """
    indices = sample_indices(schedule, params, cam_fps)
    logger.debug('Capturing %d samples of a %d-entry schedule', len(indices), len(schedule))

    def capture(n):
        return sample_rx(schedule, params, n, cam_fps, seed)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(capture, indices))
    return [capture(n) for n in indices]


# ----------------------
# Persistence
# ----------------------
CAPTURE_INDEX = 'captures.csv'
_CAPTURE_COLUMNS = ['sample_index', 'capture_time_s', 'tx_index_truth', 'kind_truth', 'blend_alpha', 'seed']


def _capture_file(directory, n):
    return os.path.join(directory, 'capture_{:06d}.pgm'.format(n))


@doc_replacer
def save_captures(captures, directory):
    """
    Write captures as numbered PGM files plus a CSV index.

    Parameters
    ----------
    {_captures}
    directory : str
        Created if missing.

    Returns
    -------
    path of the CSV index
    """
    if not os.path.isdir(directory):
        os.makedirs(directory)
    rows = []
    for c in captures:
        write_pgm(_capture_file(directory, c.sample_index), c.image)
        rows.append((c.sample_index, c.capture_time, c.tx_index_truth, c.kind_truth.label,
                     c.blend_alpha, c.seed))
    path = os.path.join(directory, CAPTURE_INDEX)
    pd.DataFrame(rows, columns=_CAPTURE_COLUMNS).to_csv(path, index=False)
    return path


def load_captures(directory):
    """Read captures written by save_captures (images carry the 8-bit quantization)."""
    index = pd.read_csv(os.path.join(directory, CAPTURE_INDEX))
    missing = set(_CAPTURE_COLUMNS) - set(index.columns)
    if missing:
        raise IOError('Capture index lacks column(s): {}'.format(', '.join(sorted(missing))))
    captures = []
    for row in index.itertuples(index=False):
        n = int(row.sample_index)
        captures.append(CapturedFrame(image=read_pgm(_capture_file(directory, n)),
                                      capture_time=float(row.capture_time_s), sample_index=n,
                                      tx_index_truth=int(row.tx_index_truth),
                                      kind_truth=FrameKind.parse(row.kind_truth),
                                      blend_alpha=float(row.blend_alpha), seed=int(row.seed)))
    return captures
