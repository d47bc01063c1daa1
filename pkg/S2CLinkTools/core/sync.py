"""
The receiver: deduplicate the camera stream, find the overhead frames,
lock onto the packet stream and recover the transmitted bits.
"""
import time
import warnings
from enum import Enum

import numpy as np
import pandas as pd

from S2CLinkTools.core.common_doc import doc_replacer
from S2CLinkTools.core.dataset import EXPERIMENTS
from S2CLinkTools.core.errors import ContractViolation, DomainError
from S2CLinkTools.core.frame_codec import (FrameKind, as_bits, decode_frame, payload_capacity,
                                           sync_codeword)
from S2CLinkTools.core.utils import BaseObject

DEFAULT_DIFF_THRESHOLD = 0.02


def mean_abs_diff(a, b):
    return float(np.mean(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))


@doc_replacer
def dedup_stream(captures, diff_threshold=DEFAULT_DIFF_THRESHOLD):
    """
    Collapse runs of captures of the same displayed frame.

    A capture opens a new run when its mean absolute pixel difference to the
    first capture of the current run reaches ``diff_threshold``. Captures
    blended across a frame boundary (blend_alpha < 1) join the current run
    instead of opening one. Each run is represented by its capture with the
    highest blend_alpha (the earliest one on ties).

    Parameters
    ----------
    {_captures}
    diff_threshold : float
        On [0, 1] pixel intensities.

    Returns
    -------
    list of CapturedFrame
    """
    runs = []
    for capture in captures:
        if not runs:
            runs.append([capture])
            continue
        head = runs[-1][0]
        if capture.blend_alpha >= 1 and mean_abs_diff(capture.image, head.image) >= diff_threshold:
            runs.append([capture])
        else:
            runs[-1].append(capture)
    return [max(run, key=lambda c: c.blend_alpha) for run in runs]


def _images(frames):
    return [getattr(f, 'image', f) for f in frames]


def check_overhead_detector(model):
    """Raise ContractViolation unless model can tell data frames (1) from overhead frames (0)."""
    if not hasattr(model, 'predict_proba'):
        raise ContractViolation('{} has no predict_proba method.'.format(type(model).__name__))
    if not getattr(model, 'trained', True):
        raise ContractViolation('The model is untrained.')
    if hasattr(model, 'experiment'):
        experiment = model.experiment
        if experiment is None or FrameKind.OVERHEAD not in experiment.negative:
            raise ContractViolation('Overhead detection needs a model trained for data vs overhead frames, '
                                    'got {!r}.'.format(experiment))


def detect_overhead(frames, model):
    """
    Indices of the frames classified as overhead frames.

    Parameters
    ----------
    frames : list of CapturedFrame or images
    model : object with ``predict_proba(images)``
        Returns the probability that each image is a data frame, e.g. a
        FrameClassifier trained for ex3 or a CodewordDetector.

    Returns
    -------
    list of int
        The frames whose data probability is below 0.5.
    """
    check_overhead_detector(model)
    if not frames:
        return []
    p = np.asarray(model.predict_proba(_images(frames)), dtype=float).reshape(-1)
    return [int(i) for i in np.flatnonzero(p < 0.5)]


class CodewordDetector(BaseObject):
    """
    Conventional overhead detection: decode every frame as a QR-kind frame
    and compare its payload with the sync codeword.

    Parameters
    ----------
    codec : CodecConfig
    tolerance : float
        Largest fraction of differing bits still accepted as the codeword.
    """
    experiment = EXPERIMENTS['ex3']
    trained = True

    def __init__(self, codec, tolerance=0.1):
        self.codec = codec
        self.tolerance = tolerance
        self._codeword = sync_codeword(codec)

    def distance(self, img):
        """Fraction of payload bits that differ from the sync codeword."""
        bits = decode_frame(img, FrameKind.OVERHEAD, self.codec).bits
        return float(np.mean(bits != self._codeword))

    def predict_proba(self, images):
        """1.0 (data) for frames farther than tolerance from the codeword, else 0.0."""
        images = np.asarray(images, dtype=float)
        if images.ndim == 2:
            images = images[np.newaxis]
        elif images.ndim == 4:
            images = images[:, 0]
        return np.array([float(self.distance(img) > self.tolerance) for img in images])


class SyncMode(Enum):
    SEARCHING = 'searching'
    LOCKED = 'locked'


class SyncState(BaseObject):
    """
    Lock state of the receiver.

    Every detected overhead frame re-anchors the frame count, so a timing
    offset picked up in one packet group does not carry over to the next.

    Parameters
    ----------
    expected_period : int | None
        Expected spacing of overhead frames in the deduplicated stream (P + 1).
    """

    def __init__(self, expected_period=None):
        self.mode = SyncMode.SEARCHING
        self.anchor = None
        self.expected_period = expected_period

    def __repr__(self):
        return '<SyncState {} anchor={}>'.format(self.mode.value, self.anchor)

    @property
    def locked(self):
        return self.mode is SyncMode.LOCKED

    def observe_overhead(self, index):
        if self.locked and self.expected_period is not None and index - self.anchor != self.expected_period:
            warnings.warn('Overhead frame at {} comes {} frames after the previous one, expected {}; '
                          're-anchoring.'.format(index, index - self.anchor, self.expected_period))
        self.anchor = index
        self.mode = SyncMode.LOCKED


def system_gain(T, T_cnn):
    """
    Fraction of the per-frame computation saved by classifying first: (T - T_cnn) / T.

    Parameters
    ----------
    T : float
        Full computation time of a frame, s.
    T_cnn : float
        Classifier time of a frame, s.

    Examples
    --------
    >>> round(system_gain(33.33e-3, 5e-3), 3)
    0.85
    """
    if not T > 0:
        raise DomainError('T must be positive, got {}'.format(T))
    if T_cnn < 0:
        raise DomainError('T_cnn must be non-negative, got {}'.format(T_cnn))
    if T_cnn > T:
        raise DomainError('T_cnn ({}) exceeds T ({}); the gain is undefined.'.format(T_cnn, T))
    return (T - T_cnn) / T


class SyncReport(BaseObject):
    """
    Outcome of a synchronization run.

    Attributes
    ----------
    locked : bool
    overhead_indices : list of int
    recovered_bits : ndarray of uint8
    bit_errors : int
        Positions where the recovered bits differ from the ground truth,
        bits missing from the recovery included.
    T : float
        Per-frame time of the conventional receiver, s: codeword check plus
        payload decode.
    T_cnn : float
        Classifier time per frame, s.
    T_decode : float
        Payload decode time per data frame, s.
    gain : float
        system_gain(T, T_cnn); NaN when the classifier is slower than the
        conventional receiver (gain_defined is then False).
    effort_ratio : dict
        Measured processing time per frame kind with the classifier in front,
        relative to T. Data frames pay T_cnn + T_decode, overhead frames T_cnn.
    """

    def __init__(self, locked, overhead_indices, recovered_bits, bit_errors, T=np.nan, T_cnn=np.nan,
                 T_decode=np.nan):
        self.locked = bool(locked)
        self.overhead_indices = [int(i) for i in overhead_indices]
        self.recovered_bits = as_bits(recovered_bits)
        self.bit_errors = int(bit_errors)
        self.T = T
        self.T_cnn = T_cnn
        self.T_decode = T_decode

    def __repr__(self):
        return '<SyncReport locked={} overheads={} bits={} errors={}>'.format(
            self.locked, self.overhead_indices, len(self.recovered_bits), self.bit_errors)

    @property
    def gain_defined(self):
        try:
            system_gain(self.T, self.T_cnn)
        except DomainError:
            return False
        return True

    @property
    def gain(self):
        if not self.gain_defined:
            return np.nan
        return system_gain(self.T, self.T_cnn)

    @property
    def effort_ratio(self):
        if not self.T > 0:
            return {'data': np.nan, 'overhead': np.nan}
        return {'data': (self.T_cnn + self.T_decode) / self.T, 'overhead': self.T_cnn / self.T}

    @property
    def bit_error_rate(self):
        n = len(self.recovered_bits)
        return self.bit_errors / float(n) if n else np.nan

    def to_frame(self):
        """The deterministic part of the report as a one-row DataFrame."""
        return pd.DataFrame([{
            'locked': self.locked,
            'overhead_indices': ' '.join(str(i) for i in self.overhead_indices),
            'bits_recovered': len(self.recovered_bits),
            'bit_errors': self.bit_errors,
        }], columns=['locked', 'overhead_indices', 'bits_recovered', 'bit_errors'])

    def timing_frame(self):
        """The wall-clock part of the report as a one-row DataFrame."""
        effort = self.effort_ratio
        row = {
            'T_ms': self.T * 1e3,
            'T_cnn_ms': self.T_cnn * 1e3,
            'T_decode_ms': self.T_decode * 1e3,
            'gain': self.gain,
            'gain_defined': self.gain_defined,
            'effort_data': effort['data'],
            'effort_overhead': effort['overhead'],
        }
        return pd.DataFrame([row], columns=list(row))

    def to_csv(self, path, timing_path=None):
        self.to_frame().to_csv(path, index=False)
        if timing_path is not None:
            self.timing_frame().to_csv(timing_path, index=False)


def count_bit_errors(recovered, truth):
    """Differing positions plus the length mismatch."""
    recovered, truth = as_bits(recovered), as_bits(truth)
    n = min(len(recovered), len(truth))
    return int(np.count_nonzero(recovered[:n] != truth[:n])) + abs(len(recovered) - len(truth))


@doc_replacer
def align_and_recover(frames, overhead_indices, codec, truth_length=None, truth_bits=None,
                      kind=FrameKind.DATA_QR1, expected_period=None, T_cnn=0.0):
    """
    Lock at the first overhead frame and decode the data frames that follow.

    Frames before the first overhead frame are dropped. Overhead frames are
    skipped, not decoded. The payloads of the remaining frames are
    concatenated in stream order.

    Parameters
    ----------
    frames : list of CapturedFrame or images
        Deduplicated stream.
    overhead_indices : list of int
        From detect_overhead.
    {_codec_cfg}
    truth_length : int | None
        Number of transmitted bits; the padding beyond it is trimmed.
    truth_bits : sequence of 0 and 1 | None
        Transmitted bits, to count bit errors.
    kind : FrameKind
        Kind of the data frames.
    expected_period : int | None
        Expected spacing of overhead frames in the stream (P + 1); other spacings warn.
    T_cnn : float
        Classifier time per frame, s. The report's T is measured here as the
        conventional receiver: every frame is checked against the sync
        codeword and every data frame is decoded.

    Returns
    -------
    SyncReport
    """
    overhead = sorted(set(int(i) for i in overhead_indices))
    truth = as_bits(truth_bits) if truth_bits is not None else None
    if truth_length is None and truth is not None:
        truth_length = len(truth)

    if not overhead:
        warnings.warn('No overhead frame detected; the receiver never locked.')
        return SyncReport(False, [], [], len(truth) if truth is not None else 0)

    state = SyncState(expected_period)
    capacity = payload_capacity(codec, kind)
    images = _images(frames)
    is_overhead = set(overhead)
    checker = CodewordDetector(codec)
    chunks = []
    check_s, decode_s = [], []
    for i in range(len(images)):
        start = time.perf_counter()
        checker.distance(images[i])
        check_s.append(time.perf_counter() - start)
        if i in is_overhead:
            state.observe_overhead(i)
            continue
        if not state.locked:
            continue
        start = time.perf_counter()
        chunks.append(decode_frame(images[i], kind, codec).bits[:capacity])
        decode_s.append(time.perf_counter() - start)

    bits = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.uint8)
    if truth_length is not None:
        bits = bits[:truth_length]
    errors = count_bit_errors(bits, truth) if truth is not None else 0
    T_decode = float(np.mean(decode_s)) if decode_s else np.nan
    T = float(np.mean(check_s)) + T_decode
    return SyncReport(True, overhead, bits, errors, T=T, T_cnn=T_cnn, T_decode=T_decode)
