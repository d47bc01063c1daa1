"""
A small convolutional network for binary frame classification, written
directly against numpy.

Architecture (input 1 x P x P):

    conv 3x3 valid, K1 filters, ReLU  ->  K1 x (P-2) x (P-2)
    conv 3x3 valid, K2 filters, ReLU  ->  K2 x (P-4) x (P-4)
    max pool 2x2, stride 2            ->  K2 x (P-4)/2 x (P-4)/2
    flatten
    dense D, ReLU
    dense 1, logistic                 ->  probability of the positive class

With the defaults (P=100, K1=32, K2=16, D=128) the shapes are
32x98x98 -> 16x96x96 -> 16x48x48 -> 36864 -> 128 -> 1.

Convolutions are cross-correlations (no kernel flip). Tensors are float32;
every layer function keeps the floating type of its inputs, so the same code
runs in float64 for gradient checking.
"""
import logging
import struct
import time
from collections import OrderedDict, namedtuple

import numpy as np
import pandas as pd
from scipy.special import expit

from S2CLinkTools.core.common_doc import doc_replacer
from S2CLinkTools.core.config import ConfigBase
from S2CLinkTools.core.dataset import load_batch
from S2CLinkTools.core.errors import ConfigurationError, ContractViolation, ShapeError, WeightFormatError
from S2CLinkTools.core.utils import BaseObject

logger = logging.getLogger(__name__)

P_MIN = 1e-7
P_MAX = 1 - 1e-7

PARAM_NAMES = ('k1', 'b1', 'k2', 'b2', 'w3', 'b3', 'w4', 'b4')


class ModelSpec(ConfigBase):
    """
    Layer sizes of the network.

    Keys
    ----
    input_px : side of the square input image (100)
    conv1_filters : filters of the first convolution (32)
    conv2_filters : filters of the second convolution (16)
    dense_units : units of the hidden dense layer (128)
    """
    _defaults = (
        ('input_px', 100),
        ('conv1_filters', 32),
        ('conv2_filters', 16),
        ('dense_units', 128),
    )

    def validate_input(self):
        for key, _ in self._defaults:
            if getattr(self, key) <= 0:
                raise ConfigurationError('{} must be positive, got {}'.format(key, getattr(self, key)))
        if self.input_px < 6 or (self.input_px - 4) % 2:
            raise ConfigurationError(
                'input_px must be at least 6 and leave an even side after two 3x3 convolutions, '
                'got {}'.format(self.input_px))

    @classmethod
    def reduced(cls):
        """The 8x8 input, 2+2 filters, dense 4 model used for gradient checks."""
        return cls(input_px=8, conv1_filters=2, conv2_filters=2, dense_units=4)

    @property
    def layer_shapes(self):
        """Output shape of every layer for one input image."""
        p = self.input_px
        k1, k2 = self.conv1_filters, self.conv2_filters
        half = (p - 4) // 2
        return OrderedDict([
            ('input', (1, p, p)),
            ('conv1', (k1, p - 2, p - 2)),
            ('conv2', (k2, p - 4, p - 4)),
            ('pool', (k2, half, half)),
            ('flatten', (k2 * half * half,)),
            ('dense', (self.dense_units,)),
            ('output', (1,)),
        ])

    @property
    def param_shapes(self):
        k1, k2, d = self.conv1_filters, self.conv2_filters, self.dense_units
        flat = self.layer_shapes['flatten'][0]
        return OrderedDict([
            ('k1', (k1, 1, 3, 3)), ('b1', (k1,)),
            ('k2', (k2, k1, 3, 3)), ('b2', (k2,)),
            ('w3', (flat, d)), ('b3', (d,)),
            ('w4', (d, 1)), ('b4', (1,)),
        ])

    @property
    def param_count(self):
        return int(sum(np.prod(s) for s in self.param_shapes.values()))


class TrainConfig(ConfigBase):
    """
    Keys
    ----
    epochs : passes over the training split (20)
    batch_size : minibatch size (32)
    seed : seeds weight initialization and shuffling (0)
    lr, beta1, beta2, epsilon : Adam hyperparameters (0.001, 0.9, 0.999, 1e-8)
    """
    _defaults = (
        ('epochs', 20),
        ('batch_size', 32),
        ('seed', 0),
        ('lr', 0.001),
        ('beta1', 0.9),
        ('beta2', 0.999),
        ('epsilon', 1e-8),
    )

    def validate_input(self):
        if self.epochs < 1:
            raise ConfigurationError('epochs must be at least 1, got {}'.format(self.epochs))
        if self.batch_size < 1:
            raise ConfigurationError('batch_size must be at least 1, got {}'.format(self.batch_size))
        if self.seed < 0:
            raise ConfigurationError('seed must be non-negative, got {}'.format(self.seed))
        if self.lr <= 0:
            raise ConfigurationError('lr must be positive, got {}'.format(self.lr))
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigurationError('Adam betas must lie in [0, 1), got {}, {}'.format(self.beta1, self.beta2))


# ----------------------
# Layers
# ----------------------
def _float_type(*arrays):
    dtype = np.result_type(*arrays)
    return dtype if np.issubdtype(dtype, np.floating) else np.dtype(np.float32)


def _batched(x, name='input'):
    x = np.asarray(x)
    if x.ndim == 3:
        return x[np.newaxis], True
    if x.ndim == 4:
        return x, False
    raise ShapeError('{} must be C x H x W or B x C x H x W, got shape {}'.format(name, x.shape))


def conv2d_valid(x, kernels, bias):
    """
    Valid 3x3 cross-correlation.

    out[k, i, j] = bias[k] + sum_{c, u, v} x[c, i + u, j + v] kernels[k, c, u, v]

    Parameters
    ----------
    x : ndarray, C x H x W or B x C x H x W
    kernels : ndarray, K x C x 3 x 3
    bias : ndarray, K

    Returns
    -------
    ndarray, K x (H-2) x (W-2) (with a leading batch axis if x has one)
    """
    x, single = _batched(x)
    kernels = np.asarray(kernels)
    bias = np.asarray(bias)
    B, C, H, W = x.shape
    if kernels.ndim != 4 or kernels.shape[1] != C or kernels.shape[2:] != (3, 3):
        raise ShapeError('Kernels of shape {} do not fit an input of {} channels.'.format(kernels.shape, C))
    if bias.shape != (kernels.shape[0],):
        raise ShapeError('Bias of shape {} does not match {} kernels.'.format(bias.shape, kernels.shape[0]))
    if H < 3 or W < 3:
        raise ShapeError('Input of {}x{} px is smaller than the 3x3 kernel.'.format(H, W))

    dtype = _float_type(x, kernels, bias)
    Ho, Wo = H - 2, W - 2
    out = np.zeros((B, Ho, Wo, kernels.shape[0]), dtype=dtype)
    for u in range(3):
        for v in range(3):
            out += np.tensordot(x[:, :, u:u + Ho, v:v + Wo], kernels[:, :, u, v], axes=([1], [1]))
    out = out.transpose(0, 3, 1, 2) + bias[np.newaxis, :, np.newaxis, np.newaxis]
    out = np.ascontiguousarray(out, dtype=dtype)
    return out[0] if single else out


def conv2d_backward(dout, x, kernels, need_dx=True):
    """
    Gradients of conv2d_valid.

    Returns
    -------
    dkernels, dbias, dx (None unless need_dx)
    """
    Ho, Wo = dout.shape[2:]
    dk = np.zeros(kernels.shape, dtype=_float_type(dout, x))
    dx = np.zeros(x.shape, dtype=_float_type(dout, kernels)) if need_dx else None
    for u in range(3):
        for v in range(3):
            patch = x[:, :, u:u + Ho, v:v + Wo]
            dk[:, :, u, v] = np.tensordot(dout, patch, axes=([0, 2, 3], [0, 2, 3]))
            if need_dx:
                dx[:, :, u:u + Ho, v:v + Wo] += np.tensordot(
                    kernels[:, :, u, v], dout, axes=([0], [1])).transpose(1, 0, 2, 3)
    db = dout.sum(axis=(0, 2, 3))
    return dk, db, dx


def maxpool2(x):
    """
    2x2 max pooling with stride 2.

    Parameters
    ----------
    x : ndarray, K x H x W or B x K x H x W with H and W even

    Returns
    -------
    out : ndarray, K x H/2 x W/2 (batched like x)
    argmax : ndarray of int, same shape as out
        Position of the maximum inside its block, row-major in 0..3.
    """
    x, single = _batched(x)
    B, K, H, W = x.shape
    if H % 2 or W % 2:
        raise ShapeError('Max pooling needs even extents, got {}x{}'.format(H, W))
    blocks = x.reshape(B, K, H // 2, 2, W // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
        B, K, H // 2, W // 2, 4)
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., np.newaxis], axis=-1)[..., 0]
    if single:
        return out[0], idx[0]
    return out, idx


def maxpool2_backward(dout, idx, shape):
    """Route the gradient of every pooled value to the position of its maximum."""
    B, K, H, W = shape
    slots = np.zeros((B, K, H // 2, W // 2, 4), dtype=dout.dtype)
    np.put_along_axis(slots, idx[..., np.newaxis], dout[..., np.newaxis], axis=-1)
    return slots.reshape(B, K, H // 2, W // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, K, H, W)


def dense(x, w, b):
    """x @ w + b for x of shape B x in, w of shape in x out."""
    x = np.asarray(x)
    w = np.asarray(w)
    if x.ndim != 2 or x.shape[1] != w.shape[0] or np.shape(b) != (w.shape[1],):
        raise ShapeError('Dense layer {} -> {} cannot take input of shape {}'.format(
            w.shape[0], w.shape[1], x.shape))
    return x.dot(w) + b


def relu(x):
    return np.maximum(x, 0)


# ----------------------
# Model
# ----------------------
def init_params(spec, seed, dtype=np.float32):
    """
    Uniform fan-based initialization, limit sqrt(6 / (fan_in + fan_out)); biases 0.

    Convolution fans count the receptive field: fan_in = C * 9, fan_out = K * 9.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    params = OrderedDict()
    for name, shape in spec.param_shapes.items():
        if name.startswith('b'):
            params[name] = np.zeros(shape, dtype=dtype)
            continue
        if len(shape) == 4:
            fan_in, fan_out = shape[1] * 9, shape[0] * 9
        else:
            fan_in, fan_out = shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-limit, limit, size=shape).astype(dtype)
    return params


def zero_params(spec, dtype=np.float32):
    return OrderedDict((name, np.zeros(shape, dtype=dtype)) for name, shape in spec.param_shapes.items())


class FrameClassifier(BaseObject):
    """
    The network and its parameters.

    Parameters
    ----------
    spec : ModelSpec
    params : OrderedDict of name -> ndarray | None
        Initialized with ``init_params(spec, seed)`` when not given.
    experiment : ExperimentSpec | None
        The label map the model is trained for.
    seed : int
    """

    def __init__(self, spec=None, params=None, experiment=None, seed=0):
        self.spec = spec if spec is not None else ModelSpec()
        self.experiment = experiment
        self.trained = False
        self.version = 0
        self._params = None
        self.update_params(params if params is not None else init_params(self.spec, seed))

    def __repr__(self):
        return '<FrameClassifier {}x{} {}/{}/{}, {} params, experiment={}>'.format(
            self.spec.input_px, self.spec.input_px, self.spec.conv1_filters, self.spec.conv2_filters,
            self.spec.dense_units, self.spec.param_count,
            self.experiment.id if self.experiment is not None else None)

    @property
    def params(self):
        return self._params

    @property
    def dtype(self):
        return self._params['k1'].dtype

    def update_params(self, params):
        """Replace the parameters. Caches of earlier forward passes become stale."""
        expected = self.spec.param_shapes
        if list(params) != list(expected):
            raise ShapeError('Expected parameters {}, got {}'.format(list(expected), list(params)))
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ShapeError('Parameter {} has shape {}, expected {}'.format(
                    name, params[name].shape, shape))
        self._params = OrderedDict((k, np.asarray(v)) for k, v in params.items())
        self.version += 1

    def initialize(self, seed):
        self.update_params(init_params(self.spec, seed, self.dtype))
        self.trained = False

    def astype(self, dtype):
        """A copy with parameters cast to dtype."""
        other = FrameClassifier(self.spec, OrderedDict((k, v.astype(dtype)) for k, v in self.params.items()),
                                self.experiment)
        other.trained = self.trained
        return other

    def _as_batch(self, images):
        x = np.asarray(images, dtype=self.dtype)
        if x.ndim == 2:
            x = x[np.newaxis, np.newaxis]
        elif x.ndim == 3:
            x = x[:, np.newaxis]
        return x

    def predict_proba(self, images, batch_size=32):
        """
        Probability of the positive class for each image.

        Parameters
        ----------
        images : ndarray (H x W, B x H x W or B x 1 x H x W) or list of H x W images

        Returns
        -------
        ndarray of float, shape (B,)
        """
        x = self._as_batch(images)
        out = [forward(self, x[i:i + batch_size])[0][:, 0] for i in range(0, len(x), batch_size)]
        if not out:
            return np.zeros(0)
        return np.concatenate(out).astype(float)

    def predict(self, images, batch_size=32):
        """Class labels: 1 when the positive-class probability is at least 0.5."""
        return (self.predict_proba(images, batch_size) >= 0.5).astype(int)


ForwardCache = namedtuple('ForwardCache', ['version', 'x', 'z1', 'a1', 'z2', 'a2', 'pool_idx',
                                           'flat', 'z3', 'a3', 'p'])


@doc_replacer
def forward(model, batch):
    """
    Run the network on a batch.

    Parameters
    ----------
    {_model}
    batch : ndarray, B x 1 x P x P
        Pixels in [0, 1].

    Returns
    -------
    p : ndarray, B x 1
        Positive-class probabilities, clipped to [1e-7, 1 - 1e-7].
    cache : ForwardCache
        Layer values needed by backward.
    """
    x = np.asarray(batch)
    expected = (1, model.spec.input_px, model.spec.input_px)
    if x.ndim != 4 or x.shape[1:] != expected:
        raise ShapeError('Expected a batch of shape B x {} x {} x {}, got {}'.format(
            expected[0], expected[1], expected[2], x.shape))
    x = x.astype(model.dtype, copy=False)
    w = model.params

    z1 = conv2d_valid(x, w['k1'], w['b1'])
    a1 = relu(z1)
    z2 = conv2d_valid(a1, w['k2'], w['b2'])
    a2 = relu(z2)
    pooled, pool_idx = maxpool2(a2)
    flat = pooled.reshape(len(x), -1)
    z3 = dense(flat, w['w3'], w['b3'])
    a3 = relu(z3)
    z4 = dense(a3, w['w4'], w['b4'])
    p = np.clip(expit(z4), P_MIN, P_MAX).astype(model.dtype)
    return p, ForwardCache(model.version, x, z1, a1, z2, a2, pool_idx, flat, z3, a3, p)


def bce_loss(p, y):
    """
    Mean binary cross-entropy.

    Returns
    -------
    loss : float
        -mean(y ln p + (1 - y) ln(1 - p)), p clipped to [1e-7, 1 - 1e-7].
    dp : ndarray, shape of p
        Gradient of the loss with respect to p.
    """
    p = np.asarray(p)
    y = np.asarray(y, dtype=p.dtype).reshape(p.shape)
    pc = np.clip(p, P_MIN, P_MAX)
    loss = -np.mean(y * np.log(pc) + (1 - y) * np.log(1 - pc))
    dp = (-y / pc + (1 - y) / (1 - pc)) / p.size
    return float(loss), dp.astype(p.dtype)


@doc_replacer
def backward(model, cache, dp):
    """
    Gradients of the loss with respect to every parameter.

    Parameters
    ----------
    {_model}
    cache : ForwardCache
        From forward() on the same parameters.
    dp : ndarray, B x 1
        Gradient of the loss with respect to the output probabilities.

    Returns
    -------
    OrderedDict of name -> ndarray, shaped like the parameters
    """
    if cache.version != model.version:
        raise ContractViolation('The forward cache is stale: it was computed with parameter version {}, '
                                'the model is at version {}.'.format(cache.version, model.version))
    dp = np.asarray(dp, dtype=model.dtype)
    if dp.shape != cache.p.shape:
        raise ShapeError('dL/dp of shape {} does not match the output shape {}'.format(dp.shape, cache.p.shape))
    w = model.params
    g = OrderedDict()

    dz4 = dp * cache.p * (1 - cache.p)
    g['w4'] = cache.a3.T.dot(dz4)
    g['b4'] = dz4.sum(axis=0)

    dz3 = dz4.dot(w['w4'].T) * (cache.z3 > 0)
    g['w3'] = cache.flat.T.dot(dz3)
    g['b3'] = dz3.sum(axis=0)

    dpooled = dz3.dot(w['w3'].T).reshape(cache.pool_idx.shape)
    dz2 = maxpool2_backward(dpooled, cache.pool_idx, cache.a2.shape) * (cache.z2 > 0)
    g['k2'], g['b2'], da1 = conv2d_backward(dz2, cache.a1, w['k2'])

    dz1 = da1 * (cache.z1 > 0)
    g['k1'], g['b1'], _ = conv2d_backward(dz1, cache.x, w['k1'], need_dx=False)

    return OrderedDict((name, g[name].astype(model.dtype)) for name in PARAM_NAMES)


# ----------------------
# Optimizer
# ----------------------
AdamState = namedtuple('AdamState', ['m', 'v', 't', 'lr', 'beta1', 'beta2', 'epsilon'])


def adam_init(params, lr=0.001, beta1=0.9, beta2=0.999, epsilon=1e-8):
    """Fresh optimizer state: zero moments, step 0."""
    def zeros():
        return OrderedDict((k, np.zeros_like(v)) for k, v in params.items())
    return AdamState(zeros(), zeros(), 0, lr, beta1, beta2, epsilon)


def adam_step(params, grads, state):
    """
    One Adam update.

    Returns
    -------
    params : OrderedDict
        New parameter arrays; the inputs are not modified.
    state : AdamState
    """
    if list(params) != list(grads) or list(params) != list(state.m):
        raise ShapeError('Parameters, gradients and optimizer state name different tensors.')
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    new_params, m, v = OrderedDict(), OrderedDict(), OrderedDict()
    for name, w in params.items():
        grad = grads[name]
        if grad.shape != w.shape:
            raise ShapeError('Gradient of {} has shape {}, parameter has {}'.format(name, grad.shape, w.shape))
        m[name] = (b1 * state.m[name] + (1 - b1) * grad).astype(w.dtype)
        v[name] = (b2 * state.v[name] + (1 - b2) * grad * grad).astype(w.dtype)
        m_hat = m[name] / (1 - b1 ** t)
        v_hat = v[name] / (1 - b2 ** t)
        new_params[name] = (w - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)).astype(w.dtype)
    return new_params, state._replace(m=m, v=v, t=t)


# ----------------------
# Training
# ----------------------
class TrainReport(BaseObject):
    """
    Per-epoch learning curves.

    ``curves`` holds epoch, train_loss, train_acc, val_loss, val_acc and the
    median minibatch loss of the epoch;
    ``seconds`` the wall-clock duration of every epoch.
    """
    curve_columns = ['epoch', 'train_loss', 'train_acc', 'val_loss', 'val_acc', 'batch_loss_median']

    def __init__(self, rows=(), seconds=()):
        self.rows = [tuple(r) for r in rows]
        self.seconds = list(seconds)

    def __len__(self):
        return len(self.rows)

    def __repr__(self):
        return '<TrainReport {} epochs>'.format(len(self))

    @property
    def curves(self):
        curves = pd.DataFrame(self.rows, columns=self.curve_columns)
        curves['epoch'] = curves['epoch'].astype(int)
        return curves

    @property
    def final(self):
        """The last row of the curves, as a Series."""
        return self.curves.iloc[-1]

    @property
    def timing(self):
        return pd.DataFrame({'epoch': self.curves['epoch'], 'seconds': self.seconds})

    def append(self, epoch, train_loss, train_acc, val_loss, val_acc, seconds, batch_loss_median=np.nan):
        self.rows.append((int(epoch), float(train_loss), float(train_acc), float(val_loss), float(val_acc),
                          float(batch_loss_median)))
        self.seconds.append(seconds)

    def to_csv(self, path, timing_path=None):
        self.curves.to_csv(path, index=False)
        if timing_path is not None:
            self.timing.to_csv(timing_path, index=False)

    @classmethod
    def from_csv(cls, path, timing_path=None):
        curves = pd.read_csv(path)
        seconds = pd.read_csv(timing_path)['seconds'] if timing_path is not None else [np.nan] * len(curves)
        return cls(curves[cls.curve_columns].itertuples(index=False), seconds)


def evaluate(model, x, y, batch_size=32):
    """Mean BCE loss and accuracy (threshold 0.5) over a dataset held in memory."""
    if len(x) == 0:
        raise ValueError('Cannot evaluate on an empty set.')
    p = np.concatenate([forward(model, x[i:i + batch_size])[0] for i in range(0, len(x), batch_size)])
    loss, _ = bce_loss(p, y)
    accuracy = float(np.mean((p >= 0.5) == (np.asarray(y).reshape(p.shape) >= 0.5)))
    return loss, accuracy


@doc_replacer
def train(model, manifest, experiment, cfg):
    """
    Train a model from scratch on the train split, tracking the val split.

    Weights are re-initialized from cfg.seed. Each epoch visits the training
    records in a seeded random order, in minibatches of cfg.batch_size, then
    evaluates the whole train and val splits.

    Parameters
    ----------
    {_model}
    {_manifest}
        Split into train/val/test.
    {_experiment}
    cfg : TrainConfig

    Returns
    -------
    model : FrameClassifier
        The same object, trained.
    report : TrainReport
    """
    train_idx = manifest.select('train', experiment)
    val_idx = manifest.select('val', experiment)
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise ConfigurationError('Experiment {} needs records in both the train and val splits '
                                 '(found {} and {}).'.format(experiment.id, len(train_idx), len(val_idx)))
    x_train, y_train = load_batch(manifest, train_idx, experiment)
    x_val, y_val = load_batch(manifest, val_idx, experiment)
    x_train, x_val = x_train.astype(model.dtype), x_val.astype(model.dtype)
    y_train, y_val = y_train.astype(model.dtype), y_val.astype(model.dtype)

    model.initialize(cfg.seed)
    model.experiment = experiment
    state = adam_init(model.params, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon)
    report = TrainReport()
    n = len(x_train)
    logger.info('Training %s on %d records (%d val) for %d epochs', experiment.id, n, len(x_val), cfg.epochs)

    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        order = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1, epoch])).permutation(n)
        batch_losses = []
        for i in range(0, n, cfg.batch_size):
            batch = order[i:i + cfg.batch_size]
            p, cache = forward(model, x_train[batch])
            loss, dp = bce_loss(p, y_train[batch])
            batch_losses.append(loss)
            params, state = adam_step(model.params, backward(model, cache, dp), state)
            model.update_params(params)
        train_loss, train_acc = evaluate(model, x_train, y_train, cfg.batch_size)
        val_loss, val_acc = evaluate(model, x_val, y_val, cfg.batch_size)
        seconds = time.perf_counter() - start
        report.append(epoch, train_loss, train_acc, val_loss, val_acc, seconds, np.median(batch_losses))
        logger.info('epoch %d/%d: loss %.4f acc %.4f | val loss %.4f acc %.4f (%.1fs)',
                    epoch, cfg.epochs, train_loss, train_acc, val_loss, val_acc, seconds)

    model.trained = True
    return model, report


# ----------------------
# Gradient checking
# ----------------------
def _activation_pattern(cache):
    return (cache.z1 > 0, cache.z2 > 0, cache.pool_idx, cache.z3 > 0)


def _same_pattern(a, b):
    return all(np.array_equal(u, v) for u, v in zip(a, b))


def relative_error(analytic, numeric, floor=1e-5):
    """Elementwise |a - n| / max(|a| + |n|, floor)."""
    return np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), floor)


def gradient_check(model, x, y, h=1e-3, fallback_h=1e-6):
    """
    Compare backward() with central finite differences, in float64.

    A difference step that flips a ReLU or moves a pooling maximum crosses a
    kink of the loss; such entries are measured again with ``fallback_h``.

    Returns
    -------
    OrderedDict of name -> ndarray of relative errors, shaped like the parameter
    """
    model = model.astype(np.float64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    p, cache = forward(model, x)
    _, dp = bce_loss(p, y)
    analytic = backward(model, cache, dp)
    pattern = _activation_pattern(cache)

    def loss_at(name, i, delta):
        params = OrderedDict((k, v.copy()) for k, v in model.params.items())
        params[name][i] += delta
        shifted = FrameClassifier(model.spec, params)
        q, c = forward(shifted, x)
        return bce_loss(q, y)[0], _same_pattern(pattern, _activation_pattern(c))

    errors = OrderedDict()
    for name, value in model.params.items():
        numeric = np.zeros_like(value)
        for i in np.ndindex(value.shape):
            plus, same_plus = loss_at(name, i, h)
            minus, same_minus = loss_at(name, i, -h)
            step = h
            if not (same_plus and same_minus):
                plus, _ = loss_at(name, i, fallback_h)
                minus, _ = loss_at(name, i, -fallback_h)
                step = fallback_h
            numeric[i] = (plus - minus) / (2 * step)
        errors[name] = relative_error(analytic[name], numeric)
    return errors


# ----------------------
# Weight files
# ----------------------
WEIGHT_MAGIC = b'S2CW'
WEIGHT_VERSION = 1


def weight_file_size(spec):
    """Bytes of a weight file: header, per-tensor shape records and 4 bytes per parameter."""
    shapes = spec.param_shapes.values()
    return len(WEIGHT_MAGIC) + 4 + sum(1 + 4 * len(s) for s in shapes) + 4 * spec.param_count


def encode_weights(model):
    chunks = [WEIGHT_MAGIC, struct.pack('<HH', WEIGHT_VERSION, len(model.params))]
    for value in model.params.values():
        chunks.append(struct.pack('<B', value.ndim))
        chunks.append(struct.pack('<{}I'.format(value.ndim), *value.shape))
        chunks.append(np.ascontiguousarray(value, dtype='<f4').tobytes())
    return b''.join(chunks)


def save_weights(model, path):
    """
    Write the parameters of a model.

    Layout: magic 'S2CW', version (u16), tensor count (u16), then per tensor
    its rank (u8), extents (u32 each) and values (float32), all little-endian.
    """
    with open(path, 'wb') as f:
        f.write(encode_weights(model))


def _spec_from_shapes(shapes):
    try:
        k1, k2, w3 = shapes[0], shapes[2], shapes[4]
        side = int(round(np.sqrt(w3[0] / float(k2[0]))))
        spec = ModelSpec(input_px=2 * side + 4, conv1_filters=k1[0], conv2_filters=k2[0],
                         dense_units=w3[1])
    except (IndexError, ZeroDivisionError, ConfigurationError):
        raise WeightFormatError('Tensor shapes {} do not describe a model of this architecture.'.format(shapes))
    if list(spec.param_shapes.values()) != [tuple(s) for s in shapes]:
        raise WeightFormatError('Tensor shapes {} do not describe a model of this architecture.'.format(shapes))
    return spec


def decode_weights(data):
    """Parse weight-file bytes into (ModelSpec, OrderedDict of parameters)."""
    view = memoryview(data)
    pos = [0]

    def take(n):
        if pos[0] + n > len(view):
            raise WeightFormatError('Truncated weight file: needed {} bytes at offset {}, {} left.'.format(
                n, pos[0], len(view) - pos[0]))
        chunk = view[pos[0]:pos[0] + n]
        pos[0] += n
        return chunk

    if bytes(take(4)) != WEIGHT_MAGIC:
        raise WeightFormatError('Not a weight file (bad magic).')
    version, count = struct.unpack('<HH', take(4))
    if version != WEIGHT_VERSION:
        raise WeightFormatError('Unsupported weight file version {}.'.format(version))
    if count != len(PARAM_NAMES):
        raise WeightFormatError('Expected {} tensors, the file holds {}.'.format(len(PARAM_NAMES), count))

    shapes, values = [], []
    for _ in range(count):
        rank, = struct.unpack('<B', take(1))
        shape = struct.unpack('<{}I'.format(rank), take(4 * rank))
        size = int(np.prod(shape)) if shape else 1
        values.append(np.frombuffer(take(4 * size), dtype='<f4').astype(np.float32).reshape(shape))
        shapes.append(shape)
    if pos[0] != len(view):
        raise WeightFormatError('{} unexpected trailing bytes in weight file.'.format(len(view) - pos[0]))

    spec = _spec_from_shapes(shapes)
    return spec, OrderedDict(zip(PARAM_NAMES, values))


def load_weights(path, experiment=None, spec=None):
    """
    Read a model written by save_weights.

    Parameters
    ----------
    path : str
    experiment : ExperimentSpec | None
        Label map to attach to the model.
    spec : ModelSpec | None
        When given, the file must hold a model of exactly this spec.

    Returns
    -------
    FrameClassifier
    """
    with open(path, 'rb') as f:
        found, params = decode_weights(f.read())
    if spec is not None and spec != found:
        raise WeightFormatError('Weight file holds {}, expected {}.'.format(found, spec))
    model = FrameClassifier(found, params, experiment)
    model.trained = True
    return model
