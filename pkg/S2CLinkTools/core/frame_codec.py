"""
Bitstreams <-> displayable frame images.

A frame is a square grid of G x G cells, each cell a uniform block of
cell_px x cell_px pixels. A cell carries one bit with on-off keying:
bit 1 is a black cell (0.0), bit 0 a white cell (1.0).

The cells that do not carry payload form the marking area:

* QR kinds (DATA_QR1, DATA_QR2, OVERHEAD): a light quiet zone around the grid and
  three finder patterns (concentric dark/light squares) in the top-left,
  top-right and bottom-left corners.
* ASCII kind: a solid dark border ring and no finders.

Payload bits fill the remaining cells row by row. The code carries no
error correction; it is a simplified matrix code that is exactly invertible
on a clean frame.
"""
import functools
from enum import Enum

import numpy as np

from S2CLinkTools.core.common_doc import doc_replacer
from S2CLinkTools.core.config import ConfigBase
from S2CLinkTools.core.errors import CapacityError, ConfigurationError, EncodingError, ShapeError

DARK = 0.0
LIGHT = 1.0

# cell roles
ROLE_BORDER = 0
ROLE_FINDER = 1
ROLE_PAYLOAD = 2

# Base contents of the labelled frame classes.
DATA_QR1_TEXT = (u'sunny_owls_vow_to_swoop_over_snowy_woods_tomorrow_'
                 u'so_grow_your_wool_now_you_worry_wart_')
DATA_QR2_TEXT = (u'PACKET-0042/FRAME-0007 DATA BLOCK 1 OF 64 '
                 u'SCREEN TO CAMERA LINK TEST PATTERN 0123456789')
ASCII_TEXT = (u'A BAD DAD HAD A BAD PAD @ A BAD DAD HAD A BAD PAD @ '
              u'A BAD DAD HAD A BAD PAD @ ')

# Sync codeword of the overhead frame: 100 characters, every code 0xFE
# (seven dark cells in eight). Text below 0x80 never reaches that density.
SYNC_TEXT = u'\xfe' * 100


class FrameKind(Enum):
    """The four labelled frame classes."""
    DATA_QR1 = 'd_f1'
    DATA_QR2 = 'd_f2'
    ASCII = 'a_f'
    OVERHEAD = 'o_f'

    @property
    def label(self):
        return self.value

    @property
    def is_qr(self):
        return self is not FrameKind.ASCII

    @property
    def index(self):
        """Position in the canonical class order (d_f1, d_f2, a_f, o_f)."""
        return list(FrameKind).index(self)

    @classmethod
    def parse(cls, value):
        """
        Accept a FrameKind, a label ('d_f1') or a member name ('DATA_QR1', case-insensitive).
        """
        if isinstance(value, cls):
            return value
        text = str(value).strip()
        for kind in cls:
            if text == kind.value or text.upper() == kind.name:
                return kind
        raise ConfigurationError('Unknown frame kind: {!r}'.format(value))


class CodecConfig(ConfigBase):
    """
    Geometry of a frame.

    Keys
    ----
    frame_px : pixels per side (default 100)
    grid_cells : cells per side G (default 25)
    finder_size : cells per side of a finder pattern (default 7)
    quiet_zone : width in cells of the quiet zone / border ring (default 1)
    """
    _defaults = (
        ('frame_px', 100),
        ('grid_cells', 25),
        ('finder_size', 7),
        ('quiet_zone', 1),
    )

    def validate_input(self):
        for key in ('frame_px', 'grid_cells', 'finder_size'):
            if getattr(self, key) <= 0:
                raise ConfigurationError('{} must be positive, got {}'.format(key, getattr(self, key)))
        if self.quiet_zone < 0:
            raise ConfigurationError('quiet_zone must be non-negative, got {}'.format(self.quiet_zone))
        if self.frame_px % self.grid_cells:
            raise ConfigurationError('frame_px ({}) must be divisible by grid_cells ({})'.format(
                self.frame_px, self.grid_cells))
        if self.cell_px < 3:
            raise ConfigurationError(
                'cells must be at least 3 px wide to have a sampling center, got {}'.format(self.cell_px))
        if 2 * (self.finder_size + self.quiet_zone) > self.grid_cells:
            raise ConfigurationError('finder patterns of {} cells do not fit a {}-cell grid'.format(
                self.finder_size, self.grid_cells))
        if self.capacity <= 0:
            raise ConfigurationError('Frame geometry leaves no payload cells.')

    @property
    def cell_px(self):
        return self.frame_px // self.grid_cells

    @property
    def border_cells(self):
        """Number of cells in the quiet zone (border ring)."""
        inner = self.grid_cells - 2 * self.quiet_zone
        return self.grid_cells ** 2 - inner ** 2

    @property
    def capacity(self):
        """Payload bits of a QR-kind frame: G^2 - 3 finder^2 - border cells."""
        return self.grid_cells ** 2 - 3 * self.finder_size ** 2 - self.border_cells


def payload_capacity(cfg, kind):
    """
    Payload bits a frame of the given kind carries.

    QR kinds lose the three finders and the quiet zone; the ASCII kind
    only loses its border ring.
    """
    kind = FrameKind.parse(kind)
    if kind.is_qr:
        return cfg.capacity
    return cfg.grid_cells ** 2 - cfg.border_cells


def _finder_pattern(size):
    """Concentric squares: dark rim, light ring, dark core."""
    idx = np.arange(size)
    d = np.minimum(np.minimum.outer(idx, idx), np.minimum.outer(idx[::-1], idx[::-1]))
    d = np.minimum(d, np.minimum.outer(idx, idx[::-1]))
    d = np.minimum(d, np.minimum.outer(idx[::-1], idx))
    return np.where(d == 1, LIGHT, DARK)


def _finder_origins(cfg):
    q, f, g = cfg.quiet_zone, cfg.finder_size, cfg.grid_cells
    return ((q, q), (q, g - q - f), (g - q - f, q))


@functools.lru_cache(maxsize=32)
def _layout(cfg, kind):
    """(roles, template) of a frame: cell role map and marking-area intensities."""
    g, q, f = cfg.grid_cells, cfg.quiet_zone, cfg.finder_size
    roles = np.full((g, g), ROLE_PAYLOAD, dtype=np.int8)
    template = np.full((g, g), LIGHT)

    ring = np.ones((g, g), dtype=bool)
    ring[q:g - q, q:g - q] = False
    roles[ring] = ROLE_BORDER

    if kind.is_qr:
        template[ring] = LIGHT
        pattern = _finder_pattern(f)
        for r, c in _finder_origins(cfg):
            roles[r:r + f, c:c + f] = ROLE_FINDER
            template[r:r + f, c:c + f] = pattern
    else:
        template[ring] = DARK

    roles.flags.writeable = False
    template.flags.writeable = False
    return roles, template


def cell_roles(cfg, kind):
    """
    Role of every cell of a frame.

    Returns
    -------
    roles : ndarray of int8, shape (G, G)
        ROLE_BORDER (quiet zone or border ring), ROLE_FINDER or ROLE_PAYLOAD.
    """
    return _layout(cfg, FrameKind.parse(kind))[0]


@functools.lru_cache(maxsize=32)
def _payload_cells(cfg, kind):
    rows, cols = np.nonzero(_layout(cfg, kind)[0] == ROLE_PAYLOAD)
    rows.flags.writeable = False
    cols.flags.writeable = False
    return rows, cols


# ----------------------
# Bitstreams
# ----------------------
def as_bits(bits):
    """Validate a bit sequence and return it as a 1-d uint8 array of 0s and 1s."""
    arr = np.asarray(bits)
    if arr.size == 0:
        return np.zeros(0, dtype=np.uint8)
    if arr.ndim != 1:
        raise ShapeError('A bitstream is 1-d, got shape {}'.format(arr.shape))
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError('A bitstream may only contain 0 and 1.')
    return arr.astype(np.uint8)


def text_to_bits(text):
    """
    8-bit character codes of ``text``, most significant bit first.

    The bitstream has exactly 8 bits per character.
    """
    try:
        raw = text.encode('latin-1')
    except UnicodeEncodeError as e:
        raise EncodingError('Character {!r} at position {} has no 8-bit code.'.format(
            e.object[e.start], e.start))
    return np.unpackbits(np.frombuffer(raw, dtype=np.uint8))


def bits_to_text(bits):
    """Inverse of text_to_bits."""
    bits = as_bits(bits)
    if len(bits) % 8:
        raise ValueError('A text bitstream has a multiple of 8 bits, got {}'.format(len(bits)))
    return np.packbits(bits).tobytes().decode('latin-1')


def fit_bits(bits, length):
    """Truncate or zero-pad a bitstream to exactly ``length`` bits."""
    bits = as_bits(bits)
    out = np.zeros(length, dtype=np.uint8)
    n = min(length, len(bits))
    out[:n] = bits[:n]
    return out


class FramePayload(object):
    """
    The bits carried by one frame.

    Parameters
    ----------
    bits : sequence of {0, 1}
        Payload bits, at most the capacity of the frame. Rendering pads them
        with zeros up to the capacity.
    kind : FrameKind
    n_data : int | None
        How many of the leading bits are data (the rest is padding).
        Defaults to all of them.
    """

    def __init__(self, bits, kind, n_data=None):
        bits = as_bits(bits).copy()
        bits.flags.writeable = False
        self.bits = bits
        self.kind = FrameKind.parse(kind)
        self.n_data = len(bits) if n_data is None else int(n_data)
        if not 0 <= self.n_data <= len(bits):
            raise ValueError('n_data must lie in [0, {}], got {}'.format(len(bits), n_data))

    @property
    def data_bits(self):
        """The payload without its padding."""
        return self.bits[:self.n_data]

    def __len__(self):
        return len(self.bits)

    def __eq__(self, other):
        return (isinstance(other, FramePayload) and self.kind is other.kind and
                self.n_data == other.n_data and np.array_equal(self.bits, other.bits))

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return '<FramePayload {} {} bits ({} data)>'.format(self.kind.label, len(self.bits), self.n_data)


def segment_stream(bits, capacity, kind=FrameKind.DATA_QR1):
    """
    Divide a bitstream into frame payloads.

    Parameters
    ----------
    bits : sequence of {0, 1}
    capacity : int
        Bits per frame.
    kind : FrameKind
        Kind given to every payload.

    Returns
    -------
    list of FramePayload
        Every payload is ``capacity`` bits long. All but the last are full data;
        the last records in ``n_data`` how many of its bits are data, the rest
        are zero padding.
    """
    if int(capacity) <= 0:
        raise ConfigurationError('Frame capacity must be positive, got {}'.format(capacity))
    capacity = int(capacity)
    bits = as_bits(bits)
    payloads = []
    for start in range(0, len(bits), capacity):
        chunk = bits[start:start + capacity]
        payloads.append(FramePayload(fit_bits(chunk, capacity), kind, n_data=len(chunk)))
    return payloads


def join_payloads(payloads):
    """Concatenate the data bits of payloads, dropping the padding (inverse of segment_stream)."""
    if not payloads:
        return np.zeros(0, dtype=np.uint8)
    return np.concatenate([p.data_bits for p in payloads]).astype(np.uint8)


# ----------------------
# Rendering
# ----------------------
@doc_replacer
def encode_frame(payload, cfg):
    """
    Render a payload as a frame image.

    Parameters
    ----------
    payload : FramePayload
    {_codec_cfg}

    Returns
    -------
    img : ndarray, shape (frame_px, frame_px)
        Intensities, 0.0 for dark cells and 1.0 for light cells.
    """
    capacity = payload_capacity(cfg, payload.kind)
    if len(payload.bits) > capacity:
        raise CapacityError('{} bits do not fit a {} frame of {} payload cells.'.format(
            len(payload.bits), payload.kind.label, capacity))

    cells = _layout(cfg, payload.kind)[1].copy()
    rows, cols = _payload_cells(cfg, payload.kind)
    bits = fit_bits(payload.bits, capacity)
    cells[rows, cols] = np.where(bits == 1, DARK, LIGHT)

    c = cfg.cell_px
    return np.repeat(np.repeat(cells, c, axis=0), c, axis=1)


@doc_replacer
def cell_means(img, cfg):
    """
    Mean intensity of the central (cell_px - 2)^2 pixels of every cell.

    Parameters
    ----------
    {_frame_image}
    {_codec_cfg}

    Returns
    -------
    ndarray, shape (G, G)
    """
    img = np.asarray(img, dtype=float)
    expected = (cfg.frame_px, cfg.frame_px)
    if img.shape != expected:
        raise ShapeError('Frame of shape {} does not match the codec geometry {}.'.format(
            img.shape, expected))
    g, c = cfg.grid_cells, cfg.cell_px
    blocks = img.reshape(g, c, g, c)[:, 1:c - 1, :, 1:c - 1]
    return blocks.mean(axis=(1, 3))


@doc_replacer
def decode_frame(img, kind, cfg):
    """
    Read the payload bits back from a registered (upright, uncropped) frame.

    Every payload cell is sampled at its center block and thresholded at 0.5:
    dark reads as 1, light as 0.

    Parameters
    ----------
    {_frame_image}
    {_frame_kind}
    {_codec_cfg}

    Returns
    -------
    FramePayload
        Full-capacity payload, in the order used by encode_frame.
    """
    kind = FrameKind.parse(kind)
    means = cell_means(img, cfg)
    rows, cols = _payload_cells(cfg, kind)
    bits = (means[rows, cols] < 0.5).astype(np.uint8)
    return FramePayload(bits, kind)


def sync_codeword(cfg):
    """The sync codeword bits carried by an overhead frame (truncated/padded to capacity)."""
    return fit_bits(text_to_bits(SYNC_TEXT), payload_capacity(cfg, FrameKind.OVERHEAD))


@doc_replacer
def make_overhead_frame(cfg):
    """
    The overhead (sync) frame: the sync codeword rendered as a QR-kind frame.

    Parameters
    ----------
    {_codec_cfg}
    """
    return encode_frame(FramePayload(sync_codeword(cfg), FrameKind.OVERHEAD), cfg)


_BASE_TEXTS = {
    FrameKind.DATA_QR1: DATA_QR1_TEXT,
    FrameKind.DATA_QR2: DATA_QR2_TEXT,
    FrameKind.ASCII: ASCII_TEXT,
}


@doc_replacer
def base_frame(kind, cfg):
    """
    The fixed exemplar of a frame class, before any augmentation.

    Parameters
    ----------
    {_frame_kind}
    {_codec_cfg}
    """
    kind = FrameKind.parse(kind)
    if kind is FrameKind.OVERHEAD:
        return make_overhead_frame(cfg)
    bits = fit_bits(text_to_bits(_BASE_TEXTS[kind]), payload_capacity(cfg, kind))
    return encode_frame(FramePayload(bits, kind), cfg)


@doc_replacer
def frames_for_text(text, kind, cfg, capacity=None):
    """
    Encode text into a sequence of frame images.

    Parameters
    ----------
    text : str
        Characters with 8-bit codes.
    {_frame_kind}
    {_codec_cfg}
    capacity : int | None
        Data bits per frame. Defaults to the full payload capacity of ``kind``.

    Returns
    -------
    list of ndarray
    """
    kind = FrameKind.parse(kind)
    if not text and kind is not FrameKind.OVERHEAD:
        raise EncodingError('Data frames need a non-empty text.')
    full = payload_capacity(cfg, kind)
    capacity = full if capacity is None else int(capacity)
    if capacity > full:
        raise CapacityError('Requested {} bits per frame but a {} frame holds {}.'.format(
            capacity, kind.label, full))
    payloads = segment_stream(text_to_bits(text), capacity, kind)
    return [encode_frame(p, cfg) for p in payloads]


@doc_replacer
def text_from_frames(frames, kind, cfg, n_chars, capacity=None):
    """
    Reassemble text from frames made by frames_for_text.

    Parameters
    ----------
    frames : list of ndarray
    {_frame_kind}
    {_codec_cfg}
    n_chars : int
        Length of the original text (the padding is not in-band).
    capacity : int | None
        Data bits per frame used when encoding.
    """
    kind = FrameKind.parse(kind)
    capacity = payload_capacity(cfg, kind) if capacity is None else int(capacity)
    chunks = [decode_frame(img, kind, cfg).bits[:capacity] for img in frames]
    bits = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.uint8)
    return bits_to_text(bits[:8 * int(n_chars)])
