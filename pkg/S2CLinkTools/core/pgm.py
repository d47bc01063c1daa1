"""
Binary PGM (P5) images, 8 bits per pixel, maxval 255.

This is the interchange format of every frame image written to disk:
intensity on disk = round(pixel * 255), pixel in memory = value / 255.
"""
import numpy as np

from S2CLinkTools.core.errors import ShapeError

_MAGIC = b'P5'


def to_uint8(img):
    """Quantize intensities in [0, 1] to 8-bit gray levels (round half to even)."""
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ShapeError('A frame image must be 2-d, got shape {}'.format(img.shape))
    return np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def from_uint8(levels, maxval=255):
    """Scale gray levels back to [0, 1]."""
    return np.asarray(levels, dtype=float) / float(maxval)


def encode_pgm(img):
    """
    Serialize a frame image to P5 bytes.

    Parameters
    ----------
    img : ndarray, shape (height, width)
        Intensities in [0, 1].

    Returns
    -------
    bytes
    """
    levels = to_uint8(img)
    height, width = levels.shape
    header = '{} {}\n255\n'.format(width, height).encode('ascii')
    return _MAGIC + b'\n' + header + levels.tobytes()


def _tokens(data):
    """Yield (token, end offset) of the whitespace separated header fields, skipping comments."""
    pos = 0
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b'#':
            while pos < n and data[pos:pos + 1] not in (b'\n', b'\r'):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            start = pos
            while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b'#':
                pos += 1
            yield data[start:pos], pos


def decode_pgm(data):
    """
    Parse P5 bytes.

    Returns
    -------
    img : ndarray, shape (height, width), float in [0, 1]
    """
    tokens = _tokens(data)
    fields = []
    end = 0
    try:
        for _ in range(4):
            token, end = next(tokens)
            fields.append(token)
    except StopIteration:
        raise IOError('Truncated PGM header.')

    if fields[0] != _MAGIC:
        raise IOError('Unsupported image format {!r}; only binary PGM (P5) is read.'.format(fields[0]))
    try:
        width, height, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise IOError('Malformed PGM header: {!r}'.format(fields))
    if width <= 0 or height <= 0 or not 0 < maxval < 256:
        raise IOError('Unsupported PGM geometry {}x{} maxval {}.'.format(width, height, maxval))

    # exactly one whitespace character separates the header from the raster
    raster = data[end + 1:end + 1 + width * height]
    if len(raster) != width * height:
        raise IOError('Truncated PGM raster: expected {} bytes, found {}.'.format(
            width * height, len(raster)))
    levels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return from_uint8(levels, maxval)


def write_pgm(path, img):
    """Write a frame image to ``path`` as binary PGM."""
    with open(path, 'wb') as f:
        f.write(encode_pgm(img))


def read_pgm(path):
    """Read a binary PGM file into a float image in [0, 1]."""
    with open(path, 'rb') as f:
        return decode_pgm(f.read())
