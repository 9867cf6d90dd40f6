"""Reversible residual modulation and payload framing.

Carrier residuals (|e| <= 2) are expanded to carry bits; all others are
shifted outward by 3 so the two ranges never collide:

    e = 0      prefix code  '0' -> 0, '10' -> +1, '11' -> -1
    e = +1/+2  one bit b    -> 2 + b / 4 + b
    e = -1/-2  one bit b    -> -2 - b / -4 - b
    e >= 3     e + 3
    e <= -3    e - 3

Every intensity moves by at most 3 levels.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import FramingError
from .validation import check_bits

ALPHA = 3
HEADER_BITS = 56
LENGTH_BITS = 32
AMBIGUOUS_BITS = 24

LOW_SHIFT_MAX = 2
HIGH_SHIFT_MIN = 253
LOW_AMBIGUOUS = (3, 5)
HIGH_AMBIGUOUS = (250, 252)


class BitReader:
    """Cursor over a bit sequence that yields zeros past the end."""

    def __init__(self, bits):
        self.bits = check_bits(bits)
        self.pos = 0

    def read(self):
        b = int(self.bits[self.pos]) if self.pos < len(self.bits) else 0
        self.pos += 1
        return b

    @property
    def exhausted(self):
        return self.pos >= len(self.bits)


def is_carrier(e):
    return -2 <= e <= 2


def modulate_residual(e, source):
    """Expand residual ``e`` with bits from ``source``.

    ``source`` is a :class:`BitReader` or any bit sequence. Returns the
    modulated residual and the tuple of bits consumed.
    """
    if not isinstance(source, BitReader):
        source = BitReader(source)
    e = int(e)
    if e == 0:
        b = source.read()
        if b == 0:
            return 0, (0,)
        b2 = source.read()
        return (-1 if b2 else 1), (1, b2)
    if e >= ALPHA:
        return e + ALPHA, ()
    if e <= -ALPHA:
        return e - ALPHA, ()
    b = source.read()
    if e > 0:
        return 2 * e + b, (b,)
    return 2 * e - b, (b,)


def demodulate_residual(e_mod):
    """Exact inverse of :func:`modulate_residual`: ``(e, bits)``."""
    e_mod = int(e_mod)
    if e_mod == 0:
        return 0, (0,)
    if e_mod == 1:
        return 0, (1, 0)
    if e_mod == -1:
        return 0, (1, 1)
    if 2 <= e_mod <= 5:
        return e_mod // 2, (e_mod % 2,)
    if -5 <= e_mod <= -2:
        return -((-e_mod) // 2), ((-e_mod) % 2,)
    if e_mod >= 6:
        return e_mod - ALPHA, ()
    return e_mod + ALPHA, ()


# --- range preprocessing --------------------------------------------------

def _ambiguous(values):
    return (((values >= LOW_AMBIGUOUS[0]) & (values <= LOW_AMBIGUOUS[1]))
            | ((values >= HIGH_AMBIGUOUS[0]) & (values <= HIGH_AMBIGUOUS[1])))


def preprocess_range(grid, partition):
    """Squeeze query intensities into [3, 252].

    Returns the new grid, the location map (one bit per query pixel whose new
    value is ambiguous, raster order, 1 = shifted) and its length.
    """
    px = grid.pixels.astype(np.int64)
    y = px[partition.rows, partition.cols]
    low = y <= LOW_SHIFT_MAX
    high = y >= HIGH_SHIFT_MIN
    shifted = y + 3 * low - 3 * high
    amb = _ambiguous(shifted)
    location_map = (low | high)[amb].astype(np.uint8)
    px[partition.rows, partition.cols] = shifted
    return grid.with_pixels(px), location_map, int(amb.sum())


def postprocess_range(grid, partition, location_map):
    """Undo :func:`preprocess_range` given its location map."""
    location_map = check_bits(location_map)
    px = grid.pixels.astype(np.int64)
    y = px[partition.rows, partition.cols]
    amb = _ambiguous(y)
    if int(amb.sum()) != len(location_map):
        raise FramingError(
            f"location map has {len(location_map)} bits for {int(amb.sum())} ambiguous pixels")
    flags = np.zeros(len(y), dtype=bool)
    flags[amb] = location_map.astype(bool)
    restored = y - 3 * (flags & (y <= LOW_AMBIGUOUS[1])) + 3 * (flags & (y >= HIGH_AMBIGUOUS[0]))
    px[partition.rows, partition.cols] = restored
    return grid.with_pixels(px)


# --- framing --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PayloadFrame:
    message: np.ndarray
    location_map: np.ndarray

    @property
    def n_ambiguous(self):
        return len(self.location_map)

    @property
    def n_bits(self):
        return HEADER_BITS + len(self.location_map) + len(self.message)

    def __eq__(self, other):
        if not isinstance(other, PayloadFrame):
            return NotImplemented
        return (np.array_equal(self.message, other.message)
                and np.array_equal(self.location_map, other.location_map))


def _uint_bits(value, width):
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)


def _bits_uint(bits):
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return value


def build_frame(message, location_map, n_ambiguous=None):
    """``[L:32][N_amb:24][location map][message]``, integers MSB first."""
    message = check_bits(message)
    location_map = check_bits(location_map)
    if n_ambiguous is None:
        n_ambiguous = len(location_map)
    if n_ambiguous != len(location_map):
        raise FramingError("N_amb does not match the location map length")
    if len(message) >= 2 ** LENGTH_BITS:
        raise FramingError("message longer than 2^32 - 1 bits")
    if n_ambiguous >= 2 ** AMBIGUOUS_BITS:
        raise FramingError("location map longer than 2^24 - 1 bits")
    return np.concatenate([
        _uint_bits(len(message), LENGTH_BITS),
        _uint_bits(n_ambiguous, AMBIGUOUS_BITS),
        location_map,
        message,
    ]).astype(np.uint8)


def parse_header(bits):
    """``(L, N_amb)`` from the first 56 bits."""
    bits = check_bits(bits)
    if len(bits) < HEADER_BITS:
        raise FramingError(f"need {HEADER_BITS} header bits, got {len(bits)}")
    return _bits_uint(bits[:LENGTH_BITS]), _bits_uint(bits[LENGTH_BITS:HEADER_BITS])


def parse_frame(bits):
    """Inverse of :func:`build_frame`; trailing bits beyond the frame are ignored."""
    bits = check_bits(bits)
    length, n_amb = parse_header(bits)
    total = HEADER_BITS + n_amb + length
    if len(bits) < total:
        raise FramingError(f"frame declares {total} bits but only {len(bits)} are available")
    location_map = bits[HEADER_BITS:HEADER_BITS + n_amb].copy()
    message = bits[HEADER_BITS + n_amb:total].copy()
    return PayloadFrame(message, location_map)
