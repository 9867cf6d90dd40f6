"""Greyscale rasters, binary PGM I/O, chequerboard partitions and context windows."""

from dataclasses import dataclass
from functools import lru_cache
import re

import numpy as np

from .exceptions import (
    ImageTooSmall,
    MalformedHeader,
    OutOfBounds,
    TruncatedData,
    UnsupportedFormat,
    UnsupportedMaxval,
    ZeroDimensions,
)

EVEN = "even"
ODD = "odd"
POLARITIES = (EVEN, ODD)

DEFAULT_RADIUS = 2
DEFAULT_MARGIN = 2


class PixelGrid:
    """Immutable 8-bit greyscale image.

    ``pixels`` is a read-only ``(height, width)`` uint8 array. Construct with
    any 2-D array-like of integers in [0, 255].
    """

    __slots__ = ("_pixels",)

    def __init__(self, pixels):
        arr = np.asarray(pixels)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ValueError(f"PixelGrid needs a non-empty 2-D array, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if not np.issubdtype(arr.dtype, np.integer):
                if not np.all(np.equal(np.mod(arr, 1), 0)):
                    raise ValueError("PixelGrid intensities must be integers")
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("PixelGrid intensities must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        arr = np.array(arr, dtype=np.uint8, copy=True, order="C")
        arr.flags.writeable = False
        self._pixels = arr

    @classmethod
    def from_values(cls, width, height, values):
        """Build from a row-major flat sequence."""
        values = np.asarray(values)
        if values.size != width * height:
            raise ValueError(f"expected {width * height} values, got {values.size}")
        return cls(values.reshape(height, width))

    @property
    def pixels(self):
        return self._pixels

    @property
    def width(self):
        return self._pixels.shape[1]

    @property
    def height(self):
        return self._pixels.shape[0]

    @property
    def shape(self):
        return self._pixels.shape

    @property
    def values(self):
        """Row-major flat view of the intensities."""
        return self._pixels.ravel()

    def with_pixels(self, pixels):
        return PixelGrid(pixels)

    def __eq__(self, other):
        if not isinstance(other, PixelGrid):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._pixels, other._pixels))

    def __hash__(self):
        return hash((self.shape, self._pixels.tobytes()))

    def __repr__(self):
        return f"PixelGrid(width={self.width}, height={self.height})"


# --- PGM ------------------------------------------------------------------

_WS = b" \t\r\n\v\f"


def _header_tokens(data, count):
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments.

    Returns the tokens and the offset of the single whitespace byte that
    terminates the last token.
    """
    tokens = []
    i = 0
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i] in _WS:
            i += 1
        if i < n and data[i] == ord("#"):
            while i < n and data[i] not in b"\r\n":
                i += 1
            continue
        if i >= n:
            raise TruncatedData("PGM header ends prematurely")
        start = i
        while i < n and data[i] not in _WS and data[i] != ord("#"):
            i += 1
        tokens.append(bytes(data[start:i]))
    return tokens, i


def load_pgm(data):
    """Decode a binary (P5) PGM with maxval 255 into a :class:`PixelGrid`."""
    data = bytes(data)
    if len(data) < 2:
        raise TruncatedData("not enough bytes for a PGM magic number")
    magic = data[:2]
    if magic != b"P5":
        if re.fullmatch(rb"P[1-7]", magic):
            raise UnsupportedFormat(f"unsupported netpbm variant {magic.decode()!r}; only P5 is supported")
        raise UnsupportedFormat("not a PGM file (bad magic)")
    if len(data) > 2 and data[2] not in _WS and data[2] != ord("#"):
        raise UnsupportedFormat("not a PGM file (bad magic)")
    tokens, end = _header_tokens(data[2:], 3)
    end += 2
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise MalformedHeader(f"non-integer PGM header fields {tokens!r}") from None
    if width <= 0 or height <= 0:
        raise ZeroDimensions(f"PGM declares {width}x{height} pixels")
    if maxval != 255:
        raise UnsupportedMaxval(f"maxval {maxval} unsupported; only 255 is accepted")
    if end >= len(data):
        raise TruncatedData("missing whitespace after PGM header")
    start = end + 1
    body = data[start:start + width * height]
    if len(body) < width * height:
        raise TruncatedData(f"expected {width * height} pixel bytes, found {len(body)}")
    return PixelGrid(np.frombuffer(body, dtype=np.uint8).reshape(height, width))


def save_pgm(grid):
    """Canonical P5 encoding: ``P5\\n<w> <h>\\n255\\n`` plus raw row-major bytes."""
    header = f"P5\n{grid.width} {grid.height}\n255\n".encode("ascii")
    return header + grid.pixels.tobytes()


def read_pgm(path):
    with open(path, "rb") as fh:
        return load_pgm(fh.read())


def write_pgm(path, grid):
    with open(path, "wb") as fh:
        fh.write(save_pgm(grid))


# --- partitions -----------------------------------------------------------

def _parity(polarity):
    if polarity not in POLARITIES:
        raise ValueError(f"polarity must be one of {POLARITIES}, got {polarity!r}")
    return 0 if polarity == EVEN else 1


@dataclass(frozen=True, eq=False)
class Partition:
    """Chequerboard split of an image.

    Cells with ``(r + c) % 2`` matching ``polarity`` are context; the other
    parity, away from the border, is the query set in raster order.
    """

    polarity: str
    border_margin: int
    height: int
    width: int
    rows: np.ndarray
    cols: np.ndarray

    @property
    def query_positions(self):
        return list(zip(self.rows.tolist(), self.cols.tolist()))

    @property
    def size(self):
        return len(self.rows)

    def __len__(self):
        return len(self.rows)

    def context_mask(self):
        r, c = np.indices((self.height, self.width))
        return (r + c) % 2 == _parity(self.polarity)

    def query_mask(self):
        mask = np.zeros((self.height, self.width), dtype=bool)
        mask[self.rows, self.cols] = True
        return mask

    def border_mask(self):
        """Query-parity cells excluded from the query set."""
        return ~self.context_mask() & ~self.query_mask()

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return (
            (self.polarity, self.border_margin, self.height, self.width)
            == (other.polarity, other.border_margin, other.height, other.width)
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
        )


def chequerboard_partition(grid, polarity=EVEN, border_margin=DEFAULT_MARGIN):
    """Split ``grid`` into context and query sets."""
    parity = _parity(polarity)
    if border_margin < 0:
        raise ValueError("border_margin must be non-negative")
    h, w = grid.height, grid.width
    if h < 2 * border_margin + 1 or w < 2 * border_margin + 1:
        raise ImageTooSmall(
            f"{w}x{h} image cannot hold a query set with border margin {border_margin}")
    r, c = np.indices((h - 2 * border_margin, w - 2 * border_margin))
    r = r.ravel() + border_margin
    c = c.ravel() + border_margin
    keep = (r + c) % 2 != parity
    rows = r[keep].astype(np.intp)
    cols = c[keep].astype(np.intp)
    rows.flags.writeable = False
    cols.flags.writeable = False
    return Partition(polarity, border_margin, h, w, rows, cols)


@lru_cache(maxsize=None)
def window_offsets(radius):
    """Offsets ``(di, dj)`` with odd ``di + dj`` inside the window, raster order."""
    return tuple(
        (di, dj)
        for di in range(-radius, radius + 1)
        for dj in range(-radius, radius + 1)
        if (di + dj) % 2 != 0
    )


def n_features(radius):
    return len(window_offsets(radius))


def context_window(grid, position, radius=DEFAULT_RADIUS):
    """Context-parity intensities around ``position``, scaled to [0, 1]."""
    r, c = position
    if r < radius or c < radius or r >= grid.height - radius or c >= grid.width - radius:
        raise OutOfBounds(f"position {position} is within {radius} pixels of the border")
    px = grid.pixels
    return np.array([px[r + di, c + dj] for di, dj in window_offsets(radius)],
                    dtype=np.float64) / 255.0


def context_features(grid, partition, radius=DEFAULT_RADIUS):
    """Feature matrix for every query pixel; row ``k`` is ``context_window`` of query ``k``."""
    if partition.border_margin < radius:
        raise OutOfBounds(
            f"border margin {partition.border_margin} is smaller than window radius {radius}")
    px = grid.pixels
    offsets = window_offsets(radius)
    out = np.empty((partition.size, len(offsets)), dtype=np.float64)
    for k, (di, dj) in enumerate(offsets):
        out[:, k] = px[partition.rows + di, partition.cols + dj]
    return out / 255.0
