"""Input validation helpers shared by the functional API and the estimators."""

import numpy as np
from sklearn.utils import check_array

from .exceptions import ConfigError, ShapeError

SCORES = ("aleatoric", "epistemic", "hybrid")


def check_features(X, n_features=None):
    """2-D finite float64 feature matrix, optionally with a fixed width."""
    try:
        X = check_array(X, dtype=np.float64, ensure_2d=True)
    except ValueError as exc:
        raise ShapeError(str(exc)) from None
    if n_features is not None and X.shape[1] != n_features:
        raise ShapeError(f"expected {n_features} features, got {X.shape[1]}")
    return X


def check_targets(y, n_samples=None):
    y = np.asarray(y, dtype=np.float64).ravel()
    if n_samples is not None and len(y) != n_samples:
        raise ShapeError(f"{n_samples} samples but {len(y)} targets")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    if y.size and (y.min() < 0.0 or y.max() > 1.0):
        raise ValueError("targets must be normalised to [0, 1]")
    return y


def check_seed(seed):
    """Seeds are unsigned 64-bit integers."""
    if isinstance(seed, (bool, np.bool_)) or int(seed) != seed:
        raise ValueError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    return seed


def check_bits(bits):
    """Message bits as a uint8 array of zeros and ones."""
    arr = np.asarray(bits if bits is not None else [])
    if arr.ndim != 1:
        raise ValueError(f"message bits must be one-dimensional, got shape {arr.shape}")
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ValueError("message bits must be 0 or 1")
    return arr.astype(np.uint8)


def check_grid(grid):
    from .grid import PixelGrid

    if isinstance(grid, PixelGrid):
        return grid
    return PixelGrid(grid)


def check_score(score):
    if score not in SCORES:
        raise ConfigError(f"score must be one of {SCORES}, got {score!r}")
    return score


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def bytes_to_bits(data):
    """Most-significant-bit-first expansion of a byte string."""
    return np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8))


def bits_to_bytes(bits):
    bits = check_bits(bits)
    if bits.size % 8:
        raise ValueError("bit count is not a multiple of 8")
    return np.packbits(bits).tobytes()
