"""Training data: context-window patches from a collection of images."""

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import ConfigError
from .grid import (
    DEFAULT_MARGIN,
    DEFAULT_RADIUS,
    EVEN,
    chequerboard_partition,
    context_features,
    n_features,
    read_pgm,
)
from .validation import check_grid, check_seed


def load_pgm_dir(directory):
    """All ``*.pgm`` files in ``directory`` (sorted by name) as ``(name, grid)`` pairs."""
    paths = sorted(p for p in Path(directory).iterdir()
                   if p.is_file() and p.suffix.lower() == ".pgm")
    return [(p.name, read_pgm(p)) for p in paths]


def _image_rows(grid, polarity, radius, margin):
    part = chequerboard_partition(grid, polarity, margin)
    X = context_features(grid, part, radius)
    y = grid.pixels[part.rows, part.cols].astype(np.float64) / 255.0
    return X, y


class ContextPatches(TransformerMixin, BaseEstimator):
    """Turns images into (context window, query intensity) training rows.

    ``transform`` returns the feature rows of every query pixel of every
    image, stacked in image then raster order. ``fit_transform`` also
    returns the targets and, when ``n_patches`` is set, a seeded random
    subset of the rows.
    """

    def __init__(self, polarity=EVEN, window_radius=DEFAULT_RADIUS,
                 border_margin=DEFAULT_MARGIN, n_patches=None, random_state=0):
        self.polarity = polarity
        self.window_radius = window_radius
        self.border_margin = border_margin
        self.n_patches = n_patches
        self.random_state = random_state

    def fit(self, images, y=None):
        self.n_features_out_ = n_features(self.window_radius)
        return self

    def _rows(self, images):
        if isinstance(images, (str, Path)):
            images = [g for _, g in load_pgm_dir(images)]
        grids = [check_grid(g) for g in images]
        if not grids:
            raise ConfigError("no training data")
        parts = [_image_rows(g, self.polarity, self.window_radius, self.border_margin)
                 for g in grids]
        return np.vstack([p[0] for p in parts]), np.concatenate([p[1] for p in parts])

    def transform(self, images):
        return self._rows(images)[0]

    def fit_transform(self, images, y=None):
        """``(X, y)`` training rows, subsampled without replacement to ``n_patches``."""
        self.fit(images)
        X, targets = self._rows(images)
        if self.n_patches is not None and self.n_patches < len(X):
            rng = np.random.Generator(np.random.PCG64(check_seed(self.random_state)))
            idx = np.sort(rng.choice(len(X), size=self.n_patches, replace=False))
            X, targets = X[idx], targets[idx]
        return X, targets


def extract_patches(images, n_patches=None, seed=0, polarity=EVEN,
                    radius=DEFAULT_RADIUS, margin=DEFAULT_MARGIN):
    return ContextPatches(polarity, radius, margin, n_patches, seed).fit_transform(images)
