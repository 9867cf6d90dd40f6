"""Monte Carlo dropout sampling and aleatoric/epistemic uncertainty maps.

Encoder and decoder both call these functions and must reach the same
numbers bit for bit. Masks are drawn from xoshiro256** in a fixed order,
pass ``t`` first, then layer, then unit. All reductions over passes
accumulate sequentially in ``t``.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, NumericalError
from .grid import DEFAULT_RADIUS, context_features
from .predictor import DropoutMask, forward
from .prng import Xoshiro256
from .validation import check_positive_int, check_score, check_seed


@dataclass(frozen=True, eq=False)
class PosteriorSamples:
    """``means[t, k]`` and ``variances[t, k]`` for pass ``t`` and query pixel ``k``."""

    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.means, dtype=np.float64)
        v = np.asarray(self.variances, dtype=np.float64)
        if m.ndim == 1:
            m, v = m[:, None], v[:, None]
        if m.shape != v.shape or m.ndim != 2 or m.shape[0] < 1:
            raise ValueError("means and variances must share a (T, n_pixels) shape")
        if np.any(~(v > 0)):
            raise ValueError("sampled variances must be strictly positive")
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @property
    def T(self):
        return self.means.shape[0]

    @property
    def n_pixels(self):
        return self.means.shape[1]

    def __eq__(self, other):
        if not isinstance(other, PosteriorSamples):
            return NotImplemented
        return (np.array_equal(self.means, other.means)
                and np.array_equal(self.variances, other.variances))


@dataclass(frozen=True, eq=False)
class UncertaintyMap:
    aleatoric: np.ndarray
    epistemic: np.ndarray
    hybrid: np.ndarray

    def scores(self, score):
        return getattr(self, check_score(score))

    def order(self, score="hybrid"):
        return embedding_order(self, score)

    def __eq__(self, other):
        if not isinstance(other, UncertaintyMap):
            return NotImplemented
        return all(np.array_equal(getattr(self, f), getattr(other, f))
                   for f in ("aleatoric", "epistemic", "hybrid"))


def _sequential_mean(rows):
    acc = np.zeros(rows.shape[1:], dtype=np.float64)
    for row in rows:
        acc += row
    return acc / rows.shape[0]


def mc_sample(model, grid, partition, T=64, seed=0, radius=DEFAULT_RADIUS):
    """Run ``T`` stochastic passes over every query pixel of ``grid``.

    Each pass draws one dropout mask that is shared by all pixels.
    """
    if isinstance(T, bool) or int(T) != T or T < 2:
        raise ConfigError(f"T must be an integer >= 2, got {T!r}")
    T = int(T)
    features = context_features(grid, partition, radius)
    return sample_features(model, features, T, seed)


def sample_features(model, features, T, seed):
    rng = Xoshiro256(check_seed(seed))
    means = np.empty((T, len(features)))
    variances = np.empty((T, len(features)))
    for t in range(T):
        mask = DropoutMask.draw(model, rng)
        means[t], variances[t] = forward(model, features, mask)
    return PosteriorSamples(means, variances)


def aleatoric(samples):
    """Mean predicted variance per pixel."""
    return _sequential_mean(samples.variances)


def epistemic(samples):
    """Variance of the predicted means per pixel, E[yhat^2] - E[yhat]^2 clamped at 0."""
    m = samples.means
    first = _sequential_mean(m)
    second = _sequential_mean(m * m)
    return np.maximum(second - first * first, 0.0)


def hybrid(aleatoric_map, epistemic_map):
    """Sum of both maps, each normalised by its total; a zero-sum map contributes nothing."""
    a = np.asarray(aleatoric_map, dtype=np.float64)
    e = np.asarray(epistemic_map, dtype=np.float64)
    if a.shape != e.shape:
        raise ValueError("aleatoric and epistemic maps cover different query sets")
    out = np.zeros_like(a)
    for part in (a, e):
        total = part.sum()
        if total > 0:
            out = out + part / total
    return out


def uncertainty_map(samples):
    a = aleatoric(samples)
    e = epistemic(samples)
    return UncertaintyMap(a, e, hybrid(a, e))


def _round_half_away(x):
    return np.where(x >= 0, np.floor(x + 0.5), -np.floor(-x + 0.5))


def predicted_intensity(samples):
    """Integer prediction shared by encoder and decoder: MC mean on the 0-255 scale."""
    mean = _sequential_mean(samples.means)
    return np.clip(_round_half_away(255.0 * mean), 0, 255).astype(np.int64)


def embedding_order(umap, score="hybrid"):
    """Query indices sorted by ascending uncertainty, ties by raster index."""
    values = umap.scores(score) if isinstance(umap, UncertaintyMap) else np.asarray(umap, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NumericalError("uncertainty scores must be finite")
    return np.argsort(values, kind="stable")


def random_order(n, seed):
    """Seeded shuffle of ``range(n)``; the reproducible random-selection baseline."""
    check_positive_int(n, "n", minimum=0)
    return np.array(Xoshiro256(check_seed(seed)).permutation(n), dtype=np.intp)
