"""Analysis curves and uncertainty visualisation.

Two curves are produced per image: prediction RMSE over the first p% of
query pixels taken along an ordering, and stego PSNR against embedding rate.
Both are written as CSV with six significant digits.
"""

import csv
from dataclasses import dataclass
import math

import numpy as np

from .bayes import random_order
from .exceptions import CapacityExceeded, NumericalError
from .grid import PixelGrid
from .metrics import psnr
from .pipeline import ORDERINGS, analyze, embed_analyzed, resolve_order

PERCENT_GRID = tuple(k / 100 for k in range(101))
RMSE_COLUMNS = ("percent", "rmse", "ordering")
CAPACITY_COLUMNS = ("bpp", "psnr_db", "ordering", "seed")


def _prefix_len(p, n):
    # guard against p*n landing a hair above an integer
    return min(n, max(0, math.ceil(p * n - 1e-9)))


def rmse_curve(true_values, predicted, ordering, percentiles=PERCENT_GRID):
    """``[(p, rmse), ...]`` where rmse covers the first ``ceil(p * n)`` pixels of ``ordering``."""
    err = np.asarray(true_values, dtype=np.float64) - np.asarray(predicted, dtype=np.float64)
    order = np.asarray(ordering, dtype=np.intp)
    n = len(err)
    if len(order) != n or not np.array_equal(np.sort(order), np.arange(n)):
        raise ValueError("ordering must be a permutation of the query indices")
    sq = np.concatenate([[0.0], np.cumsum(err[order] ** 2)])
    out = []
    for p in percentiles:
        k = _prefix_len(p, n)
        out.append((float(p), math.sqrt(sq[k] / k) if k else 0.0))
    return out


@dataclass
class CapacityPoint:
    bpp: float
    psnr: float
    n_modulated: int
    reachable: bool


def random_message(n_bits, seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.integers(0, 2, size=n_bits, dtype=np.uint8)


def capacity_distortion(cover, key, model, rates, ordering=None, seed=0, analysis=None):
    """PSNR of the stego image for each embedding rate (message bits per pixel).

    The message for every rate is drawn from ``seed``; a ``random`` ordering
    uses the same seed. Rates the image cannot carry come back with
    ``reachable=False`` and a NaN PSNR.
    """
    if analysis is None:
        analysis = analyze(cover, key, model)
    order = resolve_order(analysis, ordering or key.score, seed)
    pixels = cover.width * cover.height
    points = []
    for rate in rates:
        bits = random_message(math.ceil(rate * pixels - 1e-9), seed)
        try:
            stego, report = embed_analyzed(cover, analysis, bits, order)
        except CapacityExceeded:
            points.append(CapacityPoint(float(rate), math.nan, 0, False))
            continue
        points.append(CapacityPoint(float(rate), report.psnr, report.n_modulated, True))
    return points


def export_uncertainty_image(values, partition):
    """Min-max scale per-query scores to [0, 255]; every other pixel is 0."""
    v = np.asarray(values, dtype=np.float64)
    if v.shape != (partition.size,):
        raise ValueError(f"expected {partition.size} scores, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NumericalError("uncertainty scores must be finite")
    img = np.zeros((partition.height, partition.width), dtype=np.uint8)
    lo, hi = (v.min(), v.max()) if v.size else (0.0, 0.0)
    if hi > lo:
        img[partition.rows, partition.cols] = np.rint((v - lo) / (hi - lo) * 255.0).astype(np.uint8)
    return PixelGrid(img)


def predicted_image(analysis, grid):
    """``grid`` with every query pixel replaced by its integer prediction."""
    p = analysis.partition
    px = grid.pixels.astype(np.int64)
    px[p.rows, p.cols] = analysis.prediction
    return grid.with_pixels(px)


def _fmt(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".6g")


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def benchmark(grid, key, model, rates, seeds=range(20), orderings=ORDERINGS,
              percentiles=PERCENT_GRID):
    """RMSE curves and capacity-distortion rows for one image.

    The random-ordering RMSE curve is the mean over ``seeds``. Returns
    ``(rmse_rows, capacity_rows)`` matching the CSV schemas.
    """
    analysis = analyze(grid, key, model)
    y = analysis.query_values
    pred = analysis.prediction
    seeds = list(seeds)
    rmse_rows = []
    for name in orderings:
        if name == "random":
            curves = [rmse_curve(y, pred, random_order(len(y), s), percentiles) for s in seeds]
            curve = [(p, float(np.mean([c[i][1] for c in curves])))
                     for i, p in enumerate(percentiles)]
        else:
            curve = rmse_curve(y, pred, resolve_order(analysis, name), percentiles)
        rmse_rows += [(100.0 * p, r, name) for p, r in curve]

    capacity_rows = []
    for name in orderings:
        for s in seeds:
            for pt in capacity_distortion(grid, key, model, rates, name, s, analysis):
                capacity_rows.append((pt.bpp, pt.psnr, name, s))
    return rmse_rows, capacity_rows

