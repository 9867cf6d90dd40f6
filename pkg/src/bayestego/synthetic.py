"""Seeded synthetic greyscale test images.

Smooth shading, hard-edged shapes, textured patches and sensor noise, so
that prediction difficulty varies across the image the way it does in
photographs.
"""

import numpy as np

from .grid import PixelGrid


def synthetic_image(height=64, width=64, seed=0, noise=1.5, texture_patches=3,
                    saturate=False):
    rng = np.random.default_rng(seed)
    r, c = np.mgrid[0:height, 0:width].astype(np.float64)
    r /= height
    c /= width

    img = rng.uniform(70, 180) + rng.uniform(-50, 50) * r + rng.uniform(-50, 50) * c
    for _ in range(3):
        fr, fc = rng.uniform(0.3, 2.0, size=2)
        img += rng.uniform(5, 25) * np.cos(2 * np.pi * (fr * r + fc * c) + rng.uniform(0, 2 * np.pi))

    for _ in range(rng.integers(2, 5)):
        cr, cc = rng.uniform(0, 1, size=2)
        rad = rng.uniform(0.08, 0.25)
        disc = (r - cr) ** 2 + (c - cc) ** 2 < rad ** 2
        img[disc] += rng.uniform(-60, 60)

    for _ in range(texture_patches):
        h = rng.integers(height // 8, height // 3 + 1)
        w = rng.integers(width // 8, width // 3 + 1)
        top = rng.integers(0, height - h + 1)
        left = rng.integers(0, width - w + 1)
        amp = rng.uniform(8, 30)
        patch = amp * rng.standard_normal((h, w))
        if rng.random() < 0.5:
            fr, fc = rng.uniform(2, 8, size=2) * np.array([height, width]) / 16
            patch = amp * np.sin(2 * np.pi * (fr * r[top:top + h, left:left + w]
                                              + fc * c[top:top + h, left:left + w]))
        img[top:top + h, left:left + w] += patch

    img += noise * rng.standard_normal(img.shape)
    if saturate:
        img = (img - img.mean()) * 1.8 + 128
    return PixelGrid(np.clip(np.rint(img), 0, 255).astype(np.uint8))


def random_noise_image(height=64, width=64, seed=0):
    rng = np.random.default_rng(seed)
    return PixelGrid(rng.integers(0, 256, size=(height, width), dtype=np.uint8))
