"""Reproducible synthetic test scenes.

Desk-scale stand-ins for natural images: smooth blob scenes for recovery
tests and piecewise-constant block scenes for prior-driven denoising tests.
All generators are deterministic in the seed and return unit-range arrays.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _keyed_rng(label: str, *parts: int) -> np.random.Generator:
    tag = int.from_bytes(hashlib.sha256(label.encode()).digest()[:4], "little")
    return np.random.default_rng(np.random.SeedSequence([tag, *map(int, parts)]))


def blob_scene(side: int, seed: int, n_blobs: int = 4, channels: int = 1) -> np.ndarray:
    """Sum of random Gaussian bumps on a dark background, scaled to [0, 0.9]."""
    rng = _keyed_rng("blobs", side, seed)
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    out = np.zeros((side, side, channels))
    for c in range(channels):
        img = np.zeros((side, side))
        for _ in range(n_blobs):
            cy, cx = rng.uniform(side * 0.2, side * 0.8, size=2)
            w = rng.uniform(side * 0.06, side * 0.18)
            amp = rng.uniform(0.4, 1.0)
            img += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * w**2))
        peak = img.max()
        if peak > 0:
            img *= 0.9 / peak
        out[:, :, c] = img
    return out


def block_scene(side: int, seed: int, n_blocks: int = 5, channels: int = 1) -> np.ndarray:
    """Piecewise-constant scene: random axis-aligned rectangles on black."""
    rng = _keyed_rng("blocks", side, seed)
    out = np.zeros((side, side, channels))
    for c in range(channels):
        img = np.zeros((side, side))
        for _ in range(n_blocks):
            h = rng.integers(side // 6, side // 2 + 1)
            w = rng.integers(side // 6, side // 2 + 1)
            r = rng.integers(0, side - h + 1)
            q = rng.integers(0, side - w + 1)
            img[r : r + h, q : q + w] = rng.uniform(0.25, 0.9)
        out[:, :, c] = img
    return out


def smooth_field(side: int, seed: int, channels: int = 1) -> np.ndarray:
    """Slowly varying field built from a few low spatial frequencies."""
    rng = _keyed_rng("smooth", side, seed)
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64) / side
    out = np.zeros((side, side, channels))
    for c in range(channels):
        img = np.zeros((side, side))
        for _ in range(3):
            fy, fx = rng.integers(1, 3, size=2)
            ph = rng.uniform(0, 2 * np.pi, size=2)
            img += rng.uniform(0.3, 1.0) * np.cos(2 * np.pi * fy * yy + ph[0]) * np.cos(
                2 * np.pi * fx * xx + ph[1]
            )
        img -= img.min()
        if img.max() > 0:
            img *= 0.9 / img.max()
        out[:, :, c] = img
    return out
