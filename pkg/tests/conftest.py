import os

import numpy as np
import pytest

# the oracle denoiser is gated behind this test/bench flag
os.environ.setdefault("DDRMPR_ORACLE_DENOISER", "1")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pad_corner(img: np.ndarray, factor: int = 2) -> np.ndarray:
    h, w = img.shape
    out = np.zeros((factor * h, factor * w))
    out[:h, :w] = img
    return out


def oversampled_magnitudes(img: np.ndarray, factor: int = 2) -> np.ndarray:
    return np.abs(np.fft.fft2(pad_corner(img, factor), norm="ortho"))
