"""Real/complex grid types and unitary 2-D Fourier transforms.

All spatial iterates are real-valued grids; Fourier-domain quantities are
complex grids of the oversampled size. The DFT is unitary (1/sqrt(m) in both
directions) so that the transform is an isometry: Parseval holds exactly and
pseudoinverse algebra stays free of scale factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

UNIT = "unit"
SYMMETRIC = "symmetric"

_RANGE_TAGS = (UNIT, SYMMETRIC)


class ShapeError(ValueError):
    """Raised when grid dimensions do not match an operation's contract."""


@dataclass(frozen=True)
class RealImage:
    """Real-valued H x W x C grid with a declared value range.

    ``data`` is float64, row-major, shape (H, W, C) with C in {1, 3}.
    ``range_tag`` declares the nominal value range: ``unit`` for [0, 1]
    (spatial reconstructions) or ``symmetric`` for [-1, 1] (denoiser
    coordinates). The tag is honored by clamping helpers, not enforced on
    raw data.
    """

    data: np.ndarray
    range_tag: str = UNIT

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ShapeError(f"expected (H, W, C) data, got shape {arr.shape}")
        if arr.shape[2] not in (1, 3):
            raise ShapeError(f"channels must be 1 or 3, got {arr.shape[2]}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image data contains non-finite values")
        if self.range_tag not in _RANGE_TAGS:
            raise ValueError(f"unknown range tag {self.range_tag!r}")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def channel(self, c: int) -> np.ndarray:
        """2-D view of channel ``c``."""
        return self.data[:, :, c]

    def clamped(self) -> "RealImage":
        """Clamp data to the declared range."""
        lo, hi = (0.0, 1.0) if self.range_tag == UNIT else (-1.0, 1.0)
        return RealImage(np.clip(self.data, lo, hi), self.range_tag)


@dataclass(frozen=True)
class ComplexField:
    """Complex H x W grid holding Fourier-domain quantities."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.complex128)
        if arr.ndim != 2:
            raise ShapeError(f"expected (H, W) complex data, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field data contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class SupportMask:
    """Boolean per-pixel support on the oversampled grid."""

    inside: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.inside, dtype=bool)
        if arr.ndim != 2:
            raise ShapeError(f"expected (H, W) mask, got shape {arr.shape}")
        if not arr.any():
            raise ValueError("support mask must contain at least one inside pixel")
        object.__setattr__(self, "inside", arr)

    @property
    def height(self) -> int:
        return self.inside.shape[0]

    @property
    def width(self) -> int:
        return self.inside.shape[1]


def corner_support(inner_shape: tuple[int, int], grid_shape: tuple[int, int]) -> SupportMask:
    """Support covering the top-left ``inner_shape`` corner of ``grid_shape``."""
    ih, iw = inner_shape
    gh, gw = grid_shape
    if ih > gh or iw > gw:
        raise ShapeError(f"inner shape {inner_shape} exceeds grid {grid_shape}")
    mask = np.zeros((gh, gw), dtype=bool)
    mask[:ih, :iw] = True
    return SupportMask(mask)


def _single_channel_2d(img: RealImage | np.ndarray) -> np.ndarray:
    if isinstance(img, RealImage):
        if img.channels != 1:
            raise ShapeError("Fourier operations take single-channel images")
        return img.channel(0)
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-D grid, got shape {arr.shape}")
    return arr


def dft2_unitary(img: RealImage | np.ndarray) -> ComplexField:
    """Unitary 2-D DFT of a single-channel grid.

    The input is expected to already be zero-padded to the oversampled size;
    ``pad_to_oversampled`` produces that layout. Unitary normalization means
    ``||F x||_2 == ||x||_2`` exactly (Parseval).
    """
    grid = _single_channel_2d(img)
    return ComplexField(np.fft.fft2(grid, norm="ortho"))


def idft2_unitary(field: ComplexField | np.ndarray) -> ComplexField:
    """Inverse unitary 2-D DFT; exact round trip with :func:`dft2_unitary`."""
    arr = field.data if isinstance(field, ComplexField) else np.asarray(field, dtype=np.complex128)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-D field, got shape {arr.shape}")
    return ComplexField(np.fft.ifft2(arr, norm="ortho"))


def pad_to_oversampled(img: RealImage, factor: int = 2) -> RealImage:
    """Zero-pad each channel to ``factor`` times its side lengths.

    The original content stays in the top-left corner; the companion
    :func:`corner_support` mask records it.
    """
    if factor < 1:
        raise ValueError(f"oversampling factor must be >= 1, got {factor}")
    h, w, c = img.data.shape
    out = np.zeros((factor * h, factor * w, c), dtype=np.float64)
    out[:h, :w, :] = img.data
    return RealImage(out, img.range_tag)


def magnitude(field: ComplexField) -> RealImage:
    """Elementwise modulus of a complex field, as a single-channel image."""
    return RealImage(np.abs(field.data)[:, :, None], UNIT)


def to_vp(x: np.ndarray) -> np.ndarray:
    """Map unit-range values to the symmetric [-1, 1] denoiser range."""
    return 2.0 * np.asarray(x, dtype=np.float64) - 1.0


def from_vp(x: np.ndarray) -> np.ndarray:
    """Map symmetric-range values back to unit range, clamping to [0, 1]."""
    return np.clip((np.asarray(x, dtype=np.float64) + 1.0) / 2.0, 0.0, 1.0)
