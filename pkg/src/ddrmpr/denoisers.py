"""Denoiser boundary: builtin baselines and the remote protocol client.

A denoiser maps a noisy VP-coordinate image (symmetric [-1, 1] range) at
noise level sigma_t to an estimate of the clean image in the same range.
Builtins rescale to the sigma-parameterization ``z = x / sqrt(alpha_t)``
(so z = x0 + sigma_t * noise) before filtering:

* ``identity``  - clamp only; degenerate baseline.
* ``gaussian``  - circular Gaussian blur with width proportional to sigma_t.
* ``shrinkage`` - cycle-spun Haar soft-thresholding at ``c * sigma_t``; the
  spin average over the decimation lattice makes it exactly equivariant to
  circular shifts.
* ``oracle``    - returns the carried ground truth; test/bench only, refuses
  to construct unless the DDRMPR_ORACLE_DENOISER environment flag is set.
* ``remote``    - DNZ1 protocol client (TCP or stdio subprocess).

All builtins are deterministic and channelwise.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .fields import ShapeError
from .protocol import DnzClient

GAUSSIAN_WIDTH_SCALE = 1.5
SHRINKAGE_THRESHOLD_SCALE = 1.0
SHRINKAGE_MAX_LEVELS = 3

ORACLE_ENV_FLAG = "DDRMPR_ORACLE_DENOISER"


@dataclass(frozen=True)
class DenoiseRequest:
    """One denoising query in VP coordinates."""

    x: np.ndarray
    t_index: int
    sigma_t: float
    alpha_t: float

    def __post_init__(self):
        arr = np.asarray(self.x, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ShapeError(f"expected (H, W, C) input, got shape {arr.shape}")
        if self.sigma_t < 0 or not (0.0 < self.alpha_t <= 1.0):
            raise ValueError("need sigma_t >= 0 and alpha_t in (0, 1]")
        if abs(self.alpha_t * (1.0 + self.sigma_t**2) - 1.0) > 1e-9:
            raise ValueError("sigma_t and alpha_t are inconsistent")
        object.__setattr__(self, "x", arr)


@dataclass(frozen=True)
class DenoiserHandle:
    """Immutable, shareable reference to a denoiser."""

    id: str
    kind: str
    geometry: tuple[int, int, int] | None = None
    params: dict = field(default_factory=dict)

    def close(self):
        client = self.params.get("client")
        if client is not None:
            client.close()


def make_denoiser(spec: str, geometry: tuple[int, int, int] | None = None) -> DenoiserHandle:
    """Build a handle from a spec string.

    ``identity`` / ``gaussian`` / ``shrinkage`` select builtins; anything of
    the form ``host:port`` or ``stdio:CMD`` opens a remote DNZ1 endpoint.
    The oracle kind has its own constructor since it carries data.
    """
    if spec in ("identity", "gaussian", "shrinkage"):
        return DenoiserHandle(id=spec, kind=spec, geometry=geometry)
    if spec == "oracle":
        raise ValueError("oracle denoisers carry ground truth; use make_oracle_denoiser")
    if spec.startswith("stdio:") or ":" in spec:
        client = DnzClient(spec)
        return DenoiserHandle(id=spec, kind="remote", geometry=geometry, params={"client": client})
    raise ValueError(f"unknown denoiser spec {spec!r}")


def make_oracle_denoiser(truth_unit: np.ndarray) -> DenoiserHandle:
    """Ground-truth denoiser for validation runs.

    Exists to exercise the sampler's fixed-point behavior; refuses to
    construct unless the test/bench flag is set in the environment.
    """
    if os.environ.get(ORACLE_ENV_FLAG) != "1":
        raise RuntimeError(
            f"oracle denoiser is test/bench only; set {ORACLE_ENV_FLAG}=1 to enable"
        )
    arr = np.asarray(truth_unit, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return DenoiserHandle(
        id="oracle", kind="oracle", geometry=arr.shape, params={"truth_unit": arr}
    )


def denoise(h: DenoiserHandle, req: DenoiseRequest) -> np.ndarray:
    """Run one request; output has the input's shape, clamped to [-1, 1]."""
    if h.geometry is not None and tuple(req.x.shape) != tuple(h.geometry):
        raise ShapeError(f"request shape {req.x.shape} != denoiser geometry {h.geometry}")
    if h.kind == "identity":
        out = req.x
    elif h.kind == "gaussian":
        out = _gaussian_estimate(req)
    elif h.kind == "shrinkage":
        out = _shrinkage_estimate(req)
    elif h.kind == "oracle":
        truth = h.params["truth_unit"]
        if truth.shape != req.x.shape:
            raise ShapeError(f"oracle truth shape {truth.shape} != request {req.x.shape}")
        out = 2.0 * truth - 1.0
    elif h.kind == "remote":
        out = h.params["client"].denoise(req.x, req.t_index, req.sigma_t, req.alpha_t)
    else:
        raise ValueError(f"unknown denoiser kind {h.kind!r}")
    return np.clip(out, -1.0, 1.0)


def denoise_batch(h: DenoiserHandle, reqs: list[DenoiseRequest]) -> list[np.ndarray]:
    """Map ``denoise`` over homogeneous requests; any failure fails the batch."""
    if not reqs:
        return []
    shape = reqs[0].x.shape
    for r in reqs[1:]:
        if r.x.shape != shape:
            raise ShapeError("batch requests must share one shape")
    return [denoise(h, r) for r in reqs]


def as_sampler_fn(h: DenoiserHandle, shape: tuple[int, ...]):
    """Adapt an image denoiser to the flat-vector sampler interface."""

    def fn(x_vp: np.ndarray, t_index: int, sigma_t: float, alpha_t: float) -> np.ndarray:
        img = np.asarray(x_vp).reshape(shape)
        out = denoise(h, DenoiseRequest(img, t_index, sigma_t, alpha_t))
        return out.reshape(np.asarray(x_vp).shape)

    return fn


def _gaussian_estimate(req: DenoiseRequest) -> np.ndarray:
    z = req.x / np.sqrt(req.alpha_t)
    width = GAUSSIAN_WIDTH_SCALE * req.sigma_t
    if width == 0.0:
        return z
    # wrap mode keeps the blur a circular convolution, hence shift-equivariant
    return gaussian_filter(z, sigma=(width, width, 0.0), mode="wrap", truncate=4.0)


def _shrinkage_estimate(req: DenoiseRequest) -> np.ndarray:
    z = req.x / np.sqrt(req.alpha_t)
    tau = SHRINKAGE_THRESHOLD_SCALE * req.sigma_t
    if tau == 0.0:
        return z
    out = np.empty_like(z)
    for c in range(z.shape[2]):
        out[:, :, c] = _cycle_spun_haar_shrink(z[:, :, c], tau)
    return out


def _haar_levels(h: int, w: int) -> int:
    levels = 0
    while levels < SHRINKAGE_MAX_LEVELS and h % 2 == 0 and w % 2 == 0 and min(h, w) > 1:
        levels += 1
        h //= 2
        w //= 2
    return levels


def _haar2_forward(a: np.ndarray, levels: int) -> list:
    """Orthonormal 2-D Haar analysis; returns [LL, (HL, LH, HH) per level]."""
    bands = []
    cur = a
    for _ in range(levels):
        lo_c = (cur[:, 0::2] + cur[:, 1::2]) / np.sqrt(2.0)
        hi_c = (cur[:, 0::2] - cur[:, 1::2]) / np.sqrt(2.0)
        ll = (lo_c[0::2, :] + lo_c[1::2, :]) / np.sqrt(2.0)
        lh = (lo_c[0::2, :] - lo_c[1::2, :]) / np.sqrt(2.0)
        hl = (hi_c[0::2, :] + hi_c[1::2, :]) / np.sqrt(2.0)
        hh = (hi_c[0::2, :] - hi_c[1::2, :]) / np.sqrt(2.0)
        bands.append((hl, lh, hh))
        cur = ll
    return [cur, bands]


def _haar2_inverse(ll: np.ndarray, bands: list) -> np.ndarray:
    cur = ll
    for hl, lh, hh in reversed(bands):
        lo_c = np.empty((cur.shape[0] * 2, cur.shape[1]))
        lo_c[0::2, :] = (cur + lh) / np.sqrt(2.0)
        lo_c[1::2, :] = (cur - lh) / np.sqrt(2.0)
        hi_c = np.empty_like(lo_c)
        hi_c[0::2, :] = (hl + hh) / np.sqrt(2.0)
        hi_c[1::2, :] = (hl - hh) / np.sqrt(2.0)
        out = np.empty((lo_c.shape[0], lo_c.shape[1] * 2))
        out[:, 0::2] = (lo_c + hi_c) / np.sqrt(2.0)
        out[:, 1::2] = (lo_c - hi_c) / np.sqrt(2.0)
        cur = out
    return cur


def _soft(a: np.ndarray, tau: float) -> np.ndarray:
    return np.sign(a) * np.maximum(np.abs(a) - tau, 0.0)


def _cycle_spun_haar_shrink(z: np.ndarray, tau: float) -> np.ndarray:
    """Average Haar soft-thresholding over the decimation lattice.

    Spinning over all (dy, dx) offsets modulo 2^levels restores exact
    circular-shift equivariance of the otherwise shift-variant decimated
    transform.
    """
    levels = _haar_levels(*z.shape)
    if levels == 0:
        return z
    step = 2**levels
    acc = np.zeros_like(z)
    for dy in range(step):
        for dx in range(step):
            shifted = np.roll(z, (-dy, -dx), axis=(0, 1))
            ll, bands = _haar2_forward(shifted, levels)
            bands = [tuple(_soft(b, tau) for b in triple) for triple in bands]
            rec = _haar2_inverse(ll, bands)
            acc += np.roll(rec, (dy, dx), axis=(0, 1))
    return acc / step**2
