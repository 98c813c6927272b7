"""Denoising backends served over DNZ1.

``gaussian`` is the CI fallback: a circular Gaussian blur whose width scales
with the requested noise level, matching the client-side builtin. ``echo``
returns payloads untouched (protocol testing). ``checkpoint`` wraps a
TorchScript diffusion UNet; networks that predict the injected noise are
converted to clean-image estimates before responding.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

GAUSSIAN_WIDTH_SCALE = 1.5
GAUSSIAN_TRUNCATE = 4.0
DEFAULT_SCHEDULE_T = 1000


def convert_eps_to_x0(x_t: np.ndarray, eps_hat: np.ndarray, alpha_t: float) -> np.ndarray:
    """Noise prediction to clean-image estimate: ``(x_t - sqrt(1-a) e) / sqrt(a)``.

    Inverse of the forward draw ``x_t = sqrt(a) x0 + sqrt(1-a) e``; the
    result is clamped to the symmetric value range.
    """
    if not (0.0 < alpha_t < 1.0):
        raise ValueError(f"alpha_t must be strictly inside (0, 1), got {alpha_t}")
    x0 = (np.asarray(x_t) - np.sqrt(1.0 - alpha_t) * np.asarray(eps_hat)) / np.sqrt(alpha_t)
    return np.clip(x0, -1.0, 1.0)


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(GAUSSIAN_TRUNCATE * sigma + 0.5)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _circular_blur_2d(plane: np.ndarray, sigma: float) -> np.ndarray:
    """Separable circular convolution with the truncated Gaussian kernel."""
    kernel = _gaussian_kernel(sigma)
    r = kernel.size // 2
    out = plane
    for axis in (0, 1):
        moved = np.moveaxis(out, axis, 0)
        padded = np.pad(moved, [(r, r)] + [(0, 0)] * (moved.ndim - 1), mode="wrap")
        acc = np.zeros_like(moved)
        for i, wgt in enumerate(kernel):
            acc += wgt * padded[i : i + moved.shape[0]]
        out = np.moveaxis(acc, 0, axis)
    return out


class EchoModel:
    model_id = "echo"
    geometry = (0, 0, 0)
    schedule_t = DEFAULT_SCHEDULE_T

    def denoise_batch(self, tensors, t_indices, sigmas, alphas):
        return [t.copy() for t in tensors]


class GaussianModel:
    """Blur the sigma-rescaled input; width is proportional to sigma_t."""

    model_id = "gaussian"
    geometry = (0, 0, 0)
    schedule_t = DEFAULT_SCHEDULE_T

    def denoise_batch(self, tensors, t_indices, sigmas, alphas):
        out = []
        for x, sigma, alpha in zip(tensors, sigmas, alphas):
            z = x / np.sqrt(alpha)
            width = GAUSSIAN_WIDTH_SCALE * sigma
            if width > 0.0:
                z = np.stack(
                    [_circular_blur_2d(z[:, :, c], width) for c in range(z.shape[2])], axis=2
                )
            out.append(np.clip(z, -1.0, 1.0))
        return out


class CheckpointModel:
    """TorchScript checkpoint host.

    The module is treated as opaque configuration: it must accept a float
    tensor batch (N, C, H, W) plus a long tensor of timestep indices and
    return either clean-image estimates or noise predictions
    (``prediction='eps'``). The client's sigma is mapped to the nearest
    entry of the checkpoint's own sigma ladder for the timestep argument.
    """

    def __init__(self, path: str, prediction: str = "eps", schedule_t: int = DEFAULT_SCHEDULE_T):
        try:
            import torch
        except ImportError as err:  # startup abort, per the serve contract
            raise RuntimeError("checkpoint serving requires torch") from err
        self._torch = torch
        self.module = torch.jit.load(path, map_location="cpu").eval()
        self.prediction = prediction
        self.model_id = f"checkpoint:{Path(path).name}"
        self.geometry = (0, 0, 0)
        self.schedule_t = schedule_t
        ladder_path = Path(path).with_suffix(".sigmas.json")
        if ladder_path.exists():
            self.sigma_ladder = np.asarray(json.loads(ladder_path.read_text()), dtype=np.float64)
        else:
            self.sigma_ladder = None

    def _nearest_index(self, sigma: float, t_index: int) -> int:
        if self.sigma_ladder is None:
            return int(t_index)
        return int(np.argmin(np.abs(self.sigma_ladder - sigma)))

    def denoise_batch(self, tensors, t_indices, sigmas, alphas):
        torch = self._torch
        batch = torch.from_numpy(np.stack(tensors).transpose(0, 3, 1, 2)).float()
        steps = torch.tensor(
            [self._nearest_index(s, t) for s, t in zip(sigmas, t_indices)], dtype=torch.long
        )
        with torch.no_grad():
            pred = self.module(batch, steps).cpu().numpy().transpose(0, 2, 3, 1)
        out = []
        for x, p, alpha in zip(tensors, pred, alphas):
            if self.prediction == "eps":
                out.append(convert_eps_to_x0(x, p.astype(np.float64), alpha))
            else:
                out.append(np.clip(p.astype(np.float64), -1.0, 1.0))
        return out


def load_model(source: str, prediction: str = "eps"):
    if source == "echo":
        return EchoModel()
    if source == "gaussian":
        return GaussianModel()
    return CheckpointModel(source, prediction=prediction)
