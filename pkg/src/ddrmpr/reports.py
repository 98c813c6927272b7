"""Raster I/O and matplotlib report figures.

Every CLI task writes delimited output (CSV) plus a rendered figure next to
it. Figures use the Agg backend and carry no timestamps so reruns are
byte-stable.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from PIL import Image

_PNG_META = {"Software": "ddrmpr"}


def load_raster(path: str | Path) -> np.ndarray:
    """8-bit grayscale or RGB raster to unit-range float (H, W, C)."""
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if im.mode in ("RGBA", "P", "CMYK") else "L")
        arr = np.asarray(im, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def save_raster(path: str | Path, unit_img: np.ndarray) -> None:
    arr = np.asarray(unit_img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    data = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="L" if data.ndim == 2 else "RGB").save(path, format="PNG")


def write_csv(path: str | Path, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _save(fig, path: str | Path) -> None:
    fig.savefig(path, dpi=110, format="png", metadata=_PNG_META)
    plt.close(fig)


def residual_trace_figure(path: str | Path, traces: dict[str, np.ndarray]) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, trace in traces.items():
        ax.semilogy(np.arange(1, len(trace) + 1), trace, label=label, lw=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("measurement residual")
    ax.grid(True, which="both", alpha=0.3)
    if traces:
        ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def comparison_figure(path: str | Path, panels: dict[str, np.ndarray]) -> None:
    """Side-by-side grayscale/RGB panels, one per labeled image."""
    n = len(panels)
    fig, axes = plt.subplots(1, n, figsize=(2.6 * n, 2.9))
    if n == 1:
        axes = [axes]
    for ax, (label, img) in zip(axes, panels.items()):
        arr = np.asarray(img)
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        ax.imshow(np.clip(arr, 0, 1), cmap="gray", vmin=0, vmax=1, interpolation="nearest")
        ax.set_title(label, fontsize=9)
        ax.axis("off")
    fig.tight_layout()
    _save(fig, path)


def spectrum_figure(path: str | Path, magnitudes: np.ndarray) -> None:
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    shifted = np.fft.fftshift(magnitudes)
    im = ax.imshow(np.log10(1.0 + shifted), cmap="magma", interpolation="nearest")
    ax.set_title("log measured magnitudes", fontsize=9)
    ax.axis("off")
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    _save(fig, path)


def metrics_figure(path: str | Path, rows: list[dict]) -> None:
    """Bar chart of per-image PSNR with the SSIM on a twin axis."""
    fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * len(rows) + 2), 4))
    ids = [str(r["image_id"]) for r in rows]
    x = np.arange(len(rows))
    ax.bar(x - 0.18, [r["psnr"] for r in rows], width=0.36, label="PSNR (dB)", color="#3465a4")
    ax.set_ylabel("PSNR (dB)")
    ax.set_xticks(x)
    ax.set_xticklabels(ids, rotation=30, ha="right", fontsize=7)
    ax2 = ax.twinx()
    ax2.bar(x + 0.18, [r["ssim"] for r in rows], width=0.36, label="SSIM", color="#f57900")
    ax2.set_ylabel("SSIM")
    ax2.set_ylim(0, 1.05)
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def grid_scores_figure(path: str | Path, rows: list[dict], objective: str) -> None:
    fig, ax = plt.subplots(figsize=(max(4.0, 0.4 * len(rows) + 2), 4))
    key = "mean_psnr" if objective == "psnr" else "mean_ssim"
    vals = [r[key] for r in rows]
    ax.plot(np.arange(len(rows)), vals, "o-", ms=4)
    ax.set_xlabel("grid cell (declared order)")
    ax.set_ylabel(f"mean {objective}")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path)
