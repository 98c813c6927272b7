"""Noisy intensity measurement synthesis.

The measured intensities are ``y^2 = |Ax|^2 + w`` with signal-proportional
Gaussian noise ``w ~ N(0, alpha^2 diag(|Ax|^2))``, a standard normal
approximation of Poisson shot noise. Negative noisy intensities are clamped
to zero before the square root (physical intensities are non-negative); the
clamped fraction is recorded per measurement.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dprt
from .fields import RealImage, ShapeError
from .linops import LinearOperator


@dataclass(frozen=True)
class MeasurementSet:
    """Magnitude measurements plus the geometry needed to invert them."""

    y: np.ndarray
    alpha: float
    sigma_y: float = 0.0
    operator_id: str = "operator"
    geometry: dict = field(default_factory=dict)
    clamped_fraction: float = 0.0

    def __post_init__(self):
        arr = np.asarray(self.y, dtype=np.float64)
        if arr.ndim != 1:
            raise ShapeError(f"measurements must be a flat vector, got shape {arr.shape}")
        if np.any(arr < 0):
            raise ValueError("magnitudes must be non-negative")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        object.__setattr__(self, "y", arr)

    @property
    def m(self) -> int:
        return self.y.size


def simulate(x: RealImage, op: LinearOperator, alpha: float, seed) -> MeasurementSet:
    """Synthesize magnitudes for a single-channel image through ``op``.

    ``y_i = sqrt(max(|Ax|_i^2 + w_i, 0))`` with ``w_i ~ N(0, alpha^2 |Ax|_i^2)``;
    fully determined by ``seed``.
    """
    if x.channels != 1:
        raise ShapeError("simulate takes a single channel; use simulate_channels for RGB")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    vec = x.channel(0).ravel()
    if vec.size != op.in_dim:
        raise ShapeError(f"image size {vec.size} does not match operator in_dim {op.in_dim}")
    mag = np.abs(op.apply(vec.astype(np.complex128)))
    intensity_clean = mag**2
    if alpha == 0:
        return MeasurementSet(
            y=mag, alpha=0.0, operator_id=op.op_id, geometry=_geometry_of(op), clamped_fraction=0.0
        )
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(mag.size) * (alpha * mag)
    noisy = intensity_clean + w
    clamped = noisy < 0
    noisy[clamped] = 0.0
    return MeasurementSet(
        y=np.sqrt(noisy),
        alpha=float(alpha),
        operator_id=op.op_id,
        geometry=_geometry_of(op),
        clamped_fraction=float(np.mean(clamped)),
    )


def simulate_channels(x: RealImage, op: LinearOperator, alpha: float, seed: int) -> list[MeasurementSet]:
    """Per-channel simulation with independent noise draws per channel."""
    out = []
    for c in range(x.channels):
        chan = RealImage(x.channel(c)[:, :, None], x.range_tag)
        out.append(simulate(chan, op, alpha, seed=np.random.SeedSequence([int(seed), c])))
    return out


def intensity(mset: MeasurementSet) -> np.ndarray:
    """Measured intensities, the elementwise square of the magnitudes."""
    return mset.y**2


def _geometry_of(op: LinearOperator) -> dict:
    parts = op.op_id.split(":")
    if parts[0] == "fourier" and len(parts) >= 3:
        n_side = int(parts[1].split("x")[0])
        factor = int(parts[2].removeprefix("factor"))
        return {"kind": "fourier", "n_side": n_side, "factor": factor}
    return {"kind": "general", "m": op.out_dim, "n": op.in_dim}


def save_measurement(path_prefix: str | Path, mset: MeasurementSet, seed=None, extra: dict | None = None) -> tuple[Path, Path]:
    """Persist as a DPRT tensor plus a JSON sidecar; returns the two paths."""
    prefix = Path(path_prefix)
    tensor_path = prefix.parent / (prefix.name + ".dprt")
    sidecar_path = prefix.parent / (prefix.name + ".json")
    dprt.save(tensor_path, mset.y)
    sidecar = {
        "alpha": mset.alpha,
        "sigma_y": mset.sigma_y,
        "seed": seed,
        "operator_id": mset.operator_id,
        "geometry": mset.geometry,
        "clamped_fraction": mset.clamped_fraction,
        "tensor": tensor_path.name,
    }
    if extra:
        sidecar.update(extra)
    sidecar_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    return tensor_path, sidecar_path


def load_measurement(sidecar_path: str | Path) -> tuple[MeasurementSet, dict]:
    """Load a measurement from its JSON sidecar; returns (set, sidecar dict)."""
    sidecar_path = Path(sidecar_path)
    meta = json.loads(sidecar_path.read_text())
    y = dprt.load(sidecar_path.parent / meta["tensor"])
    mset = MeasurementSet(
        y=y,
        alpha=float(meta["alpha"]),
        sigma_y=float(meta.get("sigma_y", 0.0)),
        operator_id=meta["operator_id"],
        geometry=meta["geometry"],
        clamped_fraction=float(meta.get("clamped_fraction", 0.0)),
    )
    return mset, meta
