"""Nonlinear posterior sampling for phase retrieval.

The linear sampler's pseudoinverse pair is replaced by alternating
projections: an inner AP run plays the role of ``H^+`` applied to the
magnitudes of the current denoised estimate, and a cached multi-start AP
reconstruction of the measured data plays the role of ``H^+ y``:

    x' = x0hat - AP(|A x0hat|) + RandomInit(y)
    x_t = sqrt(a_t) (eta_b x' + (1 - eta_b) x0hat)
          + sqrt(1 - a_t) (eta e_t + (1 - eta) e_hat)

When the denoised estimate is measurement-consistent and feasible the inner
AP run fixes it, so x' collapses to the cached reconstruction. RandomInit is
computed once per measurement channel and reused bit-identically across all
timesteps and averaged trajectories. With eta_b = 0 the blend ignores x'
entirely and the AP machinery is skipped.

Each of the ``n_avg`` trajectories runs from an independent stream keyed by
(seed, trajectory); outputs are ambiguity-aligned to the first before the
pixelwise mean, since averaging across different circular shifts would
destroy structure.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .alternating import (
    ConstraintSet,
    HioParams,
    RandomInitParams,
    ap_general_run,
    hio_run,
    random_init,
    residual,
)
from .ddrm import (
    DdrmState,
    DenoiseFn,
    NoiseSchedule,
    SamplerConfig,
    epsilon_estimate,
    timestep_knots,
)
from .fields import RealImage, corner_support, from_vp, to_vp
from .linops import CgOptions, LinearOperator
from .metrics import align_ambiguities, psnr, ssim
from .forward import MeasurementSet


@dataclass(frozen=True)
class PrPipelineConfig:
    """Everything needed to reconstruct one measurement set."""

    sampler: SamplerConfig
    hio_inner_iters: int = 100
    random_init: RandomInitParams = field(default_factory=RandomInitParams)
    beta: float = 0.9
    nonneg: bool = True
    real_valued: bool = True
    ap_mode: str = "hio"  # hio | general
    inner_start: str = "denoised"  # denoised | state: where the inner AP run starts
    residual_on: str = "magnitude"

    def __post_init__(self):
        if self.hio_inner_iters < 1:
            raise ValueError("hio_inner_iters must be >= 1")
        if self.ap_mode not in ("hio", "general"):
            raise ValueError(f"unknown ap_mode {self.ap_mode!r}")
        if self.inner_start not in ("denoised", "state"):
            raise ValueError(f"unknown inner_start {self.inner_start!r}")


@dataclass(frozen=True)
class GridSpec:
    """Axes of the linear grid search, in declared order."""

    axes: dict
    objective: str = "psnr"

    def __post_init__(self):
        if not self.axes or any(len(v) == 0 for v in self.axes.values()):
            raise ValueError("every grid axis needs at least one value")
        known = {"eta", "eta_b", "steps", "t_init", "n_avg"}
        unknown = set(self.axes) - known
        if unknown:
            raise ValueError(f"unknown grid axes {sorted(unknown)}")
        if self.objective not in ("psnr", "ssim"):
            raise ValueError(f"objective must be psnr or ssim, got {self.objective!r}")


def average_samples(samples: list[np.ndarray], align: bool = True) -> np.ndarray:
    """Pixelwise mean; samples are ambiguity-aligned to the first one."""
    if not samples:
        raise ValueError("need at least one sample")
    ref = np.asarray(samples[0], dtype=np.float64)
    acc = ref.copy()
    for s in samples[1:]:
        arr = np.asarray(s, dtype=np.float64)
        if arr.shape != ref.shape:
            raise ValueError("samples must share one shape")
        if align:
            arr = align_ambiguities(arr, ref)[0]
            arr = arr.reshape(ref.shape)
        acc += arr
    return acc / len(samples)


def ddrm_pr_step(
    state: DdrmState,
    cfg: PrPipelineConfig,
    schedule: NoiseSchedule,
    denoiser_fn: DenoiseFn,
    cached_init_unit: np.ndarray,
    inner_solver,
    t_next: int,
    noise: np.ndarray | None = None,
) -> DdrmState:
    """One reverse transition of the nonlinear update.

    ``inner_solver(magnitudes, start_unit)`` runs the inner AP method for the
    configured iteration count and returns a unit-range image on the signal
    grid; ``cached_init_unit`` is the precomputed multi-start reconstruction.
    """
    t_cur = state.t
    a_cur, a_next = schedule.alphas[t_cur], schedule.alphas[t_next]
    sampler = cfg.sampler
    x_theta = denoiser_fn(state.x, t_cur, schedule.sigmas[t_cur], a_cur)
    eps_theta = epsilon_estimate(state.x, x_theta, a_cur)

    if sampler.eta_b != 0.0:
        f_unit = from_vp(x_theta)
        inner_y = inner_solver.measure(f_unit)
        start = f_unit if cfg.inner_start == "denoised" else from_vp(state.x)
        ap_unit = inner_solver.run(inner_y, start)
        x_prime = 2.0 * (f_unit - ap_unit + cached_init_unit) - 1.0
        blend = sampler.eta_b * x_prime + (1.0 - sampler.eta_b) * x_theta
    else:
        blend = x_theta

    eps_t = state.rng.standard_normal(np.shape(x_theta)) if noise is None else noise
    noise_term = sampler.eta * eps_t + (1.0 - sampler.eta) * eps_theta
    x_new = np.sqrt(a_next) * blend + np.sqrt(1.0 - a_next) * noise_term
    return DdrmState(x=x_new, t=t_next, rng=state.rng, last_eps=eps_t)


class FourierInnerSolver:
    """Inner HIO machinery on the oversampled grid for one channel geometry."""

    def __init__(self, n_side: int, factor: int, cfg: PrPipelineConfig):
        self.n_side = n_side
        self.factor = factor
        self.m_side = n_side * factor
        self.support = corner_support((n_side, n_side), (self.m_side, self.m_side))
        self.cons = ConstraintSet(
            support=self.support, nonneg=cfg.nonneg, real_valued=cfg.real_valued
        )
        self.params = HioParams(beta=cfg.beta, iters=cfg.hio_inner_iters)

    def _pad(self, img: np.ndarray) -> np.ndarray:
        out = np.zeros((self.m_side, self.m_side))
        out[: self.n_side, : self.n_side] = img.reshape(self.n_side, self.n_side)
        return out

    def measure(self, unit_img: np.ndarray) -> np.ndarray:
        return np.abs(np.fft.fft2(self._pad(unit_img), norm="ortho"))

    def run(self, magnitudes: np.ndarray, start_unit: np.ndarray) -> np.ndarray:
        out, _ = hio_run(magnitudes, self._pad(start_unit), self.params, self.cons)
        return out[: self.n_side, : self.n_side].ravel().reshape(np.shape(start_unit))

    def random_init(self, y2d: np.ndarray, params: RandomInitParams):
        full, trace = random_init(y2d, params, self.cons, beta=self.params.beta, return_trace=True)
        return full[: self.n_side, : self.n_side], trace

    def residual_of(self, y2d: np.ndarray, unit_img: np.ndarray, on: str) -> float:
        return residual(y2d, self._pad(unit_img), on=on)


class GeneralInnerSolver:
    """Inner AP machinery for an arbitrary operator on flat signal vectors."""

    def __init__(self, op: LinearOperator, cfg: PrPipelineConfig, cg_opts: CgOptions | None = None):
        self.op = op
        self.cons = (
            ConstraintSet(support=None, nonneg=cfg.nonneg, real_valued=cfg.real_valued)
            if (cfg.nonneg or cfg.real_valued)
            else None
        )
        self.iters = cfg.hio_inner_iters
        self.cg_opts = cg_opts
        # HIO-style feedback when spatial constraints exist, plain projection otherwise
        self.feedback_beta = cfg.beta if (cfg.ap_mode == "hio" and self.cons is not None) else None

    def measure(self, unit_img: np.ndarray) -> np.ndarray:
        return np.abs(self.op.apply(np.asarray(unit_img).ravel().astype(np.complex128)))

    def run(self, magnitudes: np.ndarray, start_unit: np.ndarray) -> np.ndarray:
        out, _ = ap_general_run(
            magnitudes,
            self.op,
            np.asarray(start_unit).ravel(),
            self.iters,
            cons=self.cons,
            cg_opts=self.cg_opts,
            feedback_beta=self.feedback_beta,
        )
        return np.abs(out).reshape(np.shape(start_unit)) if np.iscomplexobj(out) else out.reshape(np.shape(start_unit))

    def random_init(self, y: np.ndarray, params: RandomInitParams):
        cons = self.cons if self.cons is not None else ConstraintSet(support=None, nonneg=False, real_valued=True)
        out, trace = random_init(
            y,
            params,
            cons,
            op=self.op,
            method="ap",
            cg_opts=self.cg_opts,
            feedback_beta=self.feedback_beta,
            return_trace=True,
        )
        return (np.abs(out) if np.iscomplexobj(out) else out), trace

    def residual_of(self, y: np.ndarray, unit_img: np.ndarray, on: str) -> float:
        return residual(y, np.asarray(unit_img).ravel(), op=self.op, on=on)


def _run_trajectories(
    cfg: PrPipelineConfig,
    schedule: NoiseSchedule,
    denoiser_fn: DenoiseFn,
    cached_init_unit: np.ndarray,
    inner_solver,
    seed_key: list,
) -> np.ndarray:
    """Average of ``n_avg`` independent reverse passes from noised inits."""
    sampler = cfg.sampler
    sampler.validate_for(schedule)
    knots = timestep_knots(sampler.t_init, sampler.steps)
    a0 = schedule.alphas[sampler.t_init]
    samples = []
    for j in range(sampler.n_avg):
        rng = np.random.default_rng(np.random.SeedSequence(seed_key + [j]))
        eps = rng.standard_normal(cached_init_unit.shape)
        x_init = np.sqrt(a0) * to_vp(cached_init_unit) + np.sqrt(1.0 - a0) * eps
        state = DdrmState(x=x_init, t=sampler.t_init, rng=rng)
        for t_next in knots[1:]:
            state = ddrm_pr_step(
                state, cfg, schedule, denoiser_fn, cached_init_unit, inner_solver, t_next
            )
        samples.append(from_vp(state.x))
    return average_samples(samples, align=True)


def ddrm_pr_reconstruct(
    msets: MeasurementSet | list[MeasurementSet],
    cfg: PrPipelineConfig,
    schedule: NoiseSchedule,
    denoiser_fn: DenoiseFn | list[DenoiseFn],
    collect: dict | None = None,
) -> RealImage:
    """Reconstruct from Fourier magnitude measurements, one set per channel.

    Channels run independently with streams keyed by (seed, channel); the
    per-channel multi-start initialization is computed once and cached. Pass
    a ``collect`` dict to receive per-channel initializations and residuals.
    """
    sets = msets if isinstance(msets, list) else [msets]
    fns = denoiser_fn if isinstance(denoiser_fn, list) else [denoiser_fn] * len(sets)
    chans = []
    for c, mset in enumerate(sets):
        geom = mset.geometry
        if geom.get("kind") != "fourier":
            raise ValueError("ddrm_pr_reconstruct expects Fourier-geometry measurements")
        n_side, factor = int(geom["n_side"]), int(geom["factor"])
        solver = FourierInnerSolver(n_side, factor, cfg)
        y2d = mset.y.reshape(solver.m_side, solver.m_side)
        # streams are keyed by seed only, never by channel position, so that
        # permuting input channels permutes the outputs identically
        cached, init_trace = solver.random_init(y2d, cfg.random_init)
        out = _run_trajectories(
            cfg, schedule, fns[c], cached, _Measured(solver, y2d), [cfg.sampler.seed]
        )
        chans.append(out)
        if collect is not None:
            collect.setdefault("init_unit", []).append(cached)
            collect.setdefault("init_trace", []).append(init_trace)
            collect.setdefault("init_residual", []).append(
                solver.residual_of(y2d, cached, cfg.residual_on)
            )
            collect.setdefault("residual", []).append(
                solver.residual_of(y2d, out, cfg.residual_on)
            )
    return RealImage(np.stack(chans, axis=2))


class _Measured:
    """Inner solver bound to the observed measurement grid shape."""

    def __init__(self, solver, y_observed):
        self._solver = solver
        self._y_shape = np.shape(y_observed)

    def measure(self, unit_img):
        return self._solver.measure(unit_img).reshape(self._y_shape)

    def run(self, magnitudes, start_unit):
        return self._solver.run(magnitudes, start_unit)


def ddrm_pr_general_reconstruct(
    y: np.ndarray,
    op: LinearOperator,
    shape: tuple[int, int],
    cfg: PrPipelineConfig,
    schedule: NoiseSchedule,
    denoiser_fn: DenoiseFn,
    cg_opts: CgOptions | None = None,
    collect: dict | None = None,
) -> RealImage:
    """Reconstruct through an arbitrary operator (single channel).

    For the oversampled Fourier operator with spatial constraints this is the
    same update as :func:`ddrm_pr_reconstruct`, so it delegates to it; for
    other operators the inner runs use the pseudoinverse-based AP method.
    """
    if op.op_id.startswith("fourier:"):
        geom_n = int(op.op_id.split(":")[1].split("x")[0])
        factor = int(op.op_id.split(":")[2].removeprefix("factor"))
        mset = MeasurementSet(
            y=np.abs(np.asarray(y)).ravel(),
            alpha=0.0,
            operator_id=op.op_id,
            geometry={"kind": "fourier", "n_side": geom_n, "factor": factor},
        )
        return ddrm_pr_reconstruct(mset, cfg, schedule, denoiser_fn, collect=collect)
    solver = GeneralInnerSolver(op, cfg, cg_opts=cg_opts)
    yv = np.asarray(y).ravel()
    cached, init_trace = solver.random_init(yv, cfg.random_init)
    cached = cached.reshape(shape)
    out = _run_trajectories(
        cfg, schedule, denoiser_fn, cached, _Measured(solver, yv), [cfg.sampler.seed]
    )
    if collect is not None:
        collect.setdefault("init_unit", []).append(cached)
        collect.setdefault("init_trace", []).append(init_trace)
        collect.setdefault("init_residual", []).append(solver.residual_of(yv, cached, cfg.residual_on))
        collect.setdefault("residual", []).append(solver.residual_of(yv, out, cfg.residual_on))
    return RealImage(out.reshape(shape)[:, :, None])


def grid_search(
    grid: GridSpec,
    val_set: list,
    cfg_base: PrPipelineConfig,
    schedule: NoiseSchedule,
    denoiser_fn: DenoiseFn,
) -> tuple[PrPipelineConfig, list[dict]]:
    """Evaluate the full Cartesian product of the grid axes.

    ``val_set`` holds (ground truth array, MeasurementSet) pairs. Every cell
    runs with the base config's fixed seed so cells are comparable; failed
    cells are recorded and excluded from the argmax; ties go to the earliest
    cell in declared axis order.
    """
    if not val_set:
        raise ValueError("validation set is empty")
    names = list(grid.axes.keys())
    rows: list[dict] = []
    best_idx, best_score = None, -np.inf
    for values in itertools.product(*(grid.axes[n] for n in names)):
        cell = dict(zip(names, values))
        cfg = replace(cfg_base, sampler=replace(cfg_base.sampler, **cell))
        row = dict(cell)
        t0 = time.perf_counter()
        try:
            scores_psnr, scores_ssim = [], []
            for gt, mset in val_set:
                recon = ddrm_pr_reconstruct(mset, cfg, schedule, denoiser_fn)
                aligned, _ = align_ambiguities(recon.data, gt)
                scores_psnr.append(psnr(aligned, gt))
                scores_ssim.append(ssim(aligned, gt))
            row["mean_psnr"] = float(np.mean(scores_psnr))
            row["mean_ssim"] = float(np.mean(scores_ssim))
            row["status"] = "ok"
        except Exception as err:  # cell marked failed, rest of the grid continues
            row["mean_psnr"] = float("nan")
            row["mean_ssim"] = float("nan")
            row["status"] = f"failed: {type(err).__name__}"
        row["seconds"] = time.perf_counter() - t0
        rows.append(row)
        if row["status"] == "ok":
            score = row["mean_psnr"] if grid.objective == "psnr" else row["mean_ssim"]
            if score > best_score:
                best_idx, best_score = len(rows) - 1, score
    if best_idx is None:
        raise RuntimeError("every grid cell failed")
    best_cell = {n: rows[best_idx][n] for n in names}
    best_cfg = replace(cfg_base, sampler=replace(cfg_base.sampler, **best_cell))
    return best_cfg, rows
