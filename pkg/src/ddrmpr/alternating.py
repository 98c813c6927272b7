"""Alternating-projection phase retrieval: HIO, ER, and general AP.

The hybrid input-output iterate lives on the oversampled grid. Each iteration
replaces Fourier magnitudes with the measured ones while keeping the current
phase, then applies the feedback update

    x_{k+1}[p] = u_k[p]                 p not in gamma
    x_{k+1}[p] = x_k[p] - beta u_k[p]   p in gamma

where gamma collects pixels of u_k violating the spatial constraints
(support, non-negativity, realness). ER zeroes violating pixels instead.
For non-Fourier operators the measurement projection goes back through the
pseudoinverse, computed matrix-free by CGNR.

Grid-lane functions (`hio_run`, `er_run`) take 2-D arrays on the oversampled
grid; the vector lane (`ap_general_run`) takes flat vectors sized to the
operator. `random_init` is the multi-start procedure: many short runs from
random starts, keep the lowest-residual candidate, then one long run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import ShapeError, SupportMask
from .linops import CgOptions, LinearOperator, pinv_apply

PHASE_ZERO_TOL = 1e-12


class DivergenceError(RuntimeError):
    """Non-finite values appeared in the iterates."""


@dataclass(frozen=True)
class ConstraintSet:
    """Spatial-domain constraints; at least one must be active."""

    support: SupportMask | None = None
    nonneg: bool = True
    real_valued: bool = True

    def __post_init__(self):
        if self.support is None and not self.nonneg and not self.real_valued:
            raise ValueError("at least one constraint must be active")


@dataclass(frozen=True)
class HioParams:
    beta: float = 0.9
    iters: int = 1000

    def __post_init__(self):
        if not (0.0 < self.beta <= 1.0):
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")


@dataclass(frozen=True)
class RandomInitParams:
    num_inits: int = 50
    short_iters: int = 50
    final_iters: int = 1000
    seed: int = 0

    def __post_init__(self):
        if min(self.num_inits, self.short_iters, self.final_iters) < 1:
            raise ValueError("all counts must be >= 1")


def phase_of(z: np.ndarray) -> np.ndarray:
    """``z / |z|`` with near-zero entries mapped to phase 1."""
    mag = np.abs(z)
    out = np.ones_like(z)
    nz = mag >= PHASE_ZERO_TOL
    out[nz] = z[nz] / mag[nz]
    return out


def _as_grid(a, name: str) -> np.ndarray:
    arr = getattr(a, "data", a)
    arr = np.asarray(arr)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be a 2-D grid, got shape {arr.shape}")
    return arr


def fourier_projection(
    x, y, op: LinearOperator | None = None, real_valued: bool = True
) -> np.ndarray:
    """Measurement projection ``u = F^-1 { y * Fx / |Fx| }``.

    With the default unitary DFT (op=None) magnitudes are enforced exactly.
    A provided ``op`` must be a square isometry (adjoint == inverse). The real
    part is taken when the real-valuedness constraint applies.
    """
    if op is None:
        xg = _as_grid(x, "x")
        yg = _as_grid(y, "y")
        if yg.shape != xg.shape:
            raise ShapeError(f"y shape {yg.shape} != x shape {xg.shape}")
        fx = np.fft.fft2(xg, norm="ortho")
        u = np.fft.ifft2(yg * phase_of(fx), norm="ortho")
    else:
        xv = np.asarray(x).ravel()
        yv = np.asarray(y).ravel()
        if xv.size != op.in_dim or yv.size != op.out_dim:
            raise ShapeError("vector sizes do not match operator dims")
        u = op.adjoint(yv * phase_of(op.apply(xv.astype(np.complex128))))
        u = u.reshape(np.asarray(x).shape)
    return u.real if real_valued else u


def violation_mask(u: np.ndarray, cons: ConstraintSet) -> np.ndarray:
    """Pixels of ``u`` violating the spatial constraints (the set gamma).

    The imaginary part is discarded before the test when realness is
    enforced, so only support and sign can violate here.
    """
    v = u.real if np.iscomplexobj(u) else u
    gamma = np.zeros(v.shape, dtype=bool)
    if cons.support is not None:
        if cons.support.inside.shape != v.shape:
            raise ShapeError("support mask shape does not match iterate")
        gamma |= ~cons.support.inside
    if cons.nonneg:
        gamma |= v < 0
    return gamma


def _check_finite(x: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(x)):
        raise DivergenceError(f"non-finite values in {where}")


def hio_run(
    y,
    init,
    params: HioParams,
    cons: ConstraintSet,
    op: LinearOperator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Run HIO for ``params.iters`` iterations from ``init``.

    Returns the final iterate and the residual trace, one entry per
    iteration: ``trace[k] = ||y - |F x_{k+1}|||_2`` for the updated iterate.
    """
    yg = _as_grid(y, "y") if op is None else np.asarray(y).ravel()
    x = (_as_grid(init, "init") if op is None else np.asarray(init).ravel()).astype(
        np.float64 if cons.real_valued else np.complex128
    )
    trace = np.empty(params.iters)
    for k in range(params.iters):
        u = fourier_projection(x, yg, op=op, real_valued=cons.real_valued)
        gamma = violation_mask(u, cons)
        x = np.where(gamma, x - params.beta * u, u)
        _check_finite(x, f"HIO iterate {k + 1}")
        trace[k] = residual(yg, x, op=op)
    return x, trace


def er_run(
    y,
    init,
    iters: int,
    cons: ConstraintSet,
    op: LinearOperator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Error reduction: like HIO but violating pixels are zeroed."""
    yg = _as_grid(y, "y") if op is None else np.asarray(y).ravel()
    x = (_as_grid(init, "init") if op is None else np.asarray(init).ravel()).astype(
        np.float64 if cons.real_valued else np.complex128
    )
    trace = np.empty(iters)
    for k in range(iters):
        u = fourier_projection(x, yg, op=op, real_valued=cons.real_valued)
        gamma = violation_mask(u, cons)
        x = np.where(gamma, 0.0, u)
        _check_finite(x, f"ER iterate {k + 1}")
        trace[k] = residual(yg, x, op=op)
    return x, trace


def project_constraints(x: np.ndarray, cons: ConstraintSet | None) -> np.ndarray:
    """Project onto the constraint set: realness, support zeroing, clamping."""
    if cons is None:
        return x
    out = x.real.copy() if cons.real_valued and np.iscomplexobj(x) else x.copy()
    if cons.support is not None:
        if cons.support.inside.shape != out.shape:
            raise ShapeError("support mask shape does not match iterate")
        out[~cons.support.inside] = 0.0
    if cons.nonneg:
        if np.iscomplexobj(out):
            out = np.where(out.real < 0, 1j * out.imag, out)
        else:
            out = np.clip(out, 0.0, None)
    return out


def ap_general_run(
    y,
    op: LinearOperator,
    init,
    iters: int,
    cons: ConstraintSet | None = None,
    cg_opts: CgOptions | None = None,
    feedback_beta: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """GS-type alternating projection for a general operator.

    Each iteration enforces the measurement constraint through the
    pseudoinverse, ``A^+ { y * Ax / |Ax| }``. With ``feedback_beta`` unset
    the iterate is then projected onto the spatial constraints; with a beta
    the HIO feedback update is used on constraint-violating entries instead.
    """
    yv = np.asarray(y).ravel()
    if yv.size != op.out_dim:
        raise ShapeError(f"y size {yv.size} != operator out_dim {op.out_dim}")
    if feedback_beta is not None and cons is None:
        raise ValueError("the feedback update needs a constraint set")
    real = cons is not None and cons.real_valued
    x = np.asarray(init).ravel().astype(np.float64 if real else np.complex128)
    if x.size != op.in_dim:
        raise ShapeError(f"init size {x.size} != operator in_dim {op.in_dim}")
    trace = np.empty(iters)
    ax = op.apply(x.astype(np.complex128))
    for k in range(iters):
        u = pinv_apply(op, yv * phase_of(ax), cg_opts)
        if real:
            u = u.real
        if feedback_beta is None:
            x = project_constraints(u, cons)
        else:
            gamma = violation_mask(u, cons)
            x = np.where(gamma, x - feedback_beta * u, u)
        ax = op.apply(x.astype(np.complex128))
        _check_finite(x, f"AP iterate {k + 1}")
        trace[k] = float(np.linalg.norm(yv - np.abs(ax)))
    return x, trace


def residual(y, x, op: LinearOperator | None = None, on: str = "magnitude") -> float:
    """Measurement mismatch ``||y - |Ax|||_2`` (or on intensities)."""
    if op is None:
        yg = _as_grid(y, "y")
        mag = np.abs(np.fft.fft2(_as_grid(x, "x"), norm="ortho"))
    else:
        yg = np.asarray(y).ravel()
        mag = np.abs(op.apply(np.asarray(x).ravel().astype(np.complex128)))
    if on == "magnitude":
        return float(np.linalg.norm(yg - mag))
    if on == "intensity":
        return float(np.linalg.norm(yg**2 - mag**2))
    raise ValueError(f"unknown residual kind {on!r}")


def random_start(shape_or_dim, cons: ConstraintSet | None, rng: np.random.Generator) -> np.ndarray:
    """Uniform [0, 1] start inside the support, zero outside."""
    x = rng.uniform(0.0, 1.0, size=shape_or_dim)
    if cons is not None and cons.support is not None:
        x = np.where(cons.support.inside, x, 0.0)
    return x


def random_init(
    y,
    params: RandomInitParams,
    cons: ConstraintSet,
    op: LinearOperator | None = None,
    method: str = "hio",
    beta: float = 0.9,
    cg_opts: CgOptions | None = None,
    feedback_beta: float | None = None,
    return_trace: bool = False,
) -> np.ndarray:
    """Multi-start initialization: short runs, pick min residual, long run.

    Candidate i draws its start from a stream keyed by (seed, i), so results
    do not depend on evaluation order. ``method`` selects HIO (Fourier grids)
    or the general AP iteration (arbitrary operators, optionally with the
    HIO feedback update via ``feedback_beta``).

    Candidates are scored, and the result extracted, as the
    constraint-projected reconstruction: the raw feedback iterate carries
    out-of-support driving terms that are not part of the estimate. The
    final long run still continues from the raw best iterate.
    """
    if method not in ("hio", "ap"):
        raise ValueError(f"unknown random_init method {method!r}")
    if method == "hio":
        shape = _as_grid(y, "y").shape if op is None else (op.in_dim,)
    else:
        shape = (op.in_dim,)

    def _run(start, iters):
        if method == "hio":
            return hio_run(y, start, HioParams(beta=beta, iters=iters), cons, op=op)
        return ap_general_run(
            y, op, start, iters, cons=cons, cg_opts=cg_opts, feedback_beta=feedback_beta
        )

    def _score(cand):
        return residual(y, project_constraints(cand, cons), op=op)

    best_x, best_res = None, np.inf
    for i in range(params.num_inits):
        rng = np.random.default_rng(np.random.SeedSequence([params.seed, i]))
        start = random_start(shape, cons, rng)
        cand, _ = _run(start, params.short_iters)
        score = _score(cand)
        if score < best_res:
            best_x, best_res = cand, score
    final, trace = _run(best_x, params.final_iters)
    out = project_constraints(final, cons)
    return (out, trace) if return_trace else out
