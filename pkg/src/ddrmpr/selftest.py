"""Built-in property suite behind the ``selftest`` command.

Checks the load-bearing identities of the sampler stack on randomly drawn
small instances: the spectral/simplified trajectory correspondence, the
normalized-residual statistics of the forward draw, the diagonal form of the
row-space projector in the SVD basis, the alpha/sigma duality, and the HIO
fixed-point behavior. Each check returns (name, passed, detail); the suite
is deterministic in the seed.
"""

from __future__ import annotations

import numpy as np

from . import alternating as ap
from . import ddrm, linops
from .fields import corner_support

EQUIVALENCE_TOL = 1e-6


def _rank_deficient(rng: np.random.Generator, m: int, n: int, drop: int) -> np.ndarray:
    mat = rng.standard_normal((m, n))
    r = max(1, min(m, n) - drop)
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    return (u[:, :r] * s[:r]) @ vh[:r]


def _toy_denoiser(n: int, seed: int):
    r = np.random.default_rng(seed)
    mat = np.eye(n) * 0.6 + 0.15 * r.standard_normal((n, n))

    def fn(x, t, sigma, alpha):
        return np.clip(mat @ (x / np.sqrt(alpha)), -1.0, 1.0)

    return fn


def check_equivalence(seed: int, operators: int = 10, steps: int = 20) -> tuple[bool, str]:
    """Spectral vs simplified trajectories with coupled noise on random operators."""
    rng = np.random.default_rng(seed)
    schedule = ddrm.schedule_linear_vp(1000, sigma_max=50.0)
    etas = [0.2, 0.5, 1.0]
    eta_bs = [0.0, 0.5, 1.0]
    worst = 0.0
    gap = 0.0
    for k in range(operators):
        m = int(rng.integers(4, 17))
        n = int(rng.integers(4, 17))
        mat = _rank_deficient(rng, m, n, drop=2) if k % 3 == 0 else rng.standard_normal((m, n))
        op = linops.dense_operator(mat, op_id=f"selftest:{k}")
        x0 = rng.uniform(-1.0, 1.0, n)
        cfg = ddrm.SamplerConfig(
            eta=etas[k % len(etas)],
            eta_b=eta_bs[k % len(eta_bs)],
            steps=steps,
            t_init=600,
            seed=int(rng.integers(2**31)),
        )
        rep = ddrm.equivalence_report(op, x0, schedule, cfg, _toy_denoiser(n, 1000 + k), seed=seed + k)
        worst = max(worst, rep["max_rel_err"])
        gap = max(gap, rep["mixing_approximation_gap"])
    return worst <= EQUIVALENCE_TOL, (
        f"max rel err {worst:.3e} over {operators} operators x {steps} steps "
        f"(tol {EQUIVALENCE_TOL:.0e}); sqrt-vs-linear mixing gap {gap:.3e}"
    )


def check_forward_draw_statistics(seed: int, samples: int = 100_000) -> tuple[bool, str]:
    """Normalized residual of the forward draw is standard normal per coordinate."""
    rng = np.random.default_rng(seed)
    schedule = ddrm.schedule_linear_vp(1000, sigma_max=50.0)
    t = 400
    a = schedule.alphas[t]
    x0 = rng.uniform(-1.0, 1.0, 4)
    draws, _ = ddrm.vp_forward_draw(np.broadcast_to(x0, (samples, 4)), t, schedule, rng)
    normalized = (draws - np.sqrt(a) * x0) / np.sqrt(1.0 - a)
    mean = np.abs(normalized.mean(axis=0)).max()
    var = np.abs(normalized.var(axis=0) - 1.0).max()
    ok = mean < 0.02 and var < 0.05
    return ok, f"|mean| max {mean:.4f} (<0.02), |var-1| max {var:.4f} (<0.05)"


def check_epsilon_roundtrip(seed: int) -> tuple[bool, str]:
    """A perfect estimator recovers the injected noise exactly."""
    rng = np.random.default_rng(seed)
    schedule = ddrm.schedule_linear_vp(1000, sigma_max=50.0)
    t = 350
    x0 = rng.uniform(-1.0, 1.0, 64)
    x_t, eps = ddrm.vp_forward_draw(x0, t, schedule, rng)
    rec = ddrm.epsilon_estimate(x_t, x0, schedule.alphas[t])
    err = float(np.max(np.abs(rec - eps)))
    return err < 1e-12, f"max abs err {err:.2e} (<1e-12)"


def check_projector_diagonal(seed: int) -> tuple[bool, str]:
    """Row-space projector is diagonal with {0,1} entries in the V basis."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(5):
        m, n = int(rng.integers(4, 13)), int(rng.integers(4, 13))
        mat = _rank_deficient(rng, m, n, drop=rng.integers(0, 3))
        op = linops.dense_operator(mat, op_id=f"proj:{k}")
        cols = np.stack(
            [linops.projector_range_rows(op, e) for e in np.eye(n)], axis=1
        )
        in_v_basis = op.svd.v.conj().T @ cols @ op.svd.v
        diag = np.diagonal(in_v_basis)
        off = in_v_basis - np.diag(diag)
        dist_to_01 = np.minimum(np.abs(diag), np.abs(diag - 1.0)).max()
        worst = max(worst, float(np.abs(off).max()), float(dist_to_01))
    return worst < 1e-8, f"max off-diagonal / {{0,1}} deviation {worst:.2e} (<1e-8)"


def check_alpha_sigma_duality(seed: int) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    sig = np.sort(rng.uniform(0.01, 50.0, 100))
    back = ddrm.sigma_from_alpha(ddrm.alpha_from_sigma(sig))
    err = float(np.max(np.abs(back - sig) / sig))
    return err < 1e-12, f"max round-trip rel err {err:.2e} (<1e-12)"


def check_hio_fixed_point(seed: int) -> tuple[bool, str]:
    """A feasible, measurement-consistent image is an HIO fixed point."""
    rng = np.random.default_rng(seed)
    img = rng.uniform(0.0, 1.0, (8, 8))
    pad = np.zeros((16, 16))
    pad[:8, :8] = img
    y = np.abs(np.fft.fft2(pad, norm="ortho"))
    cons = ap.ConstraintSet(support=corner_support((8, 8), (16, 16)))
    out, trace = ap.hio_run(y, pad, ap.HioParams(beta=0.9, iters=50), cons)
    drift = float(np.max(np.abs(out - pad)))
    ok = drift < 1e-10 and trace[-1] < 1e-10
    return ok, f"max drift {drift:.2e}, final residual {trace[-1]:.2e} (<1e-10)"


CHECKS = [
    ("spectral-simplified equivalence", check_equivalence),
    ("forward draw statistics", check_forward_draw_statistics),
    ("epsilon estimate round trip", check_epsilon_roundtrip),
    ("row-space projector diagonal", check_projector_diagonal),
    ("alpha-sigma duality", check_alpha_sigma_duality),
    ("HIO fixed point", check_hio_fixed_point),
]


def run_selftest(seed: int = 0) -> list[tuple[str, bool, str]]:
    results = []
    for name, fn in CHECKS:
        passed, detail = fn(seed)
        results.append((name, passed, detail))
    return results
