import numpy as np
import pytest

from conftest import oversampled_magnitudes, pad_corner
from ddrmpr.alternating import (
    ConstraintSet,
    DivergenceError,
    HioParams,
    RandomInitParams,
    ap_general_run,
    er_run,
    fourier_projection,
    hio_run,
    phase_of,
    project_constraints,
    random_init,
    random_start,
    residual,
    violation_mask,
)
from ddrmpr.fields import corner_support
from ddrmpr.linops import dense_operator, make_random_transmission_operator

CONS_8 = ConstraintSet(support=corner_support((8, 8), (16, 16)))


def dft_op(side):
    f1 = np.exp(-2j * np.pi * np.outer(np.arange(side), np.arange(side)) / side) / np.sqrt(side)
    return dense_operator(np.kron(f1, f1), op_id="dense-dft")


def test_projection_fixed_point(rng):
    img = rng.uniform(0, 1, (8, 8))
    x = pad_corner(img)
    y = oversampled_magnitudes(img)
    u = fourier_projection(x, y)
    assert np.max(np.abs(u - x)) < 1e-10


def test_projection_zero_measurements(rng):
    x = rng.uniform(0, 1, (6, 6))
    assert np.all(fourier_projection(x, np.zeros((6, 6))) == 0)


def test_projection_enforces_magnitudes(rng):
    x = rng.uniform(0, 1, (8, 8))
    y = oversampled_magnitudes(rng.uniform(0, 1, (4, 4)))
    u = fourier_projection(pad_corner(x, 1), y, real_valued=False)
    assert np.max(np.abs(np.abs(np.fft.fft2(u, norm="ortho")) - y)) < 1e-10


def test_projection_matches_dense_oracle(rng):
    # brute-force oracle with an explicit DFT matrix
    x = rng.uniform(0, 1, (4, 4))
    y = np.abs(np.fft.fft2(rng.uniform(0, 1, (4, 4)), norm="ortho"))
    fast = fourier_projection(x, y)
    op = dft_op(4)
    fx = op.apply(x.ravel().astype(complex))
    slow = op.adjoint(y.ravel() * phase_of(fx)).real.reshape(4, 4)
    assert np.max(np.abs(fast - slow)) < 1e-10
    via_op = fourier_projection(x.ravel(), y.ravel(), op=op)
    assert np.max(np.abs(via_op.reshape(4, 4) - slow)) < 1e-10


def test_phase_of_zero_convention():
    z = np.array([0.0 + 0j, 3 + 4j, 1e-15 + 0j])
    p = phase_of(z)
    assert p[0] == 1.0 and p[2] == 1.0
    assert abs(p[1] - (0.6 + 0.8j)) < 1e-12


def test_hio_feasible_fixed_point(rng):
    img = rng.uniform(0, 1, (8, 8))
    x0 = pad_corner(img)
    y = oversampled_magnitudes(img)
    out, trace = hio_run(y, x0, HioParams(beta=0.9, iters=30), CONS_8)
    assert np.max(np.abs(out - x0)) < 1e-10
    assert trace[-1] < 1e-10


def test_hio_empty_gamma_returns_projection(rng):
    # no support constraint and a non-negative projection: gamma is empty,
    # so the update must equal u everywhere
    img = rng.uniform(0.1, 1, (8, 8))
    y = np.abs(np.fft.fft2(img, norm="ortho"))
    cons = ConstraintSet(support=None, nonneg=True, real_valued=True)
    start = rng.uniform(0.1, 1, (8, 8))
    u = fourier_projection(start, y)
    if np.any(u < 0):
        pytest.skip("fixture produced a negative projection")
    out, _ = hio_run(y, start, HioParams(beta=0.9, iters=1), cons)
    assert np.array_equal(out, u)


def test_hio_case_split_exhaustive_exclusive(rng):
    img = rng.uniform(0, 1, (8, 8))
    y = oversampled_magnitudes(img)
    x0 = random_start((16, 16), CONS_8, rng)
    u = fourier_projection(x0, y)
    gamma = violation_mask(u, CONS_8)
    out, _ = hio_run(y, x0, HioParams(beta=0.9, iters=1), CONS_8)
    assert np.array_equal(out[gamma], (x0 - 0.9 * u)[gamma])
    assert np.array_equal(out[~gamma], u[~gamma])


def test_hio_pixel_order_invariance(rng):
    # data-parallel update: an explicit per-pixel loop in shuffled order must
    # reproduce the vectorized result bit for bit
    img = rng.uniform(0, 1, (8, 8))
    y = oversampled_magnitudes(img)
    x0 = random_start((16, 16), CONS_8, rng)
    vec, _ = hio_run(y, x0, HioParams(beta=0.9, iters=1), CONS_8)
    u = fourier_projection(x0, y)
    gamma = violation_mask(u, CONS_8)
    loop = np.empty_like(x0)
    order = list(np.ndindex(16, 16))
    rng.shuffle(order)
    for p in order:
        loop[p] = x0[p] - 0.9 * u[p] if gamma[p] else u[p]
    assert np.array_equal(vec, loop)


def test_hio_monte_carlo_improves_residual():
    # pilot-frozen protocol: 200 iterations from a random start reduce the
    # measurement residual vs the start in >= 90% of 50 seeds
    wins = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        img = rng.uniform(0, 1, (8, 8))
        y = oversampled_magnitudes(img)
        init = random_start((16, 16), CONS_8, rng)
        r0 = residual(y, init)
        _, trace = hio_run(y, init, HioParams(beta=0.9, iters=200), CONS_8)
        wins += trace[-1] < r0
    assert wins >= 45


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_hio_divergence_error(rng):
    y = np.full((8, 8), np.inf)
    with pytest.raises(DivergenceError):
        hio_run(y, rng.uniform(0, 1, (8, 8)), HioParams(iters=2), ConstraintSet(support=None))


def test_er_feasible_fixed_point(rng):
    img = rng.uniform(0, 1, (8, 8))
    x0 = pad_corner(img)
    y = oversampled_magnitudes(img)
    out, _ = er_run(y, x0, 20, CONS_8)
    assert np.max(np.abs(out - x0)) < 1e-10


def test_er_single_step_zeroes_violations(rng):
    img = rng.uniform(0, 1, (8, 8))
    y = oversampled_magnitudes(img)
    x0 = random_start((16, 16), CONS_8, rng)
    u = fourier_projection(x0, y)
    gamma = violation_mask(u, CONS_8)
    out, _ = er_run(y, x0, 1, CONS_8)
    assert np.all(out[gamma] == 0)
    assert np.array_equal(out[~gamma], u[~gamma])


def test_er_residual_monotone(rng):
    img = rng.uniform(0, 1, (8, 8))
    y = oversampled_magnitudes(img)
    x0 = random_start((16, 16), CONS_8, rng)
    _, trace = er_run(y, x0, 100, CONS_8)
    assert np.all(np.diff(trace) <= 1e-12)


def test_ap_identity_operator_one_iteration(rng):
    x0 = rng.uniform(0.1, 1, 12)
    op = dense_operator(np.eye(12), op_id="identity")
    out, trace = ap_general_run(np.abs(x0), op, rng.uniform(0.1, 1, 12), 1,
                                cons=ConstraintSet(support=None))
    assert np.allclose(out, x0, atol=1e-10)
    assert trace[-1] < 1e-10


def test_ap_unitary_reduces_to_adjoint_projection(rng):
    q, _ = np.linalg.qr(rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8)))
    op = dense_operator(q, op_id="unitary")
    x0 = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    y = np.abs(q @ x0)
    start = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    out, _ = ap_general_run(y, op, start, 1, cons=None)
    expected = q.conj().T @ (y * phase_of(q @ start))
    assert np.max(np.abs(out - expected)) < 1e-8


def test_ap_transmission_monte_carlo():
    # pilot-frozen: noiseless 64x16 synthetic transmission recovery succeeds
    # (relative residual <= 1e-2) in at least half of 20 seeds
    ok = 0
    for seed in range(20):
        op = make_random_transmission_operator(64, 16, seed=seed)
        rng = np.random.default_rng(1000 + seed)
        x0 = rng.uniform(0, 1, 16)
        y = np.abs(op.apply(x0.astype(complex)))
        init = rng.uniform(0, 1, 16)
        _, trace = ap_general_run(y, op, init, 300, cons=ConstraintSet(support=None))
        ok += trace[-1] <= 1e-2 * np.linalg.norm(y)
    assert ok >= 10


def test_ap_feedback_update(rng):
    op = make_random_transmission_operator(32, 8, seed=2)
    x0 = rng.uniform(0, 1, 8)
    y = np.abs(op.apply(x0.astype(complex)))
    cons = ConstraintSet(support=None)
    out, trace = ap_general_run(y, op, rng.uniform(0, 1, 8), 50, cons=cons, feedback_beta=0.9)
    assert np.all(np.isfinite(out))
    assert trace[-1] < trace[0] * 10  # sanity: no blow-up


def test_random_init_deterministic():
    img = np.random.default_rng(3).uniform(0, 1, (8, 8))
    y = oversampled_magnitudes(img)
    params = RandomInitParams(num_inits=5, short_iters=10, final_iters=20, seed=11)
    a = random_init(y, params, CONS_8)
    b = random_init(y, params, CONS_8)
    assert np.array_equal(a, b)


def test_random_init_selects_min_residual_candidate():
    # compositional oracle: rebuild every candidate with the documented
    # (seed, index) streams and check the pipeline continued from the best
    img = np.random.default_rng(4).uniform(0, 1, (8, 8))
    y = oversampled_magnitudes(img)
    params = RandomInitParams(num_inits=6, short_iters=8, final_iters=12, seed=21)
    got = random_init(y, params, CONS_8)
    cands = []
    for i in range(params.num_inits):
        rng = np.random.default_rng(np.random.SeedSequence([params.seed, i]))
        start = random_start((16, 16), CONS_8, rng)
        cand, _ = hio_run(y, start, HioParams(beta=0.9, iters=params.short_iters), CONS_8)
        score = residual(y, project_constraints(cand, CONS_8))
        cands.append((score, cand))
    best = min(cands, key=lambda t: t[0])[1]
    final, _ = hio_run(y, best, HioParams(beta=0.9, iters=params.final_iters), CONS_8)
    assert np.array_equal(got, project_constraints(final, CONS_8))


def test_random_init_recovers_16x16():
    img = np.random.default_rng(5).uniform(0, 1, (8, 8))
    y = oversampled_magnitudes(img)
    out = random_init(y, RandomInitParams(20, 30, 300, seed=0), CONS_8)
    assert residual(y, out) <= 1e-2 * np.linalg.norm(y)


def test_residual_examples(rng):
    img = rng.uniform(0, 1, (8, 8))
    y = oversampled_magnitudes(img)
    assert residual(y, pad_corner(img)) < 1e-12
    assert abs(residual(y, np.zeros((16, 16))) - np.linalg.norm(y)) < 1e-12
    # scalar arithmetic oracle on length-4 vectors
    op = dense_operator(np.diag([1.0, 2.0, 3.0, 4.0]))
    x = np.array([1.0, -1.0, 0.5, 2.0])
    y4 = np.array([0.5, 2.5, 2.0, 7.0])
    expected = np.sqrt((0.5 - 1) ** 2 + (2.5 - 2) ** 2 + (2 - 1.5) ** 2 + (7 - 8) ** 2)
    assert abs(residual(y4, x, op=op) - expected) < 1e-12
    assert abs(residual(y4, x, op=op, on="intensity") -
               np.linalg.norm(y4**2 - (np.diag([1, 2, 3, 4.0]) @ np.abs(x)) ** 2)) < 1e-12


def test_constraint_set_needs_one_active():
    with pytest.raises(ValueError):
        ConstraintSet(support=None, nonneg=False, real_valued=False)


def test_projection_idempotent_for_unitary_dft(rng):
    x = rng.uniform(0, 1, (8, 8))
    y = oversampled_magnitudes(rng.uniform(0, 1, (4, 4)))
    u1 = fourier_projection(x, y, real_valued=False)
    u2 = fourier_projection(u1, y, real_valued=False)
    assert np.max(np.abs(u2 - u1)) < 1e-10
