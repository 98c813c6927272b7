"""Generic linear measurement operators.

An operator is an apply/adjoint pair over flat vectors, optionally carrying a
dense SVD. Pseudoinverse application is matrix-free: conjugate gradient on the
normal equations (CGNR), which converges to the minimum-norm least-squares
solution when started from zero. Dense operators additionally expose the
direct SVD route; both routes must agree within the CG tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import dprt
from .fields import ShapeError

# Dense SVD is only materialized up to this element count; larger operators
# stay matrix-free.
DENSE_SVD_LIMIT = 10**6


class ConvergenceError(RuntimeError):
    """CG failed to reach the requested tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class CapabilityError(RuntimeError):
    """Operator lacks a capability (e.g. materialized SVD) an op requires."""


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``A = U diag(S) V^H`` with singular values descending."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def pinv_apply(self, y: np.ndarray) -> np.ndarray:
        return self.v @ (self._inv_s() * (self.u.conj().T @ y))

    def row_space_projector_apply(self, x: np.ndarray) -> np.ndarray:
        keep = (self.s > self.rank_cutoff()).astype(np.float64)
        return self.v @ (keep * (self.v.conj().T @ x))

    def rank_cutoff(self) -> float:
        if self.s.size == 0:
            return 0.0
        return float(self.s[0]) * max(self.u.shape[0], self.v.shape[0]) * np.finfo(np.float64).eps

    def _inv_s(self) -> np.ndarray:
        cutoff = self.rank_cutoff()
        inv = np.zeros_like(self.s)
        nz = self.s > cutoff
        inv[nz] = 1.0 / self.s[nz]
        return inv


@dataclass(frozen=True)
class LinearOperator:
    """Apply/adjoint pair with optional dense SVD.

    ``apply`` maps length ``in_dim`` vectors to length ``out_dim``; ``adjoint``
    is its conjugate-transpose action. Operators are immutable and shareable
    across threads.
    """

    in_dim: int
    out_dim: int
    apply: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray]
    svd: SvdFactors | None = None
    op_id: str = "operator"

    def require_svd(self) -> SvdFactors:
        if self.svd is None:
            raise CapabilityError(f"{self.op_id}: no materialized SVD")
        return self.svd


@dataclass(frozen=True)
class CgOptions:
    """Settings for the CGNR pseudoinverse solve."""

    max_iters: int = 200
    tol: float = 1e-10
    regularizer: float = 0.0
    use_svd: bool = True

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.regularizer < 0:
            raise ValueError("regularizer must be >= 0")


def _cgnr(op: LinearOperator, y: np.ndarray, opts: CgOptions) -> np.ndarray:
    """CG on ``(A^H A + lam I) x = A^H y`` starting from zero.

    The zero start keeps iterates in the row space of A, so the limit is the
    minimum-norm least-squares solution when ``regularizer == 0``.
    """
    lam = opts.regularizer
    b = op.adjoint(y)
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return np.zeros(op.in_dim, dtype=b.dtype)
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = np.vdot(r, r).real
    for _ in range(opts.max_iters):
        ap = op.adjoint(op.apply(p))
        if lam > 0:
            ap = ap + lam * p
        denom = np.vdot(p, ap).real
        if denom <= 0:
            break
        alpha = rs / denom
        x = x + alpha * p
        r = r - alpha * ap
        rs_new = np.vdot(r, r).real
        if np.sqrt(rs_new) <= opts.tol * b_norm:
            return x
        p = r + (rs_new / rs) * p
        rs = rs_new
    final = float(np.sqrt(rs) / b_norm)
    if final <= opts.tol:
        return x
    raise ConvergenceError(
        f"CGNR did not converge after {opts.max_iters} iterations "
        f"(relative normal residual {final:.3e})",
        residual=final,
        iterations=opts.max_iters,
    )


def pinv_apply(op: LinearOperator, y: np.ndarray, opts: CgOptions | None = None) -> np.ndarray:
    """Minimum-norm least-squares solution of ``A x = y``.

    Uses the dense SVD route when the operator carries one and
    ``opts.use_svd`` is set; otherwise runs matrix-free CGNR.
    """
    opts = opts or CgOptions()
    y = np.asarray(y)
    if y.shape != (op.out_dim,):
        raise ShapeError(f"expected length-{op.out_dim} vector, got shape {y.shape}")
    if opts.use_svd and op.svd is not None and opts.regularizer == 0.0:
        return op.svd.pinv_apply(y)
    return _cgnr(op, y, opts)


def projector_range_rows(op: LinearOperator, x: np.ndarray, opts: CgOptions | None = None) -> np.ndarray:
    """Orthogonal projection onto the operator's row space: ``A^+ A x``."""
    opts = opts or CgOptions()
    x = np.asarray(x)
    if x.shape != (op.in_dim,):
        raise ShapeError(f"expected length-{op.in_dim} vector, got shape {x.shape}")
    if opts.use_svd and op.svd is not None:
        return op.svd.row_space_projector_apply(x)
    return _cgnr(op, op.apply(x), opts)


def dense_operator(mat: np.ndarray, op_id: str = "dense", with_svd: bool = True) -> LinearOperator:
    """Wrap a dense matrix; the SVD is materialized up to ``DENSE_SVD_LIMIT``."""
    mat = np.asarray(mat)
    if mat.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {mat.shape}")
    m, n = mat.shape
    svd = None
    if with_svd and m * n <= DENSE_SVD_LIMIT:
        u, s, vh = np.linalg.svd(mat, full_matrices=True)
        # Pad the singular value list to the full spectral dimension n so every
        # spectral index carries an explicit (possibly zero) singular value.
        s_full = np.zeros(n, dtype=np.float64)
        s_full[: s.size] = s
        u_full = np.zeros((m, n), dtype=mat.dtype)
        u_full[:, : min(m, n)] = u[:, : min(m, n)]
        svd = SvdFactors(u=u_full, s=s_full, v=vh.conj().T)
    adj = mat.conj().T
    return LinearOperator(
        in_dim=n,
        out_dim=m,
        apply=lambda x, _m=mat: _m @ x,
        adjoint=lambda y, _a=adj: _a @ y,
        svd=svd,
        op_id=op_id,
    )


def make_fourier_operator(n_side: int, factor: int = 2) -> LinearOperator:
    """Oversampled unitary DFT: zero-pad ``n_side`` grids by ``factor``, then FFT.

    The operator is an isometry (all singular values 1); it stays matrix-free
    and advertises no dense SVD. With ``factor=1`` this is the square unitary
    DFT on the grid itself, which is what the alternating-projection solvers
    use on the oversampled grid.
    """
    if n_side < 1:
        raise ValueError("n_side must be >= 1")
    if factor < 1:
        raise ValueError("factor must be >= 1")
    m_side = n_side * factor
    n = n_side * n_side
    m = m_side * m_side

    def apply(x: np.ndarray) -> np.ndarray:
        grid = np.zeros((m_side, m_side), dtype=np.complex128)
        grid[:n_side, :n_side] = np.asarray(x).reshape(n_side, n_side)
        return np.fft.fft2(grid, norm="ortho").ravel()

    def adjoint(y: np.ndarray) -> np.ndarray:
        grid = np.fft.ifft2(np.asarray(y).reshape(m_side, m_side), norm="ortho")
        return grid[:n_side, :n_side].ravel()

    return LinearOperator(
        in_dim=n,
        out_dim=m,
        apply=apply,
        adjoint=adjoint,
        svd=None,
        op_id=f"fourier:{n_side}x{n_side}:factor{factor}",
    )


def make_random_transmission_operator(m: int, n: int, seed: int) -> LinearOperator:
    """Synthetic scattering-medium transmission matrix.

    Dense i.i.d. complex Gaussian entries with variance 1/m, so columns have
    near-unit norm. Stands in for a calibrated transmission matrix.
    """
    if not (m >= n >= 1):
        raise ValueError(f"need m >= n >= 1, got m={m} n={n}")
    if m * n > 16 * DENSE_SVD_LIMIT:
        raise ValueError(f"dense transmission matrix {m}x{n} exceeds size budget")
    rng = np.random.default_rng(seed)
    mat = (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))) / np.sqrt(2.0 * m)
    return dense_operator(mat, op_id=f"transmission:{m}x{n}:seed{seed}")


def adjoint_mismatch(op: LinearOperator, rng: np.random.Generator, probes: int = 10) -> float:
    """Max relative defect of ``<Ax, y> == <x, A^H y>`` over random probes."""
    worst = 0.0
    for _ in range(probes):
        x = rng.standard_normal(op.in_dim) + 1j * rng.standard_normal(op.in_dim)
        y = rng.standard_normal(op.out_dim) + 1j * rng.standard_normal(op.out_dim)
        ax = op.apply(x)
        aty = op.adjoint(y)
        lhs = np.vdot(y, ax)
        rhs = np.vdot(aty, x)
        scale = max(abs(lhs), abs(rhs), 1e-300)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def save_dense(path, op: LinearOperator) -> None:
    """Serialize an operator's matrix to a DPRT tensor (complex interleaved)."""
    eye = np.eye(op.in_dim, dtype=np.complex128)
    cols = [op.apply(eye[:, j]) for j in range(op.in_dim)]
    dprt.save(path, np.stack(cols, axis=1))


def load_dense(path, op_id: str = "dense") -> LinearOperator:
    return dense_operator(dprt.load(path), op_id=op_id)
