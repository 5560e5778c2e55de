"""Truncated and randomized SVD plus fast evaluation of factored snapshots."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import AxisSpec


@dataclass(frozen=True)
class TruncationPolicy:
    """Rank selection: keep at most ``max_rank`` values and drop singular
    values below ``rel_tol`` times the largest.  ``rel_tol = 0`` disables the
    cutoff (used by the untruncated reference modes)."""

    max_rank: int
    rel_tol: float = 1e-3
    oversampling: int = 5

    def __post_init__(self):
        if self.max_rank < 1:
            raise ValueError("max_rank must be >= 1")
        if not 0.0 <= self.rel_tol <= 1.0:
            raise ValueError("rel_tol must lie in [0, 1]")
        if self.oversampling < 1:
            raise ValueError("oversampling must be >= 1")


@dataclass(frozen=True)
class Factorization:
    """Low-rank factors A ~ row_factor @ col_factor.T with row_factor = U*S."""

    row_factor: np.ndarray       # (nrows, k), left singular vectors scaled by S
    col_factor: np.ndarray       # (ncols, k), orthonormal columns
    singular_values: np.ndarray  # (k,), non-increasing

    @property
    def rank(self) -> int:
        return self.singular_values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.row_factor.shape[0], self.col_factor.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.row_factor @ self.col_factor.T


@dataclass(frozen=True)
class MatvecOracle:
    """Matrix-free view of a matrix: apply computes A @ w, apply_transpose
    computes A.T @ y; both accept a vector or a block of column vectors."""

    nrows: int
    ncols: int
    apply: Callable[[np.ndarray], np.ndarray]
    apply_transpose: Callable[[np.ndarray], np.ndarray]

    def adjoint_error(self, seed: int = 0, probes: int = 3) -> float:
        """Largest relative mismatch of <A w, y> vs <w, A^T y> on random probes."""
        rng = np.random.Generator(np.random.Philox(key=seed))
        worst = 0.0
        for _ in range(probes):
            w = rng.standard_normal(self.ncols)
            y = rng.standard_normal(self.nrows)
            a = float(self.apply(w) @ y)
            b = float(w @ self.apply_transpose(y))
            scale = max(abs(a), abs(b), 1e-300)
            worst = max(worst, abs(a - b) / scale)
        return worst


def dense_oracle(A: np.ndarray) -> MatvecOracle:
    A = np.asarray(A, dtype=np.float64)
    return MatvecOracle(A.shape[0], A.shape[1], lambda w: A @ w, lambda y: A.T @ y)


def _select_rank(s: np.ndarray, max_rank: int, rel_tol: float) -> int:
    r = min(max_rank, s.shape[0])
    if s.shape[0] == 0 or s[0] == 0.0:
        return min(1, s.shape[0])
    if rel_tol > 0.0:
        r = min(r, int(np.count_nonzero(s >= rel_tol * s[0])))
    r = min(r, int(np.count_nonzero(s > 0.0)))
    return max(r, 1)


def truncate_svd(A: np.ndarray, k: int) -> Factorization:
    """Best rank-k factorization of a dense matrix (Frobenius-optimal)."""
    A = np.asarray(A, dtype=np.float64)
    if k < 1 or k > min(A.shape):
        raise ValueError(f"rank {k} invalid for shape {A.shape}")
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    r = _select_rank(s, k, 0.0)
    return Factorization(u[:, :r] * s[:r], vt[:r].T.copy(), s[:r].copy())


def svd_by_policy(A: np.ndarray, policy: TruncationPolicy) -> Factorization:
    """Dense SVD truncated by both the rank cap and the relative cutoff."""
    A = np.asarray(A, dtype=np.float64)
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    r = _select_rank(s, policy.max_rank, policy.rel_tol)
    return Factorization(u[:, :r] * s[:r], vt[:r].T.copy(), s[:r].copy())


def rsvd(oracle: MatvecOracle, policy: TruncationPolicy, seed: int = 0,
         check_adjoint: bool = False, power_iterations: int = 0) -> Factorization:
    """Randomized SVD through matrix-vector products only.

    Draws a seeded Gaussian test matrix with k+p columns, sketches the column
    space, orthonormalizes, builds B^T = A^T Q column-block-wise, takes the
    small dense SVD and truncates by the policy.  Same seed gives bit-identical
    factors.
    """
    m, n = oracle.nrows, oracle.ncols
    l = policy.max_rank + policy.oversampling
    if l > min(m, n):
        raise ValueError(
            f"max_rank + oversampling = {l} exceeds min(nrows, ncols) = {min(m, n)}"
        )
    if check_adjoint:
        err = oracle.adjoint_error(seed=seed)
        if err > 1e-10:
            raise RuntimeError(f"oracle fails the adjoint check: relative error {err:.3e}")
    rng = np.random.Generator(np.random.Philox(key=seed))
    omega = rng.standard_normal((n, l))
    y = oracle.apply(omega)
    for _ in range(power_iterations):
        q, _ = np.linalg.qr(y)
        y = oracle.apply(oracle.apply_transpose(q))
    q, _ = np.linalg.qr(y)
    bt = oracle.apply_transpose(q)
    v_full, s, zt = np.linalg.svd(bt, full_matrices=False)
    u = q @ zt.T
    r = _select_rank(s, policy.max_rank, policy.rel_tol)
    return Factorization(u[:, :r] * s[:r], v_full[:, :r].copy(), s[:r].copy())


def _axis_locate(ax: AxisSpec, q: np.ndarray):
    """Cell index pair and fractional offset for linear interpolation."""
    q = np.asarray(q, dtype=np.float64)
    if ax.periodic:
        qq = q - ax.length * np.floor((q - ax.lo) / ax.length)
        fi = (qq - ax.lo) / ax.h
        i0 = np.minimum(fi.astype(np.int64), ax.count - 1)
        t = fi - i0
        i1 = (i0 + 1) % ax.count
    else:
        qq = np.clip(q, ax.lo, ax.hi)
        fi = (qq - ax.lo) / ax.h
        i0 = np.clip(fi.astype(np.int64), 0, ax.count - 2)
        t = fi - i0
        i1 = i0 + 1
    return i0, i1, t


def _corner_terms(axes: tuple[AxisSpec, ...], coords):
    """Linearized node indices and multilinear weights of the enclosing cell."""
    if len(axes) == 1:
        i0, i1, t = _axis_locate(axes[0], coords[0])
        return [(i0, 1.0 - t), (i1, t)]
    (ax, ay) = axes
    ix0, ix1, tx = _axis_locate(ax, coords[0])
    iy0, iy1, ty = _axis_locate(ay, coords[1])
    n2 = ay.count
    return [
        (ix0 * n2 + iy0, (1.0 - tx) * (1.0 - ty)),
        (ix0 * n2 + iy1, (1.0 - tx) * ty),
        (ix1 * n2 + iy0, tx * (1.0 - ty)),
        (ix1 * n2 + iy1, tx * ty),
    ]


def _interp_factor(factor: np.ndarray, axes, coords) -> np.ndarray:
    terms = _corner_terms(axes, coords)
    out = None
    for idx, w in terms:
        contrib = factor[idx] * np.asarray(w)[..., None]
        out = contrib if out is None else out + contrib
    return out


def eval_factored_batch(f: Factorization, row_coords, col_coords,
                        row_axes: tuple[AxisSpec, ...],
                        col_axes: tuple[AxisSpec, ...]) -> np.ndarray:
    """Multilinear interpolation of the factored matrix at query points.

    Interpolates each factor separately and sums over ranks, which equals
    interpolating the dense reconstruction because interpolation is linear in
    the node values.
    """
    rv = _interp_factor(f.row_factor, row_axes, tuple(np.atleast_1d(c) for c in row_coords))
    cv = _interp_factor(f.col_factor, col_axes, tuple(np.atleast_1d(c) for c in col_coords))
    return np.einsum("...k,...k->...", rv, cv)


def interp_dense_batch(dense: np.ndarray, row_coords, col_coords,
                       row_axes: tuple[AxisSpec, ...],
                       col_axes: tuple[AxisSpec, ...]) -> np.ndarray:
    """Multilinear interpolation of a dense matricized grid function; equals
    eval_factored_batch of its factorization up to round-off."""
    rt = _corner_terms(row_axes, tuple(np.atleast_1d(c) for c in row_coords))
    ct = _corner_terms(col_axes, tuple(np.atleast_1d(c) for c in col_coords))
    out = None
    for ri, rw in rt:
        for ci, cw in ct:
            contrib = dense[ri, ci] * (rw * cw)
            out = contrib if out is None else out + contrib
    return out


def eval_factored_point(f: Factorization, row_query, col_query,
                        row_axes, col_axes) -> float:
    row_query = row_query if isinstance(row_query, tuple) else (row_query,)
    col_query = col_query if isinstance(col_query, tuple) else (col_query,)
    return float(eval_factored_batch(f, row_query, col_query, row_axes, col_axes)[0])
