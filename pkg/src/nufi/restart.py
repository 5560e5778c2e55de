"""Snapshot restarts: build a low-rank copy of f at the current step through
lazy evaluation and make it the new target of the backward iteration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import flow
from .grid import PhaseSpaceGrid
from .lowrank import (Factorization, MatvecOracle, TruncationPolicy,
                      eval_factored_batch, eval_factored_point,
                      interp_dense_batch, rsvd, svd_by_policy)
from .poisson import FieldHistory


@dataclass(frozen=True)
class RestartConfig:
    period: int
    restart_grid: PhaseSpaceGrid
    policy: TruncationPolicy

    def __post_init__(self):
        if self.period < 1:
            raise ValueError("restart period must be >= 1")


def should_restart(step: int, cfg: RestartConfig) -> bool:
    if step < 1:
        raise ValueError("restart check is defined for step >= 1")
    return step % cfg.period == 0


@dataclass
class LowRankSnapshot:
    """Factored distribution at a restart step; immutable once published.

    Rows of the factorization run over the (linearized) spatial grid, columns
    over the velocity grid.  Queries outside the grid's bounding box return 0:
    the restart grid is chosen to cover the support, and extrapolating would
    invent mass.
    """

    factorization: Factorization
    grid: PhaseSpaceGrid
    step: int
    species: str = ""

    def __post_init__(self):
        m, n = self.factorization.shape
        if m != self.grid.n_spatial or n != self.grid.n_velocity:
            raise ValueError(
                f"factor shape {(m, n)} does not match grid matricization "
                f"{(self.grid.n_spatial, self.grid.n_velocity)}"
            )
        self._dense = None

    def _dense_values(self) -> np.ndarray:
        if self._dense is None:
            self._dense = self.factorization.reconstruct()
        return self._dense

    def eval_batch(self, *coords) -> np.ndarray:
        dim = self.grid.dim
        xs = tuple(np.atleast_1d(np.asarray(c, dtype=np.float64)) for c in coords[:dim])
        vs = tuple(np.atleast_1d(np.asarray(c, dtype=np.float64)) for c in coords[dim:])
        # beyond half the grid dimension, interpolating the reconstruction is
        # cheaper than the per-rank factored sum (same values to round-off,
        # and bit-identical across solver modes since all take this branch)
        if 2 * self.factorization.rank >= min(*self.factorization.shape):
            vals = interp_dense_batch(self._dense_values(), xs, vs,
                                      self.grid.spatial, self.grid.velocity)
        else:
            vals = eval_factored_batch(self.factorization, xs, vs,
                                       self.grid.spatial, self.grid.velocity)
        inside = np.ones(vals.shape, dtype=bool)
        for ax, c in zip(self.grid.spatial, xs):
            if not ax.periodic:
                inside &= (c >= ax.lo) & (c <= ax.hi)
        for ax, c in zip(self.grid.velocity, vs):
            inside &= (c >= ax.lo) & (c <= ax.hi)
        return np.where(inside, vals, 0.0)


def snapshot_eval(snapshot: LowRankSnapshot, x, v) -> float:
    x = x if isinstance(x, tuple) else (x,)
    v = v if isinstance(v, tuple) else (v,)
    return float(snapshot.eval_batch(*x, *v)[0])


def _evaluation_oracle(step: int, history: FieldHistory, source: flow.DistributionSource,
                       grid: PhaseSpaceGrid, qm: float, boundary: flow.TraceBoundary,
                       counter: flow.WorkCounter | None,
                       audit: flow.AllocationAudit | None):
    """Matrix-free oracle over f on the restart grid.

    Whole velocity columns are evaluated per backward trace so the trace cost
    is shared across all sketch vectors; f is evaluated once per pass and
    never materialized beyond a column block.
    """
    sx = grid.spatial_nodes()
    sv = grid.velocity_nodes()
    n_space, n_vel = grid.n_spatial, grid.n_velocity
    block = flow._block_size(n_space, n_vel)

    def f_block(j0, j1):
        bw = j1 - j0
        xs = tuple(np.tile(c, bw) for c in sx)
        vs = tuple(np.repeat(c[j0:j1], n_space) for c in sv)
        if audit is not None:
            audit.record_block(xs[0].size)
        before = counter.verlet_micro_steps if counter is not None else 0
        term, _ = flow.trace_backward(xs, vs, history, step, source.base_step,
                                      qm, boundary, False, counter)
        if counter is not None:
            counter.snapshot_micro_steps += counter.verlet_micro_steps - before
            counter.f_evaluations += xs[0].size
        f = np.asarray(source.eval(*xs, *vs), dtype=np.float64)
        if term is not None and term.any():
            f[term] = boundary.inflow(vs[0][term])
        return f.reshape(bw, n_space)

    def apply(w):
        w = np.asarray(w, dtype=np.float64)
        out_shape = (n_space,) if w.ndim == 1 else (n_space, w.shape[1])
        y = np.zeros(out_shape)
        for j0 in range(0, n_vel, block):
            j1 = min(j0 + block, n_vel)
            y += f_block(j0, j1).T @ w[j0:j1]
        return y

    def apply_transpose(z):
        z = np.asarray(z, dtype=np.float64)
        out_shape = (n_vel,) if z.ndim == 1 else (n_vel, z.shape[1])
        bt = np.empty(out_shape)
        for j0 in range(0, n_vel, block):
            j1 = min(j0 + block, n_vel)
            bt[j0:j1] = f_block(j0, j1) @ z
        return bt

    return MatvecOracle(n_space, n_vel, apply, apply_transpose), f_block


def build_snapshot(step: int, history: FieldHistory, source: flow.DistributionSource,
                   cfg: RestartConfig, *, qm: float = -1.0,
                   boundary: flow.TraceBoundary | None = None,
                   grid: PhaseSpaceGrid | None = None,
                   seed: int = 0, species: str = "",
                   method: str = "auto",
                   counter: flow.WorkCounter | None = None,
                   audit: flow.AllocationAudit | None = None) -> LowRankSnapshot:
    """Compress f at ``step`` on the restart grid into a snapshot.

    ``method`` "lazy" runs the randomized SVD through the evaluation oracle,
    "dense" assembles the full matrix and truncates its SVD (the reference
    semi-Lagrangian path), "auto" picks dense only when the policy cannot be
    sketched (rank + oversampling exceeding the grid) or the restart fires
    every step anyway.
    """
    grid = grid if grid is not None else cfg.restart_grid
    if boundary is None:
        boundary = (flow.PERIODIC_BOUNDARY if grid.spatial[0].periodic
                    else flow.FREE_BOUNDARY)
    policy = cfg.policy
    min_dim = min(grid.n_spatial, grid.n_velocity)
    if method == "auto":
        sketchable = policy.max_rank + policy.oversampling <= min_dim
        method = "lazy" if (cfg.period > 1 and sketchable) else "dense"
    oracle, f_block = _evaluation_oracle(step, history, source, grid, qm,
                                         boundary, counter, audit)
    if method == "lazy":
        fac = rsvd(oracle, policy, seed=seed)
    elif method == "dense":
        if audit is not None:
            audit.record_dense()
        dense = np.empty((grid.n_spatial, grid.n_velocity))
        block = flow._block_size(grid.n_spatial, grid.n_velocity)
        for j0 in range(0, grid.n_velocity, block):
            j1 = min(j0 + block, grid.n_velocity)
            dense[:, j0:j1] = f_block(j0, j1).T
        fac = svd_by_policy(dense, policy)
    else:
        raise ValueError(f"unknown snapshot build method {method!r}")
    return LowRankSnapshot(fac, grid, step, species)
