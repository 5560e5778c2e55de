"""Backward-flow evaluation of the distribution function.

The distribution is never stored on the phase-space grid: a value f(t_n, x, v)
is obtained by iterating the point backward through the field history with
the half-kick / drift / half-kick update and sampling the distribution source
(analytic initial datum or the newest low-rank snapshot) at the foot point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np

from . import _kernels
from .grid import PhaseSpaceGrid, velocity_quadrature_weights
from .poisson import FieldHistory

DEFAULT_BLOCK_POINTS = 32768
MAX_WALL_CROSSINGS = 8


@dataclass
class WorkCounter:
    """Exact operation counts; snapshot_micro_steps is the subset of
    verlet_micro_steps spent inside snapshot builds."""

    verlet_micro_steps: int = 0
    f_evaluations: int = 0
    snapshot_micro_steps: int = 0

    def merge(self, other: "WorkCounter"):
        self.verlet_micro_steps += other.verlet_micro_steps
        self.f_evaluations += other.f_evaluations
        self.snapshot_micro_steps += other.snapshot_micro_steps


@dataclass
class AllocationAudit:
    """Records transient evaluation-buffer sizes and any dense phase-space
    materialization, so tests can assert the memory law."""

    peak_block_points: int = 0
    dense_materializations: int = 0

    def record_block(self, npts: int):
        if npts > self.peak_block_points:
            self.peak_block_points = npts

    def record_dense(self):
        self.dense_materializations += 1


@dataclass(frozen=True)
class FlowState:
    """A phase-space point carried through the backward iteration."""

    x: tuple[float, ...]
    v: tuple[float, ...]
    qm: float = -1.0


@dataclass(frozen=True)
class TraceBoundary:
    """Boundary action applied during the backward trace of one species."""

    periodic: bool = True
    wall_hi: bool = False
    open_lo: bool = False
    inflow: Callable | None = None

    def __post_init__(self):
        if self.open_lo and self.inflow is None:
            raise ValueError("open inflow boundary needs an inflow profile")


PERIODIC_BOUNDARY = TraceBoundary(periodic=True)
FREE_BOUNDARY = TraceBoundary(periodic=False)


@dataclass(frozen=True)
class DistributionSource:
    """Target of the backward iteration: analytic f0 or a snapshot."""

    kind: str  # "analytic_f0" | "snapshot"
    payload: object
    base_step: int = 0

    def __post_init__(self):
        if self.kind not in ("analytic_f0", "snapshot"):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.kind == "analytic_f0" and self.base_step != 0:
            raise ValueError("analytic sources are anchored at step 0")

    def eval(self, *coords):
        if self.kind == "analytic_f0":
            return self.payload(*coords)
        return self.payload.eval_batch(*coords)


def analytic_source(f0: Callable) -> DistributionSource:
    return DistributionSource("analytic_f0", f0, 0)


def snapshot_source(snapshot) -> DistributionSource:
    return DistributionSource("snapshot", snapshot, snapshot.step)


class MissingHistoryError(IndexError):
    pass


def _nsub(npts: int) -> int:
    """Independent point sub-ranges per kernel call; results never depend on it."""
    return max(1, min(numba.get_num_threads() * 4, npts))


def _check_steps(history: FieldHistory, from_step: int, to_step: int, skip_first: bool):
    if to_step > from_step:
        raise ValueError(f"to_step {to_step} must not exceed from_step {from_step}")
    if to_step < 0:
        raise ValueError("to_step must be non-negative")
    if from_step == to_step:
        return
    top = from_step - 1 if skip_first else from_step
    if top >= history.available:
        raise MissingHistoryError(
            f"trace from step {from_step} needs field entry {top}, "
            f"but only {history.available} are available"
        )


def trace_backward(xs, vs, history: FieldHistory, from_step: int, to_step: int,
                   qm: float, boundary: TraceBoundary = PERIODIC_BOUNDARY,
                   skip_first: bool = False, counter: WorkCounter | None = None,
                   reduce_vmax: bool = True):
    """Advance point arrays backward from ``from_step`` to ``to_step`` in place.

    Returns (terminated, vmax): terminated is a bool mask of points that left
    through an open boundary (None when impossible); vmax is the largest |v|
    encountered, as a scalar, or per point when ``reduce_vmax`` is false
    (None unless tracked by the bounded kernel).
    """
    _check_steps(history, from_step, to_step, skip_first)
    if from_step == to_step:
        return None, None
    dim = len(history.axes)
    grads = history.grad_tables()
    if dim == 1:
        (ax,) = history.axes
        inv_h = 1.0 / ax.h
        if boundary.periodic:
            if not ax.periodic:
                raise ValueError("periodic trace on a bounded axis")
            _kernels.trace_periodic_1d(xs[0], vs[0], grads[0], history.dt, qm,
                                       from_step, to_step, skip_first,
                                       ax.lo, inv_h, ax.count, _nsub(xs[0].size))
            if counter is not None:
                counter.verlet_micro_steps += xs[0].size * (from_step - to_step)
            return None, None
        if boundary.wall_hi or boundary.open_lo:
            term, vmax, steps, bad = _kernels.trace_bounded_1d(
                xs[0], vs[0], grads[0], history.dt, qm, from_step, to_step,
                skip_first, ax.lo, ax.hi, inv_h, ax.ncells,
                boundary.wall_hi, boundary.open_lo, MAX_WALL_CROSSINGS)
            if bad:
                raise RuntimeError(
                    f"{bad} point(s) exceeded {MAX_WALL_CROSSINGS} wall "
                    "crossings in one step; time step too large for the domain"
                )
            if counter is not None:
                counter.verlet_micro_steps += int(steps)
            if reduce_vmax:
                return term.astype(bool), float(vmax.max()) if vmax.size else 0.0
            return term.astype(bool), vmax
        _kernels.trace_free_1d(xs[0], vs[0], grads[0], history.dt, qm,
                               from_step, to_step, skip_first,
                               ax.lo, ax.hi, inv_h, ax.ncells, _nsub(xs[0].size))
        if counter is not None:
            counter.verlet_micro_steps += xs[0].size * (from_step - to_step)
        return None, None
    ax, ay = history.axes
    if not boundary.periodic:
        raise NotImplementedError("2D traces support periodic boundaries only")
    _kernels.trace_periodic_2d(xs[0], xs[1], vs[0], vs[1], grads[0], grads[1],
                               history.dt, qm, from_step, to_step, skip_first,
                               ax.lo, ay.lo, 1.0 / ax.h, 1.0 / ay.h,
                               ax.count, ay.count, _nsub(xs[0].size))
    if counter is not None:
        counter.verlet_micro_steps += xs[0].size * (from_step - to_step)
    return None, None


def backward_step(state: FlowState, history: FieldHistory, i: int,
                  boundary: TraceBoundary | None = None,
                  skip_kick: bool = False,
                  counter: WorkCounter | None = None) -> FlowState:
    """One backward micro step from index i to i-1."""
    if i < 1:
        raise ValueError("backward_step needs i >= 1")
    return backward_flow(state, history, i, i - 1, boundary=boundary,
                         skip_first=skip_kick, counter=counter)


def backward_flow(state: FlowState, history: FieldHistory, from_step: int,
                  to_step: int, boundary: TraceBoundary | None = None,
                  skip_first: bool = False,
                  counter: WorkCounter | None = None) -> FlowState:
    """Fold backward steps from ``from_step`` down to ``to_step``."""
    if boundary is None:
        boundary = PERIODIC_BOUNDARY if history.axes[0].periodic else FREE_BOUNDARY
    xs = tuple(np.array([c], dtype=np.float64) for c in state.x)
    vs = tuple(np.array([c], dtype=np.float64) for c in state.v)
    trace_backward(xs, vs, history, from_step, to_step, state.qm, boundary,
                   skip_first, counter)
    return FlowState(tuple(float(a[0]) for a in xs), tuple(float(a[0]) for a in vs), state.qm)


def forward_flow(state_or_arrays, history: FieldHistory, from_step: int, to_step: int,
                 qm: float | None = None):
    """Exact inverse of the backward trace: reverses the three Verlet
    sub-steps with flipped signs through the same history entries.

    Accepts a FlowState or (xs, vs) coordinate-array tuples; periodic axes
    wrap positions.  Only used for reversibility checks, so it runs in numpy.
    """
    if to_step < from_step:
        raise ValueError("forward_flow runs from a lower to a higher step")
    scalar = isinstance(state_or_arrays, FlowState)
    if scalar:
        st = state_or_arrays
        xs = tuple(np.array([c]) for c in st.x)
        vs = tuple(np.array([c]) for c in st.v)
        qm = st.qm
    else:
        xs, vs = state_or_arrays
        xs = tuple(np.array(a, dtype=np.float64) for a in xs)
        vs = tuple(np.array(a, dtype=np.float64) for a in vs)
        if qm is None:
            raise ValueError("qm required for array input")
    dt = history.dt
    half = 0.5 * dt * qm
    axes = history.axes
    for i in range(from_step + 1, to_step + 1):
        e_lo = history.eval_E(i - 1, *xs)
        e_lo = (e_lo,) if len(axes) == 1 else e_lo
        vh = tuple(v + half * e for v, e in zip(vs, e_lo))
        xs = tuple(x + dt * v for x, v in zip(xs, vh))
        xs = tuple(
            x - ax.length * np.floor((x - ax.lo) / ax.length) if ax.periodic else x
            for x, ax in zip(xs, axes)
        )
        e_hi = history.eval_E(i, *xs)
        e_hi = (e_hi,) if len(axes) == 1 else e_hi
        vs = tuple(v + half * e for v, e in zip(vh, e_hi))
    if scalar:
        return FlowState(tuple(float(a[0]) for a in xs), tuple(float(a[0]) for a in vs), qm)
    return xs, vs


def eval_f(points, at_step: int, history: FieldHistory, source: DistributionSource,
           qm: float = -1.0, boundary: TraceBoundary | None = None,
           skip_first: bool = False, counter: WorkCounter | None = None):
    """Evaluate f at phase-space point(s) by tracing back to the source.

    ``points`` is ((x...), (v...)) with scalars or arrays.  With an analytic
    source every returned value is an exact sample of f0.
    """
    if source.base_step > at_step:
        raise ValueError(
            f"source base step {source.base_step} is ahead of evaluation step {at_step}"
        )
    xs_in, vs_in = points
    xs = tuple(np.atleast_1d(np.asarray(c, dtype=np.float64)).copy() for c in xs_in)
    vs = tuple(np.atleast_1d(np.asarray(c, dtype=np.float64)).copy() for c in vs_in)
    if boundary is None:
        boundary = PERIODIC_BOUNDARY if history.axes[0].periodic else FREE_BOUNDARY
    term, _ = trace_backward(xs, vs, history, at_step, source.base_step, qm,
                             boundary, skip_first, counter)
    vals = np.asarray(source.eval(*xs, *vs), dtype=np.float64)
    if term is not None and term.any():
        vals[term] = boundary.inflow(vs[0][term])
    if counter is not None:
        counter.f_evaluations += xs[0].size
    scalar_in = np.isscalar(xs_in[0]) or np.asarray(xs_in[0]).ndim == 0
    return float(vals[0]) if scalar_in else vals


@dataclass
class SpeciesMoments:
    """Single-pass velocity moments of one species at one time step."""

    velocity_integral: np.ndarray  # integral of f dv per spatial node
    mass: float = 0.0
    kinetic: float = 0.0
    entropy: float = 0.0
    l1: float = 0.0
    l2sq: float = 0.0
    fmin: float = np.inf
    fmax: float = -np.inf
    vmax_seen: float = 0.0
    boundary_flux: float = 0.0


def _block_size(n_space: int, n_vel: int) -> int:
    b = max(1, DEFAULT_BLOCK_POINTS // max(n_space, 1))
    return int(min(b, max(1, n_vel // 8), n_vel))


def sweep_moments(at_step: int, history: FieldHistory, source: DistributionSource,
                  grid: PhaseSpaceGrid, qm: float, mass_per_particle: float = 1.0,
                  boundary: TraceBoundary = PERIODIC_BOUNDARY,
                  quadrature_rule: str = "trapezoid",
                  skip_first: bool = True,
                  need_moments: bool = True,
                  need_boundary_flux: bool = False,
                  support_floor: float = 0.0,
                  counter: WorkCounter | None = None,
                  audit: AllocationAudit | None = None,
                  block_nodes: int | None = None) -> SpeciesMoments:
    """Evaluate f over the whole phase grid in velocity blocks and accumulate
    the velocity integral plus scalar diagnostics in one pass.

    The phase grid is streamed: at most (spatial nodes x block) values of f
    exist at any time.  Velocity blocks are processed in a fixed order and
    reduced per spatial node, so results do not depend on thread count.
    """
    sx = grid.spatial_nodes()
    sv = grid.velocity_nodes()
    w_vel = velocity_quadrature_weights(grid, quadrature_rule)
    n_space = grid.n_spatial
    n_vel = grid.n_velocity
    vol = grid.spatial_cell_volume
    B = block_nodes or _block_size(n_space, n_vel)
    out = SpeciesMoments(velocity_integral=np.zeros(n_space))
    vsq = sum(c * c for c in sv)
    with np.errstate(divide="ignore", invalid="ignore"):
        for j0 in range(0, n_vel, B):
            j1 = min(j0 + B, n_vel)
            bw = j1 - j0
            xs = tuple(np.tile(c, bw) for c in sx)
            vs = tuple(np.repeat(c[j0:j1], n_space) for c in sv)
            if audit is not None:
                audit.record_block(xs[0].size)
            term, vmax_pts = trace_backward(xs, vs, history, at_step, source.base_step,
                                            qm, boundary, skip_first, counter,
                                            reduce_vmax=False)
            f = np.asarray(source.eval(*xs, *vs), dtype=np.float64)
            if term is not None:
                if term.any():
                    f[term] = boundary.inflow(vs[0][term])
                # support tracking ignores excursions of essentially empty
                # points, otherwise kicked edge nodes ratchet the bound forever
                carrying = f > support_floor
                if carrying.any():
                    vmax = float(vmax_pts[carrying].max())
                    if vmax > out.vmax_seen:
                        out.vmax_seen = vmax
            if counter is not None:
                counter.f_evaluations += f.size
            f2 = f.reshape(bw, n_space)
            wb = w_vel[j0:j1]
            out.velocity_integral += wb @ f2
            if need_boundary_flux:
                out.boundary_flux += float(np.dot(wb * sv[0][j0:j1], f2[:, 0]))
            if need_moments:
                rows = f2.sum(axis=1)
                out.mass += vol * float(np.dot(wb, rows))
                out.kinetic += 0.5 * mass_per_particle * vol * float(
                    np.dot(wb * vsq[j0:j1], rows))
                flog = np.where(f2 > 0.0, f2 * np.log(np.maximum(f2, 1e-300)), 0.0)
                out.entropy -= vol * float(np.dot(wb, flog.sum(axis=1)))
                out.l1 += vol * float(np.dot(wb, np.abs(f2).sum(axis=1)))
                out.l2sq += vol * float(np.dot(wb, (f2 * f2).sum(axis=1)))
                fmin = float(f2.min())
                fmax = float(f2.max())
                if fmin < out.fmin:
                    out.fmin = fmin
                if fmax > out.fmax:
                    out.fmax = fmax
    return out


def compute_density(at_step: int, history: FieldHistory, species, grid=None,
                    quadrature_rule: str = "trapezoid", skip_first: bool = True,
                    counter: WorkCounter | None = None,
                    audit: AllocationAudit | None = None) -> np.ndarray:
    """Charge density: per species, background + charge * integral of f dv.

    ``species`` is an iterable of objects carrying source, charge, qm,
    background, boundary and (optionally per-species) grid.
    """
    rho = None
    for sp in species:
        g = sp.grid if getattr(sp, "grid", None) is not None else grid
        mom = sweep_moments(at_step, history, sp.source, g, sp.qm,
                            boundary=getattr(sp, "boundary", PERIODIC_BOUNDARY),
                            quadrature_rule=quadrature_rule,
                            skip_first=skip_first, need_moments=False,
                            counter=counter, audit=audit)
        contrib = sp.background + sp.charge * mom.velocity_integral
        rho = contrib if rho is None else rho + contrib
    return rho
