"""Top-level time loop: density assembly, field solve, diagnostics, restarts,
boundary handling and velocity-support tracking."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from . import flow
from .diagnostics import DiagnosticsRow, make_row
from .grid import BOUNDED, AxisSpec, PhaseSpaceGrid
from .lowrank import TruncationPolicy
from .poisson import (FieldHistory, electric_energy, solve_poisson_neumann,
                      solve_poisson_periodic)
from .restart import (LowRankSnapshot, RestartConfig, build_snapshot,
                      should_restart)


class SimulationError(RuntimeError):
    """Fatal numerical failure (NaN/Inf in the fields)."""


class SolverMode(str, Enum):
    NUFI = "nufi"
    NUFI_LR = "nufi_lr"
    SL = "sl"
    SL_LR = "sl_lr"


PERIODIC = "periodic"
OPEN_INFLOW = "open_inflow"
REFLECTING_WALL = "reflecting_wall"


@dataclass(frozen=True)
class BoundaryConfig:
    left: str = PERIODIC
    right: str = PERIODIC

    def __post_init__(self):
        if (self.left == PERIODIC) != (self.right == PERIODIC):
            raise ValueError("periodic boundaries must be paired")
        if self.left not in (PERIODIC, OPEN_INFLOW):
            raise ValueError(f"unknown left boundary {self.left!r}")
        if self.right not in (PERIODIC, REFLECTING_WALL):
            raise ValueError(f"unknown right boundary {self.right!r}")

    @property
    def periodic(self) -> bool:
        return self.left == PERIODIC

    def trace_boundary(self, inflow: Callable | None) -> flow.TraceBoundary:
        if self.periodic:
            return flow.PERIODIC_BOUNDARY
        return flow.TraceBoundary(
            periodic=False,
            wall_hi=self.right == REFLECTING_WALL,
            open_lo=self.left == OPEN_INFLOW,
            inflow=inflow if self.left == OPEN_INFLOW else None,
        )


@dataclass(frozen=True)
class InflowValue:
    """Terminal result of a backward trace that left through an open boundary."""

    value: float


def apply_boundaries(state: flow.FlowState, cfg: BoundaryConfig, axis: AxisSpec,
                     inflow: Callable | None = None):
    """One boundary pass for a 1D state after a backward position update.

    Periodic: wrap.  Reflecting wall at the upper end: specular reflection.
    Open lower end: the trace terminates with the inflow value at the
    crossing velocity.
    """
    x = state.x[0]
    v = state.v[0]
    if cfg.periodic:
        return flow.FlowState((float(axis.wrap(x)),), state.v, state.qm)
    if x > axis.hi and cfg.right == REFLECTING_WALL:
        return flow.FlowState((2.0 * axis.hi - x,), (-v,), state.qm)
    if x < axis.lo and cfg.left == OPEN_INFLOW:
        if inflow is None:
            raise ValueError("open boundary needs an inflow profile")
        return InflowValue(float(inflow(v)))
    return state


def track_velocity_support(bound: float, observed_vmax: float, margin: float = 0.1) -> float:
    """Expand (never shrink) the velocity bound to cover observed excursions."""
    if observed_vmax > bound:
        return observed_vmax * (1.0 + margin)
    return bound


@dataclass
class SpeciesConfig:
    name: str
    charge: float
    mass: float
    f0: Callable
    background: float = 0.0
    inflow: Callable | None = None
    velocity_axes: tuple[AxisSpec, ...] | None = None

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("species mass must be positive")

    @property
    def qm(self) -> float:
        return self.charge / self.mass


@dataclass
class SimulationSetup:
    grid: PhaseSpaceGrid
    species: list[SpeciesConfig]
    dt: float
    steps: int
    mode: SolverMode = SolverMode.NUFI
    restart: RestartConfig | None = None
    boundary: BoundaryConfig = field(default_factory=BoundaryConfig)
    quadrature_rule: str = "trapezoid"
    seed: int = 0
    track_support: bool = False
    support_margin: float = 0.1
    velocity_min_count: int = 64
    heatmap_times: tuple[float, ...] = ()
    heatmap_slice: tuple[float, float] | None = None
    threads: int | None = None


@dataclass
class Heatmap:
    step: int
    time: float
    species: str
    values: np.ndarray
    meta: dict


@dataclass
class Checkpoint:
    """State needed to continue a run: the newest snapshots plus the field
    entries from the restart step onward."""

    step: int
    phi_entries: np.ndarray
    snapshots: dict[str, LowRankSnapshot]
    bounds: dict[str, float]
    velocity_counts: dict[str, int]


class _SpeciesRuntime:
    def __init__(self, cfg: SpeciesConfig, base_grid: PhaseSpaceGrid,
                 boundary: BoundaryConfig):
        self.cfg = cfg
        self.name = cfg.name
        self.charge = cfg.charge
        self.mass = cfg.mass
        self.qm = cfg.qm
        self.background = cfg.background
        vel = cfg.velocity_axes if cfg.velocity_axes is not None else base_grid.velocity
        self.grid = PhaseSpaceGrid(base_grid.spatial, tuple(vel))
        self.boundary = boundary.trace_boundary(cfg.inflow)
        self.source = flow.analytic_source(cfg.f0)
        self.bound0 = max(abs(ax.lo) for ax in self.grid.velocity)
        self.bound0 = max(self.bound0, max(abs(ax.hi) for ax in self.grid.velocity))
        self.bound = self.bound0
        self.nv0 = self.grid.velocity[0].count
        # magnitude scale of f0, for the support tracker's emptiness floor
        probe_v = self.grid.velocity_nodes()
        probe_x = tuple(np.full(probe_v[0].size, ax.lo) for ax in self.grid.spatial)
        self.f_scale = float(np.max(cfg.f0(*probe_x, *probe_v)))

    def expand_to(self, new_bound: float, min_count: int):
        count = max(self.nv0, min_count,
                    int(math.ceil(self.nv0 * new_bound / self.bound0)))
        axes = tuple(AxisSpec(-new_bound, new_bound, count, BOUNDED)
                     for _ in self.grid.velocity)
        self.grid = PhaseSpaceGrid(self.grid.spatial, axes)
        self.bound = new_bound


@dataclass
class RunArtifacts:
    rows: list[DiagnosticsRow]
    counter: flow.WorkCounter
    audit: flow.AllocationAudit
    history: FieldHistory
    snapshots: dict[str, list[LowRankSnapshot]]
    species_series: dict[str, dict[str, list]]
    heatmaps: list[Heatmap]
    mode: SolverMode
    dt: float
    max_abs_rho: list = field(default_factory=list)

    def times(self) -> np.ndarray:
        return np.array([r.time for r in self.rows])

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def checkpoint(self, step: int) -> Checkpoint:
        snaps = {}
        for name, lst in self.snapshots.items():
            matching = [s for s in lst if s.step == step]
            if not matching:
                raise ValueError(f"no snapshot of species {name!r} at step {step}")
            snaps[name] = matching[-1]
        return Checkpoint(
            step=step,
            phi_entries=np.array([self.history.phi_at(s)
                                  for s in range(step, self.history.step_count)]),
            snapshots=snaps,
            bounds={n: self.species_series[n]["bound"][step] for n in self.snapshots},
            velocity_counts={n: self.species_series[n]["nv"][step] for n in self.snapshots},
        )


def _effective_restart(setup: SimulationSetup) -> RestartConfig | None:
    """Mode normalization: sl == restart every step without truncation,
    sl_lr == restart every step with the configured truncation, nufi == never."""
    mode = SolverMode(setup.mode)
    if mode == SolverMode.NUFI:
        return None
    if mode == SolverMode.NUFI_LR:
        if setup.restart is None:
            raise ValueError("nufi_lr mode needs a restart config")
        return setup.restart
    grid = setup.grid
    if mode == SolverMode.SL:
        policy = TruncationPolicy(max_rank=min(grid.n_spatial, grid.n_velocity),
                                  rel_tol=0.0, oversampling=1)
    else:
        if setup.restart is None:
            raise ValueError("sl_lr mode needs a restart config for the policy")
        policy = setup.restart.policy
    return RestartConfig(period=1, restart_grid=grid, policy=policy)


def _solve_field(rho_flat: np.ndarray, setup: SimulationSetup) -> np.ndarray:
    axes = setup.grid.spatial
    if setup.boundary.periodic:
        if len(axes) == 1:
            return solve_poisson_periodic(rho_flat, axes)
        return solve_poisson_periodic(
            rho_flat.reshape(axes[0].count, axes[1].count), axes)
    if len(axes) != 1:
        raise NotImplementedError("non-periodic fields are 1D only")
    return solve_poisson_neumann(rho_flat, axes[0])


def compute_heatmap(at_step: int, history: FieldHistory, runtime,
                    slice_values: tuple[float, float] | None = None,
                    counter: flow.WorkCounter | None = None) -> tuple[np.ndarray, dict]:
    """Dense f values for export: the full (x, v) plane in 1D1V, an
    (x, u) slice at fixed (y*, w*) in 2D2V.  Full first half-kick (no skip)."""
    grid = runtime.grid
    if grid.dim == 1:
        x_nodes = grid.spatial[0].nodes()
        v_nodes = grid.velocity[0].nodes()
        nx, nv = x_nodes.size, v_nodes.size
        mat = np.empty((nx, nv))
        blk = flow._block_size(nx, nv)
        for j0 in range(0, nv, blk):
            j1 = min(j0 + blk, nv)
            xs = np.tile(x_nodes, j1 - j0)
            vs = np.repeat(v_nodes[j0:j1], nx)
            vals = flow.eval_f(((xs,), (vs,)), at_step, history, runtime.source,
                               qm=runtime.qm, boundary=runtime.boundary,
                               skip_first=False, counter=counter)
            mat[:, j0:j1] = vals.reshape(j1 - j0, nx).T
        meta = {
            "time": at_step * history.dt, "step": at_step,
            "rows": "x", "cols": "v",
            "xmin": grid.spatial[0].lo, "xmax": grid.spatial[0].hi, "nx": nx,
            "vmin": grid.velocity[0].lo, "vmax": grid.velocity[0].hi, "nv": nv,
        }
        return mat, meta
    ys, ws = slice_values if slice_values is not None else (
        0.5 * (grid.spatial[1].lo + grid.spatial[1].hi), 0.0)
    x_nodes = grid.spatial[0].nodes()
    u_nodes = grid.velocity[0].nodes()
    nx, nu = x_nodes.size, u_nodes.size
    xs = np.tile(x_nodes, nu)
    yy = np.full(xs.size, ys)
    us = np.repeat(u_nodes, nx)
    ww = np.full(xs.size, ws)
    vals = flow.eval_f(((xs, yy), (us, ww)), at_step, history, runtime.source,
                       qm=runtime.qm, boundary=runtime.boundary,
                       skip_first=False, counter=counter)
    mat = vals.reshape(nu, nx).T
    meta = {
        "time": at_step * history.dt, "step": at_step,
        "rows": "x", "cols": "u", "y_slice": ys, "w_slice": ws,
        "xmin": grid.spatial[0].lo, "xmax": grid.spatial[0].hi, "nx": nx,
        "vmin": grid.velocity[0].lo, "vmax": grid.velocity[0].hi, "nv": nu,
    }
    return mat, meta


def run(setup: SimulationSetup, resume: Checkpoint | None = None,
        progress: Callable[[int, int], None] | None = None) -> RunArtifacts:
    """Run the time loop.

    Per step: one streamed evaluation pass per species yields the charge
    density and all scalar diagnostics, the field is solved and staged, a
    diagnostics row is emitted, and on restart steps each species is
    compressed into a new snapshot that becomes its backward-trace target.
    Step 0 samples the initial condition directly (zero-depth traces).
    """
    if setup.threads is not None:
        import numba

        numba.set_num_threads(setup.threads)
    mode = SolverMode(setup.mode)
    restart_cfg = _effective_restart(setup)
    counter = flow.WorkCounter()
    audit = flow.AllocationAudit()
    history = FieldHistory(setup.grid.spatial, setup.dt, capacity=setup.steps + 2)
    runtimes = [_SpeciesRuntime(sp, setup.grid, setup.boundary) for sp in setup.species]
    artifacts = RunArtifacts(
        rows=[], counter=counter, audit=audit, history=history,
        snapshots={rt.name: [] for rt in runtimes},
        species_series={rt.name: {"mass": [], "flux": [], "vmax": [], "bound": [], "nv": []}
                        for rt in runtimes},
        heatmaps=[], mode=mode, dt=setup.dt,
    )
    start = 0
    if resume is not None:
        for _ in range(resume.step):
            history.append(np.zeros_like(resume.phi_entries[0]))
        for phi in resume.phi_entries:
            history.append(phi)
        for rt in runtimes:
            snap = resume.snapshots[rt.name]
            rt.source = flow.snapshot_source(snap)
            if setup.track_support:
                rt.bound = resume.bounds[rt.name]
                rt.expand_to(rt.bound, resume.velocity_counts[rt.name])
        start = resume.step + 1
        for name, series in artifacts.species_series.items():
            for key in series:
                series[key] = [None] * start
        artifacts.rows = [None] * start
    heatmap_steps = {int(round(t / setup.dt)) for t in setup.heatmap_times}

    for n in range(start, setup.steps + 1):
        moments = []
        rho = None
        for rt in runtimes:
            mom = flow.sweep_moments(
                n, history, rt.source, rt.grid, rt.qm, rt.mass,
                boundary=rt.boundary, quadrature_rule=setup.quadrature_rule,
                skip_first=True, need_moments=True,
                need_boundary_flux=rt.boundary.open_lo,
                support_floor=1e-9 * rt.f_scale,
                counter=counter, audit=audit)
            moments.append(mom)
            contrib = rt.background + rt.charge * mom.velocity_integral
            rho = contrib if rho is None else rho + contrib
        if not np.all(np.isfinite(rho)):
            raise SimulationError(f"non-finite charge density at step {n}")
        artifacts.max_abs_rho.append(float(np.abs(rho).max()))
        phi = _solve_field(rho, setup)
        if not np.all(np.isfinite(phi)):
            raise SimulationError(f"non-finite potential at step {n}")
        history.set_tip(phi)
        artifacts.rows.append(make_row(n, n * setup.dt, electric_energy(history, step=n),
                                       moments))
        for rt, mom in zip(runtimes, moments):
            s = artifacts.species_series[rt.name]
            s["mass"].append(mom.mass)
            s["flux"].append(mom.boundary_flux)
            s["vmax"].append(mom.vmax_seen)
            s["bound"].append(rt.bound)
            s["nv"].append(rt.grid.velocity[0].count)
        if setup.track_support:
            for rt, mom in zip(runtimes, moments):
                new_bound = track_velocity_support(rt.bound, mom.vmax_seen,
                                                   setup.support_margin)
                if new_bound > rt.bound:
                    rt.expand_to(new_bound, setup.velocity_min_count)
        if n in heatmap_steps:
            for rt in runtimes:
                mat, meta = compute_heatmap(n, history, rt, setup.heatmap_slice,
                                            counter=counter)
                meta["species"] = rt.name
                artifacts.heatmaps.append(Heatmap(n, n * setup.dt, rt.name, mat, meta))
        if restart_cfg is not None and n >= 1 and should_restart(n, restart_cfg):
            for idx, rt in enumerate(runtimes):
                rgrid = _restart_grid_for(restart_cfg, rt, setup.track_support)
                snap = build_snapshot(
                    n, history, rt.source, restart_cfg, qm=rt.qm,
                    boundary=rt.boundary, grid=rgrid,
                    seed=setup.seed * 1000003 + n * 101 + idx,
                    species=rt.name, counter=counter, audit=audit)
                rt.source = flow.snapshot_source(snap)
                artifacts.snapshots[rt.name].append(snap)
        if n < setup.steps:
            history.commit_tip(n)
        if progress is not None:
            progress(n, setup.steps)
    history.clear_tip()
    return artifacts


def _restart_grid_for(cfg: RestartConfig, rt: _SpeciesRuntime,
                      track_support: bool) -> PhaseSpaceGrid:
    template = cfg.restart_grid
    if not track_support:
        return template
    axes = tuple(AxisSpec(-rt.bound, rt.bound, ax.count, BOUNDED)
                 for ax in template.velocity)
    return PhaseSpaceGrid(template.spatial, axes)
