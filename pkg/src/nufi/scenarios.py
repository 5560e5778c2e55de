"""Analytic initial conditions and ready-made simulation setups."""

from __future__ import annotations

import numpy as np

from .grid import BOUNDED, PERIODIC, AxisSpec, PhaseSpaceGrid
from .lowrank import TruncationPolicy
from .restart import RestartConfig
from .simulation import (BoundaryConfig, SimulationSetup, SolverMode,
                         SpeciesConfig)

_SQRT2PI = np.sqrt(2.0 * np.pi)


def f0_two_stream_1d(x, v, alpha=0.01, k=0.5):
    """Counter-streaming beams: (1+a cos(kx)) v^2 exp(-v^2/2) / sqrt(2 pi)."""
    v = np.asarray(v, dtype=np.float64)
    return (1.0 + alpha * np.cos(k * np.asarray(x))) * v * v * np.exp(-0.5 * v * v) / _SQRT2PI


def f0_landau(x, v, alpha=0.01, k=0.5):
    """Perturbed Maxwellian."""
    v = np.asarray(v, dtype=np.float64)
    return (1.0 + alpha * np.cos(k * np.asarray(x))) * np.exp(-0.5 * v * v) / _SQRT2PI


def f0_two_stream_2d(x, y, u, v, alpha=1e-3, k=0.2, v0=2.4):
    """Four symmetric beams at (+-v0, +-v0) with a cos perturbation in x and y."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    pert = 1.0 + alpha * (np.cos(k * np.asarray(x)) + np.cos(k * np.asarray(y)))
    bu = np.exp(-0.5 * (u - v0) ** 2) + np.exp(-0.5 * (u + v0) ** 2)
    bv = np.exp(-0.5 * (v - v0) ** 2) + np.exp(-0.5 * (v + v0) ** 2)
    return pert * bu * bv / (8.0 * np.pi)


def f0_maxwellian_drift(v, temperature, mass=1.0, drift=0.0):
    """Unit-density Maxwellian with thermal speed sqrt(T/m) centred at drift."""
    if temperature <= 0 or mass <= 0:
        raise ValueError("temperature and mass must be positive")
    sig2 = temperature / mass
    v = np.asarray(v, dtype=np.float64)
    return np.exp(-0.5 * (v - drift) ** 2 / sig2) / np.sqrt(2.0 * np.pi * sig2)


def _policy(max_rank, rel_tol, oversampling):
    return TruncationPolicy(max_rank=max_rank, rel_tol=rel_tol, oversampling=oversampling)


def two_stream_1d_preset(nx=256, nv=256, dt=0.1, steps=1000, mode=SolverMode.NUFI,
                         period=100, max_rank=20, rel_tol=1e-3, oversampling=5,
                         v_max=6.0, alpha=0.01, k=0.5, seed=0,
                         restart_nx=None, restart_nv=None) -> SimulationSetup:
    x_ax = AxisSpec(0.0, 4.0 * np.pi, nx, PERIODIC)
    v_ax = AxisSpec(-v_max, v_max, nv, BOUNDED)
    grid = PhaseSpaceGrid((x_ax,), (v_ax,))
    rgrid = PhaseSpaceGrid(
        (AxisSpec(0.0, 4.0 * np.pi, restart_nx or nx, PERIODIC),),
        (AxisSpec(-v_max, v_max, restart_nv or nv, BOUNDED),),
    )
    species = SpeciesConfig(
        name="electrons", charge=-1.0, mass=1.0,
        f0=lambda x, v: f0_two_stream_1d(x, v, alpha, k), background=1.0,
    )
    return SimulationSetup(
        grid=grid, species=[species], dt=dt, steps=steps, mode=mode,
        restart=RestartConfig(period, rgrid, _policy(max_rank, rel_tol, oversampling)),
        boundary=BoundaryConfig(), seed=seed,
    )


def landau_preset(nx=256, nv=256, dt=0.1, steps=500, mode=SolverMode.NUFI,
                  period=100, max_rank=20, rel_tol=1e-3, oversampling=5,
                  v_max=6.0, alpha=0.01, k=0.5, seed=0) -> SimulationSetup:
    setup = two_stream_1d_preset(nx, nv, dt, steps, mode, period, max_rank,
                                 rel_tol, oversampling, v_max, alpha, k, seed)
    setup.species[0].f0 = lambda x, v: f0_landau(x, v, alpha, k)
    return setup


def two_stream_2d_preset(n=128, nv=None, dt=0.1, steps=500, mode=SolverMode.NUFI,
                         period=50, max_rank=20, rel_tol=1e-3, oversampling=5,
                         alpha=1e-3, k=0.2, v0=2.4, v_cut=None, seed=0) -> SimulationSetup:
    nv = nv or n
    # the cos(kx)+cos(ky) perturbation fixes the periodic box to [0, 2 pi / k]
    L = 2.0 * np.pi / k
    v_cut = v_cut if v_cut is not None else v0 + 6.0
    sx = AxisSpec(0.0, L, n, PERIODIC)
    sy = AxisSpec(0.0, L, n, PERIODIC)
    vu = AxisSpec(-v_cut, v_cut, nv, BOUNDED)
    vw = AxisSpec(-v_cut, v_cut, nv, BOUNDED)
    grid = PhaseSpaceGrid((sx, sy), (vu, vw))
    species = SpeciesConfig(
        name="electrons", charge=-1.0, mass=1.0,
        f0=lambda x, y, u, v: f0_two_stream_2d(x, y, u, v, alpha, k, v0),
        background=1.0,
    )
    return SimulationSetup(
        grid=grid, species=[species], dt=dt, steps=steps, mode=mode,
        restart=RestartConfig(period, grid, _policy(max_rank, rel_tol, oversampling)),
        boundary=BoundaryConfig(), seed=seed,
    )


def shock_preset(nx=1024, nv=64, dt=0.1, steps=10000, mode=SolverMode.NUFI_LR,
                 period=50, max_rank=20, rel_tol=1e-3, oversampling=5,
                 restart_n=1024, length=200.0, u_s=0.4, t_electron=11475.0,
                 t_ion=10.0, mass_ratio=1836.0, seed=0) -> SimulationSetup:
    """Ion-acoustic shock: drifting ions against a reflecting wall at x = 0,
    open Maxwellian inflow on the left, Neumann field boundaries."""
    x_ax = AxisSpec(-length, 0.0, nx, BOUNDED)
    species = []
    for name, charge, mass, temp, drift in (
        ("electrons", -1.0, 1.0, t_electron, 0.0),
        ("ions", 1.0, mass_ratio, t_ion, u_s),
    ):
        sigma = np.sqrt(temp / mass)
        bound = abs(drift) + 6.0 * sigma
        profile = (lambda temp=temp, mass=mass, drift=drift:
                   lambda v: f0_maxwellian_drift(v, temp, mass, drift))()
        species.append(SpeciesConfig(
            name=name, charge=charge, mass=mass,
            f0=(lambda profile=profile: lambda x, v: profile(v) + 0.0 * np.asarray(x))(),
            background=0.0,
            inflow=profile,
            velocity_axes=(AxisSpec(-bound, bound, nv, BOUNDED),),
        ))
    grid = PhaseSpaceGrid((x_ax,), species[0].velocity_axes)
    rgrid = PhaseSpaceGrid(
        (AxisSpec(-length, 0.0, restart_n, BOUNDED),),
        (AxisSpec(-1.0, 1.0, restart_n, BOUNDED),),  # velocity extent tracks support
    )
    return SimulationSetup(
        grid=grid, species=species, dt=dt, steps=steps, mode=mode,
        restart=RestartConfig(period, rgrid, _policy(max_rank, rel_tol, oversampling)),
        boundary=BoundaryConfig(left="open_inflow", right="reflecting_wall"),
        seed=seed, track_support=True, velocity_min_count=nv,
    )


PRESETS = {
    "two_stream_1d": two_stream_1d_preset,
    "two_stream_2d": two_stream_2d_preset,
    "landau": landau_preset,
    "shock": shock_preset,
}
