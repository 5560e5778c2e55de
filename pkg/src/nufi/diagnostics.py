"""Scalar time-series diagnostics, growth-rate fitting and the linear
dispersion oracle used to validate instability growth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from . import flow
from .poisson import FieldHistory, electric_energy

CSV_FIELDS = ("step", "time", "E_el", "E_kin", "E_tot", "entropy",
              "l1", "l2", "mass", "min_f", "max_f")


@dataclass(frozen=True)
class DiagnosticsRow:
    step: int
    time: float
    electric_energy: float
    kinetic_energy: float
    total_energy: float
    entropy: float
    l1_norm: float
    l2_norm: float
    mass: float
    min_f: float
    max_f: float

    def as_tuple(self):
        return (self.step, self.time, self.electric_energy, self.kinetic_energy,
                self.total_energy, self.entropy, self.l1_norm, self.l2_norm,
                self.mass, self.min_f, self.max_f)


def make_row(step: int, time: float, e_el: float,
             moments: list[flow.SpeciesMoments]) -> DiagnosticsRow:
    e_kin = sum(m.kinetic for m in moments)
    return DiagnosticsRow(
        step=step, time=time,
        electric_energy=e_el,
        kinetic_energy=e_kin,
        total_energy=e_el + e_kin,
        entropy=sum(m.entropy for m in moments),
        l1_norm=sum(m.l1 for m in moments),
        l2_norm=float(np.sqrt(sum(m.l2sq for m in moments))),
        mass=sum(m.mass for m in moments),
        min_f=min(m.fmin for m in moments),
        max_f=max(m.fmax for m in moments),
    )


def kinetic_energy_entropy_norms(at_step: int, history: FieldHistory, species,
                                 quadrature_rule: str = "trapezoid",
                                 counter: flow.WorkCounter | None = None) -> DiagnosticsRow:
    """Standalone diagnostics sweep (separate evaluation pass)."""
    moments = []
    for sp in species:
        moments.append(flow.sweep_moments(
            at_step, history, sp.source, sp.grid, sp.qm,
            mass_per_particle=getattr(sp, "mass", 1.0),
            boundary=getattr(sp, "boundary", flow.PERIODIC_BOUNDARY),
            quadrature_rule=quadrature_rule, counter=counter))
    e_el = electric_energy(history, step=min(at_step, history.available - 1))
    return make_row(at_step, at_step * history.dt, e_el, moments)


def fit_growth_rate(times, energies, window: tuple[float, float]) -> float:
    """Field-amplitude growth rate: half the log-slope of the energy series
    over the window (energy grows like exp(2 gamma t))."""
    t = np.asarray(times, dtype=np.float64)
    e = np.asarray(energies, dtype=np.float64)
    t0, t1 = window
    mask = (t >= t0) & (t <= t1)
    if mask.sum() < 2:
        raise ValueError("growth window contains fewer than two samples")
    if np.any(e[mask] <= 0.0):
        raise ValueError("electric energy must be positive inside the fit window")
    slope = np.polyfit(t[mask], np.log(e[mask]), 1)[0]
    return 0.5 * float(slope)


class NoGrowthError(RuntimeError):
    """The dispersion function has no root with positive growth rate."""


def find_imaginary_growth_root(eps, gamma_max: float = 5.0, n_scan: int = 500) -> float:
    """Root of eps(gamma) = 0 for gamma > 0 by scan plus bisection refinement."""
    gammas = np.linspace(gamma_max / n_scan, gamma_max, n_scan)
    vals = np.array([eps(g) for g in gammas])
    sign_change = np.nonzero(np.diff(np.sign(vals)) != 0)[0]
    if sign_change.size == 0:
        raise NoGrowthError("no unstable root found: equilibrium is stable")
    i = int(sign_change[0])
    return float(brentq(eps, gammas[i], gammas[i + 1], xtol=1e-13, rtol=1e-14))


def electrostatic_eps(f0_prime, k: float, v_cut: float = 40.0):
    """Dielectric function on the positive imaginary frequency axis.

    For a purely growing mode (omega = i gamma) of an even equilibrium the
    dispersion relation reduces to the real integral
    1 - (1/k^2) * int v f0'(v) / (v^2 + (gamma/k)^2) dv = 0.
    """

    def eps(gamma: float) -> float:
        c2 = (gamma / k) ** 2
        val, _ = quad(lambda v: v * f0_prime(v) / (v * v + c2), -v_cut, v_cut,
                      limit=400)
        return 1.0 - val / k**2

    return eps


def dispersion_growth_rate(f0_prime, k: float, gamma_max: float = 5.0) -> float:
    """Growth rate of the purely growing electrostatic mode for wavenumber k.

    Raises NoGrowthError for stable equilibria (e.g. a Maxwellian).
    """
    return find_imaginary_growth_root(electrostatic_eps(f0_prime, k), gamma_max)


def two_stream_1d_f0_prime(v):
    """Velocity derivative of the spatially uniform two-stream equilibrium."""
    v = np.asarray(v, dtype=np.float64)
    return v * (2.0 - v * v) * np.exp(-0.5 * v * v) / np.sqrt(2.0 * np.pi)


def maxwellian_f0_prime(v):
    v = np.asarray(v, dtype=np.float64)
    return -v * np.exp(-0.5 * v * v) / np.sqrt(2.0 * np.pi)


def cold_two_beam_eps(k: float, a: float):
    """Dispersion function of two cold counter-streaming beams at +-a,
    restricted to omega = i gamma (closed form, for validating the root finder)."""
    beta = k * a

    def eps(gamma: float) -> float:
        return 1.0 - (beta**2 - gamma**2) / (beta**2 + gamma**2) ** 2

    return eps


def cold_two_beam_growth_rate(k: float, a: float) -> float:
    """Closed-form growth rate of the cold two-beam instability (k a < 1)."""
    beta = k * a
    if beta >= 1.0:
        raise NoGrowthError("cold two-beam system is stable for k*a >= 1")
    u = (-(2.0 * beta**2 + 1.0) + np.sqrt(8.0 * beta**2 + 1.0)) / 2.0
    return float(np.sqrt(u))
