import numpy as np
import pytest

from nufi.grid import AxisSpec
from nufi.poisson import (FieldHistory, electric_energy, neumann_eigenvalues,
                          solve_poisson_neumann, solve_poisson_periodic)


def periodic_axis(n, L=2.0 * np.pi):
    return AxisSpec(0.0, L, n, "periodic")


class TestPeriodicSolve:
    def test_cosine_eigenfunction(self):
        ax = periodic_axis(256)
        x = ax.nodes()
        phi = solve_poisson_periodic(np.cos(x), (ax,))
        assert np.abs(phi - np.cos(x)).max() < 1e-13

    def test_zero_source(self):
        ax = periodic_axis(64)
        phi = solve_poisson_periodic(np.zeros(64), (ax,))
        assert np.all(phi == 0.0)

    def test_2d_separable(self):
        ax = periodic_axis(32)
        ay = periodic_axis(48)
        X = ax.nodes()[:, None]
        Y = ay.nodes()[None, :]
        rho = np.cos(X) + np.cos(Y)
        phi = solve_poisson_periodic(rho, (ax, ay))
        assert np.abs(phi - rho).max() < 1e-13

    def test_invariant_under_constant_shift(self):
        ax = periodic_axis(64)
        rng = np.random.default_rng(3)
        rho = rng.standard_normal(64)
        a = solve_poisson_periodic(rho, (ax,))
        b = solve_poisson_periodic(rho + 17.3, (ax,))
        assert np.abs(a - b).max() < 1e-12

    def test_self_adjointness(self):
        ax = periodic_axis(64)
        rng = np.random.default_rng(4)
        r1 = rng.standard_normal(64)
        r2 = rng.standard_normal(64)
        p1 = solve_poisson_periodic(r1, (ax,))
        p2 = solve_poisson_periodic(r2, (ax,))
        assert p1 @ r2 == pytest.approx(p2 @ r1, abs=1e-12 * max(1.0, abs(p1 @ r2)))

    def test_convergence_order_at_least_two(self):
        # smooth non-eigenfunction: phi = exp(cos x), rho = -phi''
        def phi_exact(x):
            return np.exp(np.cos(x))

        def rho_exact(x):
            return -np.exp(np.cos(x)) * (np.sin(x) ** 2 - np.cos(x))

        errs = []
        for n in (4, 8):
            ax = periodic_axis(n)
            x = ax.nodes()
            phi = solve_poisson_periodic(rho_exact(x), (ax,))
            target = phi_exact(x) - phi_exact(x).mean()
            # compare in the solver's zero-mean gauge
            errs.append(np.abs((phi - phi.mean()) - (target - target.mean())).max())
        assert errs[0] > 1e-10  # not already at round-off
        assert errs[1] <= errs[0] / 4.0


class TestNeumannSolve:
    def test_eigenfunction(self):
        L = 200.0
        ax = AxisSpec(-L, 0.0, 256, "bounded")
        x = ax.nodes()
        rho = np.cos(np.pi * x / L + np.pi)
        phi = solve_poisson_neumann(rho, ax)
        expect = (L / np.pi) ** 2 * rho
        expect -= expect.mean()
        # discrete symbol: second-order agreement with the continuum solution
        assert np.abs(phi - expect).max() < 5e-4 * np.abs(expect).max()

    def test_constant_source_gives_zero(self):
        ax = AxisSpec(-1.0, 0.0, 64, "bounded")
        phi = solve_poisson_neumann(np.full(64, 3.7), ax)
        assert np.abs(phi).max() < 1e-12

    def test_residual_against_dense_oracle(self):
        n = 64
        ax = AxisSpec(-2.0, 0.0, n, "bounded")
        rng = np.random.default_rng(11)
        rho = rng.standard_normal(n)
        rho -= rho.mean()
        phi = solve_poisson_neumann(rho, ax)
        h2 = ax.h ** 2
        d2 = np.zeros((n, n))
        d2[0, 0], d2[0, 1] = 2.0, -2.0
        d2[-1, -1], d2[-1, -2] = 2.0, -2.0
        for i in range(1, n - 1):
            d2[i, i - 1:i + 2] = (-1.0, 2.0, -1.0)
        d2 /= h2
        w = np.ones(n)
        w[0] = w[-1] = 0.5
        rho_proj = rho - (w @ rho) / w.sum()
        assert np.abs(d2 @ phi - rho_proj).max() < 1e-10
        phi_oracle, *_ = np.linalg.lstsq(d2, rho_proj, rcond=None)
        phi_oracle -= phi_oracle.mean()
        assert np.abs(phi - phi_oracle).max() < 1e-9

    def test_invariant_under_constant_shift(self):
        ax = AxisSpec(0.0, 1.0, 32, "bounded")
        rng = np.random.default_rng(5)
        rho = rng.standard_normal(32)
        a = solve_poisson_neumann(rho, ax)
        b = solve_poisson_neumann(rho - 4.2, ax)
        assert np.abs(a - b).max() < 1e-12

    def test_eigenvalues_positive(self):
        lam = neumann_eigenvalues(AxisSpec(0.0, 1.0, 16, "bounded"))
        assert lam[0] == 0.0
        assert np.all(lam[1:] > 0.0)


class TestEvalE:
    def test_constant_potential_gives_zero_field(self):
        ax = periodic_axis(32)
        hist = FieldHistory((ax,), 0.1)
        hist.append(np.full(32, 2.2))
        x = np.linspace(0, 2 * np.pi, 97)
        assert np.all(hist.eval_E(0, x) == 0.0)

    def test_linear_ramp_cell(self):
        ax = AxisSpec(0.0, 1.0, 11, "bounded")
        hist = FieldHistory((ax,), 0.1)
        phi = np.zeros(11)
        phi[4] = 0.0
        phi[5] = 0.3  # slope 3 on cell [0.4, 0.5]
        hist.append(phi)
        assert hist.eval_E(0, 0.44) == pytest.approx(-3.0, rel=1e-13)

    def test_cosine_first_order_convergence(self):
        errs = []
        for n in (256, 512):
            ax = periodic_axis(n)
            hist = FieldHistory((ax,), 0.1)
            hist.append(np.cos(ax.nodes()))
            e = float(hist.eval_E(0, np.pi / 2))
            errs.append(abs(e - 1.0))
        assert errs[0] < 0.02
        assert errs[1] <= 0.65 * errs[0]

    def test_affine_potential_exact_gradient(self):
        ax = AxisSpec(-1.0, 3.0, 17, "bounded")
        hist = FieldHistory((ax,), 0.1)
        hist.append(0.7 - 1.3 * ax.nodes())
        x = np.linspace(-1.0, 3.0, 301)
        assert np.abs(hist.eval_E(0, x) - 1.3).max() < 1e-13

    def test_affine_2d_exact_gradient(self):
        ax = periodic_axis(16, L=1.0)
        ay = periodic_axis(24, L=1.0)
        X = ax.nodes()[:, None]
        Y = ay.nodes()[None, :]
        hist = FieldHistory((ax, ay), 0.1)
        hist.append(0.2 + 0.5 * X + 0.25 * Y)  # not periodic, but per-cell affine away from the seam
        ex, ey = hist.eval_E(0, np.array([0.31]), np.array([0.44]))
        assert ex[0] == pytest.approx(-0.5, rel=1e-12)
        assert ey[0] == pytest.approx(-0.25, rel=1e-12)

    def test_step_out_of_range(self):
        ax = periodic_axis(8)
        hist = FieldHistory((ax,), 0.1)
        hist.append(np.zeros(8))
        with pytest.raises(IndexError):
            hist.eval_E(1, 0.0)


class TestFieldHistory:
    def test_append_counts(self):
        ax = periodic_axis(16)
        hist = FieldHistory((ax,), 0.1)
        hist.append(np.zeros(16))
        assert hist.step_count == 1

    def test_stored_reals_exact(self):
        ax = periodic_axis(32)
        hist = FieldHistory((ax,), 0.1, capacity=4)
        for n in range(50):
            hist.append(np.full(32, float(n)), step=n)
        assert hist.stored_reals() == 50 * 32
        assert np.all(hist.phi_at(17) == 17.0)

    def test_out_of_order_append(self):
        ax = periodic_axis(16)
        hist = FieldHistory((ax,), 0.1)
        hist.append(np.zeros(16), step=0)
        with pytest.raises(ValueError):
            hist.append(np.zeros(16), step=0)
        with pytest.raises(ValueError):
            hist.append(np.zeros(16), step=5)

    def test_earlier_entries_unchanged_by_append(self):
        ax = periodic_axis(16)
        hist = FieldHistory((ax,), 0.1, capacity=2)
        first = np.arange(16.0)
        hist.append(first)
        before = hist.phi_at(0).copy()
        for n in range(1, 20):
            hist.append(np.full(16, float(n)))
        assert np.array_equal(hist.phi_at(0), before)

    def test_tip_semantics(self):
        ax = periodic_axis(16)
        hist = FieldHistory((ax,), 0.1)
        hist.set_tip(np.ones(16))
        assert hist.available == 1 and hist.step_count == 0
        assert hist.stored_reals() == 0
        hist.commit_tip(0)
        assert hist.step_count == 1
        with pytest.raises(ValueError):
            hist.commit_tip(1)


class TestElectricEnergy:
    def test_sine_field(self):
        # phi = cos(x) gives E ~ sin(x); energy -> pi/2 at second order
        ax = periodic_axis(256)
        val = electric_energy(np.cos(ax.nodes()), (ax,))
        assert val == pytest.approx(np.pi / 2, rel=1e-3)

    def test_zero(self):
        ax = periodic_axis(16)
        assert electric_energy(np.zeros(16), (ax,)) == 0.0

    def test_quadratic_scaling(self):
        ax = periodic_axis(64)
        phi = np.cos(ax.nodes())
        assert electric_energy(2.0 * phi, (ax,)) == pytest.approx(
            4.0 * electric_energy(phi, (ax,)), rel=1e-14)
