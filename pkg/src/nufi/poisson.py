"""Poisson solvers, electric-field evaluation and the potential history.

Potentials are stored as nodal coefficients of a piecewise-(bi)linear
interpolant; the electric field E = -grad(phi) of that interpolant is
piecewise constant per cell in 1D and has per-cell bilinear partials in 2D.
"""

from __future__ import annotations

import numpy as np
from scipy.fft import dct, idct

from .grid import AxisSpec


def solve_poisson_periodic(rho: np.ndarray, axes: tuple[AxisSpec, ...]) -> np.ndarray:
    """Solve -lap(phi) = rho - mean(rho) on a periodic grid via FFT.

    Uses the exact Fourier symbol k^2; the zero mode of phi is set to 0
    (zero-mean gauge).  Accepts 1D (Nx,) or 2D (Nx, Ny) node values.
    """
    rho = np.asarray(rho, dtype=np.float64)
    if len(axes) == 1:
        (ax,) = axes
        if rho.shape != (ax.count,):
            raise ValueError(f"rho shape {rho.shape} does not match axis count {ax.count}")
        k = 2.0 * np.pi * np.fft.rfftfreq(ax.count, d=ax.h)
        k2 = k * k
        k2[0] = 1.0
        phihat = np.fft.rfft(rho) / k2
        phihat[0] = 0.0
        return np.fft.irfft(phihat, n=ax.count)
    ax, ay = axes
    if rho.shape != (ax.count, ay.count):
        raise ValueError(f"rho shape {rho.shape} does not match grid {(ax.count, ay.count)}")
    kx = 2.0 * np.pi * np.fft.fftfreq(ax.count, d=ax.h)
    ky = 2.0 * np.pi * np.fft.rfftfreq(ay.count, d=ay.h)
    k2 = kx[:, None] ** 2 + ky[None, :] ** 2
    k2[0, 0] = 1.0
    phihat = np.fft.rfft2(rho) / k2
    phihat[0, 0] = 0.0
    return np.fft.irfft2(phihat, s=rho.shape)


def neumann_eigenvalues(axis: AxisSpec) -> np.ndarray:
    """Eigenvalues of the discrete 1D Neumann Laplacian on cosine modes."""
    n = axis.count
    k = np.arange(n)
    return (2.0 - 2.0 * np.cos(np.pi * k / (n - 1))) / axis.h**2


def solve_poisson_neumann(rho: np.ndarray, axis: AxisSpec) -> np.ndarray:
    """Solve -phi'' = rho - <rho> with zero Neumann boundaries on a bounded axis.

    Diagonalizes the second-difference operator (ghost-node Neumann closure)
    in the DCT-I basis, so the discrete residual vanishes to round-off after
    the compatible projection.  <rho> is the trapezoid-weighted mean; phi is
    returned in the zero-mean gauge.
    """
    rho = np.asarray(rho, dtype=np.float64)
    if axis.periodic:
        raise ValueError("Neumann solve requires a bounded axis")
    if rho.shape != (axis.count,):
        raise ValueError(f"rho shape {rho.shape} does not match axis count {axis.count}")
    lam = neumann_eigenvalues(axis)
    coeff = dct(rho, type=1)
    coeff[0] = 0.0
    coeff[1:] /= lam[1:]
    phi = idct(coeff, type=1)
    return phi - phi.mean()


def gradient_tables(phi: np.ndarray, axes: tuple[AxisSpec, ...]):
    """Per-cell gradient coefficients of the linear interpolant of phi.

    1D: returns (E,) with E[c] = -(phi[c+1]-phi[c])/h over the cells.
    2D: returns (Gx, Gy), node-indexed difference quotients such that
    Ex(x,y) = Gx[ix,iy] + ty*(Gx[ix,iy+1]-Gx[ix,iy]) inside cell (ix,iy)
    and symmetrically for Ey.
    """
    if len(axes) == 1:
        (ax,) = axes
        if ax.periodic:
            e = -(np.roll(phi, -1) - phi) / ax.h
        else:
            e = -np.diff(phi) / ax.h
        return (e,)
    ax, ay = axes
    if ax.periodic:
        gx = -(np.roll(phi, -1, axis=0) - phi) / ax.h
        gy = -(np.roll(phi, -1, axis=1) - phi) / ay.h
    else:
        raise NotImplementedError("bounded 2D spatial grids are not supported")
    return gx, gy


def _eval_e_1d(e_cells: np.ndarray, axis: AxisSpec, x):
    x = np.asarray(x, dtype=np.float64)
    if axis.periodic:
        xx = x - axis.length * np.floor((x - axis.lo) / axis.length)
        c = (xx - axis.lo) / axis.h
        idx = np.minimum(c.astype(np.int64), axis.count - 1) % axis.count
    else:
        xx = np.clip(x, axis.lo, axis.hi)
        c = (xx - axis.lo) / axis.h
        idx = np.clip(c.astype(np.int64), 0, axis.count - 2)
    return e_cells[idx]


def _eval_e_2d(gx, gy, axes, x, y):
    ax, ay = axes
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xx = x - ax.length * np.floor((x - ax.lo) / ax.length)
    yy = y - ay.length * np.floor((y - ay.lo) / ay.length)
    fx = (xx - ax.lo) / ax.h
    fy = (yy - ay.lo) / ay.h
    ix = np.minimum(fx.astype(np.int64), ax.count - 1) % ax.count
    iy = np.minimum(fy.astype(np.int64), ay.count - 1) % ay.count
    tx = fx - ix
    ty = fy - iy
    ix1 = (ix + 1) % ax.count
    iy1 = (iy + 1) % ay.count
    a = gx[ix, iy]
    ex = a + ty * (gx[ix, iy1] - a)
    b = gy[ix, iy]
    ey = b + tx * (gy[ix1, iy] - b)
    return ex, ey


class FieldHistory:
    """Append-only record of the potential coefficients, one entry per step.

    The entry at index n is the potential of time t_n = n*dt.  A provisional
    "tip" entry can be staged for the step currently being computed so that
    point evaluations may reference the newest field before it is committed;
    the tip does not count towards the stored footprint until appended.

    Single writer; any number of readers may use entries below step_count
    concurrently.
    """

    def __init__(self, spatial_axes: tuple[AxisSpec, ...], dt: float, capacity: int = 64):
        self.axes = tuple(spatial_axes)
        self.dt = float(dt)
        self._shape = tuple(ax.count for ax in self.axes)
        self._n = 0
        self._tip = False
        cap = max(int(capacity), 4)
        self._phi = np.empty((cap,) + self._shape)
        if len(self.axes) == 1:
            (ax,) = self.axes
            self._grad = (np.empty((cap, ax.ncells)),)
        else:
            self._grad = (np.empty((cap,) + self._shape), np.empty((cap,) + self._shape))

    @property
    def step_count(self) -> int:
        return self._n

    @property
    def available(self) -> int:
        """Number of accessible entries (committed plus a staged tip)."""
        return self._n + (1 if self._tip else 0)

    def stored_reals(self) -> int:
        return self._n * int(np.prod(self._shape))

    def _ensure_capacity(self, n):
        if n <= self._phi.shape[0]:
            return
        cap = max(n, 2 * self._phi.shape[0])
        self._phi = np.concatenate([self._phi, np.empty((cap - self._phi.shape[0],) + self._shape)])
        self._grad = tuple(
            np.concatenate([g, np.empty((cap - g.shape[0],) + g.shape[1:])]) for g in self._grad
        )

    def set_tip(self, phi: np.ndarray):
        """Stage the potential of the step being computed (index step_count)."""
        phi = np.asarray(phi, dtype=np.float64)
        if phi.shape != self._shape:
            raise ValueError(f"phi shape {phi.shape} does not match grid {self._shape}")
        self._ensure_capacity(self._n + 1)
        self._phi[self._n] = phi
        for g, table in zip(gradient_tables(phi, self.axes), self._grad):
            table[self._n] = g
        self._tip = True

    def clear_tip(self):
        self._tip = False

    def commit_tip(self, step: int | None = None):
        """Promote the staged tip to the committed entry for ``step``."""
        if not self._tip:
            raise ValueError("no staged potential to commit")
        if step is not None and step != self._n:
            raise ValueError(
                f"append out of order: expected step {self._n}, got {step}"
            )
        self._n += 1
        self._tip = False

    def append(self, phi: np.ndarray, step: int | None = None):
        """Commit the potential for time step ``step`` (must equal step_count)."""
        if step is not None and step != self._n:
            raise ValueError(
                f"append out of order: expected step {self._n}, got {step}"
            )
        self.set_tip(phi)
        self._n += 1
        self._tip = False

    def phi_at(self, step: int) -> np.ndarray:
        if step < 0 or step >= self.available:
            raise IndexError(f"no potential stored for step {step}")
        out = self._phi[step]
        out.flags.writeable = False
        return out

    def grad_tables(self) -> tuple[np.ndarray, ...]:
        """Contiguous gradient tables covering all available entries."""
        n = self.available
        return tuple(g[:n] for g in self._grad)

    def eval_E(self, step: int, *coords):
        """Electric field of entry ``step`` at position(s); -grad of the interpolant."""
        if step < 0 or step >= self.available:
            raise IndexError(f"step {step} out of range (available {self.available})")
        if len(self.axes) == 1:
            return _eval_e_1d(self._grad[0][step], self.axes[0], coords[0])
        return _eval_e_2d(self._grad[0][step], self._grad[1][step], self.axes, *coords)


def append_field(history: FieldHistory, phi: np.ndarray, step: int | None = None):
    history.append(phi, step)


def eval_E(history: FieldHistory, step: int, *coords):
    return history.eval_E(step, *coords)


def electric_energy(history_or_phi, axes: tuple[AxisSpec, ...] | None = None, step: int | None = None) -> float:
    """(1/2) integral |E|^2 dx of the piecewise field.

    1D integrates the piecewise-constant field exactly; 2D samples the
    per-cell field at the lower cell corner.
    """
    if isinstance(history_or_phi, FieldHistory):
        hist = history_or_phi
        axes = hist.axes
        grads = tuple(g[step] for g in hist._grad)
    else:
        grads = gradient_tables(np.asarray(history_or_phi, dtype=np.float64), axes)
    if len(axes) == 1:
        (ax,) = axes
        return 0.5 * ax.h * float(np.sum(grads[0] ** 2))
    ax, ay = axes
    return 0.5 * ax.h * ay.h * float(np.sum(grads[0] ** 2 + grads[1] ** 2))
