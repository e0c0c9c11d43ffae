"""Free-space self-gravity on the uniform grid, rotating-frame forces,
and the domain constant of the gravitational-energy estimate.

The discrete operator is a cell-average Green-function sum

    V(x) = -G * h^2 * sum_s rho(s) / |i_x - i_s|        (index distances)
    g(x) =  G * h   * sum_s rho(s) * (i_s - i_x) / |i_s - i_x|^3

with the singular self entry of the scalar kernel replaced by the exact mean
of 1/|u| over one cell (~2.38) and the vector self entry zero (antisymmetry,
which makes the net self-force vanish identically).  ``solve_potential_fast``
evaluates the same operator by zero-padded FFT convolution (isolated, i.e.
free-space boundaries; no periodic images); ``solve_potential_direct`` is the
O(N^2) oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._kernels import cube_average_inverse_power, direct_solve


class GravityError(ValueError):
    """Raised on invalid gravity parameters."""


@dataclass
class GravityContext:
    """Gravity and rotation parameters plus cached kernel transforms."""

    G: float = 6.674e-11
    omega: float = 0.0            # rad/s, rotation about e3
    method: str = "fast"          # "oracle" (direct sum) or "fast" (FFT)
    enabled: bool = True
    kernel: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.G <= 0:
            raise GravityError("G must be positive")
        if self.method not in ("oracle", "fast"):
            raise GravityError(f"unknown gravity method {self.method!r}")

    @property
    def omega_vec(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.omega])


@dataclass
class PotentialField:
    """Potential (J/kg, <= 0 for nonnegative density) and acceleration."""

    V: np.ndarray                   # (nx, ny, nz)
    g: np.ndarray                   # (3, nx, ny, nz)
    V_pad: Optional[np.ndarray] = None  # free-space solution on the padded box

    def g_from_grad(self, h: float) -> np.ndarray:
        """Acceleration as -grad V by central differences (diagnostic mode)."""
        out = np.empty_like(self.g)
        for a in range(3):
            out[a] = -np.gradient(self.V, h, axis=a)
        return out


def _kernel_tables(ctx: GravityContext, shape, h):
    """rfftn of the scalar and vector kernels on the 2n zero-padded box."""
    key = (tuple(shape), float(h))
    if key in ctx.kernel:
        return ctx.kernel[key]
    pn = tuple(2 * n for n in shape)
    idx = []
    for n, p in zip(shape, pn):
        d = np.arange(p, dtype=np.float64)
        d = np.where(d < n, d, d - p)  # displacements -n .. n-1
        idx.append(d)
    dx, dy, dz = np.meshgrid(*idx, indexing="ij")
    r2 = dx * dx + dy * dy + dz * dz
    r = np.sqrt(r2)
    with np.errstate(divide="ignore"):
        kv = np.where(r > 0.0, 1.0 / np.where(r > 0.0, r, 1.0),
                      cube_average_inverse_power(1.0))
    inv_r3 = np.where(r > 0.0, 1.0 / np.where(r > 0.0, r2 * r, 1.0), 0.0)
    # convolution evaluates K at (target - source); the acceleration kernel is
    # odd in the displacement (source - target), hence the negation
    tables = (
        np.fft.rfftn(kv),
        np.fft.rfftn(-dx * inv_r3),
        np.fft.rfftn(-dy * inv_r3),
        np.fft.rfftn(-dz * inv_r3),
    )
    ctx.kernel[key] = tables
    return tables


def _check_density(rho, grid):
    rho = np.asarray(rho, dtype=np.float64)
    if rho.shape != tuple(grid.n):
        raise GravityError("density shape does not match grid")
    if not np.all(np.isfinite(rho)) or np.any(rho < 0):
        raise GravityError("density must be finite and nonnegative")
    return np.where(grid.domain_mask, rho, 0.0)


def solve_potential_direct(ctx: GravityContext, rho, grid) -> PotentialField:
    """Direct O(N^2) evaluation of the discrete potential and acceleration."""
    rho = _check_density(rho, grid)
    mask = grid.domain_mask.astype(np.uint8)
    V, gx, gy, gz = direct_solve(rho, mask, grid.h,
                                 ctx.G, cube_average_inverse_power(1.0))
    return PotentialField(V=V, g=np.stack([gx, gy, gz]))


def solve_potential_fast(ctx: GravityContext, rho, grid,
                         keep_padded: bool = True) -> PotentialField:
    """Zero-padded FFT evaluation of the same discrete operator.

    Agrees with the direct oracle to roundoff (<= 1e-10 relative).  The
    padded potential is retained for the gravitational field-energy integral.
    """
    rho = _check_density(rho, grid)
    shape = tuple(grid.n)
    pn = tuple(2 * n for n in shape)
    kv_h, kx_h, ky_h, kz_h = _kernel_tables(ctx, shape, grid.h)

    rho_pad = np.zeros(pn, dtype=np.float64)
    rho_pad[: shape[0], : shape[1], : shape[2]] = rho
    rho_hat = np.fft.rfftn(rho_pad)

    h = grid.h
    box = (slice(0, shape[0]), slice(0, shape[1]), slice(0, shape[2]))
    V_pad = -ctx.G * h * h * np.fft.irfftn(rho_hat * kv_h, s=pn, axes=(0, 1, 2))
    g = np.empty((3,) + shape)
    for a, k_h in enumerate((kx_h, ky_h, kz_h)):
        g[a] = ctx.G * h * np.fft.irfftn(rho_hat * k_h, s=pn, axes=(0, 1, 2))[box]
    V = V_pad[box].copy()
    mask = grid.domain_mask
    V = np.where(mask, V, 0.0)
    g *= mask
    return PotentialField(V=V, g=g, V_pad=V_pad if keep_padded else None)


def solve_potential(ctx: GravityContext, rho, grid) -> PotentialField:
    """Dispatch on ctx.method ('oracle' -> direct sum, 'fast' -> FFT)."""
    if ctx.method == "oracle":
        return solve_potential_direct(ctx, rho, grid)
    return solve_potential_fast(ctx, rho, grid)


def coriolis_force(ctx: GravityContext, rho, v) -> np.ndarray:
    """Force density -2*rho*(omega x v); orthogonal to v, zero power."""
    rho = np.asarray(rho, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    om = ctx.omega
    out = np.empty_like(v)
    out[0] = 2.0 * rho * om * v[1]
    out[1] = -2.0 * rho * om * v[0]
    out[2] = np.zeros_like(rho)
    return out


def orbital_omega(m_star: float, d: float, G: float = 6.674e-11) -> float:
    """Angular rate balancing centrifugal and stellar gravity: sqrt(G*M/D^3)."""
    if m_star <= 0 or d <= 0 or G <= 0:
        raise GravityError("m_star, d, G must be positive")
    return float(np.sqrt(G * m_star / d**3))


def domain_constant(grid, r: float) -> float:
    """sup over cells of integral_Omega |x - x~|^(-r/(r-1)) dx~.

    Finite for r > 3/2 (raises for r <= 3/2).  Evaluated as a zero-padded FFT
    convolution of the domain indicator with the regularized power kernel,
    then a max over in-domain cells.  Monotone nonincreasing under domain
    shrinkage; scales like L^(3 - r/(r-1)) under rescaling by L.
    """
    if r <= 1.5:
        raise GravityError("domain constant is infinite for r <= 3/2")
    s = r / (r - 1.0)
    shape = tuple(grid.n)
    pn = tuple(2 * n for n in shape)
    idx = []
    for n, p in zip(shape, pn):
        d = np.arange(p, dtype=np.float64)
        d = np.where(d < n, d, d - p)
        idx.append(d)
    dx, dy, dz = np.meshgrid(*idx, indexing="ij")
    rr = np.sqrt(dx * dx + dy * dy + dz * dz)
    with np.errstate(divide="ignore"):
        ker = np.where(rr > 0.0, np.where(rr > 0.0, rr, 1.0) ** (-s),
                       cube_average_inverse_power(s))
    ind = np.zeros(pn, dtype=np.float64)
    ind[: shape[0], : shape[1], : shape[2]] = grid.domain_mask.astype(np.float64)
    conv = np.fft.irfftn(np.fft.rfftn(ind) * np.fft.rfftn(ker), s=pn, axes=(0, 1, 2))
    box = (slice(0, shape[0]), slice(0, shape[1]), slice(0, shape[2]))
    vals = conv[box]
    vals = np.where(grid.domain_mask, vals, -np.inf)
    return float(vals.max() * grid.h ** (3.0 - s))
