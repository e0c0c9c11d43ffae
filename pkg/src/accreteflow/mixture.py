"""Two-component interaction physics: mixing energy, friction, heat exchange.

The mixing energy penalizes joint compression,

    phi_mix(J_M, J_S) = varkappa * ((J_M*J_S)**-a + a*J_M*J_S - a - 1)

for J_M*J_S < 1 and zero above; it is C^1 across the threshold and
nonnegative.  phi_mix decreases toward the threshold, so the derived mixing
pressures -J_K * d phi_mix / d J_K are nonnegative in the mixed regime: an
extra pressure resisting joint compression (the partials match central finite
differences, which fixes the sign).

The coefficient laws f(rho_M, rho_S) and k(rho_M, rho_S) vanish when either
component is absent:

    f = f0 * rho_M*rho_S / (rho_M + rho_S + rho_eps),   k likewise.

Sign convention: the drag on the metal component is -f*(v_M - v_S), i.e. it
opposes relative motion, so the frictional dissipation f*|v_M - v_S|^2 is
nonnegative and feeds the two heat equations in equal halves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MixtureError(ValueError):
    """Raised on invalid mixture parameters or inputs."""


@dataclass(frozen=True)
class MixtureParams:
    varkappa: float = 0.0     # mixing modulus, Pa
    alpha_mix: float = 1.0    # dimensionless exponent, > 0
    f0: float = 0.0           # friction scale, Pa s/m^2
    k0: float = 0.0           # heat-exchange scale, W/(m^3 K)
    rho_eps: float = 1e-30    # regularizer in the coefficient laws

    def __post_init__(self):
        if self.varkappa < 0:
            raise MixtureError("varkappa must be nonnegative")
        if self.alpha_mix <= 0:
            raise MixtureError("alpha_mix must be positive")
        if self.f0 < 0 or self.k0 < 0:
            raise MixtureError("f0 and k0 must be nonnegative")


def _check_jacobians(J_M, J_S):
    J_M = np.asarray(J_M, dtype=np.float64)
    J_S = np.asarray(J_S, dtype=np.float64)
    if np.any(J_M <= 0) or np.any(J_S <= 0):
        raise MixtureError("Jacobians must be positive")
    return J_M, J_S


def mixing_energy(params: MixtureParams, J_M, J_S):
    """phi_mix and its partials with respect to J_M and J_S (all >= C^0).

    Returns (phi_mix, d/dJ_M, d/dJ_S); zero with zero partials for
    J_M*J_S >= 1, matching continuously at the threshold.
    """
    J_M, J_S = _check_jacobians(J_M, J_S)
    a = params.alpha_mix
    kap = params.varkappa
    prod = J_M * J_S
    mixed = prod < 1.0
    prod_s = np.where(mixed, prod, 1.0)
    phi = np.where(mixed, kap * (prod_s**-a + a * prod_s - a - 1.0), 0.0)
    # d phi / d prod = a*kap*(1 - prod**-(a+1)); chain through prod = J_M*J_S
    dprod = np.where(mixed, a * kap * (1.0 - prod_s ** (-a - 1.0)), 0.0)
    d_JM = dprod * J_S
    d_JS = dprod * J_M
    return phi, d_JM, d_JS


def mixing_pressures(params: MixtureParams, J_M, J_S):
    """Component pressures -J_K * d phi_mix/d J_K; >= 0 in the mixed regime."""
    _, d_JM, d_JS = mixing_energy(params, J_M, J_S)
    J_M, J_S = _check_jacobians(J_M, J_S)
    return -J_M * d_JM, -J_S * d_JS


def friction_coefficient(params: MixtureParams, rho_M, rho_S):
    rho_M = np.asarray(rho_M, dtype=np.float64)
    rho_S = np.asarray(rho_S, dtype=np.float64)
    return params.f0 * rho_M * rho_S / (rho_M + rho_S + params.rho_eps)


def heat_coefficient(params: MixtureParams, rho_M, rho_S):
    rho_M = np.asarray(rho_M, dtype=np.float64)
    rho_S = np.asarray(rho_S, dtype=np.float64)
    return params.k0 * rho_M * rho_S / (rho_M + rho_S + params.rho_eps)


def friction_exchange(params: MixtureParams, rho_M, rho_S, v_M, v_S):
    """Drag force densities on each component and the dissipation rate.

    force_on_M = -f*(v_M - v_S); the pair sums to zero bitwise (one product,
    two signs).  xi_f = f*|v_M - v_S|^2 >= 0 is split half-and-half between
    the two heat equations by the caller.
    """
    v_M = np.asarray(v_M, dtype=np.float64)
    v_S = np.asarray(v_S, dtype=np.float64)
    f = friction_coefficient(params, rho_M, rho_S)
    dvel = v_M - v_S
    force = f * dvel
    xi_f = f * np.sum(dvel * dvel, axis=0)
    return -force, force, xi_f


def heat_exchange(params: MixtureParams, rho_M, rho_S, theta_M, theta_S):
    """Inter-component heat flow and its entropy production.

    q_to_M = k*(theta_S - theta_M) and q_to_S = -q_to_M (bitwise);
    sigma = k*(theta_M - theta_S)^2/(theta_M*theta_S) >= 0, zero only at
    equal temperatures.  Requires positive temperatures for sigma.
    """
    theta_M = np.asarray(theta_M, dtype=np.float64)
    theta_S = np.asarray(theta_S, dtype=np.float64)
    if np.any(theta_M <= 0) or np.any(theta_S <= 0):
        raise MixtureError("entropy production needs positive temperatures")
    k = heat_coefficient(params, rho_M, rho_S)
    q = k * (theta_S - theta_M)
    sigma = k * (theta_M - theta_S) ** 2 / (theta_M * theta_S)
    return q, -q, sigma
