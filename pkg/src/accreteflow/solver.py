"""Finite-volume spatial discretization and explicit time integration.

Scheme summary: local Lax-Friedrichs (Rusanov) upwinding for convective
fluxes with wave speed |v.n| + c_s, central second-order differences for the
pressure gradient and the viscous/conductive terms, transport form with
upwind-biased v.grad(J) for the Jacobian equation.  Walls are impermeable,
free-slip, and insulated; ghost values reflect the normal momentum and copy
everything else, which zeroes every convective and diffusive wall flux
identically.  Time integration is SSP-RK2 (Heun) or forward Euler, with the
gravitational potential re-solved and theta re-inverted per stage.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import SimpleNamespace
from typing import Optional, Tuple

import numpy as np

from . import _kernels as K
from .constitutive import ConstitutiveModel, eval_thermo, stored_energy_prime
from .gravity import GravityContext, PotentialField, solve_potential
from .mixture import (MixtureParams, friction_coefficient, heat_coefficient,
                      mixing_energy)
from .state import (FieldState, Grid, SourceRates, SourceSpec, TwoPhaseState,
                    source_rates)


class StepFailure(RuntimeError):
    """A state invariant failed during stepping (floors, inversion, dt)."""


@dataclass
class SolverConfig:
    cfl: float = 0.4
    flux: str = "upwind"            # upwind | central-diffusive
    integrator: str = "ssp-rk2"     # ssp-rk2 | forward-euler
    dt_max: float = np.inf
    rho_floor_frac: float = 1e-12   # rho floor as a fraction of rho0
    j_floor: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.cfl <= 1.0:
            raise ValueError("cfl must lie in (0, 1]")
        if self.flux not in ("upwind", "central-diffusive"):
            raise ValueError(f"unknown flux {self.flux!r}")
        if self.integrator not in ("ssp-rk2", "forward-euler"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.dt_max <= 0:
            raise ValueError("dt_max must be positive")

    def rho_floor(self, rho0: float) -> float:
        return self.rho_floor_frac * rho0


@dataclass
class Tendency:
    """Time derivatives of the conserved fields plus dissipation diagnostics."""

    d_rho: np.ndarray
    d_mom: np.ndarray       # (3, ...)
    d_J: np.ndarray
    d_w: np.ndarray
    xi: np.ndarray          # viscous dissipation rate field, Pa/s
    adiab: np.ndarray       # gamma_J * div v field, Pa/s


# ---------------------------------------------------------------------------
# wall ghost construction
# ---------------------------------------------------------------------------

def _neighbor(q: np.ndarray, mask: np.ndarray, axis: int, step: int,
              reflect: bool) -> np.ndarray:
    """Neighbor values of q one cell along axis (step +-1) with ghost rules.

    Where the neighbor lies outside the domain (or the array), the ghost value
    is the center value, negated when ``reflect``.
    """
    nb = np.empty_like(q)
    src = [slice(None)] * 3
    dst = [slice(None)] * 3
    edge = [slice(None)] * 3
    if step > 0:
        dst[axis] = slice(0, -1)
        src[axis] = slice(1, None)
        edge[axis] = slice(-1, None)
    else:
        dst[axis] = slice(1, None)
        src[axis] = slice(0, -1)
        edge[axis] = slice(0, 1)
    nb[tuple(dst)] = q[tuple(src)]
    nb[tuple(edge)] = q[tuple(edge)]
    outside = np.zeros(q.shape, dtype=bool)
    outside[tuple(dst)] = ~mask[tuple(src)]
    outside[tuple(edge)] = True
    ghost = -q if reflect else q
    return np.where(outside, ghost, nb)


def _neighbors6(q: np.ndarray, mask: np.ndarray, reflect_axis: int = -1):
    """All six neighbor tables (x-,x+,y-,y+,z-,z+)."""
    out = np.empty((6,) + q.shape, dtype=np.float64)
    for a in range(3):
        out[2 * a] = _neighbor(q, mask, a, -1, reflect_axis == a)
        out[2 * a + 1] = _neighbor(q, mask, a, +1, reflect_axis == a)
    return out


def apply_boundary(state: FieldState, grid: Grid, rho_floor: float = 1e-300):
    """Ghost-value neighbor tables enforcing v.n = 0 (reflected normal
    momentum), free slip (copied tangential momentum) and zero normal
    gradients of the scalars.  Returned arrays have shape (6, nx, ny, nz).
    """
    mask = grid.domain_mask
    nb = SimpleNamespace()
    nb.rho = _neighbors6(state.rho, mask)
    nb.mom = np.stack([_neighbors6(state.mom[a], mask, reflect_axis=a)
                       for a in range(3)])
    nb.J = _neighbors6(state.J, mask)
    nb.w = _neighbors6(state.w, mask)
    nb.velocity = nb.mom / np.maximum(nb.rho, rho_floor)
    return nb


# ---------------------------------------------------------------------------
# RHS assembly
# ---------------------------------------------------------------------------

def _sound_speed(ev, J, rho0):
    return np.sqrt(np.maximum(0.0, ev.psi_JJ) * J * J / rho0)


def _invert_theta_field(model: ConstitutiveModel, state: FieldState):
    f = model.free
    theta, ok = K.invert_theta(state.w.ravel(), state.J.ravel(),
                               f.c0, f.c1, f.beta, 1e-12, 100)
    if not ok:
        raise StepFailure("temperature inversion failed to converge")
    return theta.reshape(state.w.shape)


def rhs_single(state: FieldState, model: ConstitutiveModel,
               gravity_ctx: Optional[GravityContext], sources: SourceSpec,
               grid: Grid, config: SolverConfig, *,
               potential: Optional[PotentialField] = None,
               rates: Optional[SourceRates] = None,
               p_extra: Optional[np.ndarray] = None,
               mom_src_extra: Optional[np.ndarray] = None,
               heat_src_extra: Optional[np.ndarray] = None,
               want_terms: bool = False):
    """Right-hand side of the single-material system on the grid.

    Extras (mixing pressure, inter-component friction/heat) let the
    two-material assembly reuse this path per component.  Returns
    (Tendency, terms) where terms is a dict of ledgered integrals or None.
    """
    shape = tuple(grid.n)
    mask = grid.domain_mask
    rho_floor = config.rho_floor(sources.rho0)

    theta = _invert_theta_field(model, state)
    ev = eval_thermo(model, state.J, theta)
    gam = np.asarray(ev.psi_J - stored_energy_prime(model.free, state.J))
    p = np.asarray(ev.p, dtype=np.float64)
    if p_extra is not None:
        p = p + p_extra
    cs = _sound_speed(ev, state.J, sources.rho0)
    if config.flux == "central-diffusive":
        # uniform dissipation speed: a global Lax-Friedrichs variant
        vmax = np.abs(state.velocity(rho_floor)).max()
        cs = np.full(shape, float(vmax + cs[mask].max() if mask.any() else 0.0))

    kap = np.broadcast_to(model.visc.kappa_of(state.J, theta), shape).astype(float)
    mu = np.broadcast_to(model.visc.mu_of(state.J, theta), shape).astype(float)
    lam = np.broadcast_to(model.visc.lam_of(state.J, theta), shape).astype(float)

    if rates is None:
        rates = source_rates(sources, state, grid, state.t, rho_floor)

    if potential is None and gravity_ctx is not None and gravity_ctx.enabled:
        potential = solve_potential(gravity_ctx, state.rho, grid)
    if potential is not None:
        grav = potential.g
    else:
        grav = np.zeros((3,) + shape)

    # stack center fields and ghost-aware neighbors
    ctr = np.empty((K.NFIELD,) + shape, dtype=np.float64)
    nb = np.empty((K.NFIELD, 6) + shape, dtype=np.float64)
    ctr[K.F_RHO] = state.rho
    nb[K.F_RHO] = _neighbors6(state.rho, mask)
    for a in range(3):
        ctr[K.F_MX + a] = state.mom[a]
        nb[K.F_MX + a] = _neighbors6(state.mom[a], mask, reflect_axis=a)
    for f_idx, arr in ((K.F_J, state.J), (K.F_W, state.w), (K.F_TH, theta),
                       (K.F_P, p), (K.F_CS, cs), (K.F_KAP, kap),
                       (K.F_MU, mu), (K.F_LAM, lam)):
        ctr[f_idx] = arr
        nb[f_idx] = _neighbors6(np.ascontiguousarray(arr, dtype=np.float64), mask)

    # central div v from the same neighbor tables the kernel uses
    inv_2h = 0.5 / grid.h
    divv = np.zeros(shape)
    for a in range(3):
        rm = np.maximum(nb[K.F_RHO, 2 * a], rho_floor)
        rp = np.maximum(nb[K.F_RHO, 2 * a + 1], rho_floor)
        divv += (nb[K.F_MX + a, 2 * a + 1] / rp
                 - nb[K.F_MX + a, 2 * a] / rm) * inv_2h
    ctr[K.F_DIV] = divv
    nb[K.F_DIV] = _neighbors6(divv, mask)

    src = np.empty((6,) + shape, dtype=np.float64)
    src[K.S_RMASS] = rates.r_ext
    mom_rate = rates.mom_rate
    if mom_src_extra is not None:
        mom_rate = mom_rate + mom_src_extra
    src[K.S_MX:K.S_MZ + 1] = mom_rate
    src[K.S_VOL] = rates.vol_rate
    heat_rate = rates.heat_rate
    if heat_src_extra is not None:
        heat_rate = heat_rate + heat_src_extra
    src[K.S_HEAT] = heat_rate

    omega = gravity_ctx.omega if gravity_ctx is not None else 0.0
    out = K.rhs_core(ctr, nb, gam, src, grav, mask.astype(np.uint8),
                     grid.h, omega, rho_floor)
    tend = Tendency(d_rho=out[0], d_mom=out[1:4], d_J=out[4], d_w=out[5],
                    xi=out[6], adiab=out[7])

    terms = None
    if want_terms:
        dV = grid.dV
        v = state.velocity(rho_floor)
        cor = np.empty((3,) + shape)
        cor[0] = 2.0 * state.rho * omega * v[1]
        cor[1] = -2.0 * state.rho * omega * v[0]
        cor[2] = 0.0
        V_field = potential.V if potential is not None else np.zeros(shape)
        vvec = rates.v_ext_vec
        dv2 = ((vvec[0] - v[0]) ** 2 + (vvec[1] - v[1]) ** 2
               + (vvec[2] - v[2]) ** 2)
        vv2 = vvec[0] ** 2 + vvec[1] ** 2 + vvec[2] ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            grad_th2 = np.zeros(shape)
            for a in range(3):
                grad_th2 += ((nb[K.F_TH, 2 * a + 1] - nb[K.F_TH, 2 * a]) * inv_2h) ** 2
            th_pos = theta > 0.0
            prod_cond = np.where(th_pos, kap * grad_th2 / np.where(th_pos, theta, 1.0) ** 2, 0.0)
            src_num = tend.xi + rates.heat_rate
            prod_src = np.where(th_pos, src_num / np.where(th_pos, theta, 1.0),
                                np.where(src_num > 0, np.inf, 0.0))
        eta = np.asarray(ev.eta)
        inside = mask
        terms = {
            "in_mass": float(np.sum(rates.r_ext[inside]) * dV),
            "in_mom": np.array([float(np.sum(mom_rate[a][inside]) * dV) for a in range(3)]),
            "cor_mom": np.array([float(np.sum(cor[a][inside]) * dV) for a in range(3)]),
            "grav_mom": np.array([float(np.sum((state.rho * grav[a])[inside]) * dV) for a in range(3)]),
            "grav_mom_abs": float(sum(np.sum(np.abs(state.rho * grav[a])[inside]) * dV for a in range(3))),
            "mom_rate_total": np.array([float(np.sum(tend.d_mom[a][inside]) * dV) for a in range(3)]),
            "xi_total": float(np.sum(tend.xi[inside]) * dV),
            "adiab_total": float(np.sum(tend.adiab[inside]) * dV),
            "p_kin_in": float(np.sum((0.5 * rates.r_ext * vv2)[inside]) * dV),
            "p_int_in": float(np.sum((rates.vol_rate * (np.asarray(ev.phi) / state.J + state.w))[inside]) * dV),
            "p_grav_in": float(np.sum((rates.r_ext * V_field)[inside]) * dV),
            "p_heat": float(np.sum(rates.heat_rate[inside]) * dV),
            "p_fric_in": float(-np.sum((0.5 * rates.r_ext * dv2)[inside]) * dV),
            "prod_cond": float(np.sum(prod_cond[inside]) * dV),
            "prod_src": float(np.sum(prod_src[inside]) * dV),
            "prod_inflow": float(np.sum((rates.vol_rate * np.where(rates.vol_rate > 0, eta, 0.0))[inside]) * dV),
            "n_vacuum": int(np.count_nonzero(state.rho[inside] <= rho_floor)),
            "theta": theta,
            "potential": potential,
        }
    return tend, terms


def rhs_two(state2: TwoPhaseState, models: Tuple[ConstitutiveModel, ConstitutiveModel],
            mix: Optional[MixtureParams], gravity_ctx: Optional[GravityContext],
            sources2: Tuple[SourceSpec, SourceSpec], grid: Grid,
            config: SolverConfig, want_terms: bool = False):
    """Two-material RHS: per-component single-material assembly plus
    friction, heat-exchange, and mixing-energy coupling.

    The friction force pair and the heat-exchange pair cancel bitwise by
    construction (computed once, added with opposite signs).
    """
    mM, mS = models
    sM, sS = sources2
    stM, stS = state2.metal, state2.silicate
    shape = tuple(grid.n)
    floorM = config.rho_floor(sM.rho0)
    floorS = config.rho_floor(sS.rho0)

    mix_active = mix is not None and (mix.varkappa > 0 or mix.f0 > 0 or mix.k0 > 0)
    potential = None
    if gravity_ctx is not None and gravity_ctx.enabled:
        potential = solve_potential(gravity_ctx, stM.rho + stS.rho, grid)

    extraM = extraS = None
    coupling = None
    if mix_active:
        vM = stM.velocity(floorM)
        vS = stS.velocity(floorS)
        thM = _invert_theta_field(mM, stM)
        thS = _invert_theta_field(mS, stS)
        f_coef = friction_coefficient(mix, stM.rho, stS.rho)
        k_coef = heat_coefficient(mix, stM.rho, stS.rho)
        dvel = vM - vS
        fric = f_coef * dvel                      # computed once; +- below
        xi_f = f_coef * (dvel[0] ** 2 + dvel[1] ** 2 + dvel[2] ** 2)
        q_ex = k_coef * (thS - thM)               # heat flowing into metal
        _, dM, dS = mixing_energy(mix, stM.J, stS.J)
        p_mix_M = -stM.J * dM
        p_mix_S = -stS.J * dS
        maskd = grid.domain_mask
        inv_2h = 0.5 / grid.h
        gradJM = np.stack([( _neighbor(stM.J, maskd, a, +1, False)
                             - _neighbor(stM.J, maskd, a, -1, False)) * inv_2h
                           for a in range(3)])
        gradJS = np.stack([( _neighbor(stS.J, maskd, a, +1, False)
                             - _neighbor(stS.J, maskd, a, -1, False)) * inv_2h
                           for a in range(3)])
        momM = dM * gradJM - fric
        momS = dS * gradJS + fric
        heatM = q_ex + 0.5 * xi_f
        heatS = -q_ex + 0.5 * xi_f
        extraM = (p_mix_M, momM, heatM)
        extraS = (p_mix_S, momS, heatS)
        coupling = SimpleNamespace(xi_f=xi_f, q_ex=q_ex, thM=thM, thS=thS,
                                   dM=dM, dS=dS)

    def run(st, mo, so, extra):
        kw = {}
        if extra is not None:
            kw = dict(p_extra=extra[0], mom_src_extra=extra[1],
                      heat_src_extra=extra[2])
        return rhs_single(st, mo, gravity_ctx, so, grid, config,
                          potential=potential, want_terms=want_terms, **kw)

    tM, termsM = run(stM, mM, sM, extraM)
    tS, termsS = run(stS, mS, sS, extraS)

    terms = None
    if want_terms:
        dV = grid.dV
        inside = grid.domain_mask
        terms = {"metal": termsM, "silicate": termsS, "potential": potential}
        if mix_active:
            phim, dM_, dS_ = mixing_energy(mix, stM.J, stS.J)
            thM, thS = coupling.thM, coupling.thS
            with np.errstate(divide="ignore", invalid="ignore"):
                both_pos = (thM > 0) & (thS > 0)
                k_coef = heat_coefficient(mix, stM.rho, stS.rho)
                prod_hx = np.where(both_pos,
                                   k_coef * (thM - thS) ** 2
                                   / np.where(both_pos, thM * thS, 1.0), 0.0)
                prod_fr = np.where(both_pos,
                                   0.5 * coupling.xi_f
                                   * (thM + thS) / np.where(both_pos, thM * thS, 1.0),
                                   0.0)
            # wall integral of the mixing energy (momentum-balance boundary term)
            mixb = np.zeros(3)
            for a in range(3):
                lo = [slice(None)] * 3
                hi = [slice(None)] * 3
                lo[a], hi[a] = 0, -1
                h2 = grid.h ** 2
                mixb[a] = float((phim[tuple(hi)].sum() - phim[tuple(lo)].sum()) * h2)
            terms.update({
                "mix_energy": float(np.sum(phim[inside]) * dV),
                "fric_diss": float(np.sum(coupling.xi_f[inside]) * dV),
                "prod_heatex": float(np.sum(prod_hx[inside]) * dV),
                "prod_fric": float(np.sum(prod_fr[inside]) * dV),
                "p_mix_in_m": float(np.sum((-stM.J * dM_ *
                                            source_rates(sM, stM, grid, stM.t, floorM).vol_rate)[inside]) * dV),
                "p_mix_in_s": float(np.sum((-stS.J * dS_ *
                                            source_rates(sS, stS, grid, stS.t, floorS).vol_rate)[inside]) * dV),
                "mix_boundary": mixb,
            })
        else:
            terms.update({"mix_energy": 0.0, "fric_diss": 0.0,
                          "prod_heatex": 0.0, "prod_fric": 0.0,
                          "p_mix_in_m": 0.0, "p_mix_in_s": 0.0,
                          "mix_boundary": np.zeros(3)})
    return (tM, tS), terms


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------

def stable_dt(state, model, config: SolverConfig, grid: Grid,
              sources: SourceSpec) -> float:
    """CFL-limited step from advective, acoustic, viscous, conductive speeds."""
    if isinstance(state, TwoPhaseState):
        raise TypeError("use stable_dt_two for two-material states")
    rho_floor = config.rho_floor(sources.rho0)
    theta = _invert_theta_field(model, state)
    ev = eval_thermo(model, state.J, theta)
    cs = _sound_speed(ev, state.J, sources.rho0)
    v = np.abs(state.velocity(rho_floor)).max(axis=0)
    mu = np.broadcast_to(model.visc.mu_of(state.J, theta), v.shape)
    lam = np.broadcast_to(model.visc.lam_of(state.J, theta), v.shape)
    kap = np.broadcast_to(model.visc.kappa_of(state.J, theta), v.shape)
    c_vol = np.asarray(ev.c)
    h = grid.h
    denom = (v + cs + 2.0 * (mu + lam) / (np.maximum(state.rho, rho_floor) * h)
             + kap / (c_vol * h))
    dmax = float(denom[grid.domain_mask].max())
    dt = config.cfl * h / dmax if dmax > 0 else np.inf
    dt = min(dt, config.dt_max)
    if not np.isfinite(dt) or dt <= 0:
        raise StepFailure("degenerate time step (no finite speed and no dt_max)")
    if dt < 1e-300:
        raise StepFailure("time step underflow signals imminent blow-up")
    return dt


def stable_dt_two(state2: TwoPhaseState, models, config, grid, sources2) -> float:
    return min(stable_dt(state2.metal, models[0], config, grid, sources2[0]),
               stable_dt(state2.silicate, models[1], config, grid, sources2[1]))


def _advance_fields(state: FieldState, tend: Tendency, dt: float) -> FieldState:
    return FieldState(rho=state.rho + dt * tend.d_rho,
                      mom=state.mom + dt * tend.d_mom,
                      J=state.J + dt * tend.d_J,
                      w=state.w + dt * tend.d_w,
                      t=state.t + dt)


def _combine_heun(state: FieldState, k1: Tendency, k2: Tendency,
                  dt: float) -> FieldState:
    half = 0.5 * dt
    return FieldState(rho=state.rho + half * (k1.d_rho + k2.d_rho),
                      mom=state.mom + half * (k1.d_mom + k2.d_mom),
                      J=state.J + half * (k1.d_J + k2.d_J),
                      w=state.w + half * (k1.d_w + k2.d_w),
                      t=state.t + dt)


def enforce_floors(state: FieldState, grid: Grid, config: SolverConfig,
                   rho0: float) -> int:
    """Check floors; clamp only roundoff-negative w.  Returns clamp count."""
    inside = grid.domain_mask
    rho_floor = config.rho_floor(rho0)
    if np.any(state.rho[inside] < rho_floor):
        raise StepFailure(f"density fell below floor {rho_floor:g}")
    if np.any(state.J[inside] < config.j_floor):
        raise StepFailure(f"Jacobian fell below floor {config.j_floor:g}")
    w = state.w
    w_tol = 1e-10 * max(1.0, float(np.abs(w[inside]).max(initial=0.0)))
    neg = inside & (w < 0.0)
    if np.any(w[neg] < -w_tol):
        raise StepFailure("thermal energy went negative beyond roundoff")
    n_clamp = int(np.count_nonzero(neg))
    if n_clamp:
        state.w[neg] = 0.0
    if not np.all(np.isfinite(state.rho[inside])) or \
       not np.all(np.isfinite(state.w[inside])):
        raise StepFailure("non-finite state")
    return n_clamp


def step_single(state: FieldState, dt: float, model: ConstitutiveModel,
                gravity_ctx, sources: SourceSpec, grid: Grid,
                config: SolverConfig, want_terms: bool = False):
    """Advance one step; returns (state', stage_terms list, n_w_clamped)."""
    k1, terms1 = rhs_single(state, model, gravity_ctx, sources, grid, config,
                            want_terms=want_terms)
    if config.integrator == "forward-euler":
        new = _advance_fields(state, k1, dt)
        n_clamp = enforce_floors(new, grid, config, sources.rho0)
        return new, [terms1], n_clamp
    u1 = _advance_fields(state, k1, dt)
    enforce_floors(u1, grid, config, sources.rho0)
    k2, terms2 = rhs_single(u1, model, gravity_ctx, sources, grid, config,
                            want_terms=want_terms)
    new = _combine_heun(state, k1, k2, dt)
    n_clamp = enforce_floors(new, grid, config, sources.rho0)
    return new, [terms1, terms2], n_clamp


def step_two(state2: TwoPhaseState, dt: float, models, mix, gravity_ctx,
             sources2, grid: Grid, config: SolverConfig,
             want_terms: bool = False):
    """Two-material step with the same stage structure as step_single."""

    def advance(st2, kM, kS, base=None, heun=False):
        if heun:
            m = _combine_heun(base.metal, kM[0], kM[1], dt)
            s = _combine_heun(base.silicate, kS[0], kS[1], dt)
        else:
            m = _advance_fields(st2.metal, kM, dt)
            s = _advance_fields(st2.silicate, kS, dt)
        return TwoPhaseState(metal=m, silicate=s)

    (k1M, k1S), terms1 = rhs_two(state2, models, mix, gravity_ctx, sources2,
                                 grid, config, want_terms=want_terms)
    if config.integrator == "forward-euler":
        new = advance(state2, k1M, k1S)
        nc = (enforce_floors(new.metal, grid, config, sources2[0].rho0)
              + enforce_floors(new.silicate, grid, config, sources2[1].rho0))
        return new, [terms1], nc
    u1 = advance(state2, k1M, k1S)
    enforce_floors(u1.metal, grid, config, sources2[0].rho0)
    enforce_floors(u1.silicate, grid, config, sources2[1].rho0)
    (k2M, k2S), terms2 = rhs_two(u1, models, mix, gravity_ctx, sources2,
                                 grid, config, want_terms=want_terms)
    new = advance(None, (k1M, k2M), (k1S, k2S), base=state2, heun=True)
    nc = (enforce_floors(new.metal, grid, config, sources2[0].rho0)
          + enforce_floors(new.silicate, grid, config, sources2[1].rho0))
    return new, [terms1, terms2], nc
