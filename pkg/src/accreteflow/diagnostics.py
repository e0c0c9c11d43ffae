"""Balance ledgers and post-hoc audits of the integral identities.

Every integral is a midpoint cell sum; audit time derivatives are per-step
differences paired with trapezoidal right-hand sides, so residuals are
scheme-limited rather than audit-limited.  The gravitational field energy is
the |grad V|^2/(8 pi G) sum over the zero-padded free-space box plus a
separately ledgered exterior-tail estimate (exact for spherically symmetric
compact blobs, for which the exterior field is point-mass).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .constitutive import ConstitutiveModel, eval_thermo, stored_energy
from .gravity import GravityContext, PotentialField, domain_constant
from .state import FieldState, Grid, SourceSpec, consistency_rho_J


# ---------------------------------------------------------------------------
# integrals of a single state
# ---------------------------------------------------------------------------

def state_integrals(state: FieldState, model: ConstitutiveModel, grid: Grid,
                    rho0: float, theta: Optional[np.ndarray] = None,
                    rho_floor: float = 1e-300) -> dict:
    """Mass, momentum, energies, entropy, and drift metrics of one material."""
    from .solver import _invert_theta_field  # deferred: avoids module cycle

    if theta is None:
        theta = _invert_theta_field(model, state)
    dV = grid.dV
    inside = grid.domain_mask
    ev = eval_thermo(model, state.J, theta)
    v = state.velocity(rho_floor)
    kin = 0.5 * state.rho * (v[0] ** 2 + v[1] ** 2 + v[2] ** 2)
    stored = np.asarray(ev.phi) / state.J
    eta = np.asarray(ev.eta)
    warm = theta > 0.0
    eta_sum = float(np.sum(np.where(warm & inside, eta, 0.0)) * dV)
    n_cold = int(np.count_nonzero(inside & ~warm))
    return {
        "mass": float(np.sum(state.rho[inside]) * dV),
        "mom": np.array([float(np.sum(state.mom[a][inside]) * dV) for a in range(3)]),
        "kinetic": float(np.sum(kin[inside]) * dV),
        "stored": float(np.sum(stored[inside]) * dV),
        "thermal": float(np.sum(state.w[inside]) * dV),
        "entropy": eta_sum,
        "n_cold": n_cold,
        "rhoj_drift": consistency_rho_J(state, rho0, grid),
        "j_min": float(state.J[inside].min()),
        "j_max": float(state.J[inside].max()),
        "theta": theta,
    }


def _fibonacci_directions(n: int = 2048) -> np.ndarray:
    """Deterministic quasi-uniform unit directions for the tail quadrature."""
    i = np.arange(n) + 0.5
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _exterior_tail(mass: float, centroid: np.ndarray, lo: np.ndarray,
                   hi: np.ndarray, G: float) -> float:
    """G*M^2/(8 pi) * mean solid-angle integral of 1/R_exit over the box
    exterior; exact for a compact spherically symmetric mass in the box."""
    dirs = _fibonacci_directions()
    with np.errstate(divide="ignore"):
        t_hi = np.where(dirs > 0, (hi - centroid) / np.where(dirs > 0, dirs, 1.0), np.inf)
        t_lo = np.where(dirs < 0, (lo - centroid) / np.where(dirs < 0, dirs, 1.0), np.inf)
    r_exit = np.minimum(t_hi, t_lo).min(axis=1)
    mean_inv_r = float(np.mean(1.0 / r_exit))
    return G * mass**2 * 0.5 * mean_inv_r


def field_energy(potential: PotentialField, grid: Grid, ctx: GravityContext,
                 rho: np.ndarray) -> tuple:
    """(near-field |grad V|^2/(8 pi G) integral, exterior tail estimate).

    The zero-padded solve is alias-free only for displacements within one box
    length of the sources, so the integral runs over the box extended by half
    a box length per side; the remainder of R^3 enters through the point-mass
    tail (exact for a compact spherically symmetric blob).
    """
    if potential is None or potential.V_pad is None:
        return 0.0, 0.0
    h = grid.h
    n = grid.n
    V = np.roll(potential.V_pad, (n[0], n[1], n[2]), axis=(0, 1, 2))
    # after the roll, index i maps to position origin + (i - n + 1/2)*h;
    # keep the valid margin of n/2 ghost cells around the box
    sl = tuple(slice(nv - nv // 2, 2 * nv) for nv in n)
    acc = np.zeros_like(V[sl])
    for a in range(3):
        g = np.gradient(V, h, axis=a)[sl]
        acc += g * g
    e_box = float(acc.sum()) * grid.dV / (8.0 * np.pi * ctx.G)

    inside = grid.domain_mask
    m_cell = np.where(inside, rho, 0.0) * grid.dV
    mass = float(m_cell.sum())
    if mass <= 0.0:
        return e_box, 0.0
    xc = np.array([float((m_cell * grid.center_mesh()[a]).sum()) / mass
                   for a in range(3)])
    lo = grid.origin - 0.5 * grid.extent    # integration-region low corner
    hi = grid.origin + grid.extent          # high corner
    tail = _exterior_tail(mass, xc, lo, hi, ctx.G)
    return e_box, tail


def gravitational_energy(state_rho, potential, grid) -> float:
    if potential is None:
        return 0.0
    inside = grid.domain_mask
    return float(np.sum((state_rho * potential.V)[inside]) * grid.dV)


# ---------------------------------------------------------------------------
# the ledger
# ---------------------------------------------------------------------------

_BASE_COLS = ["step", "t", "dt"]
_STATE_COLS_1C = ["mass", "mom_x", "mom_y", "mom_z", "kinetic", "stored",
                  "thermal", "grav", "field", "field_trunc", "entropy",
                  "rho_sq", "v_sq", "v_abs_max", "j_min", "j_max",
                  "rhoj_drift"]
_RATE_COLS_1C = ["xi", "adiab", "cor_x", "cor_y", "cor_z",
                 "grav_mom_x", "grav_mom_y", "grav_mom_z", "grav_mom_abs",
                 "in_mass", "in_mom_x", "in_mom_y", "in_mom_z",
                 "p_kin_in", "p_int_in", "p_grav_in", "p_heat", "p_fric_in",
                 "prod_cond", "prod_src", "prod_inflow"]
_EFF_COLS = ["eff_in_mass", "eff_in_mom_x", "eff_in_mom_y", "eff_in_mom_z",
             "eff_cor_x", "eff_cor_y", "eff_cor_z",
             "eff_grav_mom_x", "eff_grav_mom_y", "eff_grav_mom_z",
             "eff_mom_rate_x", "eff_mom_rate_y", "eff_mom_rate_z"]
_COUNT_COLS = ["n_wclamp", "n_vacuum", "n_cold"]

COLUMNS_SINGLE = _BASE_COLS + _STATE_COLS_1C + _RATE_COLS_1C + _EFF_COLS + _COUNT_COLS

_STATE_COLS_2C = (["m_mass", "s_mass", "mass", "mom_x", "mom_y", "mom_z",
                   "m_kinetic", "s_kinetic", "m_stored", "s_stored",
                   "m_thermal", "s_thermal", "grav", "field", "field_trunc",
                   "mix_energy", "m_entropy", "s_entropy", "entropy",
                   "rho_sq", "v_sq", "v_abs_max", "j_min", "j_max",
                   "m_rhoj_drift", "s_rhoj_drift"])
_RATE_COLS_2C = ["xi", "adiab", "fric_diss",
                 "cor_x", "cor_y", "cor_z",
                 "grav_mom_x", "grav_mom_y", "grav_mom_z", "grav_mom_abs",
                 "in_mass", "in_mom_x", "in_mom_y", "in_mom_z",
                 "p_kin_in", "p_int_in", "p_grav_in", "p_heat", "p_fric_in",
                 "p_mix_in", "prod_cond", "prod_src", "prod_inflow",
                 "prod_heatex", "prod_fric",
                 "mixb_x", "mixb_y", "mixb_z"]

COLUMNS_TWO = _BASE_COLS + _STATE_COLS_2C + _RATE_COLS_2C + _EFF_COLS + _COUNT_COLS


@dataclass
class BalanceLedger:
    """Per-step integral ledger with a fixed, documented column order."""

    mode: str = "single"            # single | two
    rows: list = field(default_factory=list)

    @property
    def columns(self):
        return COLUMNS_SINGLE if self.mode == "single" else COLUMNS_TWO

    def append(self, row: dict):
        missing = [c for c in self.columns if c not in row]
        if missing:
            raise ValueError(f"ledger row missing columns: {missing}")
        self.rows.append(row)

    def series(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=np.float64)

    def write_csv(self, path):
        path = Path(path)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            for r in self.rows:
                out = []
                for c in self.columns:
                    v = r[c]
                    if isinstance(v, (int, np.integer)):
                        out.append(str(int(v)))
                    else:
                        out.append(f"{float(v):.17g}")
                writer.writerow(out)

    @classmethod
    def read_csv(cls, path, mode=None):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = []
            for rec in reader:
                rows.append({c: float(v) for c, v in zip(header, rec)})
        if mode is None:
            mode = "two" if "m_mass" in header else "single"
        led = cls(mode=mode)
        led.rows = rows
        return led


def _avg_stage(stage_terms, key):
    vals = [t[key] for t in stage_terms]
    return sum(vals) / len(vals)


def make_row_single(step, t, dt, state, model, grid, ctx, sources,
                    stage_terms, n_clamp, config) -> dict:
    """Assemble one ledger row from the state and the RHS stage terms."""
    t1 = stage_terms[0]
    pot = t1["potential"]
    ints = state_integrals(state, model, grid, sources.rho0,
                           rho_floor=config.rho_floor(sources.rho0))
    grav_e = gravitational_energy(state.rho, pot, grid)
    if pot is not None and pot.V_pad is not None:
        fe, ftrunc = field_energy(pot, grid, ctx, state.rho)
    else:
        # direct-oracle path keeps no padded solution; fall back on the
        # free-space Green identity (field energy = -grav/2)
        fe, ftrunc = -0.5 * grav_e, 0.0
    inside = grid.domain_mask
    dV = grid.dV
    Vf = pot.V if pot is not None else np.zeros(grid.n)
    row = {
        "step": step, "t": t, "dt": dt,
        "mass": ints["mass"],
        "mom_x": ints["mom"][0], "mom_y": ints["mom"][1], "mom_z": ints["mom"][2],
        "kinetic": ints["kinetic"], "stored": ints["stored"],
        "thermal": ints["thermal"],
        "grav": grav_e,
        "field": fe, "field_trunc": ftrunc,
        "entropy": ints["entropy"],
        "rho_sq": float(np.sum(state.rho[inside] ** 2) * dV),
        "v_sq": float(np.sum(Vf[inside] ** 2) * dV),
        "v_abs_max": float(np.abs(Vf[inside]).max()),
        "j_min": ints["j_min"], "j_max": ints["j_max"],
        "rhoj_drift": ints["rhoj_drift"],
        "xi": t1["xi_total"], "adiab": t1["adiab_total"],
        "cor_x": t1["cor_mom"][0], "cor_y": t1["cor_mom"][1], "cor_z": t1["cor_mom"][2],
        "grav_mom_x": t1["grav_mom"][0], "grav_mom_y": t1["grav_mom"][1],
        "grav_mom_z": t1["grav_mom"][2],
        "grav_mom_abs": t1["grav_mom_abs"],
        "in_mass": t1["in_mass"],
        "in_mom_x": t1["in_mom"][0], "in_mom_y": t1["in_mom"][1], "in_mom_z": t1["in_mom"][2],
        "p_kin_in": t1["p_kin_in"], "p_int_in": t1["p_int_in"],
        "p_grav_in": t1["p_grav_in"], "p_heat": t1["p_heat"],
        "p_fric_in": t1["p_fric_in"],
        "prod_cond": t1["prod_cond"], "prod_src": t1["prod_src"],
        "prod_inflow": t1["prod_inflow"],
        "eff_in_mass": _avg_stage(stage_terms, "in_mass"),
        "eff_in_mom_x": _avg_stage(stage_terms, "in_mom")[0],
        "eff_in_mom_y": _avg_stage(stage_terms, "in_mom")[1],
        "eff_in_mom_z": _avg_stage(stage_terms, "in_mom")[2],
        "eff_cor_x": _avg_stage(stage_terms, "cor_mom")[0],
        "eff_cor_y": _avg_stage(stage_terms, "cor_mom")[1],
        "eff_cor_z": _avg_stage(stage_terms, "cor_mom")[2],
        "eff_grav_mom_x": _avg_stage(stage_terms, "grav_mom")[0],
        "eff_grav_mom_y": _avg_stage(stage_terms, "grav_mom")[1],
        "eff_grav_mom_z": _avg_stage(stage_terms, "grav_mom")[2],
        "eff_mom_rate_x": _avg_stage(stage_terms, "mom_rate_total")[0],
        "eff_mom_rate_y": _avg_stage(stage_terms, "mom_rate_total")[1],
        "eff_mom_rate_z": _avg_stage(stage_terms, "mom_rate_total")[2],
        "n_wclamp": n_clamp, "n_vacuum": t1["n_vacuum"], "n_cold": ints["n_cold"],
    }
    return row


def make_row_two(step, t, dt, state2, models, grid, ctx, sources2,
                 stage_terms, n_clamp, config) -> dict:
    t1 = stage_terms[0]
    tm, ts = t1["metal"], t1["silicate"]
    pot = t1["potential"]
    rho_tot = state2.metal.rho + state2.silicate.rho
    im = state_integrals(state2.metal, models[0], grid, sources2[0].rho0,
                         rho_floor=config.rho_floor(sources2[0].rho0))
    isl = state_integrals(state2.silicate, models[1], grid, sources2[1].rho0,
                          rho_floor=config.rho_floor(sources2[1].rho0))
    grav_e = gravitational_energy(rho_tot, pot, grid)
    if pot is not None and pot.V_pad is not None:
        fe, ftrunc = field_energy(pot, grid, ctx, rho_tot)
    else:
        fe, ftrunc = -0.5 * grav_e, 0.0
    inside = grid.domain_mask
    dV = grid.dV
    Vf = pot.V if pot is not None else np.zeros(grid.n)

    def comp_avg(key, col, idx=None):
        vals = []
        for st in stage_terms:
            v = st["metal"][key] + st["silicate"][key]
            vals.append(v if idx is None else v[idx])
        return sum(vals) / len(vals)

    row = {
        "step": step, "t": t, "dt": dt,
        "m_mass": im["mass"], "s_mass": isl["mass"],
        "mass": im["mass"] + isl["mass"],
        "mom_x": im["mom"][0] + isl["mom"][0],
        "mom_y": im["mom"][1] + isl["mom"][1],
        "mom_z": im["mom"][2] + isl["mom"][2],
        "m_kinetic": im["kinetic"], "s_kinetic": isl["kinetic"],
        "m_stored": im["stored"], "s_stored": isl["stored"],
        "m_thermal": im["thermal"], "s_thermal": isl["thermal"],
        "grav": grav_e,
        "field": fe, "field_trunc": ftrunc,
        "mix_energy": t1["mix_energy"],
        "m_entropy": im["entropy"], "s_entropy": isl["entropy"],
        "entropy": im["entropy"] + isl["entropy"],
        "rho_sq": float(np.sum(rho_tot[inside] ** 2) * dV),
        "v_sq": float(np.sum(Vf[inside] ** 2) * dV),
        "v_abs_max": float(np.abs(Vf[inside]).max()),
        "j_min": min(im["j_min"], isl["j_min"]),
        "j_max": max(im["j_max"], isl["j_max"]),
        "m_rhoj_drift": im["rhoj_drift"], "s_rhoj_drift": isl["rhoj_drift"],
        "xi": tm["xi_total"] + ts["xi_total"],
        "adiab": tm["adiab_total"] + ts["adiab_total"],
        "fric_diss": t1["fric_diss"],
        "cor_x": tm["cor_mom"][0] + ts["cor_mom"][0],
        "cor_y": tm["cor_mom"][1] + ts["cor_mom"][1],
        "cor_z": tm["cor_mom"][2] + ts["cor_mom"][2],
        "grav_mom_x": tm["grav_mom"][0] + ts["grav_mom"][0],
        "grav_mom_y": tm["grav_mom"][1] + ts["grav_mom"][1],
        "grav_mom_z": tm["grav_mom"][2] + ts["grav_mom"][2],
        "grav_mom_abs": tm["grav_mom_abs"] + ts["grav_mom_abs"],
        "in_mass": tm["in_mass"] + ts["in_mass"],
        "in_mom_x": tm["in_mom"][0] + ts["in_mom"][0],
        "in_mom_y": tm["in_mom"][1] + ts["in_mom"][1],
        "in_mom_z": tm["in_mom"][2] + ts["in_mom"][2],
        "p_kin_in": tm["p_kin_in"] + ts["p_kin_in"],
        "p_int_in": tm["p_int_in"] + ts["p_int_in"],
        "p_grav_in": tm["p_grav_in"] + ts["p_grav_in"],
        "p_heat": tm["p_heat"] + ts["p_heat"],
        "p_fric_in": tm["p_fric_in"] + ts["p_fric_in"],
        "p_mix_in": t1["p_mix_in_m"] + t1["p_mix_in_s"],
        "prod_cond": tm["prod_cond"] + ts["prod_cond"],
        "prod_src": tm["prod_src"] + ts["prod_src"],
        "prod_inflow": tm["prod_inflow"] + ts["prod_inflow"],
        "prod_heatex": t1["prod_heatex"], "prod_fric": t1["prod_fric"],
        "mixb_x": t1["mix_boundary"][0], "mixb_y": t1["mix_boundary"][1],
        "mixb_z": t1["mix_boundary"][2],
        "eff_in_mass": comp_avg("in_mass", None),
        "eff_in_mom_x": comp_avg("in_mom", None, 0),
        "eff_in_mom_y": comp_avg("in_mom", None, 1),
        "eff_in_mom_z": comp_avg("in_mom", None, 2),
        "eff_cor_x": comp_avg("cor_mom", None, 0),
        "eff_cor_y": comp_avg("cor_mom", None, 1),
        "eff_cor_z": comp_avg("cor_mom", None, 2),
        "eff_grav_mom_x": comp_avg("grav_mom", None, 0),
        "eff_grav_mom_y": comp_avg("grav_mom", None, 1),
        "eff_grav_mom_z": comp_avg("grav_mom", None, 2),
        "eff_mom_rate_x": comp_avg("mom_rate_total", None, 0),
        "eff_mom_rate_y": comp_avg("mom_rate_total", None, 1),
        "eff_mom_rate_z": comp_avg("mom_rate_total", None, 2),
        "n_wclamp": n_clamp,
        "n_vacuum": tm["n_vacuum"] + ts["n_vacuum"],
        "n_cold": im["n_cold"] + isl["n_cold"],
    }
    return row


# ---------------------------------------------------------------------------
# audits
# ---------------------------------------------------------------------------

@dataclass
class EnergyAudit:
    residuals: np.ndarray       # per-step residual, normalized
    max_rel: float
    scale: float


def total_energy_series(led: BalanceLedger) -> np.ndarray:
    if led.mode == "single":
        E = (led.series("kinetic") + led.series("stored") + led.series("thermal")
             + led.series("grav") + led.series("field") + led.series("field_trunc"))
    else:
        E = (led.series("m_kinetic") + led.series("s_kinetic")
             + led.series("m_stored") + led.series("s_stored")
             + led.series("m_thermal") + led.series("s_thermal")
             + led.series("grav") + led.series("field")
             + led.series("field_trunc") + led.series("mix_energy"))
    return E


def source_power_series(led: BalanceLedger) -> np.ndarray:
    P = (led.series("p_kin_in") + led.series("p_int_in") + led.series("p_grav_in")
         + led.series("p_heat") + led.series("p_fric_in"))
    if led.mode == "two":
        P = P + led.series("p_mix_in")
    return P


def energy_audit(led: BalanceLedger) -> EnergyAudit:
    """Per-step residual of the total-energy balance, normalized."""
    if len(led.rows) < 2:
        raise ValueError("need at least two ledger rows")
    E = total_energy_series(led)
    P = source_power_series(led)
    t = led.series("t")
    dE = np.diff(E)
    rhs = 0.5 * (P[1:] + P[:-1]) * np.diff(t)
    scale = float(np.abs(E).max())
    scale = scale if scale > 0 else 1.0
    res = (dE - rhs) / scale
    return EnergyAudit(residuals=res, max_rel=float(np.abs(res).max()), scale=scale)


@dataclass
class EntropyAudit:
    monotone: bool
    worst_dip: float
    tol: float
    production: dict


def entropy_audit(led: BalanceLedger, grid: Grid,
                  tol: Optional[float] = None) -> EntropyAudit:
    """Nondecrease of total entropy within a resolution-scaled tolerance."""
    S = led.series("entropy")
    if tol is None:
        h_ref = float(grid.extent.max()) / 32.0
        tol = 1e-3 * max(1e-300, float(np.abs(S).max())) * (grid.h / h_ref)
    dips = np.diff(S)
    worst = float(dips.min()) if len(dips) else 0.0
    production = {
        "conduction": led.series("prod_cond"),
        "sources": led.series("prod_src"),
        "inflow": led.series("prod_inflow"),
    }
    if led.mode == "two":
        production["heat_exchange"] = led.series("prod_heatex")
        production["friction"] = led.series("prod_fric")
    return EntropyAudit(monotone=bool(worst >= -tol), worst_dip=worst,
                        tol=tol, production=production)


@dataclass
class StabilityCheck:
    name: str
    passed: bool
    worst_margin: float
    detail: str


@dataclass
class StabilityReport:
    passed: bool
    c2: float
    c_abs: float
    absorb_const: float
    checks: list
    margins: np.ndarray

    def summary(self) -> str:
        lines = [f"C_(2,Omega) = {self.c2:.6g}, c_abs = {self.c_abs:.4g}"]
        for ch in self.checks:
            status = "pass" if ch.passed else "FAIL"
            lines.append(f"  {ch.name}: {status} (worst margin {ch.worst_margin:.3g}) {ch.detail}")
        return "\n".join(lines)


def absorption_split(model: ConstitutiveModel, coef: float,
                     samples: int = 400) -> tuple:
    """Split 1/J^2 <= 1/delta^2 + A_delta * phi(J)/J and pick the threshold.

    1/J^2 <= 1/delta^2 for J >= delta, and A_delta = sup_{J <= delta} of
    J^-2/(1 + phi/J) covers the rest.  A blow-up of phi faster than 1/J makes
    A_delta -> 0 as delta -> 0, so a threshold with coef*A_delta < 1 exists
    exactly when self-collapse is excluded.  Returns
    (delta, A_delta, c_abs, 1/delta^2).
    """
    j_lo = 1e-8
    for delta in np.logspace(0.0, -6.0, 100):  # scan 1 -> 1e-6
        Js = np.logspace(np.log10(j_lo), np.log10(delta), samples)
        phi = stored_energy(model.free, Js)
        ratio = Js**-2 / (1.0 + phi / Js)
        A = float(ratio.max())
        c_abs = coef * A
        if c_abs <= 0.5:
            return float(delta), A, c_abs, 1.0 / delta**2
    return float(delta), A, c_abs, 1.0 / delta**2


def stability_audit(led: BalanceLedger, model: ConstitutiveModel, grid: Grid,
                    ctx: GravityContext, sources: SourceSpec,
                    r: float = 2.0, slack: float = 0.05,
                    c2: Optional[float] = None) -> StabilityReport:
    """Numerically verify the inequality chain behind the no-collapse bound.

    Per step: (1) the integrated energy inequality with the nonnegative field
    energy dropped; (2) the Young split of the gravitational energy;
    (3) the Hoelder/domain-constant bound on the potential; (4) absorption of
    rho^2 by the stored energy; (5) the assembled Gronwall-type envelope.
    Failed checks are findings (report entries), not exceptions.
    """
    if c2 is None:
        c2 = domain_constant(grid, r)
    t = led.series("t")
    if led.mode == "two":
        left = (led.series("m_kinetic") + led.series("s_kinetic")
                + led.series("m_stored") + led.series("s_stored")
                + led.series("m_thermal") + led.series("s_thermal"))
    else:
        left = (led.series("kinetic") + led.series("stored")
                + led.series("thermal"))
    grav = led.series("grav")
    fieldE = led.series("field") + led.series("field_trunc")
    rho_sq = led.series("rho_sq")
    v_sq = led.series("v_sq")
    v_max = led.series("v_abs_max")
    stored = (led.series("stored") if led.mode == "single"
              else led.series("m_stored") + led.series("s_stored"))
    P = source_power_series(led)
    scale = max(float(np.abs(left).max()), 1e-300)

    G = ctx.G
    vol = grid.volume
    rho0 = sources.rho0
    young_coef = 0.5 * (1.0 + G * G * c2 * vol)
    delta, A, c_abs, inv_d2 = absorption_split(model, young_coef * rho0**2)

    intP = np.concatenate([[0.0], np.cumsum(0.5 * (P[1:] + P[:-1]) * np.diff(t))])
    C0 = left[0] + grav[0] + fieldE[0]

    checks = []
    tiny = 1e-12 * scale

    def add(name, lhs, rhs, detail=""):
        margin = (rhs - lhs) / scale
        checks.append(StabilityCheck(name=name, passed=bool(np.all(lhs <= rhs + tiny)),
                                     worst_margin=float(margin.min()),
                                     detail=detail))

    # (1) energy inequality (4.2-type), allowing the audit residual
    resid_allow = 0.0
    if len(led.rows) >= 2:
        ea = energy_audit(led)
        resid_allow = float(np.abs(np.cumsum(ea.residuals)).max()) * ea.scale
    add("energy_inequality", left, C0 + intP - grav + resid_allow + tiny,
        "integrated balance with field energy dropped")
    # (2) Young split
    add("young", -grav, 0.5 * (rho_sq + v_sq), "-sum(rho V) <= (rho^2 + V^2)/2")
    # (3) Hoelder / domain constant (discrete Cauchy-Schwarz with matched kernel)
    add("hoelder_sup", v_max**2, G * G * c2 * rho_sq,
        f"sup V^2 <= G^2 C_(r,Omega) sum rho^2, C = {c2:.6g}")
    add("hoelder_vol", v_sq, vol * G * G * c2 * rho_sq,
        "volume-integrated form")
    # (4) absorption by the stored energy: 1/J^2 split at the threshold delta
    add("absorption", rho_sq, rho0**2 * (vol * inv_d2 + A * stored),
        f"split at delta = {delta:.3g}, A_delta = {A:.4g}")
    # (5) Gronwall-type envelope
    if c_abs < 1.0:
        gronwall = np.exp(2.0 * sources.v_ext * (t - t[0]))
        envelope = (C0 + np.maximum.accumulate(np.maximum(intP, 0.0))
                    + young_coef * rho0**2 * vol * inv_d2) \
            * gronwall / (1.0 - c_abs)
        add("envelope", left, envelope * (1.0 + slack),
            "left side within the assembled Gronwall envelope")
        margins = (envelope * (1.0 + slack) - left) / scale
    else:
        checks.append(StabilityCheck(
            name="envelope", passed=False, worst_margin=-np.inf,
            detail=f"no absorption threshold: c_abs = {c_abs:.3g} >= 1 even "
                   "at the smallest sampled delta (stored energy does not "
                   "blow up faster than 1/J)"))
        margins = np.full_like(left, -np.inf)

    return StabilityReport(passed=all(c.passed for c in checks), c2=c2,
                           c_abs=c_abs, absorb_const=A, checks=checks,
                           margins=margins)
