"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines.  Everything runs at desk scale (<= 64^3); the whole module takes a few
minutes.  Reference values in tests/data/reference.json were committed from
the first validated run of the corresponding scenarios.
"""

import json
import pathlib

import numpy as np
import pytest

import accreteflow as af
from accreteflow.cli import execute_run, main
from accreteflow.constitutive import internal_energy_actual
from accreteflow.diagnostics import (BalanceLedger, energy_audit,
                                     entropy_audit, make_row_single,
                                     stability_audit)
from accreteflow.scenario import load_scenario
from accreteflow.state import read_snapshot

from conftest import SCENARIOS, central_diff

DATA = pathlib.Path(__file__).parent / "data"
REFERENCE = json.loads((DATA / "reference.json").read_text())


def report(num, name, ok, detail=""):
    print(f"\nACCEPTANCE {num:02d} [{name}]: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"criterion {num} ({name}): {detail}"


# ---------------------------------------------------------------------------
# shared runs (module-scoped so several criteria can audit the same ledgers)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def conserve_run(tmp_path_factory):
    """Single component, sources off, gravity on, 32^3, 200 steps."""
    out = tmp_path_factory.mktemp("conserve")
    sc = load_scenario(SCENARIOS / "accrete-1c.toml", overrides=[
        "domain.n=32", "domain.border_width=0", "sources.v_ext=0.0",
        "sources.h_ext=0.0", "time.t_end=1.0", "time.max_steps=200",
    ])
    assert execute_run(sc, out, quiet=True) == 0
    return sc, BalanceLedger.read_csv(out / "ledger.csv")


@pytest.fixture(scope="module")
def accrete_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("accrete")
    sc = load_scenario(SCENARIOS / "accrete-1c.toml",
                       overrides=["time.t_end=0.25"])
    assert execute_run(sc, out, quiet=True) == 0
    return sc, BalanceLedger.read_csv(out / "ledger.csv")


@pytest.fixture(scope="module")
def quiet_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("quiet")
    sc = load_scenario(SCENARIOS / "quiet-box.toml")
    assert execute_run(sc, out, quiet=True) == 0
    return sc, BalanceLedger.read_csv(out / "ledger.csv")


@pytest.fixture(scope="module")
def differentiate_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("diff2c")
    sc = load_scenario(SCENARIOS / "differentiate-2c.toml")
    assert execute_run(sc, out, quiet=True) == 0
    return sc, BalanceLedger.read_csv(out / "ledger.csv"), out


@pytest.fixture(scope="module")
def advection_runs(tmp_path_factory):
    runs = {}
    for n in (20, 40, 80):
        out = tmp_path_factory.mktemp(f"adv{n}")
        sc = load_scenario(SCENARIOS / "smooth-advection.toml",
                           overrides=[f"domain.n={n}"])
        assert execute_run(sc, out, quiet=True) == 0
        runs[n] = (sc, BalanceLedger.read_csv(out / "ledger.csv"))
    return runs


# ---------------------------------------------------------------------------

def test_c01_constitutive_identity_suite(default_model, rng):
    """Analytic p, c, w, eta vs finite differences at 1000 points; Gibbs split."""
    m = default_model
    worst_fd = 0.0
    worst_gibbs = 0.0
    count = 0
    while count < 1000:
        J = float(np.exp(rng.uniform(np.log(0.05), np.log(20.0))))
        th = float(np.exp(rng.uniform(np.log(0.01), np.log(100.0))))
        if abs(J - 1.0) < 1e-3:
            continue  # stored-energy kink: no two-sided derivative there
        count += 1
        ev = af.eval_thermo(m, J, th)
        hj = 1e-6 * max(1.0, J)
        ht = 1e-6 * max(1.0, th)
        fd_psi_J = central_diff(lambda x: af.eval_thermo(m, x, th).psi, J, hj)
        fd_psi_th = central_diff(lambda x: af.eval_thermo(m, J, x).psi, th, ht)
        # second partial via the (already verified) analytic first partial
        fd_psi_thth = central_diff(lambda x: af.eval_thermo(m, J, x).psi_theta,
                                   th, ht)
        checks = [
            (ev.p, -fd_psi_J),
            (ev.eta, -fd_psi_th / J),
            (ev.w, (ev.psi - th * fd_psi_th - ev.phi) / J),
            (ev.c, -th * fd_psi_thth / J),
        ]
        for analytic, fd in checks:
            worst_fd = max(worst_fd,
                           abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-8))
        gibbs = abs((ev.phi / J + ev.w)
                    - internal_energy_actual(m, J, th)) / max(
            abs(ev.phi / J + ev.w), 1e-300)
        worst_gibbs = max(worst_gibbs, float(gibbs))
    report(1, "constitutive identities",
           worst_fd <= 1e-6 and worst_gibbs <= 1e-14,
           f"max FD rel err {worst_fd:.2e} (tol 1e-6), "
           f"Gibbs split {worst_gibbs:.2e} (tol 1e-14)")


def test_c02_gravity_oracle_equivalence(rng):
    """Fast FFT solve == direct oracle; uniform-sphere analytic accuracy."""
    ctx = af.GravityContext(G=1.0)
    worst = 0.0
    for n in (8, 16, 32):
        g = af.make_grid(n, 1.7)
        rho = rng.random(g.n)
        pd = af.solve_potential_direct(ctx, rho, g)
        pf = af.solve_potential_fast(ctx, rho, g)
        err = max(np.abs(pd.V - pf.V).max() / np.abs(pd.V).max(),
                  np.abs(pd.g - pf.g).max() / np.abs(pd.g).max())
        worst = max(worst, err)
    ok_equiv = worst <= 1e-10

    errs = []
    for n in (16, 32, 64):
        g = af.make_grid(n, 2.0)
        r = g.radius_from((0, 0, 0))
        R = 0.6
        rho = np.where(r <= R, 1.0, 0.0)
        M = rho.sum() * g.dV
        pot = af.solve_potential_fast(ctx, rho, g)
        exact = np.where(r <= R, -M * (3 - r**2 / R**2) / (2 * R),
                         -M / np.maximum(r, 1e-12))
        errs.append(np.abs(pot.V - exact)[r <= R].max() / np.abs(exact).max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    ok_sphere = errs[-1] <= 0.02 and np.all(np.diff(errs) < 0) and np.all(orders >= 0.9)
    report(2, "gravity oracle equivalence",
           ok_equiv and ok_sphere,
           f"fast-vs-direct max rel err {worst:.2e} (tol 1e-10); sphere errs "
           f"{[f'{e:.4f}' for e in errs]} at 16/32/64, orders {np.round(orders, 2)}")


def test_c03_orbital_balance():
    om = af.orbital_omega(1.9885e30, 1.495978707e11)
    days = 2 * np.pi / om / 86400.0
    rel = abs(days - 365.26) / 365.26
    report(3, "orbital balance", rel <= 1e-4,
           f"period {days:.4f} days vs 365.26 (rel {rel:.2e}, tol 1e-4)")


def test_c04_conservation_ledgers(conserve_run):
    sc, led = conserve_run
    mass = led.series("mass")
    dm = np.abs(np.diff(mass)).max() / mass[0]
    ok_mass = dm <= 1e-12

    g_net = np.abs(np.stack([led.series("grav_mom_x"), led.series("grav_mom_y"),
                             led.series("grav_mom_z")])).max(axis=0)
    g_abs = np.maximum(led.series("grav_mom_abs"), 1e-300)
    rel_g = float((g_net / g_abs).max())
    ok_grav = rel_g <= 1e-12

    # dt-refinement of the energy-audit residual on the same physics
    residuals = []
    model, grid, src = sc.models[0], sc.grid, sc.sources[0]
    ctx = sc.gravity
    for dt in (6.4e-4, 3.2e-4, 1.6e-4):
        state = af.init_state(grid, model, sc.profiles[0], sc.rho0s[0])
        led_r = BalanceLedger(mode="single")
        t, k = 0.0, 0
        while t < 0.0256 - 1e-12:
            state, terms, nc = af.step_single(state, dt, model, ctx, src,
                                              grid, sc.config, want_terms=True)
            led_r.append(make_row_single(k, t, dt, state, model, grid, ctx,
                                         src, terms, nc, sc.config))
            t += dt
            k += 1
        residuals.append(energy_audit(led_r).max_rel)
    res = np.array(residuals)
    orders = np.log2(res[:-1] / res[1:])
    ok_energy = np.all(orders >= 0.9)
    report(4, "conservation ledgers", ok_mass and ok_grav and ok_energy,
           f"mass drift {dm:.2e} (tol 1e-12); self-gravity momentum rel "
           f"{rel_g:.2e} (tol 1e-12); residuals {[f'{r:.2e}' for r in res]} "
           f"orders {np.round(orders, 3)} (>= 0.9)")


def test_c05_open_system_balances(accrete_run, tmp_path):
    sc, led = accrete_run
    m = led.series("mass")
    dt = led.series("dt")
    eff = led.series("eff_in_mass")
    resid = np.abs((m[1:] - m[:-1]) - dt[1:] * eff[1:]) / m[1:]
    ok_mass = resid.max() <= 1e-12

    fric = led.series("p_fric_in")
    ok_match = np.all(fric == 0.0)  # incoming velocity matches the flow

    sc2 = load_scenario(SCENARIOS / "accrete-1c.toml", overrides=[
        "time.t_end=0.05", "sources.v_ext_vec=[0.05, 0.0, 0.0]"])
    out = tmp_path / "fixedvec"
    assert execute_run(sc2, out, quiet=True) == 0
    led2 = BalanceLedger.read_csv(out / "ledger.csv")
    fric2 = led2.series("p_fric_in")
    ok_sign = np.all(fric2 <= 0.0) and fric2.min() < 0.0
    report(5, "open-system balances", ok_mass and ok_match and ok_sign,
           f"per-step mass audit max rel {resid.max():.2e} (tol 1e-12); "
           f"incoming-friction power == 0 with matched inflow: {ok_match}; "
           f"<= 0 with fixed inflow velocity: {ok_sign}")


def test_c06_entropy_monotone(quiet_run, accrete_run, differentiate_run,
                              advection_runs):
    suite = {
        "quiet-box": quiet_run[:2],
        "accrete-1c": accrete_run[:2],
        "differentiate-2c": differentiate_run[:2],
        "smooth-advection": advection_runs[40],
    }
    details = []
    ok = True
    for name, (sc, led) in suite.items():
        audit = entropy_audit(led, sc.grid)
        prods_ok = all(np.all(series >= 0.0)
                       for series in audit.production.values())
        ok &= audit.monotone and prods_ok
        details.append(f"{name}: monotone={audit.monotone} "
                       f"worst_dip={audit.worst_dip:.2e} tol={audit.tol:.2e}")
    report(6, "entropy nondecreasing", ok, "; ".join(details))


def test_c07_two_component_exactness(default_model, rng):
    # pairwise coupling terms cancel bitwise
    mix = af.MixtureParams(varkappa=1.0, alpha_mix=1.0, f0=3.0, k0=2.0)
    vm = rng.normal(size=(3, 5, 5, 5))
    vs = rng.normal(size=(3, 5, 5, 5))
    rm, rs = rng.random((5, 5, 5)), rng.random((5, 5, 5))
    fM, fS, _ = af.friction_exchange(mix, rm, rs, vm, vs)
    ok_fric = bool(np.all(fM + fS == 0.0))
    tm = rng.uniform(0.5, 3.0, (5, 5, 5))
    ts = rng.uniform(0.5, 3.0, (5, 5, 5))
    qM, qS, _ = af.heat_exchange(mix, rm, rs, tm, ts)
    ok_heat = bool(np.all(qM + qS == 0.0))

    # hand value of the heat-exchange entropy production
    _, _, sigma = af.heat_exchange(af.MixtureParams(k0=2.0), 1.0, 1.0, 2.0, 1.0)
    ok_sigma = sigma == pytest.approx(0.5, rel=1e-12)

    # decoupled symmetric two-component run == two single-component runs,
    # bitwise (gravity off: the combined-density potential would otherwise
    # differ from the per-component one by construction)
    grid = af.make_grid(10, 1.0)
    prof = af.InitialProfile(j_background=10.0, theta_background=1.0,
                             seed="gaussian", seed_j=2.0, seed_radius=0.3,
                             vortex_amplitude=0.2)
    st = af.init_state(grid, default_model, prof, 1.0)
    st2 = af.TwoPhaseState(metal=st.copy(), silicate=st.copy())
    src = af.SourceSpec(rho0=1.0)
    cfg = af.SolverConfig()
    zero_mix = af.MixtureParams(varkappa=0.0, f0=0.0, k0=0.0)
    ok_bitwise = True
    single = st.copy()
    for _ in range(3):
        dt = af.stable_dt(single, default_model, cfg, grid, src)
        st2, _, _ = af.step_two(st2, dt, (default_model, default_model),
                                zero_mix, None, (src, src), grid, cfg)
        single, _, _ = af.step_single(single, dt, default_model, None, src,
                                      grid, cfg)
    for a, b in ((st2.metal.rho, single.rho), (st2.metal.mom, single.mom),
                 (st2.metal.J, single.J), (st2.metal.w, single.w),
                 (st2.silicate.rho, single.rho), (st2.silicate.w, single.w)):
        ok_bitwise &= bool(np.array_equal(a, b))
    report(7, "two-component exactness", ok_fric and ok_heat and ok_sigma
           and ok_bitwise,
           f"friction pair bitwise: {ok_fric}; heat pair bitwise: {ok_heat}; "
           f"sigma(k=1, 2K vs 1K) = {float(sigma):.3f}; "
           f"decoupled run bitwise == single: {ok_bitwise}")


def test_c08_mixing_energy(rng):
    mix = af.MixtureParams(varkappa=1.3, alpha_mix=1.2)
    worst_c1 = 0.0
    for jm in np.linspace(0.3, 3.0, 50):
        js = 1.0 / jm
        _, bm, bs = af.mixing_energy(mix, jm, js * (1 - 1e-12))
        _, am, as_ = af.mixing_energy(mix, jm, js * (1 + 1e-12))
        worst_c1 = max(worst_c1, abs(bm - am), abs(bs - as_))
    ok_c1 = worst_c1 <= 1e-10

    worst_fd = 0.0
    neg = 0
    for _ in range(500):
        jm = float(np.exp(rng.uniform(np.log(0.05), np.log(5.0))))
        js = float(np.exp(rng.uniform(np.log(0.05), np.log(5.0))))
        if abs(jm * js - 1.0) < 1e-3:
            continue
        phi, dm, ds = af.mixing_energy(mix, jm, js)
        neg += phi < 0.0
        h = 1e-7 * max(jm, 1.0)
        fd = central_diff(lambda x: af.mixing_energy(mix, x, js)[0], jm, h)
        worst_fd = max(worst_fd, abs(dm - fd) / max(abs(dm), abs(fd), 1e-10))
    ok_fd = worst_fd <= 1e-6 and neg == 0
    report(8, "mixing energy", ok_c1 and ok_fd,
           f"C1 threshold mismatch {worst_c1:.2e} (tol 1e-10); partial FD "
           f"rel err {worst_fd:.2e} (tol 1e-6); negative samples: {neg}")


def test_c09_stability_audit(conserve_run, accrete_run, differentiate_run,
                             tmp_path):
    gb = af.make_grid(64, 2.0, shape="sphere", sphere_radius=1.0)
    c2 = af.domain_constant(gb, 2.0)
    rel = abs(c2 - 4 * np.pi) / (4 * np.pi)
    ok_c2 = rel <= 0.05

    reports = {}
    for name, (sc, led) in (("conserve", conserve_run),
                            ("accrete", accrete_run)):
        rep = stability_audit(led, sc.models[0], sc.grid, sc.gravity,
                              sc.sources[0])
        reports[name] = rep.passed
    sc2, led2 = differentiate_run[:2]
    eff_src = af.SourceSpec(rho0=sum(sc2.rho0s),
                            v_ext=max(s.v_ext for s in sc2.sources))
    rep2 = stability_audit(led2, sc2.models[0], sc2.grid, sc2.gravity, eff_src)
    reports["differentiate"] = rep2.passed
    ok_chain = all(reports.values())

    code = main(["run", str(SCENARIOS / "collapse-alpha-low.toml"),
                 "--output-dir", str(tmp_path / "collapse")])
    weak = af.ConstitutiveModel(free=af.FreeEnergyParams(alpha=0.5, b=0.05,
                                                         c0=1.0, c1=0.5))
    flagged = not af.check_assumptions(weak)["a"].passed
    ok_flag = code == 2 and flagged
    report(9, "stability audit", ok_c2 and ok_chain and ok_flag,
           f"C_(2,unit-ball) = {c2:.4f} vs 4pi (rel {rel:.3f}, tol 0.05); "
           f"bound chain: {reports}; alpha<1 flagged before run: {ok_flag}")


def test_c10_rho_j_consistency(advection_runs):
    drifts = []
    for n in (20, 40, 80):
        _, led = advection_runs[n]
        drifts.append(float(led.series("rhoj_drift")[-1]))
    envelope = REFERENCE["smooth_advection_envelope"]
    ok_env = all(d <= envelope[str(n)] for d, n in zip(drifts, (20, 40, 80)))
    d = np.array(drifts)
    orders = np.log2(d[:-1] / d[1:])
    # the J transport is formally first order; the measured order climbs
    # toward 1 from below under refinement (pre-asymptotic at 20^3)
    ok_conv = np.all(np.diff(d) < 0) and orders[-1] >= 0.85
    report(10, "rho*J consistency", ok_env and ok_conv,
           f"drifts {[f'{x:.5f}' for x in drifts]} at 20/40/80 vs committed "
           f"envelope; orders {np.round(orders, 3)} (last >= 0.85)")


def test_c11_differentiation_regression(differentiate_run):
    sc, led, out = differentiate_run
    st, _ = read_snapshot(sorted(out.glob("snap_*"))[-1])
    grid = sc.grid
    r = grid.radius_from((0, 0, 0))
    dV = grid.dV
    radii = {}
    for name, s in (("metal", st.metal), ("silicate", st.silicate)):
        mcell = s.rho * dV
        radii[name] = float((mcell * r).sum() / mcell.sum())
    ref = REFERENCE["differentiate_2c"]
    ok_order = radii["metal"] < radii["silicate"]
    ok_ref = (radii["metal"] == pytest.approx(ref["metal"], rel=1e-6)
              and radii["silicate"] == pytest.approx(ref["silicate"], rel=1e-6))
    report(11, "core-mantle differentiation", ok_order and ok_ref,
           f"metal mass-weighted radius {radii['metal']:.5f} < silicate "
           f"{radii['silicate']:.5f}; matches committed reference: {ok_ref}")
