import numpy as np
import pytest

from accreteflow import (BalanceLedger, GravityContext, InitialProfile,
                         SolverConfig, SourceSpec, energy_audit, entropy_audit,
                         init_state, make_grid, solve_potential_fast,
                         stability_audit, stable_dt, step_single)
from accreteflow.diagnostics import (COLUMNS_SINGLE, absorption_split,
                                     field_energy, make_row_single,
                                     state_integrals)


def run_steps(grid, model, sources, cfg, state, ctx, n_steps, dt=None):
    led = BalanceLedger(mode="single")
    gravity = ctx if (ctx is not None and ctx.enabled) else None
    t = state.t
    for k in range(n_steps):
        step = dt if dt is not None else stable_dt(state, model, cfg, grid, sources)
        state, terms, nc = step_single(state, step, model, gravity, sources,
                                       grid, cfg, want_terms=True)
        led.append(make_row_single(k, t, step, state, model, grid, ctx,
                                   sources, terms, nc, cfg))
        t += step
    return state, led


@pytest.fixture
def quiet_setup(default_model):
    grid = make_grid(10, 1.0)
    sources = SourceSpec(rho0=1.0)
    cfg = SolverConfig(dt_max=0.01)
    state = init_state(grid, default_model,
                       InitialProfile(j_background=100.0, theta_background=1.0),
                       1.0)
    return grid, sources, cfg, state


class TestLedger:
    def test_column_order_and_roundtrip(self, tmp_path, default_model,
                                        quiet_setup):
        grid, sources, cfg, state = quiet_setup
        _, led = run_steps(grid, default_model, sources, cfg, state, None, 3)
        assert led.columns == COLUMNS_SINGLE
        path = tmp_path / "ledger.csv"
        led.write_csv(path)
        back = BalanceLedger.read_csv(path)
        assert back.mode == "single"
        np.testing.assert_array_equal(back.series("mass"), led.series("mass"))
        np.testing.assert_array_equal(back.series("entropy"),
                                      led.series("entropy"))

    def test_missing_column_rejected(self):
        led = BalanceLedger(mode="single")
        with pytest.raises(ValueError):
            led.append({"step": 0})

    def test_full_precision(self, tmp_path, default_model, quiet_setup):
        grid, sources, cfg, state = quiet_setup
        _, led = run_steps(grid, default_model, sources, cfg, state, None, 2)
        led.rows[0]["mass"] = 1.0 / 3.0
        path = tmp_path / "l.csv"
        led.write_csv(path)
        back = BalanceLedger.read_csv(path)
        assert back.rows[0]["mass"] == 1.0 / 3.0


class TestEnergyAudit:
    def test_static_equilibrium_machine_zero(self, default_model, quiet_setup):
        grid, sources, cfg, state = quiet_setup
        _, led = run_steps(grid, default_model, sources, cfg, state, None, 5)
        audit = energy_audit(led)
        assert audit.max_rel <= 1e-12

    def test_needs_two_rows(self):
        led = BalanceLedger(mode="single")
        with pytest.raises(ValueError):
            energy_audit(led)

    def test_dynamic_run_small_residual(self, default_model):
        grid = make_grid(12, 1.0)
        sources = SourceSpec(rho0=1.0)
        cfg = SolverConfig()
        state = init_state(grid, default_model,
                           InitialProfile(j_background=10.0,
                                          theta_background=1.0,
                                          seed="gaussian", seed_j=2.0,
                                          seed_radius=0.3), 1.0)
        ctx = GravityContext(G=1.0)
        _, led = run_steps(grid, default_model, sources, cfg, state, ctx, 10)
        audit = energy_audit(led)
        assert audit.max_rel <= 1e-3  # scheme-limited, not audit-limited


class TestFieldEnergy:
    def test_green_identity_compact_blob(self, default_model):
        # free-space identity: field energy + exterior tail = -grav/2,
        # discretization-limited to <= 1% at 64^3
        grid = make_grid(64, 2.0)
        r = grid.radius_from((0, 0, 0))
        rho = np.exp(-((r / 0.2) ** 2))
        ctx = GravityContext(G=1.0)
        pot = solve_potential_fast(ctx, rho, grid)
        fe, tail = field_energy(pot, grid, ctx, rho)
        grav = float((rho * pot.V).sum() * grid.dV)
        assert fe + tail == pytest.approx(-0.5 * grav, rel=0.01)
        assert tail > 0.0

    def test_no_potential(self, default_model, quiet_setup):
        grid, sources, cfg, state = quiet_setup
        assert field_energy(None, grid, GravityContext(G=1.0), state.rho) == (0.0, 0.0)


class TestEntropyAudit:
    def test_monotone_on_heated_inflow(self, default_model):
        grid = make_grid(12, 1.0, border_width=1)
        sources = SourceSpec(rho0=1.0, v_ext=0.05, v_ext_vec="match", h_ext=0.02)
        cfg = SolverConfig(dt_max=0.01)
        state = init_state(grid, default_model,
                           InitialProfile(j_background=50.0,
                                          theta_background=1.0), 1.0)
        _, led = run_steps(grid, default_model, sources, cfg, state, None, 20)
        audit = entropy_audit(led, grid)
        assert audit.monotone
        for name in ("conduction", "sources", "inflow"):
            assert np.all(audit.production[name] >= 0.0)

    def test_tolerance_scales_with_resolution(self, default_model, quiet_setup):
        grid, sources, cfg, state = quiet_setup
        _, led = run_steps(grid, default_model, sources, cfg, state, None, 3)
        coarse = entropy_audit(led, grid)
        fine_grid = make_grid(20, 1.0)
        fine = entropy_audit(led, fine_grid)
        assert fine.tol < coarse.tol


class TestStabilityAudit:
    def make_accreting_ledger(self, model):
        grid = make_grid(12, 1.0, border_width=1)
        sources = SourceSpec(rho0=1.0, v_ext=0.05, v_ext_vec="match")
        cfg = SolverConfig(dt_max=0.01)
        state = init_state(grid, model,
                           InitialProfile(j_background=20.0,
                                          theta_background=1.0,
                                          seed="gaussian", seed_j=1.5,
                                          seed_radius=0.25), 1.0)
        ctx = GravityContext(G=1.0)
        _, led = run_steps(grid, model, sources, cfg, state, ctx, 15)
        return led, grid, ctx, sources

    def test_full_chain_passes(self, default_model):
        led, grid, ctx, sources = self.make_accreting_ledger(default_model)
        rep = stability_audit(led, default_model, grid, ctx, sources)
        assert rep.passed, rep.summary()
        assert rep.c_abs < 1.0
        assert np.all(np.isfinite(rep.margins))

    def test_zero_gravity_reduces_to_source_envelope(self, default_model):
        grid = make_grid(10, 1.0, border_width=1)
        sources = SourceSpec(rho0=1.0, v_ext=0.05, v_ext_vec="match")
        cfg = SolverConfig(dt_max=0.01)
        state = init_state(grid, default_model,
                           InitialProfile(j_background=20.0,
                                          theta_background=1.0), 1.0)
        _, led = run_steps(grid, default_model, sources, cfg, state, None, 10)
        ctx = GravityContext(G=1e-30)
        rep = stability_audit(led, default_model, grid, ctx, sources)
        assert rep.passed
        # gravitational entries vanish: the Young/Hoelder steps are trivial
        assert rep["young"].passed if hasattr(rep, "__getitem__") else True

    def test_slow_blowup_has_no_absorption(self):
        from accreteflow import ConstitutiveModel, FreeEnergyParams
        weak = ConstitutiveModel(free=FreeEnergyParams(alpha=0.5, b=0.1,
                                                       c0=1.0, c1=0.5))
        delta, A, c_abs, _ = absorption_split(weak, coef=10.0)
        assert c_abs > 1.0  # no threshold excludes collapse

    def test_absorption_improves_with_faster_blowup(self, default_model):
        delta, A, c_abs, _ = absorption_split(default_model, coef=100.0)
        assert c_abs <= 0.5


class TestStateIntegrals:
    def test_basic_quantities(self, default_model, quiet_setup):
        grid, sources, cfg, state = quiet_setup
        ints = state_integrals(state, default_model, grid, 1.0)
        assert ints["mass"] == pytest.approx(0.01 * grid.volume, rel=1e-12)
        assert ints["thermal"] == pytest.approx(float(state.w.sum()) * grid.dV)
        assert ints["rhoj_drift"] == 0.0
        assert ints["n_cold"] == 0

    def test_cold_cells_counted(self, default_model):
        grid = make_grid(8, 1.0)
        state = init_state(grid, default_model,
                           InitialProfile(theta_background=0.0), 1.0)
        ints = state_integrals(state, default_model, grid, 1.0)
        assert ints["n_cold"] == 8**3
        assert ints["entropy"] == 0.0


class TestMomentumAudit:
    def test_exact_closure_and_wall_force(self, default_model):
        # asymmetric rotating accretion: total momentum change per step equals
        # the ledgered effective momentum rate exactly; the gap between that
        # and the named sources (incoming + Coriolis + gravity) is the wall
        # pressure force, small on a dilute border
        from accreteflow import (GravityContext, InitialProfile, SolverConfig,
                                 SourceSpec, init_state, make_grid, stable_dt,
                                 step_single)
        grid = make_grid(12, 1.0, border_width=1)
        src = SourceSpec(rho0=1.0, v_ext=0.05, v_ext_vec=(0.03, 0.0, 0.0))
        cfg = SolverConfig()
        ctx = GravityContext(G=1.0, omega=0.4)
        state = init_state(grid, default_model,
                           InitialProfile(j_background=30.0,
                                          theta_background=1.0,
                                          seed="gaussian", seed_j=1.2,
                                          seed_theta=1.2, seed_radius=0.2,
                                          seed_center=(0.12, -0.08, 0.05)),
                           1.0)
        led = BalanceLedger(mode="single")
        t = 0.0
        for k in range(10):
            dt = stable_dt(state, default_model, cfg, grid, src)
            state, terms, nc = step_single(state, dt, default_model, ctx, src,
                                           grid, cfg, want_terms=True)
            led.append(make_row_single(k, t, dt, state, default_model, grid,
                                       ctx, src, terms, nc, cfg))
            t += dt
        dts = led.series("dt")
        for ax in "xyz":
            mom = led.series(f"mom_{ax}")
            total = led.series(f"eff_mom_rate_{ax}")
            resid = (mom[1:] - mom[:-1]) - dts[1:] * total[1:]
            scale = max(np.abs(mom).max(), np.abs(dts * total).max(), 1e-300)
            assert np.abs(resid).max() <= 1e-12 * scale
            named = (led.series(f"eff_in_mom_{ax}")
                     + led.series(f"eff_cor_{ax}")
                     + led.series(f"eff_grav_mom_{ax}"))
            wall = total - named
            # the unnamed remainder is the wall reaction; with a dilute
            # border it stays below the wall-layer pressure times wall area
            from accreteflow.constitutive import eval_thermo
            from accreteflow.solver import _invert_theta_field
            theta = _invert_theta_field(default_model, state)
            p = np.asarray(eval_thermo(default_model, state.J, theta).p)
            shell = np.zeros(grid.n, bool)
            shell[0], shell[-1] = True, True
            shell[:, 0], shell[:, -1] = True, True
            shell[:, :, 0], shell[:, :, -1] = True, True
            p_wall = float(np.abs(p[shell]).max())
            area = 6.0 * float(grid.extent[0]) ** 2
            assert np.abs(wall).max() <= 2.0 * p_wall * area


class TestTwoComponentLedgerAdditivity:
    def test_coupling_cross_terms_cancel_in_total_energy(self, default_model):
        # friction dissipation feeds the heat equations in halves and the
        # heat exchange is antisymmetric, so neither may leak into the
        # total-energy audit: residuals with and without coupling stay at
        # the same scheme-limited level
        from accreteflow import (InitialProfile, MixtureParams, SolverConfig,
                                 SourceSpec, TwoPhaseState, init_state,
                                 make_grid, stable_dt_two, step_two)
        from accreteflow.diagnostics import make_row_two

        grid = make_grid(10, 1.0)
        src = (SourceSpec(rho0=1.0), SourceSpec(rho0=1.0))
        cfg = SolverConfig()
        models = (default_model, default_model)

        def run(mix):
            m = init_state(grid, default_model,
                           InitialProfile(j_background=8.0,
                                          theta_background=1.0,
                                          seed="gaussian", seed_j=1.5,
                                          seed_radius=0.3,
                                          vortex_amplitude=0.25), 1.0)
            s = m.copy()
            s.mom = -0.5 * s.mom
            s.w = 1.5 * s.w
            st2 = TwoPhaseState(metal=m, silicate=s)
            led = BalanceLedger(mode="two")
            t = 0.0
            for k in range(8):
                dt = stable_dt_two(st2, models, cfg, grid, src)
                st2, terms, nc = step_two(st2, dt, models, mix, None, src,
                                          grid, cfg, want_terms=True)
                led.append(make_row_two(k, t, dt, st2, models, grid, None,
                                        src, terms, nc, cfg))
                t += dt
            return energy_audit(led)

        coupled = run(af_mix(varkappa=0.0, f0=3.0, k0=3.0))
        free = run(af_mix(varkappa=0.0, f0=0.0, k0=0.0))
        assert coupled.max_rel <= 10.0 * max(free.max_rel, 1e-10)


def af_mix(**kw):
    from accreteflow import MixtureParams
    return MixtureParams(**kw)
