"""Command-line interface: run, check, gravity (benchmark), ledger.

Exit codes: 0 success, 1 check/audit failure, 2 configuration error,
3 runtime step failure (ledger flushed first), 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
import time
from pathlib import Path

import numpy as np

from . import _accel
from .constitutive import check_assumptions, eval_thermo
from .diagnostics import (BalanceLedger, energy_audit, entropy_audit,
                          make_row_single, make_row_two, stability_audit,
                          state_integrals)
from .gravity import GravityContext, solve_potential_direct, solve_potential_fast
from .mixture import mixing_energy
from .scenario import Scenario, ScenarioError, apply_overrides, build_scenario, load_raw
from .solver import (StepFailure, stable_dt, stable_dt_two, step_single,
                     step_two)
from .state import (TwoPhaseState, init_state, make_grid, read_snapshot,
                    write_snapshot)


def _set_workers(n):
    if n is None or not _accel.HAVE_NUMBA:
        return
    import numba

    numba.set_num_threads(int(n))


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _init_states(sc: Scenario):
    if sc.mode == "single":
        return init_state(sc.grid, sc.models[0], sc.profiles[0], sc.rho0s[0])
    m = init_state(sc.grid, sc.models[0], sc.profiles[0], sc.rho0s[0])
    s = init_state(sc.grid, sc.models[1], sc.profiles[1], sc.rho0s[1])
    return TwoPhaseState(metal=m, silicate=s)


def _model_admissible(sc: Scenario):
    """Pre-run admissibility: (a) and (d) are the collapse-critical ones."""
    findings = []
    for i, model in enumerate(sc.models):
        rep = check_assumptions(model, sources=sc.sources[i])
        for name in ("a", "d"):
            ch = rep[name]
            if not ch.passed:
                findings.append((f"component {i}", ch))
    return findings


def execute_run(sc: Scenario, outdir: Path, quiet: bool = False) -> int:
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"I/O error creating {outdir}: {exc}", file=sys.stderr)
        return 4

    findings = _model_admissible(sc)
    if findings:
        for comp, ch in findings:
            print(f"inadmissible model ({comp}): assumption ({ch.name}) fails: "
                  f"{ch.detail}", file=sys.stderr)
        return 2

    state = _init_states(sc)
    grid = sc.grid
    ledger = BalanceLedger(mode=sc.mode)
    gravity = sc.gravity  # .enabled gates the potential solve; omega always acts

    snap_idx = 0

    def snapshot(st):
        nonlocal snap_idx
        write_snapshot(outdir / f"snap_{snap_idx:06d}", st, grid,
                       extra={"step": step, "scenario_mode": sc.mode})
        snap_idx += 1

    step = 0
    t = 0.0
    next_snap = 0.0
    status = 0
    message = "completed"
    t_wall = time.time()
    try:
        if sc.snapshot_every > 0:
            snapshot(state)
            next_snap = sc.snapshot_every
        while t < sc.t_end and step < sc.max_steps:
            if sc.mode == "single":
                dt = stable_dt(state, sc.models[0], sc.config, grid, sc.sources[0])
            else:
                dt = stable_dt_two(state, sc.models, sc.config, grid, sc.sources)
            dt = min(dt, sc.t_end - t)
            if sc.mode == "single":
                state, terms, n_clamp = step_single(
                    state, dt, sc.models[0], gravity, sc.sources[0], grid,
                    sc.config, want_terms=True)
                row = make_row_single(step, t, dt, state, sc.models[0], grid,
                                      gravity, sc.sources[0], terms, n_clamp,
                                      sc.config)
            else:
                state, terms, n_clamp = step_two(
                    state, dt, sc.models, sc.mixture, gravity, sc.sources,
                    grid, sc.config, want_terms=True)
                row = make_row_two(step, t, dt, state, sc.models, grid,
                                   gravity, sc.sources, terms, n_clamp,
                                   sc.config)
            ledger.append(row)
            t += dt
            step += 1
            if sc.snapshot_every > 0 and t + 1e-15 >= next_snap:
                snapshot(state)
                next_snap += sc.snapshot_every
    except StepFailure as exc:
        status = 3
        message = f"step failure at step {step}, t={t:.6g}: {exc}"
        print(message, file=sys.stderr)

    snapshot(state)
    try:
        ledger.write_csv(outdir / "ledger.csv")
    except OSError as exc:
        print(f"I/O error writing ledger: {exc}", file=sys.stderr)
        return 4

    report = {
        "status": message,
        "steps": step,
        "t_final": t,
        "wall_seconds": time.time() - t_wall,
        "mode": sc.mode,
    }
    if len(ledger.rows) >= 2:
        ea = energy_audit(ledger)
        en = entropy_audit(ledger, grid)
        report["energy_audit"] = {"max_rel_residual": ea.max_rel}
        report["entropy_audit"] = {"monotone": en.monotone,
                                   "worst_dip": en.worst_dip, "tol": en.tol}
        if sc.stability.enabled:
            audit_src = sc.sources[0]
            if sc.mode == "two":
                # the bound involves the combined density rho_M + rho_S
                from .state import SourceSpec

                audit_src = SourceSpec(
                    rho0=sum(sc.rho0s),
                    v_ext=max(s.v_ext for s in sc.sources))
            sr = stability_audit(ledger, sc.models[0], grid, sc.gravity,
                                 audit_src, r=sc.stability.r,
                                 slack=sc.stability.slack)
            report["stability_audit"] = {
                "passed": sr.passed, "c2": sr.c2, "c_abs": sr.c_abs,
                "checks": {c.name: c.passed for c in sr.checks},
            }
            (outdir / "stability_report.txt").write_text(sr.summary() + "\n")
    with open(outdir / "report.json", "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
    if not quiet:
        print(f"{message}: {step} steps to t={t:.6g} "
              f"({report['wall_seconds']:.1f}s), ledger+snapshots in {outdir}")
    return status


def _cmd_run(args) -> int:
    _set_workers(args.workers)
    try:
        raw = apply_overrides(load_raw(args.scenario), args.override)
        if args.snapshot_every is not None:
            raw.setdefault("time", {})["snapshot_every"] = args.snapshot_every
        sc = build_scenario(raw)
    except ScenarioError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    outdir = Path(args.output_dir or sc.output_dir)
    code = execute_run(sc, outdir)
    if code in (0, 3):
        try:
            # effective config (overrides applied) so `ledger` can rebuild it
            with open(outdir / "scenario.json", "w") as fh:
                json.dump(raw, fh, indent=1, sort_keys=True)
            shutil.copy(args.scenario, outdir / "scenario.toml")
        except OSError:
            pass
    return code


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------

def _fd_partial(f, x, h):
    return (f(x + h) - f(x - h)) / (2.0 * h)


def _derivative_suite(model, rng, n=200):
    """Central-difference audit of every analytic partial; returns max rel err."""
    worst = 0.0
    for _ in range(n):
        J = float(np.exp(rng.uniform(np.log(0.05), np.log(20.0))))
        if abs(J - 1.0) < 1e-3 or (model.free.seg_j0 > 0
                                   and abs(J - model.free.seg_j0) < 1e-3):
            continue  # stored-energy kink: one-sided derivatives differ
        th = float(np.exp(rng.uniform(np.log(0.01), np.log(100.0))))
        ev = eval_thermo(model, J, th)
        hj = 1e-6 * max(1.0, abs(J))
        ht = 1e-6 * max(1.0, abs(th))
        checks = [
            (ev.psi_J, _fd_partial(lambda x: eval_thermo(model, x, th).psi, J, hj)),
            (ev.psi_theta, _fd_partial(lambda x: eval_thermo(model, J, x).psi, th, ht)),
            (ev.psi_JJ, _fd_partial(lambda x: eval_thermo(model, x, th).psi_J, J, hj)),
            (ev.psi_thetatheta, _fd_partial(lambda x: eval_thermo(model, J, x).psi_theta, th, ht)),
            (ev.psi_Jtheta, _fd_partial(lambda x: eval_thermo(model, J, x).psi_J, th, ht)),
        ]
        for analytic, fd in checks:
            scale = max(abs(analytic), abs(fd), 1e-8)
            worst = max(worst, abs(analytic - fd) / scale)
    return worst


def _mixing_c1(mix, n=64):
    """One-sided partial mismatch across the J_M*J_S = 1 threshold."""
    worst = 0.0
    for jm in np.linspace(0.3, 3.0, n):
        js_thr = 1.0 / jm
        _, below_m, below_s = mixing_energy(mix, jm, js_thr * (1 - 1e-12))
        _, above_m, above_s = mixing_energy(mix, jm, js_thr * (1 + 1e-12))
        worst = max(worst, abs(below_m - above_m), abs(below_s - above_s))
    return worst


def _cmd_check(args) -> int:
    try:
        raw = apply_overrides(load_raw(args.scenario), args.override)
        sc = build_scenario(raw)
    except ScenarioError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    rng = np.random.default_rng(12345)
    failed = False
    for i, model in enumerate(sc.models):
        label = ("metal", "silicate")[i] if sc.mode == "two" else "material"
        rep = check_assumptions(model, sources=sc.sources[i])
        print(f"{label}: admissibility assumptions")
        print(rep.summary())
        if not rep.passed:
            failed = True
        worst = _derivative_suite(model, rng)
        ok = worst <= 1e-6
        print(f"  derivative consistency: {'pass' if ok else 'FAIL'} "
              f"(max rel err {worst:.3e})")
        failed |= not ok
    if sc.mixture is not None and sc.mixture.varkappa > 0:
        worst = _mixing_c1(sc.mixture)
        ok = worst <= 1e-10
        print(f"mixing energy C1 matching: {'pass' if ok else 'FAIL'} "
              f"(worst {worst:.3e})")
        failed |= not ok
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# gravity benchmark
# ---------------------------------------------------------------------------

def _cmd_gravity(args) -> int:
    _set_workers(args.workers)
    sizes = [int(s) for s in args.sizes.split(",")]
    rng = np.random.default_rng(7)
    rows = ["n,direct_seconds,fast_seconds,max_rel_error"]
    for n in sizes:
        grid = make_grid(n, 1.0)
        rho = rng.random(grid.n)
        ctx = GravityContext(G=1.0)
        t0 = time.time()
        pd = solve_potential_direct(ctx, rho, grid)
        t1 = time.time()
        pf = solve_potential_fast(ctx, rho, grid)
        t2 = time.time()
        scale = max(np.abs(pd.V).max(), np.abs(pd.g).max())
        err = max(np.abs(pd.V - pf.V).max(), np.abs(pd.g - pf.g).max()) / scale
        rows.append(f"{n},{t1 - t0:.6f},{t2 - t1:.6f},{err:.3e}")
    text = "\n".join(rows) + "\n"
    if args.out:
        try:
            Path(args.out).write_text(text)
        except OSError as exc:
            print(f"I/O error: {exc}", file=sys.stderr)
            return 4
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# ledger recompute from snapshots
# ---------------------------------------------------------------------------

def _cmd_ledger(args) -> int:
    outdir = Path(args.rundir)
    try:
        if (outdir / "scenario.json").exists():
            with open(outdir / "scenario.json") as fh:
                raw = json.load(fh)
        elif (outdir / "scenario.toml").exists():
            raw = load_raw(outdir / "scenario.toml")
        else:
            print(f"no scenario.json/scenario.toml in {outdir}", file=sys.stderr)
            return 4
        sc = build_scenario(raw)
    except ScenarioError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    snaps = sorted(outdir.glob("snap_*"))
    if len(snaps) < 1:
        print("no snapshots found", file=sys.stderr)
        return 4
    grid = sc.grid
    gravity = sc.gravity if sc.gravity.enabled else None
    lines = ["t,mass,kinetic,stored,thermal,grav,entropy"]
    prev_entropy = None
    monotone = True
    for sd in snaps:
        state, manifest = read_snapshot(sd)
        comps = ([(state.metal, sc.models[0], sc.rho0s[0]),
                  (state.silicate, sc.models[1], sc.rho0s[1])]
                 if isinstance(state, TwoPhaseState)
                 else [(state, sc.models[0], sc.rho0s[0])])
        rho_tot = sum(c[0].rho for c in comps)
        pot = (solve_potential_fast(gravity, rho_tot, grid)
               if gravity is not None else None)
        tot = dict(mass=0.0, kinetic=0.0, stored=0.0, thermal=0.0, entropy=0.0)
        for st, model, rho0 in comps:
            ints = state_integrals(st, model, grid, rho0)
            for k in tot:
                tot[k] += ints[k]
        grav_e = (float(np.sum((rho_tot * pot.V)[grid.domain_mask]) * grid.dV)
                  if pot is not None else 0.0)
        lines.append(f"{manifest['time']:.17g},{tot['mass']:.17g},"
                     f"{tot['kinetic']:.17g},{tot['stored']:.17g},"
                     f"{tot['thermal']:.17g},{grav_e:.17g},{tot['entropy']:.17g}")
        if prev_entropy is not None and tot["entropy"] < prev_entropy - 1e-9 * abs(prev_entropy):
            monotone = False
        prev_entropy = tot["entropy"]
    text = "\n".join(lines) + "\n"
    dest = outdir / "recomputed_ledger.csv"
    try:
        dest.write_text(text)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4
    print(f"recomputed {len(snaps)} snapshots -> {dest} "
          f"(entropy monotone: {monotone})")
    return 0


# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="accreteflow",
        description="Self-gravitating open-system compressible flow simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario")
    p_run.add_argument("scenario")
    p_run.add_argument("--output-dir", default=None)
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--override", action="append", default=[],
                       metavar="KEY.PATH=VALUE")
    p_run.add_argument("--snapshot-every", type=float, default=None,
                       metavar="SECONDS_SIMULATED")
    p_run.set_defaults(func=_cmd_run)

    p_check = sub.add_parser("check", help="validate a scenario's physics")
    p_check.add_argument("scenario")
    p_check.add_argument("--override", action="append", default=[])
    p_check.set_defaults(func=_cmd_check)

    p_grav = sub.add_parser("gravity", help="benchmark direct vs fast solver")
    p_grav.add_argument("--sizes", default="8,16,32")
    p_grav.add_argument("--out", default=None)
    p_grav.add_argument("--workers", type=int, default=None)
    p_grav.set_defaults(func=_cmd_gravity)

    p_led = sub.add_parser("ledger", help="recompute audits from snapshots")
    p_led.add_argument("rundir")
    p_led.set_defaults(func=_cmd_ledger)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
