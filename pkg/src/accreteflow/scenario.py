"""Scenario files: TOML ingestion, validation, and object construction.

Sections: [domain], [initial], [constitutive], [mixture] (optional; its
presence selects the two-component model), [sources], [gravity], [rotation],
[time], [solver], [output], [stability], and optionally [nondimensional].
For two-component runs the top-level [constitutive]/[initial]/[sources]
sections act as shared defaults overridden by [metal.*] and [silicate.*].
All quantities are SI; the optional [nondimensional] block sets G, rho0, and
the domain extent to 1 unless overridden explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from pathlib import Path
from types import SimpleNamespace

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .constitutive import (ConstitutiveError, ConstitutiveModel,
                           FreeEnergyParams, ViscosityParams)
from .gravity import GravityContext, orbital_omega
from .mixture import MixtureParams
from .solver import SolverConfig
from .state import Grid, InitialProfile, SourceSpec, StateError, make_grid


class ScenarioError(ValueError):
    """Configuration rejected; message names the offending section/key."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"[{key}] {message}")


_KNOWN_SECTIONS = {"domain", "initial", "constitutive", "mixture", "sources",
                   "gravity", "rotation", "time", "solver", "output",
                   "stability", "nondimensional", "metal", "silicate"}


def load_raw(path) -> dict:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ScenarioError("file", f"scenario not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError("file", f"TOML parse error in {path}: {exc}")
    return raw


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply repeatable --override key.path=value entries (TOML literals)."""
    for item in overrides or []:
        if "=" not in item:
            raise ScenarioError("override", f"expected key.path=value, got {item!r}")
        key, _, text = item.partition("=")
        key = key.strip()
        try:
            parsed = tomllib.loads(f"v = {text.strip()}")["v"]
        except tomllib.TOMLDecodeError:
            raise ScenarioError("override", f"cannot parse value {text!r} for {key}")
        node = raw
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ScenarioError("override", f"{key}: {p} is not a section")
        node[parts[-1]] = parsed
    return raw


def _get(sec: dict, key: str, default, path: str, types, positive=False,
         nonneg=False):
    v = sec.get(key, default)
    if types is not None and not isinstance(v, types):
        raise ScenarioError(f"{path}.{key}", f"expected {types}, got {type(v).__name__}")
    if isinstance(v, bool) and types in ((int, float), float):
        raise ScenarioError(f"{path}.{key}", "expected a number, got a boolean")
    if positive and not v > 0:
        raise ScenarioError(f"{path}.{key}", f"must be positive (got {v})")
    if nonneg and v < 0:
        raise ScenarioError(f"{path}.{key}", f"must be nonnegative (got {v})")
    return v


def _build_constitutive(sec: dict, path: str) -> ConstitutiveModel:
    num = (int, float)
    kwargs = dict(
        alpha=float(_get(sec, "alpha", 2.0, path, num, positive=True)),
        beta=float(_get(sec, "beta", 2.0, path, num)),
        z=float(_get(sec, "z", 1.0, path, num, nonneg=True)),
        b=float(_get(sec, "b", 0.0, path, num, nonneg=True)),
        c0=float(_get(sec, "c0", 1.0, path, num, nonneg=True)),
        c1=float(_get(sec, "c1", 0.0, path, num, nonneg=True)),
        seg_j0=float(_get(sec, "seg_j0", 0.0, path, num, nonneg=True)),
        seg_slope=float(_get(sec, "seg_slope", 0.0, path, num, nonneg=True)),
    )
    visc = ViscosityParams(
        mu=float(_get(sec, "mu", 0.0, path, num, nonneg=True)),
        lam=float(_get(sec, "lam", 0.0, path, num, nonneg=True)),
        kappa=float(_get(sec, "kappa", 0.0, path, num, nonneg=True)),
        scaling=_get(sec, "viscosity_scaling", "none", path, str),
    )
    try:
        free = FreeEnergyParams(**kwargs)
    except ConstitutiveError as exc:
        raise ScenarioError(path, str(exc))
    return ConstitutiveModel(free=free, visc=visc)


def _build_profile(sec: dict, path: str) -> InitialProfile:
    num = (int, float)
    theta_bg = float(_get(sec, "theta_background", 1.0, path, num))
    if theta_bg < 0:
        raise ScenarioError(f"{path}.theta_background", "theta must be >= 0")
    seed_theta = sec.get("seed_theta")
    if seed_theta is not None and seed_theta < 0:
        raise ScenarioError(f"{path}.seed_theta", "theta must be >= 0")
    jb = float(_get(sec, "j_background", 100.0, path, num))
    sj = float(_get(sec, "seed_j", 1.0, path, num))
    if jb <= 0 or sj <= 0:
        raise ScenarioError(f"{path}.j_background", "J must be > 0")
    vel = sec.get("velocity", [0.0, 0.0, 0.0])
    if isinstance(vel, list):
        if len(vel) != 3:
            raise ScenarioError(f"{path}.velocity", "need 3 components")
        vel = tuple(float(c) for c in vel)
    elif vel != "zero":
        raise ScenarioError(f"{path}.velocity", "expected a 3-vector or 'zero'")
    try:
        return InitialProfile(
            j_background=jb,
            theta_background=theta_bg,
            seed=_get(sec, "seed", "none", path, str),
            seed_j=sj,
            seed_theta=None if seed_theta is None else float(seed_theta),
            seed_radius=float(_get(sec, "seed_radius", 0.0, path, num, nonneg=True)),
            seed_center=tuple(float(c) for c in sec.get("seed_center", (0.0, 0.0, 0.0))),
            velocity=vel,
            rotation_rate=float(_get(sec, "rotation_rate", 0.0, path, num)),
            vortex_amplitude=float(_get(sec, "vortex_amplitude", 0.0, path, num)),
        )
    except StateError as exc:
        raise ScenarioError(path, str(exc))


def _build_sources(sec: dict, path: str, rho0: float) -> SourceSpec:
    num = (int, float)
    v_ext = float(_get(sec, "v_ext", 0.0, path, num))
    if v_ext < 0:
        raise ScenarioError(f"{path}.v_ext", "outflow (v_ext < 0) is rejected")
    h_ext = float(_get(sec, "h_ext", 0.0, path, num))
    if h_ext < 0:
        raise ScenarioError(f"{path}.h_ext", "h_ext must be >= 0")
    vvec = sec.get("v_ext_vec", [0.0, 0.0, 0.0])
    if isinstance(vvec, list):
        if len(vvec) != 3:
            raise ScenarioError(f"{path}.v_ext_vec", "need 3 components")
        vvec = tuple(float(c) for c in vvec)
    elif vvec != "match":
        raise ScenarioError(f"{path}.v_ext_vec", "expected a 3-vector or 'match'")
    try:
        return SourceSpec(
            rho0=rho0, v_ext=v_ext, v_ext_vec=vvec, h_ext=h_ext,
            t_on=float(_get(sec, "t_on", 0.0, path, num)),
            t_off=float(_get(sec, "t_off", math.inf, path, num)),
        )
    except StateError as exc:
        raise ScenarioError(path, str(exc))


@dataclass
class Scenario:
    """Validated scenario: built objects plus the raw dict for provenance."""

    raw: dict
    grid: Grid
    mode: str                        # single | two
    models: tuple                    # 1 or 2 ConstitutiveModel
    profiles: tuple
    sources: tuple                   # SourceSpec per component
    mixture: object                  # MixtureParams or None
    gravity: GravityContext
    config: SolverConfig
    t_end: float
    snapshot_every: float
    max_steps: int
    output_dir: str
    stability: SimpleNamespace
    rho0s: tuple


def build_scenario(raw: dict) -> Scenario:
    num = (int, float)
    for sec in raw:
        if sec not in _KNOWN_SECTIONS:
            raise ScenarioError(sec, "unknown section")
    nd = raw.get("nondimensional", {})
    nondim = bool(nd.get("enabled", False))

    dom = raw.get("domain", {})
    n = dom.get("n", 32)
    extent = dom.get("extent", 1.0 if nondim else None)
    if extent is None:
        raise ScenarioError("domain.extent", "required (meters)")
    shape = _get(dom, "shape", "box", "domain", str)
    if shape not in ("box", "sphere"):
        raise ScenarioError("domain.shape", f"unknown shape {shape!r}")
    border_width = int(_get(dom, "border_width", 0, "domain", int, nonneg=True))
    try:
        grid = make_grid(n, extent, shape=shape, border_width=border_width,
                         sphere_radius=dom.get("sphere_radius"))
    except StateError as exc:
        raise ScenarioError("domain", str(exc))
    if shape == "sphere":
        raise ScenarioError("domain.shape",
                            "the flow solver runs on the box domain; "
                            "spherical masks are for diagnostics only")

    two = "mixture" in raw
    mixture = None
    if two:
        mx = raw["mixture"]
        try:
            mixture = MixtureParams(
                varkappa=float(_get(mx, "varkappa", 0.0, "mixture", num, nonneg=True)),
                alpha_mix=float(_get(mx, "alpha_mix", 1.0, "mixture", num, positive=True)),
                f0=float(_get(mx, "f0", 0.0, "mixture", num, nonneg=True)),
                k0=float(_get(mx, "k0", 0.0, "mixture", num, nonneg=True)),
            )
        except Exception as exc:
            raise ScenarioError("mixture", str(exc))

    def merged(section: str, comp: str) -> dict:
        base = dict(raw.get(section, {}))
        base.update(raw.get(comp, {}).get(section, {}))
        return base

    comps = ("metal", "silicate") if two else ("",)
    models, profiles, sources, rho0s = [], [], [], []
    for comp in comps:
        csec = merged("constitutive", comp) if comp else raw.get("constitutive", {})
        isec = merged("initial", comp) if comp else raw.get("initial", {})
        ssec = merged("sources", comp) if comp else raw.get("sources", {})
        path = f"{comp}.constitutive" if comp else "constitutive"
        models.append(_build_constitutive(csec, path))
        ppath = f"{comp}.initial" if comp else "initial"
        profiles.append(_build_profile(isec, ppath))
        rho0 = isec.get("rho0", 1.0 if nondim else None)
        if rho0 is None:
            raise ScenarioError(f"{ppath}.rho0", "required (kg/m^3)")
        if not rho0 > 0:
            raise ScenarioError(f"{ppath}.rho0", "must be positive")
        rho0s.append(float(rho0))
        spath = f"{comp}.sources" if comp else "sources"
        sources.append(_build_sources(ssec, spath, float(rho0)))
        if sources[-1].v_ext > 0 and border_width == 0:
            raise ScenarioError(f"{spath}.v_ext",
                                "inflow needs a border zone (domain.border_width > 0)")
        prof = profiles[-1]
        if border_width > 0 and prof.seed != "none" and prof.seed_radius > 0:
            # the seed must stay clear of the border shell
            center = np.asarray(prof.seed_center, dtype=float)
            lo = grid.origin
            hi = grid.origin + grid.extent
            gap = float(min((center - lo).min(), (hi - center).min()))
            if prof.seed_radius + border_width * grid.h > gap:
                raise ScenarioError(
                    f"{ppath}.seed_radius",
                    "seed region reaches the border zone; shrink the seed or "
                    "the border width")

    gsec = raw.get("gravity", {})
    rsec = raw.get("rotation", {})
    omega = rsec.get("omega")
    if omega is None and "m_star" in rsec:
        m_star = float(_get(rsec, "m_star", 0.0, "rotation", num, positive=True))
        d = float(_get(rsec, "d", 0.0, "rotation", num, positive=True))
        omega = orbital_omega(m_star, d, float(gsec.get("G", 6.674e-11)))
    omega = float(omega) if omega is not None else 0.0
    try:
        gravity = GravityContext(
            G=float(_get(gsec, "G", 1.0 if nondim else 6.674e-11, "gravity",
                         num, positive=True)),
            omega=omega,
            method="oracle" if _get(gsec, "method", "fast", "gravity", str) == "oracle" else "fast",
            enabled=bool(gsec.get("enabled", True)),
        )
    except Exception as exc:
        raise ScenarioError("gravity", str(exc))
    method = gsec.get("method", "fast")
    if method not in ("fast", "oracle"):
        raise ScenarioError("gravity.method", f"unknown method {method!r}")

    tsec = raw.get("time", {})
    t_end = float(_get(tsec, "t_end", None, "time", num, positive=True))
    ssec2 = raw.get("solver", {})
    try:
        config = SolverConfig(
            cfl=float(_get(tsec, "cfl", 0.4, "time", num)),
            flux=_get(ssec2, "flux", "upwind", "solver", str),
            integrator=_get(ssec2, "integrator", "ssp-rk2", "solver", str),
            dt_max=float(_get(tsec, "dt_max", math.inf, "time", num, positive=True)),
        )
    except ValueError as exc:
        raise ScenarioError("time/solver", str(exc))

    stab = raw.get("stability", {})
    r = float(_get(stab, "r", 2.0, "stability", num))
    if r <= 1.5:
        raise ScenarioError("stability.r", "the domain constant needs r > 3/2")
    stability = SimpleNamespace(
        enabled=bool(stab.get("enabled", False)),
        r=r,
        slack=float(_get(stab, "slack", 0.05, "stability", num, positive=True)),
    )

    osec = raw.get("output", {})
    return Scenario(
        raw=raw, grid=grid, mode="two" if two else "single",
        models=tuple(models), profiles=tuple(profiles), sources=tuple(sources),
        mixture=mixture, gravity=gravity, config=config,
        t_end=t_end,
        snapshot_every=float(_get(tsec, "snapshot_every", 0.0, "time", num, nonneg=True)),
        max_steps=int(_get(tsec, "max_steps", 1000000, "time", int, positive=True)),
        output_dir=_get(osec, "dir", "out", "output", str),
        stability=stability,
        rho0s=tuple(rho0s),
    )


def load_scenario(path, overrides=None) -> Scenario:
    raw = apply_overrides(load_raw(path), overrides)
    return build_scenario(raw)
