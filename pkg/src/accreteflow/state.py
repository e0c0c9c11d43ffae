"""Grid geometry, field storage, border-zone sources, and snapshot I/O."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from .constitutive import ConstitutiveModel, eval_thermo


class StateError(ValueError):
    """Raised on invalid grid/state construction or violated invariants."""


@dataclass
class Grid:
    """Uniform Cartesian grid with domain and border-zone masks.

    ``origin`` is the low corner of cell (0,0,0); cell centers sit at
    origin + (index + 1/2)*h.  ``border_mask`` is a shell inside the domain
    where bulk sources act; it never extends outside ``domain_mask``.
    """

    n: Tuple[int, int, int]
    h: float
    origin: np.ndarray
    domain_mask: np.ndarray
    border_mask: np.ndarray

    def __post_init__(self):
        self.n = tuple(int(v) for v in self.n)
        self.origin = np.asarray(self.origin, dtype=np.float64)
        if self.h <= 0:
            raise StateError("cell size h must be positive")
        if any(v < 2 for v in self.n):
            raise StateError("grid needs at least 2 cells per axis")
        if self.domain_mask.shape != self.n or self.border_mask.shape != self.n:
            raise StateError("mask shapes must match n")
        if np.any(self.border_mask & ~self.domain_mask):
            raise StateError("border zone must lie inside the domain")

    @property
    def dV(self) -> float:
        return self.h**3

    @property
    def extent(self) -> np.ndarray:
        return np.array([nv * self.h for nv in self.n])

    @property
    def volume(self) -> float:
        """Measure of the active domain."""
        return float(self.domain_mask.sum()) * self.dV

    def axis_centers(self, a: int) -> np.ndarray:
        return self.origin[a] + (np.arange(self.n[a]) + 0.5) * self.h

    def center_mesh(self):
        return np.meshgrid(*(self.axis_centers(a) for a in range(3)), indexing="ij")

    def radius_from(self, center) -> np.ndarray:
        xx, yy, zz = self.center_mesh()
        c = np.asarray(center, dtype=np.float64)
        return np.sqrt((xx - c[0]) ** 2 + (yy - c[1]) ** 2 + (zz - c[2]) ** 2)

    @property
    def all_active(self) -> bool:
        return bool(self.domain_mask.all())


def make_grid(n, extent, origin=None, shape: str = "box",
              border_width: int = 0, sphere_radius: Optional[float] = None) -> Grid:
    """Build a grid in a box of edge lengths ``extent`` (scalar or 3-tuple).

    ``shape='sphere'`` restricts the domain to cells whose centers lie within
    ``sphere_radius`` (default: half the smallest edge) of the box center.
    ``border_width`` is the border-zone shell thickness in cells.
    """
    n = tuple(int(v) for v in np.atleast_1d(n) * np.ones(3, dtype=int))
    ext = np.atleast_1d(np.asarray(extent, dtype=np.float64)) * np.ones(3)
    h = ext[0] / n[0]
    if not np.allclose(ext / np.array(n), h, rtol=1e-12):
        raise StateError("cells must be cubic: extent/n equal on all axes")
    if origin is None:
        origin = -ext / 2.0
    origin = np.asarray(origin, dtype=np.float64)

    if shape == "box":
        domain = np.ones(n, dtype=bool)
    elif shape == "sphere":
        center = origin + ext / 2.0
        rad = sphere_radius if sphere_radius is not None else float(ext.min()) / 2.0
        gtmp = Grid(n=n, h=h, origin=origin,
                    domain_mask=np.ones(n, dtype=bool),
                    border_mask=np.zeros(n, dtype=bool))
        domain = gtmp.radius_from(center) <= rad
    else:
        raise StateError(f"unknown domain shape {shape!r}")

    border = np.zeros(n, dtype=bool)
    if border_width > 0:
        # cells within border_width of the domain boundary: erode the mask
        core = domain.copy()
        for _ in range(int(border_width)):
            shrunk = core.copy()
            for a in range(3):
                nb = np.ones_like(core)
                sl_lo = [slice(None)] * 3
                sl_hi = [slice(None)] * 3
                sl_lo[a] = slice(1, None)
                sl_hi[a] = slice(0, -1)
                nb[tuple(sl_hi)] &= core[tuple(sl_lo)]
                nb[tuple(sl_lo)] &= core[tuple(sl_hi)]
                edge_lo = [slice(None)] * 3
                edge_lo[a] = 0
                edge_hi = [slice(None)] * 3
                edge_hi[a] = -1
                nb[tuple(edge_lo)] = False
                nb[tuple(edge_hi)] = False
                shrunk &= nb
            core = shrunk
        border = domain & ~core
    return Grid(n=n, h=h, origin=origin, domain_mask=domain, border_mask=border)


@dataclass
class FieldState:
    """Conserved fields of one material on the grid, at time t."""

    rho: np.ndarray          # kg/m^3
    mom: np.ndarray          # (3, nx, ny, nz), kg/(m^2 s)
    J: np.ndarray            # dimensionless
    w: np.ndarray            # Pa
    t: float = 0.0

    def copy(self) -> "FieldState":
        return FieldState(rho=self.rho.copy(), mom=self.mom.copy(),
                          J=self.J.copy(), w=self.w.copy(), t=self.t)

    def velocity(self, rho_floor: float) -> np.ndarray:
        return self.mom / np.maximum(self.rho, rho_floor)


@dataclass
class TwoPhaseState:
    """Metal and silicate components sharing one grid and one clock."""

    metal: FieldState
    silicate: FieldState

    @property
    def t(self) -> float:
        return self.metal.t

    @t.setter
    def t(self, value: float):
        self.metal.t = value
        self.silicate.t = value

    def copy(self) -> "TwoPhaseState":
        return TwoPhaseState(metal=self.metal.copy(), silicate=self.silicate.copy())


@dataclass
class SourceSpec:
    """Border-zone bulk source: volume rate, inflow velocity, heat power.

    ``v_ext`` (1/s) and ``h_ext`` (W/m^3) act uniformly on the border zone
    inside the time window [t_on, t_off).  ``v_ext_vec`` is either a constant
    inflow velocity vector or the string "match" (incoming material moves with
    the local flow, which zeroes the incoming-friction power).  ``rho0`` is
    the spatially homogeneous referential density.
    """

    rho0: float = 1.0
    v_ext: float = 0.0
    v_ext_vec: Union[str, Tuple[float, float, float]] = (0.0, 0.0, 0.0)
    h_ext: float = 0.0
    t_on: float = 0.0
    t_off: float = np.inf

    def __post_init__(self):
        if self.rho0 <= 0:
            raise StateError("rho0 must be positive")
        if self.v_ext < 0:
            raise StateError("outflow (v_ext < 0) is not supported")
        if self.h_ext < 0:
            raise StateError("h_ext must be nonnegative")
        if isinstance(self.v_ext_vec, str):
            if self.v_ext_vec != "match":
                raise StateError("v_ext_vec must be a 3-vector or 'match'")
        else:
            self.v_ext_vec = tuple(float(c) for c in self.v_ext_vec)
            if len(self.v_ext_vec) != 3:
                raise StateError("v_ext_vec must have 3 components")

    def active(self, t: float) -> bool:
        return self.v_ext != 0.0 and self.t_on <= t < self.t_off

    def heat_active(self, t: float) -> bool:
        return self.h_ext != 0.0 and self.t_on <= t < self.t_off


@dataclass
class SourceRates:
    """Per-cell source rates; all exactly zero off the border zone."""

    r_ext: np.ndarray        # kg/(m^3 s)
    mom_rate: np.ndarray     # (3, ...), N/m^3
    vol_rate: np.ndarray     # 1/s
    heat_rate: np.ndarray    # W/m^3
    v_ext_vec: np.ndarray    # (3, ...), the inflow velocity actually used


def source_rates(spec: SourceSpec, state: FieldState, grid: Grid,
                 t: Optional[float] = None,
                 rho_floor: float = 0.0) -> SourceRates:
    """Evaluate the bulk source fields: r_ext = rho0 * v_ext / J on the border."""
    if t is None:
        t = state.t
    shape = tuple(grid.n)
    zero = np.zeros(shape)
    zeros3 = np.zeros((3,) + shape)
    on_border = grid.border_mask

    vol = np.where(on_border, spec.v_ext, 0.0) if spec.active(t) else zero
    heat = np.where(on_border, spec.h_ext, 0.0) if spec.heat_active(t) else zero

    if spec.active(t):
        r_ext = np.where(on_border, spec.rho0 * spec.v_ext / state.J, 0.0)
        if isinstance(spec.v_ext_vec, str):
            vvec = state.velocity(max(rho_floor, 1e-300)) * on_border
        else:
            vvec = np.stack([np.where(on_border, c, 0.0) for c in spec.v_ext_vec])
        mom = r_ext * vvec
    else:
        r_ext = zero
        vvec = zeros3
        mom = zeros3
    return SourceRates(r_ext=r_ext, mom_rate=mom, vol_rate=vol,
                       heat_rate=heat, v_ext_vec=vvec)


@dataclass
class InitialProfile:
    """Initial-condition recipe: dilute background plus an optional seed."""

    j_background: float = 100.0
    theta_background: float = 1.0
    seed: str = "none"             # none | blob | gaussian
    seed_j: float = 1.0
    seed_theta: Optional[float] = None
    seed_radius: float = 0.0
    seed_center: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    velocity: Union[str, Tuple[float, float, float]] = (0.0, 0.0, 0.0)
    rotation_rate: float = 0.0     # rigid rotation about e3 through seed_center
    vortex_amplitude: float = 0.0  # wall-compatible single-cell vortex (v.n=0)

    def __post_init__(self):
        if self.j_background <= 0 or self.seed_j <= 0:
            raise StateError("J must be positive everywhere")
        if self.theta_background < 0 or (self.seed_theta is not None
                                         and self.seed_theta < 0):
            raise StateError("theta must be nonnegative")
        if self.seed not in ("none", "blob", "gaussian"):
            raise StateError(f"unknown seed profile {self.seed!r}")


def init_state(grid: Grid, model: ConstitutiveModel, profile: InitialProfile,
               rho0: float) -> FieldState:
    """Build a consistent state: rho = rho0/J cell-wise, w from theta."""
    shape = tuple(grid.n)
    J = np.full(shape, float(profile.j_background))
    theta = np.full(shape, float(profile.theta_background))

    if profile.seed != "none" and profile.seed_radius > 0.0:
        r = grid.radius_from(profile.seed_center)
        if profile.seed == "blob":
            inside = r <= profile.seed_radius
            J = np.where(inside, profile.seed_j, J)
            if profile.seed_theta is not None:
                theta = np.where(inside, profile.seed_theta, theta)
        else:  # gaussian
            bump = np.exp(-((r / profile.seed_radius) ** 2))
            J = profile.j_background + (profile.seed_j - profile.j_background) * bump
            if profile.seed_theta is not None:
                theta = (profile.theta_background
                         + (profile.seed_theta - profile.theta_background) * bump)

    if np.any(J <= 0):
        raise StateError("initial J must be positive")
    rho = rho0 / J

    v = np.zeros((3,) + shape)
    if isinstance(profile.velocity, str):
        if profile.velocity != "zero":
            raise StateError(f"unknown velocity profile {profile.velocity!r}")
    else:
        for a in range(3):
            v[a] = profile.velocity[a]
    if profile.rotation_rate != 0.0:
        xx, yy, _ = grid.center_mesh()
        cx, cy = profile.seed_center[0], profile.seed_center[1]
        v[0] += -profile.rotation_rate * (yy - cy)
        v[1] += profile.rotation_rate * (xx - cx)
    if profile.vortex_amplitude != 0.0:
        # divergence-free cellular vortex with v.n = 0 on all box faces
        xx, yy, _ = grid.center_mesh()
        X = (xx - grid.origin[0]) / grid.extent[0]
        Y = (yy - grid.origin[1]) / grid.extent[1]
        amp = profile.vortex_amplitude
        v[0] += amp * np.sin(np.pi * X) * np.cos(np.pi * Y)
        v[1] += -amp * np.cos(np.pi * X) * np.sin(np.pi * Y)

    w = np.asarray(eval_thermo(model, J, theta).w)
    state = FieldState(rho=rho, mom=rho * v, J=J, w=w.reshape(shape), t=0.0)
    outside = ~grid.domain_mask
    if np.any(outside):
        state.rho[outside] = rho0 / profile.j_background
        state.mom[:, outside] = 0.0
        state.J[outside] = profile.j_background
        state.w[outside] = 0.0
    return state


def consistency_rho_J(state: FieldState, rho0: float, grid: Grid) -> float:
    """max over the domain of |rho*J - rho0| / rho0 (discrete drift metric)."""
    err = np.abs(state.rho * state.J - rho0) / rho0
    return float(err[grid.domain_mask].max())


# ---------------------------------------------------------------------------
# snapshot I/O: one raw little-endian float64 file per field, x-fastest order
# ---------------------------------------------------------------------------

_FIELDS_1C = ("rho", "mom_x", "mom_y", "mom_z", "jac", "w")


def _field_arrays(state: FieldState, prefix: str = ""):
    return {
        prefix + "rho": state.rho,
        prefix + "mom_x": state.mom[0],
        prefix + "mom_y": state.mom[1],
        prefix + "mom_z": state.mom[2],
        prefix + "jac": state.J,
        prefix + "w": state.w,
    }


def write_snapshot(dirpath, state, grid: Grid, extra: Optional[dict] = None):
    """Write one snapshot directory: <field>.f64 files plus manifest.json."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    if isinstance(state, TwoPhaseState):
        fields = {}
        fields.update(_field_arrays(state.metal, "metal_"))
        fields.update(_field_arrays(state.silicate, "silicate_"))
        t = state.t
    else:
        fields = _field_arrays(state)
        t = state.t
    for name, arr in fields.items():
        arr.astype("<f8").ravel(order="F").tofile(dirpath / f"{name}.f64")
    manifest = {
        "n": list(grid.n),
        "h": grid.h,
        "origin": list(map(float, grid.origin)),
        "time": float(t),
        "fields": sorted(fields),
        "byte_order": "little",
        "order": "x-fastest",
    }
    if extra:
        manifest.update(extra)
    with open(dirpath / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def read_snapshot(dirpath):
    """Read a snapshot directory back into a FieldState or TwoPhaseState."""
    dirpath = Path(dirpath)
    with open(dirpath / "manifest.json") as fh:
        manifest = json.load(fh)
    n = tuple(manifest["n"])

    def load(name):
        raw = np.fromfile(dirpath / f"{name}.f64", dtype="<f8")
        return raw.reshape(n, order="F")

    def build(prefix):
        return FieldState(
            rho=load(prefix + "rho"),
            mom=np.stack([load(prefix + f"mom_{c}") for c in "xyz"]),
            J=load(prefix + "jac"),
            w=load(prefix + "w"),
            t=float(manifest["time"]),
        )

    names = set(manifest["fields"])
    if "metal_rho" in names:
        state = TwoPhaseState(metal=build("metal_"), silicate=build("silicate_"))
    else:
        state = build("")
    return state, manifest
