"""Constitutive library: free-energy family, Newtonian dissipation, Fourier conduction.

The default material is the power-law family

    psi(J, theta) = max(0, J**-alpha - 1) + b*theta/J**z
                    + c0*theta*(1 - ln(theta)) - c1*theta**beta

plus an optional "straight segment" stored-energy term
``0.5*seg_slope*max(0, seg_j0 - J)**2`` that adds a linear pressure branch
with a kink at ``seg_j0`` (inactive by default).

Derived quantities follow the standard identities

    p = -psi_J,   eta = -psi_theta / J,   c = -theta * psi_thetatheta / J,
    w = (psi - theta*psi_theta - phi) / J       with phi(J) = psi(J, 0).

For this family ``w`` and ``c`` have the closed forms

    w = (c0*theta + c1*(beta - 1)*theta**beta) / J
    c = (c0 + c1*beta*(beta - 1)*theta**(beta - 1)) / J

which are used directly so that theta = 0 evaluates cleanly (the generic
expression degenerates to 0*log(0) products there).

All evaluation functions accept scalars or numpy arrays of matching shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

ArrayLike = Union[float, np.ndarray]


class ConstitutiveError(ValueError):
    """Raised on domain errors (J <= 0, theta < 0) or invalid parameters."""


class InversionError(RuntimeError):
    """Raised when the temperature-from-w solve fails to converge."""


@dataclass(frozen=True)
class FreeEnergyParams:
    """Parameters of the power-law free-energy family.

    alpha, beta, z are dimensionless exponents; b, c0 carry Pa/K, c1 Pa/K**beta.
    Construction only enforces what the math needs (so deliberately failing
    models can be fed to the assumption checker); ``validate_strict`` checks
    the full admissibility set alpha > 1, beta > 1, z > 0, c0 > 0, c1 >= 0,
    b >= 0 and the Kirchhoff-stress controllability bound
    alpha >= z*beta/(beta - 1).
    """

    alpha: float = 2.0
    beta: float = 2.0
    z: float = 1.0
    b: float = 0.0
    c0: float = 1.0
    c1: float = 0.0
    seg_j0: float = 0.0     # straight-segment kink location (0 disables)
    seg_slope: float = 0.0  # gas-branch pressure slope, Pa

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConstitutiveError("alpha must be positive")
        if self.beta <= 1:
            raise ConstitutiveError("beta must exceed 1")
        if self.c0 < 0:
            raise ConstitutiveError("c0 must be nonnegative")
        if self.c1 < 0 or self.b < 0 or self.z < 0:
            raise ConstitutiveError("b, c1, z must be nonnegative")
        if self.seg_slope < 0 or self.seg_j0 < 0:
            raise ConstitutiveError("straight-segment parameters must be nonnegative")

    def validate_strict(self):
        """Raise unless the parameters satisfy the full admissibility set."""
        if self.alpha <= 1:
            raise ConstitutiveError("admissible models need alpha > 1")
        if self.c0 <= 0:
            raise ConstitutiveError("admissible models need c0 > 0")
        if self.z <= 0:
            raise ConstitutiveError("admissible models need z > 0")
        if self.alpha < self.z * self.beta / (self.beta - 1.0):
            raise ConstitutiveError(
                "Kirchhoff controllability needs alpha >= z*beta/(beta-1)"
            )


@dataclass(frozen=True)
class ViscosityParams:
    """Newtonian viscosities and Fourier conductivity.

    mu: shear viscosity (Pa s), lam: bulk-coupling viscosity (Pa s),
    kappa: thermal conductivity (W/(m K)).  With ``scaling='inv_j'`` all
    three are multiplied by 1/J (density weakening in the dilute phase);
    default is constant coefficients.  ``kappa_floor`` is the epsilon of the
    lower bound kappa >= eps > 0.
    """

    mu: float = 0.0
    lam: float = 0.0
    kappa: float = 0.0
    scaling: str = "none"
    kappa_floor: float = 1e-30

    def __post_init__(self):
        if self.mu < 0 or self.lam < 0 or self.kappa < 0:
            raise ConstitutiveError("viscosities and conductivity must be >= 0")
        if self.scaling not in ("none", "inv_j"):
            raise ConstitutiveError(f"unknown viscosity scaling {self.scaling!r}")

    def _scale(self, J):
        if self.scaling == "inv_j":
            return 1.0 / np.asarray(J, dtype=float)
        return np.ones_like(np.asarray(J, dtype=float))

    def mu_of(self, J, theta=None):
        return self.mu * self._scale(J)

    def lam_of(self, J, theta=None):
        return self.lam * self._scale(J)

    def kappa_of(self, J, theta=None):
        return np.maximum(self.kappa * self._scale(J), self.kappa_floor)


@dataclass(frozen=True)
class ConstitutiveModel:
    """Free energy plus dissipation/conduction laws for one material."""

    free: FreeEnergyParams = field(default_factory=FreeEnergyParams)
    visc: ViscosityParams = field(default_factory=ViscosityParams)


@dataclass
class ThermoEval:
    """Pointwise thermodynamic evaluation (fields may be scalars or arrays).

    psi and partials in Pa (per reference volume); p pressure, phi stored
    energy, w thermal internal energy per actual volume, c volumetric heat
    capacity (Pa/K), eta entropy per actual volume (Pa/K).
    """

    psi: ArrayLike
    psi_J: ArrayLike
    psi_theta: ArrayLike
    psi_JJ: ArrayLike
    psi_thetatheta: ArrayLike
    psi_Jtheta: ArrayLike
    p: ArrayLike
    phi: ArrayLike
    w: ArrayLike
    c: ArrayLike
    eta: ArrayLike


def default_model(mu=0.0, lam=0.0, kappa=0.0, **free_kwargs) -> ConstitutiveModel:
    """The default material instance (alpha=2, beta=2, z=1, c0=1)."""
    free = FreeEnergyParams(**free_kwargs) if free_kwargs else FreeEnergyParams()
    return ConstitutiveModel(free=free, visc=ViscosityParams(mu=mu, lam=lam, kappa=kappa))


def _check_domain(J, theta):
    J = np.asarray(J, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(J <= 0.0) or not np.all(np.isfinite(J)):
        raise ConstitutiveError("J must be positive and finite")
    if np.any(theta < 0.0) or not np.all(np.isfinite(theta)):
        raise ConstitutiveError("theta must be nonnegative and finite")
    return J, theta


def stored_energy(free: FreeEnergyParams, J) -> np.ndarray:
    """phi(J) = psi(J, 0), the cold stored energy."""
    J = np.asarray(J, dtype=float)
    phi = np.maximum(0.0, J ** (-free.alpha) - 1.0)
    if free.seg_slope > 0.0 and free.seg_j0 > 0.0:
        phi = phi + 0.5 * free.seg_slope * np.maximum(0.0, free.seg_j0 - J) ** 2
    return phi


def stored_energy_prime(free: FreeEnergyParams, J) -> np.ndarray:
    """phi'(J); has a kink at J=1 (and at seg_j0 when the segment is active)."""
    J = np.asarray(J, dtype=float)
    dphi = np.where(J < 1.0, -free.alpha * J ** (-free.alpha - 1.0), 0.0)
    if free.seg_slope > 0.0 and free.seg_j0 > 0.0:
        dphi = dphi - free.seg_slope * np.maximum(0.0, free.seg_j0 - J)
    return dphi


def _stored_energy_second(free: FreeEnergyParams, J) -> np.ndarray:
    J = np.asarray(J, dtype=float)
    d2 = np.where(J < 1.0, free.alpha * (free.alpha + 1.0) * J ** (-free.alpha - 2.0), 0.0)
    if free.seg_slope > 0.0 and free.seg_j0 > 0.0:
        d2 = d2 + np.where(J < free.seg_j0, free.seg_slope, 0.0)
    return d2


def _xlogx(theta):
    """theta*log(theta) extended by 0 at theta=0."""
    theta = np.asarray(theta, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(theta > 0.0, theta * np.log(np.where(theta > 0.0, theta, 1.0)), 0.0)
    return out


def eval_thermo(model: ConstitutiveModel, J, theta) -> ThermoEval:
    """Evaluate psi, its partials, and all derived thermodynamic quantities.

    Raises ConstitutiveError if J <= 0 or theta < 0.  At theta = 0 the
    logarithmic entropy diverges (eta -> -inf, psi_theta -> +inf when c0 > 0);
    w, c, p, phi stay finite via their closed forms.
    """
    J, theta = _check_domain(J, theta)
    f = model.free
    a, bet, z, b, c0, c1 = f.alpha, f.beta, f.z, f.b, f.c0, f.c1

    phi = stored_energy(f, J)
    dphi = stored_energy_prime(f, J)
    Jmz = J ** (-z)

    warm = theta > 0.0
    theta_safe = np.where(warm, theta, 1.0)
    logth = np.log(theta_safe)

    psi = phi + b * theta * Jmz + c0 * (theta - _xlogx(theta)) - c1 * theta ** bet
    psi_J = dphi - z * b * theta * Jmz / J
    # the log term diverges at theta = 0 (when c0 > 0); assemble with the
    # correct limits instead of letting 0*inf products produce nans
    cold_theta = np.inf if c0 > 0.0 else 0.0
    psi_theta = (b * Jmz - c1 * bet * theta ** (bet - 1.0)
                 - np.where(warm, c0 * logth, -cold_theta))
    psi_JJ = _stored_energy_second(f, J) + z * (z + 1.0) * b * theta * Jmz / J**2
    if c0 > 0.0 or bet < 2.0:
        cold_tt = -np.inf
    elif bet == 2.0:
        cold_tt = -2.0 * c1
    else:
        cold_tt = 0.0
    with np.errstate(over="ignore"):
        psi_thetatheta = np.where(
            warm,
            -c0 / theta_safe - c1 * bet * (bet - 1.0) * theta_safe ** (bet - 2.0),
            cold_tt)
    psi_Jtheta = -z * b * Jmz / J

    w = (c0 * theta + c1 * (bet - 1.0) * theta**bet) / J
    c = (c0 + c1 * bet * (bet - 1.0) * theta ** (bet - 1.0)) / J
    eta = -psi_theta / J
    p = -psi_J

    return ThermoEval(
        psi=psi, psi_J=psi_J, psi_theta=psi_theta, psi_JJ=psi_JJ,
        psi_thetatheta=psi_thetatheta, psi_Jtheta=psi_Jtheta,
        p=p, phi=phi, w=w, c=c, eta=eta,
    )


def internal_energy_actual(model: ConstitutiveModel, J, theta):
    """(psi - theta*psi_theta)/J = phi/J + w, per actual volume."""
    J, theta = _check_domain(J, theta)
    f = model.free
    return stored_energy(f, J) / J + (
        f.c0 * theta + f.c1 * (f.beta - 1.0) * theta**f.beta
    ) / J


def temperature_from_w(model: ConstitutiveModel, J, w_target,
                       rtol: float = 1e-12, max_iter: int = 100):
    """Invert w(J, .) for theta by safeguarded Newton with a grown bracket.

    w is strictly increasing in theta (c > 0), so the bracket [0, theta_max]
    obtained by geometric growth always contains the root.  Accepts scalars
    or arrays; returns the same shape.
    """
    J = np.atleast_1d(np.asarray(J, dtype=float))
    w_t = np.atleast_1d(np.asarray(w_target, dtype=float))
    J, w_t = np.broadcast_arrays(J, w_t)
    J = np.ascontiguousarray(J, dtype=float)
    w_t = np.ascontiguousarray(w_t, dtype=float)
    if np.any(J <= 0):
        raise ConstitutiveError("J must be positive")
    if np.any(w_t < 0):
        raise ConstitutiveError("w_target must be nonnegative")

    f = model.free
    if f.c0 <= 0.0:
        if f.c1 > 0.0:
            # pure power law: closed-form inverse
            theta = (w_t * J / (f.c1 * (f.beta - 1.0))) ** (1.0 / f.beta)
            ok = True
        elif np.all(w_t == 0.0):
            theta, ok = np.zeros_like(w_t), True
        else:
            raise InversionError("w(J, .) is degenerate: c0 = c1 = 0")
    else:
        from ._kernels import invert_theta

        theta, ok = invert_theta(w_t.ravel(), J.ravel(), f.c0, f.c1, f.beta,
                                 rtol, max_iter)
    if not ok:
        raise InversionError("temperature_from_w failed to converge")
    theta = theta.reshape(J.shape)
    if theta.ndim == 0 or theta.size == 1:
        if np.isscalar(w_target) or np.asarray(w_target).ndim == 0:
            return float(theta.reshape(-1)[0])
    return theta


def viscous_stress(params: ViscosityParams, J, theta, e: np.ndarray):
    """Newtonian stress D = 2*mu*e + lam*tr(e)*I and dissipation xi = D:e.

    e is a symmetric 3x3 strain rate (1/s).  Returns (D, xi) with
    xi = 2*mu*|e|^2 + lam*tr(e)^2 >= 0.
    """
    e = np.asarray(e, dtype=float)
    if e.shape != (3, 3):
        raise ConstitutiveError("e must be a 3x3 tensor")
    if not np.allclose(e, e.T, atol=1e-13 * max(1.0, float(np.abs(e).max()))):
        raise ConstitutiveError("e must be symmetric")
    mu = float(params.mu_of(J, theta))
    lam = float(params.lam_of(J, theta))
    tr = float(np.trace(e))
    D = 2.0 * mu * e + lam * tr * np.eye(3)
    xi = 2.0 * mu * float(np.sum(e * e)) + lam * tr * tr
    return D, xi


@dataclass
class AssumptionCheck:
    """Outcome for one admissibility assumption."""

    name: str
    passed: bool
    detail: str
    witness: tuple = ()
    fitted: float = float("nan")


@dataclass
class AssumptionReport:
    """Per-assumption results of the sampled admissibility check."""

    checks: list

    @property
    def passed(self) -> bool:
        return all(ch.passed for ch in self.checks)

    def __getitem__(self, name: str) -> AssumptionCheck:
        for ch in self.checks:
            if ch.name == name:
                return ch
        raise KeyError(name)

    def summary(self) -> str:
        lines = []
        for ch in self.checks:
            status = "pass" if ch.passed else "FAIL"
            lines.append(f"  ({ch.name}) {status}: {ch.detail}")
        return "\n".join(lines)


def check_assumptions(model: ConstitutiveModel,
                      j_range=(1e-6, 1e3), theta_range=(1e-3, 1e3),
                      sample_count: int = 64,
                      eps_a: float = 0.5, eps_d: float = None,
                      source_bound: float = None,
                      sources=None) -> AssumptionReport:
    """Sample the admissibility assumptions on a log-spaced (J, theta) grid.

    This is a falsifier on a finite sample, not a prover:
      (a) liminf_{J->0+} J**(1+eps)*phi(J) > 0, tested at the smallest J;
      (b) |theta*psi_theta/J - psi_J| <= K*(1 + phi/J + w), best K reported;
      (c) |v_ext| and v_ext*|v_ext_vec|^2 bounded (needs `sources`);
      (d) w >= eps*(1 + theta**beta)/J, largest admissible eps reported;
      (e) xi >= eps*|e|^2 and kappa >= eps.
    Failures are report entries, never exceptions.
    """
    f = model.free
    Js = np.logspace(np.log10(j_range[0]), np.log10(j_range[1]), sample_count)
    ths = np.logspace(np.log10(theta_range[0]), np.log10(theta_range[1]), sample_count)
    JJ, TT = np.meshgrid(Js, ths, indexing="ij")
    ev = eval_thermo(model, JJ, TT)
    checks = []

    # (a) stored-energy blow-up faster than 1/J
    j_small = Js[0]
    vals = float(j_small ** (1.0 + eps_a) * stored_energy(f, j_small))
    # compare against the value one decade up: a genuine liminf > 0 shows
    # nondecreasing J**(1+eps)*phi as J -> 0 on the sampled tail
    j_next = j_small * 10.0
    vals_next = float(j_next ** (1.0 + eps_a) * stored_energy(f, j_next))
    ok_a = vals > 1e-12 and vals >= 0.5 * vals_next
    checks.append(AssumptionCheck(
        name="a", passed=bool(ok_a),
        detail=f"J^(1+{eps_a:g})*phi at J={j_small:g} is {vals:.4g} "
               f"(one decade up: {vals_next:.4g})",
        witness=(j_small,), fitted=vals))

    # (b) pressure/entropy coupling dominated by internal energy
    lhs = np.abs(TT * ev.psi_theta / JJ - ev.psi_J)
    rhs = 1.0 + ev.phi / JJ + ev.w
    with np.errstate(invalid="ignore"):
        ratio = lhs / rhs
    K_fit = float(np.nanmax(ratio))
    ok_b = np.isfinite(K_fit)
    i_b = np.unravel_index(int(np.nanargmax(ratio)), ratio.shape)
    checks.append(AssumptionCheck(
        name="b", passed=bool(ok_b),
        detail=f"fitted K = {K_fit:.4g} at (J, theta) = "
               f"({JJ[i_b]:.3g}, {TT[i_b]:.3g})",
        witness=(float(JJ[i_b]), float(TT[i_b])), fitted=K_fit))

    # (c) source bounds, when a source spec is supplied
    if sources is not None:
        vmax = float(getattr(sources, "v_ext", 0.0))
        vvec = getattr(sources, "v_ext_vec", (0.0, 0.0, 0.0))
        if isinstance(vvec, str):
            v2 = 0.0  # inflow velocity matches local v; bound is scenario-dependent
        else:
            v2 = float(np.dot(vvec, vvec))
        cap = source_bound if source_bound is not None else np.inf
        worst = abs(vmax) + abs(vmax) * v2
        checks.append(AssumptionCheck(
            name="c", passed=bool(worst <= cap),
            detail=f"|v_ext| + v_ext*|v_ext_vec|^2 = {worst:.4g} (bound {cap:g})",
            fitted=worst))

    # (d) thermal coercivity w >= eps*(1+theta^beta)/J
    wj = ev.w * JJ / (1.0 + TT**f.beta)
    eps_fit = float(np.min(wj))
    req = eps_d if eps_d is not None else 1e-12
    i_d = np.unravel_index(int(np.argmin(wj)), wj.shape)
    checks.append(AssumptionCheck(
        name="d", passed=bool(eps_fit >= req),
        detail=f"largest admissible eps = {eps_fit:.4g} at "
               f"(J, theta) = ({JJ[i_d]:.3g}, {TT[i_d]:.3g})",
        witness=(float(JJ[i_d]), float(TT[i_d])), fitted=eps_fit))

    # (e) dissipation coercivity and conduction floor (raw coefficients; the
    # runtime kappa_floor regularizer must not mask a configured kappa = 0)
    mu_min = float(np.min(model.visc.mu_of(JJ, TT)))
    kap_min = float(np.min(model.visc.kappa * model.visc._scale(JJ)))
    # xi = 2 mu |e|^2 + lam tr(e)^2 >= 2 mu |e|^2, so eps = 2*min(mu) at q = 2
    ok_e = mu_min > 0.0 and kap_min > 0.0
    checks.append(AssumptionCheck(
        name="e", passed=bool(ok_e),
        detail=f"xi >= {2.0 * mu_min:.4g}*|e|^2, kappa >= {kap_min:.4g}",
        fitted=2.0 * mu_min))

    return AssumptionReport(checks=checks)
