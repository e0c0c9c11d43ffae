"""accreteflow: self-gravitating open-system compressible flow on a grid,
with full conservation/entropy/stability auditing."""

from ._accel import HAVE_NUMBA, NUMBA_DISABLED
from .constitutive import (AssumptionReport, ConstitutiveModel,
                           ConstitutiveError, FreeEnergyParams, InversionError,
                           ThermoEval, ViscosityParams, check_assumptions,
                           default_model, eval_thermo, temperature_from_w,
                           viscous_stress)
from .diagnostics import (BalanceLedger, EnergyAudit, EntropyAudit,
                          StabilityReport, energy_audit, entropy_audit,
                          stability_audit)
from .gravity import (GravityContext, PotentialField, coriolis_force,
                      domain_constant, orbital_omega, solve_potential,
                      solve_potential_direct, solve_potential_fast)
from .mixture import (MixtureParams, friction_exchange, heat_exchange,
                      mixing_energy, mixing_pressures)
from .solver import (SolverConfig, StepFailure, Tendency, apply_boundary,
                     rhs_single, rhs_two, stable_dt, stable_dt_two,
                     step_single, step_two)
from .state import (FieldState, Grid, InitialProfile, SourceSpec,
                    TwoPhaseState, consistency_rho_J, init_state, make_grid,
                    read_snapshot, source_rates, write_snapshot)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
