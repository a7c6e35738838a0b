//! Equations of motion, time stepping, relaxation and reduced densities.

pub mod drive;
pub mod eom;
pub mod integrator;
pub mod rdm;

pub use drive::{output_times, propagate, relax, Observation, ResumeMeta, Propagated, PropagationOptions, RelaxOptions, Relaxed};
pub use eom::{energy, eom_rhs, Energies, EomContext, RhsDiagnostics, TimeMode, DEFAULT_RHO_EPS};
pub use integrator::{ControllerState, Dopri5, IntegratorSettings, StepStats};
pub use rdm::{orbital_rdms, OrbitalDensities};
