//! Correlated ground states and trap-quench expansion dynamics of a
//! one-dimensional Bose-Fermi mixture in a harmonically confined optical
//! lattice, using a two-layer multi-configurational variational ansatz.

pub mod ansatz;
pub mod driver;
pub mod error;
pub mod grid;
pub mod krylov;
pub mod linalg;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod propagator;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;
