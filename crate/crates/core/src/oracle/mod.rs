//! Independent brute-force solvers used only for verification: exact
//! diagonalization in a fixed orbital basis, an exact one-boson one-fermion
//! grid solver and a split-step mean-field propagator.

pub mod fci;
pub mod fock;
pub mod mean_field;
pub mod pair;
pub mod suite;

pub use fci::{ed_ground_state, ed_propagate, fci_hamiltonian, fidelity, FciBasis, FciHamiltonian, FCI_CAP};
pub use fock::FockSpace;
pub use mean_field::{gp_ground_state, gp_split_step, l2_distance, MeanFieldState, SplitStep};
pub use pair::{pair_amplitude, PairHamiltonian};
pub use suite::{run_suite, Check};
