//! Layered many-body wavefunction: Schmidt decomposition over species
//! functions, each expanded in permanents or determinants.

pub mod amplitude;
pub mod occupations;
pub mod snapshot;
pub mod state;

pub use occupations::{enumerate_occupations, NumberStateTable, OneBodyTable};
pub use snapshot::{decode_state, encode_state, read_state, write_state, SnapshotHeader};
pub use state::{
    init_guess, is_entangled, orthonormality_error, schmidt_spectrum, total_norm, InitStrategy, LayeredBasis,
    LayeredState, MBState, SpeciesBasis, DEFAULT_ENTANGLEMENT_THRESHOLD,
};
