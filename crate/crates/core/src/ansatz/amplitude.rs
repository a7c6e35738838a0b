//! First-quantized evaluation of permanents and determinants on the grid.
//!
//! Only used for verification: it is factorially expensive and independent
//! of the occupation-number algebra used by the solver.

use nalgebra::DMatrix;

use super::occupations::NumberStateTable;
use crate::linalg::{determinant, permanent};
use crate::model::Statistics;
use crate::C64;

/// Amplitude of the normalized number state `occupation` built from the
/// orbital columns of `spfs`, with particle `a` at grid index `positions[a]`.
pub fn number_state_amplitude(statistics: Statistics, occupation: &[u8], spfs: &DMatrix<C64>, positions: &[usize]) -> C64 {
    let orbitals: Vec<usize> = occupation
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| std::iter::repeat(i).take(n as usize))
        .collect();
    let n = orbitals.len();
    assert_eq!(n, positions.len(), "particle count mismatch");
    let mat = DMatrix::from_fn(n, n, |a, b| spfs[(positions[b], orbitals[a])]);
    let n_fact: f64 = (1..=n).map(|v| v as f64).product();
    match statistics {
        Statistics::Fermionic => determinant(&mat) / n_fact.sqrt(),
        Statistics::Bosonic => {
            let occ_fact: f64 = occupation
                .iter()
                .map(|&k| (1..=k as usize).map(|v| v as f64).product::<f64>())
                .product();
            permanent(&mat) / (n_fact * occ_fact).sqrt()
        }
    }
}

/// Species function `sum_I c_I |I>` evaluated at grid indices `positions`.
pub fn species_function_amplitude(table: &NumberStateTable, coeffs: &[C64], spfs: &DMatrix<C64>, positions: &[usize]) -> C64 {
    table
        .iter()
        .zip(coeffs)
        .map(|(occ, &ci)| ci * number_state_amplitude(table.statistics(), occ, spfs, positions))
        .sum()
}
