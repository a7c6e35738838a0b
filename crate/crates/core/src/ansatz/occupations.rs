//! Occupation-number bases for permanents and determinants.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::Statistics;
use crate::C64;

/// All occupation vectors `(n_1, .., n_m)` with `sum n_i = N`, ordered
/// lexicographically descending. The ordering is part of the snapshot format.
#[derive(Debug, Clone)]
pub struct NumberStateTable {
    statistics: Statistics,
    n_particles: usize,
    n_orbitals: usize,
    occupations: Vec<u8>,
    index: HashMap<Vec<u8>, usize>,
}

pub fn enumerate_occupations(statistics: Statistics, n_particles: usize, n_orbitals: usize) -> Result<NumberStateTable> {
    if n_orbitals == 0 {
        return Err(Error::invalid("n_orbitals", "at least one orbital is required"));
    }
    if n_particles > u8::MAX as usize {
        return Err(Error::invalid("n_particles", "occupations above 255 are not supported"));
    }
    if statistics == Statistics::Fermionic && n_orbitals < n_particles {
        return Err(Error::invalid(
            "n_orbitals",
            format!("{n_particles} fermions cannot occupy {n_orbitals} orbitals"),
        ));
    }
    let max_occ = match statistics {
        Statistics::Bosonic => n_particles,
        Statistics::Fermionic => 1,
    };
    let mut occupations = Vec::new();
    let mut current = vec![0u8; n_orbitals];
    fill(&mut current, 0, n_particles, max_occ, &mut occupations);
    let index = occupations
        .chunks(n_orbitals)
        .enumerate()
        .map(|(i, occ)| (occ.to_vec(), i))
        .collect();
    Ok(NumberStateTable {
        statistics,
        n_particles,
        n_orbitals,
        occupations,
        index,
    })
}

fn fill(current: &mut [u8], pos: usize, remaining: usize, max_occ: usize, out: &mut Vec<u8>) {
    let m = current.len();
    if pos == m - 1 {
        if remaining <= max_occ {
            current[pos] = remaining as u8;
            out.extend_from_slice(current);
        }
        return;
    }
    for n in (0..=remaining.min(max_occ)).rev() {
        current[pos] = n as u8;
        fill(current, pos + 1, remaining - n, max_occ, out);
    }
    current[pos] = 0;
}

impl NumberStateTable {
    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn n_orbitals(&self) -> usize {
        self.n_orbitals
    }

    pub fn len(&self) -> usize {
        self.occupations.len() / self.n_orbitals
    }

    pub fn is_empty(&self) -> bool {
        self.occupations.is_empty()
    }

    pub fn occupation(&self, i: usize) -> &[u8] {
        &self.occupations[i * self.n_orbitals..(i + 1) * self.n_orbitals]
    }

    pub fn index_of(&self, occupation: &[u8]) -> Option<usize> {
        self.index.get(occupation).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u8]> {
        self.occupations.chunks(self.n_orbitals)
    }

    /// `a^dag_p a_q |occ>` as `(target index, amplitude)`, or `None` when it vanishes.
    pub fn excite(&self, occupation: &[u8], p: usize, q: usize) -> Option<(usize, f64)> {
        let nq = occupation[q] as f64;
        if nq == 0.0 {
            return None;
        }
        if p == q {
            return Some((self.index_of(occupation)?, nq));
        }
        let mut target = occupation.to_vec();
        match self.statistics {
            Statistics::Bosonic => {
                target[q] -= 1;
                let np = target[p] as f64;
                target[p] += 1;
                Some((self.index_of(&target)?, (nq * (np + 1.0)).sqrt()))
            }
            Statistics::Fermionic => {
                if occupation[p] == 1 {
                    return None;
                }
                let below_q: u32 = occupation[..q].iter().map(|&n| n as u32).sum();
                target[q] = 0;
                let below_p: u32 = target[..p].iter().map(|&n| n as u32).sum();
                target[p] = 1;
                let sign = if (below_q + below_p) % 2 == 0 { 1.0 } else { -1.0 };
                Some((self.index_of(&target)?, sign))
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Excitation {
    from: u32,
    to: u32,
    amp: f64,
}

/// Sparse representation of every `E_pq = a^dag_p a_q` on a number-state table.
#[derive(Debug, Clone)]
pub struct OneBodyTable {
    n_orbitals: usize,
    dim: usize,
    entries: Vec<Vec<Excitation>>,
}

impl OneBodyTable {
    pub fn new(table: &NumberStateTable) -> Self {
        let m = table.n_orbitals();
        let mut entries = vec![Vec::new(); m * m];
        for (i, occ) in table.iter().enumerate() {
            for p in 0..m {
                for q in 0..m {
                    if let Some((j, amp)) = table.excite(occ, p, q) {
                        entries[p * m + q].push(Excitation {
                            from: i as u32,
                            to: j as u32,
                            amp,
                        });
                    }
                }
            }
        }
        Self {
            n_orbitals: m,
            dim: table.len(),
            entries,
        }
    }

    pub fn n_orbitals(&self) -> usize {
        self.n_orbitals
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `out += scale * E_pq * input`, column by column.
    pub fn apply_add(&self, p: usize, q: usize, scale: C64, input: &DMatrix<C64>, out: &mut DMatrix<C64>) {
        let dim = self.dim;
        let cols = input.ncols();
        let src = input.as_slice();
        let dst = out.as_mut_slice();
        for e in &self.entries[p * self.n_orbitals + q] {
            let a = scale * e.amp;
            let (from, to) = (e.from as usize, e.to as usize);
            for k in 0..cols {
                dst[k * dim + to] += a * src[k * dim + from];
            }
        }
    }

    /// `E_pq * input`.
    pub fn apply(&self, p: usize, q: usize, input: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(input.nrows(), input.ncols());
        self.apply_add(p, q, C64::new(1.0, 0.0), input, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::binomial;

    #[test]
    fn sizes_match_binomials() {
        for n in 1..=20 {
            for m in 1..=10 {
                let expected = binomial(n + m - 1, m - 1);
                if expected <= 200_000 {
                    let b = enumerate_occupations(Statistics::Bosonic, n, m).unwrap();
                    assert_eq!(b.len(), expected, "bosons N={n} m={m}");
                }
                if m >= n {
                    let f = enumerate_occupations(Statistics::Fermionic, n, m).unwrap();
                    assert_eq!(f.len(), binomial(m, n), "fermions N={n} m={m}");
                } else {
                    assert!(enumerate_occupations(Statistics::Fermionic, n, m).is_err());
                }
            }
        }
    }

    #[test]
    fn named_examples() {
        assert_eq!(enumerate_occupations(Statistics::Bosonic, 20, 4).unwrap().len(), 1771);
        assert_eq!(enumerate_occupations(Statistics::Fermionic, 2, 8).unwrap().len(), 28);
        let filled = enumerate_occupations(Statistics::Fermionic, 2, 2).unwrap();
        assert_eq!(filled.len(), 1);
        assert_eq!(filled.occupation(0), &[1, 1]);
    }

    #[test]
    fn descending_lexicographic_order() {
        let t = enumerate_occupations(Statistics::Bosonic, 2, 3).unwrap();
        let got: Vec<Vec<u8>> = t.iter().map(|o| o.to_vec()).collect();
        assert_eq!(
            got,
            vec![vec![2, 0, 0], vec![1, 1, 0], vec![1, 0, 1], vec![0, 2, 0], vec![0, 1, 1], vec![0, 0, 2]]
        );
        let f = enumerate_occupations(Statistics::Fermionic, 2, 3).unwrap();
        let got: Vec<Vec<u8>> = f.iter().map(|o| o.to_vec()).collect();
        assert_eq!(got, vec![vec![1, 1, 0], vec![1, 0, 1], vec![0, 1, 1]]);
        for (i, occ) in t.iter().enumerate() {
            assert_eq!(t.index_of(occ), Some(i));
        }
    }

    #[test]
    fn bosonic_factors() {
        let t = enumerate_occupations(Statistics::Bosonic, 3, 2).unwrap();
        // a^dag_1 a_0 |2,1> = sqrt(2 * 2) |1,2>
        let (j, amp) = t.excite(&[2, 1], 1, 0).unwrap();
        assert_eq!(t.occupation(j), &[1, 2]);
        assert!((amp - 2.0).abs() < 1e-15);
        assert!(t.excite(&[0, 3], 1, 0).is_none());
    }

    #[test]
    fn fermionic_signs() {
        let t = enumerate_occupations(Statistics::Fermionic, 2, 3).unwrap();
        // a^dag_2 a_0 a^dag_0 a^dag_1 |0> = a^dag_2 a^dag_1 |0> = -a^dag_1 a^dag_2 |0>
        let (j, s) = t.excite(&[1, 1, 0], 2, 0).unwrap();
        assert_eq!(t.occupation(j), &[0, 1, 1]);
        assert_eq!(s, -1.0);
        // a^dag_2 a_1 a^dag_0 a^dag_1 |0> = a^dag_0 a^dag_2 |0>
        let (j, s) = t.excite(&[1, 1, 0], 2, 1).unwrap();
        assert_eq!(t.occupation(j), &[1, 0, 1]);
        assert_eq!(s, 1.0);
        assert!(t.excite(&[1, 1, 0], 1, 0).is_none());
    }

    #[test]
    fn one_body_table_is_hermitian() {
        let t = enumerate_occupations(Statistics::Fermionic, 2, 4).unwrap();
        let ops = OneBodyTable::new(&t);
        let dim = t.len();
        let eye = DMatrix::<C64>::identity(dim, dim);
        for p in 0..4 {
            for q in 0..4 {
                let a = ops.apply(p, q, &eye);
                let b = ops.apply(q, p, &eye);
                assert!((a - b.adjoint()).camax() < 1e-15);
            }
        }
    }
}
