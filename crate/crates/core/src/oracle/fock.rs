//! Occupation-number algebra for the exact-diagonalization oracle, written
//! independently of the solver's tables.

use std::collections::HashMap;

use crate::model::Statistics;

#[derive(Debug, Clone)]
pub struct FockSpace {
    pub statistics: Statistics,
    pub n_particles: usize,
    pub n_orbitals: usize,
    pub states: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
}

fn fill(stats: Statistics, left: usize, pos: usize, occ: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    let m = occ.len();
    if pos == m {
        if left == 0 {
            out.push(occ.clone());
        }
        return;
    }
    let cap = match stats {
        Statistics::Bosonic => left,
        Statistics::Fermionic => left.min(1),
    };
    for k in 0..=cap {
        occ[pos] = k as u8;
        fill(stats, left - k, pos + 1, occ, out);
    }
    occ[pos] = 0;
}

impl FockSpace {
    pub fn new(statistics: Statistics, n_particles: usize, n_orbitals: usize) -> Self {
        let mut states = Vec::new();
        fill(statistics, n_particles, 0, &mut vec![0; n_orbitals], &mut states);
        let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Self {
            statistics,
            n_particles,
            n_orbitals,
            states,
            index,
        }
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, occ: &[u8]) -> Option<usize> {
        self.index.get(occ).copied()
    }

    /// `a_i |occ>` in place, returning the amplitude (zero if annihilated).
    fn annihilate(&self, occ: &mut [u8], i: usize) -> f64 {
        let n = occ[i];
        if n == 0 {
            return 0.0;
        }
        occ[i] -= 1;
        match self.statistics {
            Statistics::Bosonic => (n as f64).sqrt(),
            Statistics::Fermionic => jordan_wigner(occ, i),
        }
    }

    /// `a^dag_i |occ>` in place.
    fn create(&self, occ: &mut [u8], i: usize) -> f64 {
        match self.statistics {
            Statistics::Bosonic => {
                occ[i] += 1;
                (occ[i] as f64).sqrt()
            }
            Statistics::Fermionic => {
                if occ[i] == 1 {
                    return 0.0;
                }
                let s = jordan_wigner(occ, i);
                occ[i] = 1;
                s
            }
        }
    }

    /// Apply a normal-ordered string `a^dag_{c_1} .. a^dag_{c_k} a_{d_k} .. a_{d_1}`
    /// given as the annihilation list `d` (applied first to last) and the
    /// creation list `c` (applied last to first).
    pub fn apply_string(&self, state: usize, create: &[usize], annihilate: &[usize]) -> Option<(usize, f64)> {
        let mut occ = self.states[state].clone();
        let mut amp = 1.0;
        for &d in annihilate {
            amp *= self.annihilate(&mut occ, d);
            if amp == 0.0 {
                return None;
            }
        }
        for &c in create.iter().rev() {
            amp *= self.create(&mut occ, c);
            if amp == 0.0 {
                return None;
            }
        }
        Some((self.index_of(&occ)?, amp))
    }
}

fn jordan_wigner(occ: &[u8], i: usize) -> f64 {
    if occ[..i].iter().map(|&n| n as u32).sum::<u32>() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions() {
        assert_eq!(FockSpace::new(Statistics::Bosonic, 3, 4).dim(), 20);
        assert_eq!(FockSpace::new(Statistics::Fermionic, 2, 6).dim(), 15);
    }

    fn one_body(f: &FockSpace, i: usize, j: usize) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(f.dim(), f.dim());
        for s in 0..f.dim() {
            if let Some((t, a)) = f.apply_string(s, &[i], &[j]) {
                m[(t, s)] += a;
            }
        }
        m
    }

    #[test]
    fn one_body_operators_close_under_commutation() {
        // [E_ij, E_kl] = delta_jk E_il - delta_il E_kj for either statistics
        for stats in [Statistics::Bosonic, Statistics::Fermionic] {
            let f = FockSpace::new(stats, 2, 4);
            let e: Vec<Vec<_>> = (0..4).map(|i| (0..4).map(|j| one_body(&f, i, j)).collect()).collect();
            for (i, j, k, l) in [(0, 1, 1, 2), (2, 3, 0, 2), (1, 0, 0, 1), (3, 1, 1, 3), (0, 2, 1, 3)] {
                let lhs = &e[i][j] * &e[k][l] - &e[k][l] * &e[i][j];
                let mut rhs = nalgebra::DMatrix::zeros(f.dim(), f.dim());
                if j == k {
                    rhs += &e[i][l];
                }
                if i == l {
                    rhs -= &e[k][j];
                }
                assert!((lhs - rhs).amax() < 1e-14, "{stats:?} {i}{j}{k}{l}");
            }
        }
    }

    #[test]
    fn pair_annihilation_signs() {
        // swapping two creators flips the sign
        let f = FockSpace::new(Statistics::Fermionic, 2, 3);
        let s = f.index_of(&[1, 1, 0]).unwrap();
        let t = f.index_of(&[0, 1, 1]).unwrap();
        let (_, a) = f.apply_string(s, &[1, 2], &[0, 1]).unwrap();
        let (_, b) = f.apply_string(s, &[2, 1], &[0, 1]).unwrap();
        assert_eq!(a, -b);
        assert_eq!(f.apply_string(s, &[1, 2], &[0, 1]).unwrap().0, t);
    }
}
