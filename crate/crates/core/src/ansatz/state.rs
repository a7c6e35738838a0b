//! The two-layer wavefunction
//!
//! `Psi = sum_k sqrt(lambda_k) Psi^F_k Psi^B_k`, with each species function a
//! superposition of permanents (bosons) or determinants (fermions) over a
//! species-specific set of time-dependent orbitals.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::occupations::{enumerate_occupations, NumberStateTable, OneBodyTable};
use crate::error::{Error, Result};
use crate::linalg::{self, c};
use crate::model::{CheckedSystem, Species};
use crate::C64;

/// Snapshot of the many-body state in Schmidt (canonical) form.
///
/// Per-species arrays are indexed by [`Species::index`]. `coeffs[s]` is
/// `dim_s x M` with column `k` holding species function `k` in the
/// number-state basis; `spfs[s]` is `n_points x m_s` in DVR coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct MBState {
    pub schmidt: Vec<f64>,
    pub coeffs: [DMatrix<C64>; 2],
    pub spfs: [DMatrix<C64>; 2],
    pub time: f64,
}

/// Number-state table and one-body excitation operators for one species.
#[derive(Debug, Clone)]
pub struct SpeciesBasis {
    pub table: NumberStateTable,
    pub ops: OneBodyTable,
}

impl SpeciesBasis {
    pub fn dim(&self) -> usize {
        self.table.len()
    }

    pub fn n_orbitals(&self) -> usize {
        self.table.n_orbitals()
    }
}

#[derive(Debug, Clone)]
pub struct LayeredBasis {
    species: [SpeciesBasis; 2],
}

impl LayeredBasis {
    pub fn new(system: &CheckedSystem) -> Result<Self> {
        let build = |s: Species| -> Result<SpeciesBasis> {
            let spec = system.species(s);
            let table = enumerate_occupations(spec.statistics(), spec.count, spec.n_orbitals)?;
            let ops = OneBodyTable::new(&table);
            Ok(SpeciesBasis { table, ops })
        };
        Ok(Self {
            species: [build(Species::Boson)?, build(Species::Fermion)?],
        })
    }

    pub fn species(&self, s: Species) -> &SpeciesBasis {
        &self.species[s.index()]
    }
}

/// Working representation with a general `M x M` top-layer coefficient
/// matrix `top[(k_F, l_B)]`, as propagated by the equations of motion.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredState {
    pub top: DMatrix<C64>,
    pub coeffs: [DMatrix<C64>; 2],
    pub spfs: [DMatrix<C64>; 2],
    pub time: f64,
}

impl LayeredState {
    /// Top-layer coefficients with species `s` as the row index.
    pub fn top_for(&self, s: Species) -> DMatrix<C64> {
        match s {
            Species::Fermion => self.top.clone(),
            Species::Boson => self.top.transpose(),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.top.norm_squared()
    }

    /// Rotate species functions so the top layer becomes diagonal (SVD).
    pub fn canonicalize(&self) -> MBState {
        let m = self.top.nrows();
        let svd = self.top.clone().svd(true, true);
        let u = svd.u.expect("svd u");
        let v_t = svd.v_t.expect("svd v_t");
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let mut u_sorted = DMatrix::zeros(m, m);
        let mut vconj_sorted = DMatrix::zeros(m, m);
        for (dst, &src) in order.iter().enumerate() {
            u_sorted.set_column(dst, &u.column(src));
            // conj(V) column k = transpose of row k of V^H
            vconj_sorted.set_column(dst, &v_t.row(src).transpose());
        }
        let schmidt = order.iter().map(|&i| svd.singular_values[i].powi(2)).collect();
        let f = Species::Fermion.index();
        let b = Species::Boson.index();
        let mut coeffs = self.coeffs.clone();
        coeffs[f] = &self.coeffs[f] * u_sorted;
        coeffs[b] = &self.coeffs[b] * vconj_sorted;
        MBState {
            schmidt,
            coeffs,
            spfs: self.spfs.clone(),
            time: self.time,
        }
    }

    /// Restore orthonormal species functions (compensated in the top layer)
    /// and orthonormal orbitals (uncompensated Loewdin step). Returns the
    /// orbital orthonormality error found before the correction.
    pub fn reorthonormalize(&mut self, threshold: f64) -> f64 {
        for s in Species::BOTH {
            let cmat = &self.coeffs[s.index()];
            if linalg::orthonormality_deviation(cmat) > threshold {
                let overlap = cmat.adjoint() * cmat;
                let half = linalg::sqrt_herm(&overlap);
                let new = cmat * linalg::inverse_sqrt(&overlap);
                self.coeffs[s.index()] = new;
                // sum_k A_{k l} C_k = sum_j (sum_k S^{1/2}_{jk} A_{kl}) C'_j
                self.top = match s {
                    Species::Fermion => &half * &self.top,
                    Species::Boson => &self.top * half.transpose(),
                };
            }
        }
        let mut worst = 0.0f64;
        for s in Species::BOTH {
            let phi = &self.spfs[s.index()];
            let err = linalg::orthonormality_deviation(phi);
            worst = worst.max(err);
            if err > threshold {
                let overlap = phi.adjoint() * phi;
                self.spfs[s.index()] = phi * linalg::inverse_sqrt(&overlap);
            }
        }
        worst
    }
}

impl MBState {
    pub fn schmidt_rank(&self) -> usize {
        self.schmidt.len()
    }

    pub fn coeffs(&self, s: Species) -> &DMatrix<C64> {
        &self.coeffs[s.index()]
    }

    pub fn spfs(&self, s: Species) -> &DMatrix<C64> {
        &self.spfs[s.index()]
    }

    pub fn layered(&self) -> LayeredState {
        let m = self.schmidt.len();
        let top = DMatrix::from_diagonal(&DVector::from_iterator(m, self.schmidt.iter().map(|&l| c(l.max(0.0).sqrt()))));
        LayeredState {
            top,
            coeffs: self.coeffs.clone(),
            spfs: self.spfs.clone(),
            time: self.time,
        }
    }

    pub fn check_shapes(&self, basis: &LayeredBasis, n_points: usize) -> Result<()> {
        let m = self.schmidt.len();
        for s in Species::BOTH {
            let b = basis.species(s);
            let cmat = &self.coeffs[s.index()];
            if cmat.nrows() != b.dim() || cmat.ncols() != m {
                return Err(Error::ShapeMismatch {
                    what: "species coefficient block",
                    expected: b.dim() * m,
                    found: cmat.len(),
                });
            }
            let phi = &self.spfs[s.index()];
            if phi.nrows() != n_points || phi.ncols() != b.n_orbitals() {
                return Err(Error::ShapeMismatch {
                    what: "single-particle functions",
                    expected: n_points * b.n_orbitals(),
                    found: phi.len(),
                });
            }
        }
        Ok(())
    }
}

/// `<Psi|Psi>` from the Schmidt weights and species-function overlaps.
pub fn total_norm(state: &MBState) -> Result<f64> {
    let m = state.schmidt.len();
    let f = state.coeffs(Species::Fermion);
    let b = state.coeffs(Species::Boson);
    if f.ncols() != m || b.ncols() != m {
        return Err(Error::ShapeMismatch {
            what: "species coefficient columns",
            expected: m,
            found: f.ncols().min(b.ncols()),
        });
    }
    let sf = f.adjoint() * f;
    let sb = b.adjoint() * b;
    let amp: Vec<f64> = state.schmidt.iter().map(|l| l.max(0.0).sqrt()).collect();
    let mut total = C64::new(0.0, 0.0);
    for k in 0..m {
        for kp in 0..m {
            total += sf[(k, kp)] * sb[(k, kp)] * (amp[k] * amp[kp]);
        }
    }
    Ok(total.re)
}

/// Largest `|<phi_i|phi_j> - delta_ij|` over both species.
pub fn orthonormality_error(state: &MBState) -> f64 {
    Species::BOTH
        .iter()
        .map(|&s| linalg::orthonormality_deviation(state.spfs(s)))
        .fold(0.0, f64::max)
}

pub fn schmidt_spectrum(state: &MBState) -> Vec<f64> {
    let mut l = state.schmidt.clone();
    l.sort_by(|a, b| b.total_cmp(a));
    l
}

/// Entangled when at least two Schmidt weights exceed `threshold`.
pub fn is_entangled(state: &MBState, threshold: f64) -> bool {
    state.schmidt.iter().filter(|&&l| l > threshold).count() >= 2
}

pub const DEFAULT_ENTANGLEMENT_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitStrategy {
    /// Weight of the secondary Schmidt branches.
    pub eps_lambda: f64,
    /// Amplitude of the seeded random admixture in the species functions.
    pub perturbation: f64,
    /// Strength of a linear tilt added to the guess Hamiltonian.
    pub parity_offset: f64,
    pub seed: u64,
}

impl Default for InitStrategy {
    fn default() -> Self {
        Self {
            eps_lambda: 1e-6,
            perturbation: 1e-3,
            parity_offset: 0.0,
            seed: 0,
        }
    }
}

impl InitStrategy {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Lowest eigenvectors of the one-body Hamiltonian as orbitals and a single
/// dominant configuration per species, lightly perturbed.
pub fn init_guess(system: &CheckedSystem, strategy: InitStrategy) -> Result<MBState> {
    let basis = LayeredBasis::new(system)?;
    let m = system.schmidt_rank();
    let mut rng = ChaCha8Rng::seed_from_u64(strategy.seed);
    let grid = system.grid();
    let mut coeffs = [DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)];
    let mut spfs = [DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)];
    for s in Species::BOTH {
        let mut h = system.one_body(s).hamiltonian();
        if strategy.parity_offset != 0.0 {
            for (j, &x) in grid.points().iter().enumerate() {
                h[(j, j)] += strategy.parity_offset * x;
            }
        }
        let (_, vecs) = linalg::eigh_real(&h);
        let n_orb = system.species(s).n_orbitals;
        spfs[s.index()] = linalg::to_complex(&vecs.columns(0, n_orb).into_owned());

        let dim = basis.species(s).dim();
        let mut cmat = DMatrix::<C64>::zeros(dim, m);
        for k in 0..m {
            cmat[(k, k)] = c(1.0);
            if strategy.perturbation != 0.0 {
                for i in 0..dim {
                    cmat[(i, k)] += c(strategy.perturbation * rng.gen_range(-1.0..1.0));
                }
            }
        }
        linalg::gram_schmidt(&mut cmat);
        coeffs[s.index()] = cmat;
    }
    let mut schmidt = vec![strategy.eps_lambda; m];
    schmidt[0] = 1.0 - (m as f64 - 1.0) * strategy.eps_lambda;
    Ok(MBState {
        schmidt,
        coeffs,
        spfs,
        time: 0.0,
    })
}
