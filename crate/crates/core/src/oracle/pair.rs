//! Exact solver for one boson and one fermion on the full grid: the
//! two-particle wavefunction is an `n x n` matrix `Psi[(x_B, x_F)]` and
//! `H Psi = h_B Psi + Psi h_F^T + (g_fb / dx) diag(Psi)`.

use nalgebra::DMatrix;

use crate::ansatz::MBState;
use crate::error::{Error, Result};
use crate::krylov;
use crate::model::{CheckedSystem, Species};
use crate::C64;

pub struct PairHamiltonian {
    h_b: DMatrix<C64>,
    h_f_t: DMatrix<C64>,
    contact: f64,
    n: usize,
    dx: f64,
}

impl PairHamiltonian {
    pub fn new(system: &CheckedSystem) -> Result<Self> {
        for s in Species::BOTH {
            if system.species(s).count != 1 {
                return Err(Error::invalid("pair", "needs exactly one particle per species"));
            }
        }
        let to_c = |m: DMatrix<f64>| m.map(|v| C64::new(v, 0.0));
        let dx = system.grid().dx();
        Ok(Self {
            h_b: to_c(system.one_body(Species::Boson).hamiltonian()),
            h_f_t: to_c(system.one_body(Species::Fermion).hamiltonian().transpose()),
            contact: system.interactions().g_fb / dx,
            n: system.grid().len(),
            dx,
        })
    }

    pub fn dim(&self) -> usize {
        self.n * self.n
    }

    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        let psi = DMatrix::from_column_slice(self.n, self.n, x);
        let mut out = &self.h_b * &psi + &psi * &self.h_f_t;
        for j in 0..self.n {
            out[(j, j)] += psi[(j, j)] * self.contact;
        }
        y.copy_from_slice(out.as_slice());
    }

    pub fn ground_state(&self) -> Result<(f64, Vec<C64>)> {
        let start: Vec<C64> = (0..self.dim()).map(|i| C64::new(1.0 / (1.0 + (i % 97) as f64), 0.0)).collect();
        krylov::lanczos_lowest(self.dim(), |x, y| self.apply(x, y), &start, 1e-10, 400)
    }

    /// `exp(-i H t) psi` in Krylov steps of at most 0.1.
    pub fn propagate(&self, psi: &[C64], t: f64) -> Result<Vec<C64>> {
        let steps = (t.abs() / 0.1).ceil().max(1.0) as usize;
        let dt = t / steps as f64;
        let mut v = psi.to_vec();
        for _ in 0..steps {
            v = krylov::expm_krylov(|x, y| self.apply(x, y), &v, dt, 1e-13, 60)?;
        }
        Ok(v)
    }

    /// Grid density of species `s`, normalized to one particle.
    pub fn density(&self, psi: &[C64], s: Species) -> Vec<f64> {
        let m = DMatrix::from_column_slice(self.n, self.n, psi);
        (0..self.n)
            .map(|j| {
                let w: f64 = match s {
                    Species::Boson => m.row(j).iter().map(|z| z.norm_sqr()).sum(),
                    Species::Fermion => m.column(j).iter().map(|z| z.norm_sqr()).sum(),
                };
                w / self.dx
            })
            .collect()
    }
}

/// Two-particle grid amplitude of a layered state with one particle per species.
pub fn pair_amplitude(state: &MBState) -> Result<Vec<C64>> {
    for s in Species::BOTH {
        if state.coeffs(s).nrows() != state.spfs(s).ncols() {
            return Err(Error::invalid("pair", "needs exactly one particle per species"));
        }
    }
    let ub = state.spfs(Species::Boson) * state.coeffs(Species::Boson);
    let uf = state.spfs(Species::Fermion) * state.coeffs(Species::Fermion);
    let m = state.schmidt.len();
    let lam = DMatrix::from_fn(m, m, |i, j| if i == j { C64::new(state.schmidt[i].max(0.0).sqrt(), 0.0) } else { C64::new(0.0, 0.0) });
    Ok((ub * lam * uf.transpose()).as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::model::{validate_system, InteractionSpec, SpeciesSpec, SystemSpec, TrapSpec};

    #[test]
    fn free_pair_is_sum_of_single_particle_levels() {
        let spec = SystemSpec {
            bosons: SpeciesSpec::bosons(1, 2),
            fermions: SpeciesSpec::fermions(1, 2),
            interactions: InteractionSpec::new(0.0, 0.0),
            trap: TrapSpec::new(0.1, 3.0),
            grid: GridSpec::wells(31, 3),
            schmidt_rank: 2,
        };
        let sys = validate_system(&spec).unwrap();
        let h = PairHamiltonian::new(&sys).unwrap();
        let (e, psi) = h.ground_state().unwrap();
        let (eb, _) = crate::linalg::eigh_real(&sys.one_body(Species::Boson).hamiltonian());
        let (ef, _) = crate::linalg::eigh_real(&sys.one_body(Species::Fermion).hamiltonian());
        assert!((e - eb[0] - ef[0]).abs() < 1e-9);
        let d: f64 = h.density(&psi, Species::Fermion).iter().sum::<f64>() * sys.grid().dx();
        assert!((d - 1.0).abs() < 1e-10);
        let later = h.propagate(&psi, 3.0).unwrap();
        assert!((super::super::fidelity(&psi, &later) - 1.0).abs() < 1e-10);
    }
}
