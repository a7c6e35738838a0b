//! Orbital-space reduced densities and the per-species intermediates shared
//! by the equations of motion and the observables.

use nalgebra::DMatrix;

use crate::ansatz::{LayeredBasis, LayeredState, SpeciesBasis};
use crate::linalg::{self, c};
use crate::model::{CheckedSystem, Species};
use crate::C64;

/// Quantities of one species that depend only on its own coefficients and
/// orbitals.
pub(crate) struct SpeciesTerms {
    pub m: usize,
    /// `h phi`, `n x m`.
    pub hphi: DMatrix<C64>,
    /// `<phi_p|h|phi_q>`.
    pub h_orb: DMatrix<C64>,
    /// Row `p*m+q` holds `conj(phi_p(x)) phi_q(x)` in DVR coefficients.
    pub pair: DMatrix<C64>,
    /// `E_pq C` for every pair, `dim x M`.
    pub y: Vec<DMatrix<C64>>,
    /// `<species_k|E_pq|species_k'>`, `M x M`.
    pub d: Vec<DMatrix<C64>>,
}

impl SpeciesTerms {
    pub fn new(state: &LayeredState, s: Species, basis: &SpeciesBasis, system: Option<&CheckedSystem>) -> Self {
        let phi = &state.spfs[s.index()];
        let cmat = &state.coeffs[s.index()];
        let m = phi.ncols();
        let n = phi.nrows();
        let (hphi, h_orb) = match system {
            Some(sys) => {
                let ob = sys.one_body(s);
                let mut hphi = linalg::real_times_complex(&ob.kinetic, phi);
                for j in 0..n {
                    let v = ob.potential[j];
                    for i in 0..m {
                        hphi[(j, i)] += phi[(j, i)] * v;
                    }
                }
                let h_orb = phi.adjoint() * &hphi;
                (hphi, h_orb)
            }
            None => (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)),
        };
        let mut pair = DMatrix::zeros(m * m, n);
        for p in 0..m {
            for q in 0..m {
                for j in 0..n {
                    pair[(p * m + q, j)] = phi[(j, p)].conj() * phi[(j, q)];
                }
            }
        }
        let mut y = Vec::with_capacity(m * m);
        let mut d = Vec::with_capacity(m * m);
        let c_adj = cmat.adjoint();
        for p in 0..m {
            for q in 0..m {
                let ypq = basis.ops.apply(p, q, cmat);
                d.push(&c_adj * &ypq);
                y.push(ypq);
            }
        }
        Self {
            m,
            hphi,
            h_orb,
            pair,
            y,
            d,
        }
    }

    /// `sum_pq w_pq E_pq C`.
    pub fn one_body_action(&self, w: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(self.y[0].nrows(), self.y[0].ncols());
        for p in 0..self.m {
            for q in 0..self.m {
                let coef = w[(p, q)];
                if coef != c(0.0) {
                    out += &self.y[p * self.m + q] * coef;
                }
            }
        }
        out
    }

    /// `sum_{k k'} weight_{k k'} d[pq]_{k k'}` for every pair, as an `m x m` matrix.
    pub fn contract(&self, weight: &DMatrix<C64>) -> DMatrix<C64> {
        DMatrix::from_fn(self.m, self.m, |p, q| weight.component_mul(&self.d[p * self.m + q]).sum())
    }

    /// `<E_pq E_rs>` weighted over species functions with `weight`,
    /// indexed `[(p*m+q), (r*m+s)]`.
    pub fn pair_products(&self, weight: &DMatrix<C64>) -> DMatrix<C64> {
        let m = self.m;
        // sum_{l l'} w_{l l'} (Y[qp]^H Y[rs])_{l l'} = sum_{J,l} conj(Y[qp]_{J l}) (Y[rs] w^T)_{J l}
        let weighted: Vec<DMatrix<C64>> = self.y.iter().map(|yrs| yrs * weight.transpose()).collect();
        DMatrix::from_fn(m * m, m * m, |pq, rs| {
            let (p, q) = (pq / m, pq % m);
            self.y[q * m + p].dotc(&weighted[rs])
        })
    }
}

/// Orbital reduced densities of the full state.
#[derive(Debug, Clone)]
pub struct OrbitalDensities {
    /// `rho1[s][(p, q)] = <a^dag_p a_q>`; trace is `N_s`.
    pub rho1: [DMatrix<C64>; 2],
    /// `rho2[s][(p*m+q, r*m+s)] = <a^dag_p a^dag_r a_s a_q>`.
    pub rho2: [DMatrix<C64>; 2],
    /// `inter[(p*mF+q, r*mB+s)] = <E^F_pq E^B_rs>`.
    pub inter: DMatrix<C64>,
}

/// `sum_j conj(A_s[k, j]) A_s[k', j]` with species `s` on the rows.
pub(crate) fn top_density(top_s: &DMatrix<C64>) -> DMatrix<C64> {
    top_s.conjugate() * top_s.transpose()
}

pub(crate) fn interspecies_products(
    top: &DMatrix<C64>,
    fermions: &SpeciesTerms,
    bosons: &SpeciesTerms,
) -> DMatrix<C64> {
    let top_adj = top.adjoint();
    let mut out = DMatrix::zeros(fermions.d.len(), bosons.d.len());
    for (pq, df) in fermions.d.iter().enumerate() {
        let p = &top_adj * df * top;
        for (rs, db) in bosons.d.iter().enumerate() {
            out[(pq, rs)] = p.component_mul(db).sum();
        }
    }
    out
}

pub(crate) fn two_body_from_products(products: &DMatrix<C64>, rho1: &DMatrix<C64>) -> DMatrix<C64> {
    let m = rho1.nrows();
    let mut rho2 = products.clone();
    for p in 0..m {
        for q in 0..m {
            for s in 0..m {
                // delta_{qr}: r = q
                rho2[(p * m + q, q * m + s)] -= rho1[(p, s)];
            }
        }
    }
    rho2
}

pub fn orbital_rdms(state: &LayeredState, basis: &LayeredBasis) -> OrbitalDensities {
    let terms = Species::BOTH.map(|s| SpeciesTerms::new(state, s, basis.species(s), None));
    let mut rho1 = [DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)];
    let mut rho2 = [DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)];
    for s in Species::BOTH {
        let t = &terms[s.index()];
        let w = top_density(&state.top_for(s));
        let r1 = t.contract(&w);
        rho2[s.index()] = two_body_from_products(&t.pair_products(&w), &r1);
        rho1[s.index()] = r1;
    }
    let inter = interspecies_products(
        &state.top,
        &terms[Species::Fermion.index()],
        &terms[Species::Boson.index()],
    );
    OrbitalDensities { rho1, rho2, inter }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::ansatz::amplitude::species_function_amplitude;
    use crate::ansatz::{init_guess, InitStrategy, MBState};
    use crate::grid::GridSpec;
    use crate::model::{validate_system, InteractionSpec, SpeciesSpec, SystemSpec, TrapSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn system(n_b: usize, n_f: usize, m: usize, m_f: usize, m_b: usize, points: usize) -> CheckedSystem {
        validate_system(&SystemSpec {
            bosons: SpeciesSpec::bosons(n_b, m_b),
            fermions: SpeciesSpec::fermions(n_f, m_f),
            interactions: InteractionSpec::new(0.1, 0.2),
            trap: TrapSpec::new(0.1, 3.0),
            grid: GridSpec::wells(points, 3),
            schmidt_rank: m,
        })
        .unwrap()
    }

    pub(crate) fn randomize(state: &mut MBState, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for block in state.coeffs.iter_mut().chain(state.spfs.iter_mut()) {
            for z in block.iter_mut() {
                *z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
            linalg::gram_schmidt(block);
        }
        let mut l: Vec<f64> = (0..state.schmidt.len()).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = l.iter().sum();
        l.iter_mut().for_each(|v| *v /= total);
        l.sort_by(|a, b| b.total_cmp(a));
        state.schmidt = l;
    }

    #[test]
    fn single_determinant_fermions() {
        let sys = system(1, 2, 1, 4, 1, 21);
        let st = init_guess(&sys, InitStrategy { perturbation: 0.0, ..Default::default() }).unwrap();
        let basis = LayeredBasis::new(&sys).unwrap();
        let rdm = orbital_rdms(&st.layered(), &basis);
        let expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0), c(1.0), c(0.0), c(0.0)]));
        assert!((&rdm.rho1[Species::Fermion.index()] - expected).camax() < 1e-14);
    }

    #[test]
    fn condensate_density() {
        let sys = system(6, 1, 1, 1, 1, 21);
        let st = init_guess(&sys, InitStrategy::default()).unwrap();
        let basis = LayeredBasis::new(&sys).unwrap();
        let rdm = orbital_rdms(&st.layered(), &basis);
        assert!((rdm.rho1[Species::Boson.index()][(0, 0)] - c(6.0)).norm() < 1e-13);
        assert!((rdm.rho2[Species::Boson.index()][(0, 0)] - c(30.0)).norm() < 1e-12);
    }

    #[test]
    fn hermiticity_trace_and_contraction() {
        let sys = system(3, 2, 3, 4, 3, 21);
        let mut st = init_guess(&sys, InitStrategy::default()).unwrap();
        randomize(&mut st, 5);
        let basis = LayeredBasis::new(&sys).unwrap();
        let rdm = orbital_rdms(&st.layered(), &basis);
        for s in Species::BOTH {
            let r1 = &rdm.rho1[s.index()];
            let n = sys.species(s).count as f64;
            assert!((r1 - r1.adjoint()).camax() < 1e-12);
            assert!((r1.trace() - c(n)).norm() < 1e-10);
            let m = r1.nrows();
            let r2 = &rdm.rho2[s.index()];
            for i in 0..m {
                for j in 0..m {
                    // sum_k rho2[i k, j k] with rho2 indexed (p q),(r s) = <p^ r^ s q>
                    let mut sum = c(0.0);
                    for k in 0..m {
                        sum += r2[(i * m + j, k * m + k)];
                    }
                    assert!((sum - r1[(i, j)] * (n - 1.0)).norm() < 1e-10, "species {s:?}");
                }
            }
        }
        let inter_trace: C64 = (0..4).flat_map(|p| (0..3).map(move |r| (p, r))).map(|(p, r)| rdm.inter[(p * 4 + p, r * 3 + r)]).sum();
        assert!((inter_trace - c(6.0)).norm() < 1e-10);
    }

    #[test]
    fn two_boson_rdm_matches_first_quantized_contraction() {
        // single species function: two bosons in three orbitals (6 permanents)
        let sys = system(2, 1, 1, 1, 3, 15);
        let mut st = init_guess(&sys, InitStrategy::default()).unwrap();
        randomize(&mut st, 17);
        st.schmidt = vec![1.0];
        let basis = LayeredBasis::new(&sys).unwrap();
        let rdm = orbital_rdms(&st.layered(), &basis);
        let table = &basis.species(Species::Boson).table;
        assert_eq!(table.len(), 6);
        let n = sys.grid().len();
        let phi = st.spfs(Species::Boson);
        let coeffs: Vec<C64> = st.coeffs(Species::Boson).column(0).iter().copied().collect();
        let psi = DMatrix::from_fn(n, n, |a, b| species_function_amplitude(table, &coeffs, phi, &[a, b]));
        // rho1(a, b) = N sum_x2 psi(a, x2) conj(psi(b, x2)) in DVR coefficients
        let dense = (&psi * psi.adjoint()) * c(2.0);
        let r1 = &rdm.rho1[Species::Boson.index()];
        let from_orbitals = phi * r1.transpose() * phi.adjoint();
        assert!((dense - from_orbitals).camax() < 1e-12);
    }
}
