//! Full configuration interaction in a fixed orbital basis: the lowest
//! one-body eigenfunctions of each species.

use nalgebra::DMatrix;

use super::fock::FockSpace;
use crate::ansatz::MBState;
use crate::error::{Error, Result};
use crate::krylov;
use crate::linalg::{self, c};
use crate::model::{CheckedSystem, Species, Statistics};
use crate::C64;

pub const FCI_CAP: usize = 200_000;

pub struct FciBasis {
    /// Real orbital columns per species, in DVR coefficients.
    pub orbitals: [DMatrix<f64>; 2],
    /// `chi^T h chi` per species.
    pub one_body: [DMatrix<f64>; 2],
    pub spaces: [FockSpace; 2],
    pub dx: f64,
}

impl FciBasis {
    pub fn new(system: &CheckedSystem, n_orbitals: usize) -> Result<Self> {
        let n = system.grid().len();
        if n_orbitals == 0 || n_orbitals > n {
            return Err(Error::invalid("n_orb", format!("must lie in 1..={n}")));
        }
        let nb = system.species(Species::Boson).count;
        let nf = system.species(Species::Fermion).count;
        if nf > n_orbitals {
            return Err(Error::invalid("n_orb", "fewer orbitals than fermions"));
        }
        let size = binomial(nb + n_orbitals - 1, n_orbitals - 1).saturating_mul(binomial(n_orbitals, nf));
        if size > FCI_CAP {
            return Err(Error::CapExceeded { size, cap: FCI_CAP });
        }
        let mut orbitals = Vec::new();
        let mut one_body = Vec::new();
        for s in Species::BOTH {
            let h = system.one_body(s).hamiltonian();
            let (_, vecs) = linalg::eigh_real(&h);
            let chi = vecs.columns(0, n_orbitals).into_owned();
            one_body.push(chi.transpose() * &h * &chi);
            orbitals.push(chi);
        }
        let spaces = [
            FockSpace::new(Statistics::Bosonic, nb, n_orbitals),
            FockSpace::new(Statistics::Fermionic, nf, n_orbitals),
        ];
        Ok(Self {
            orbitals: [orbitals.remove(0), orbitals.remove(0)],
            one_body: [one_body.remove(0), one_body.remove(0)],
            spaces,
            dx: system.grid().dx(),
        })
    }

    pub fn n_orbitals(&self) -> usize {
        self.orbitals[0].ncols()
    }

    /// Product dimension; configuration `(b, f)` has index `b * dim_F + f`.
    pub fn dim(&self) -> usize {
        self.spaces[0].dim() * self.spaces[1].dim()
    }

    fn index(&self, b: usize, f: usize) -> usize {
        b * self.spaces[1].dim() + f
    }

    /// `<a^dag_i a_j>` in the fixed orbitals.
    pub fn orbital_density(&self, psi: &[C64], s: Species) -> DMatrix<C64> {
        let m = self.n_orbitals();
        let (db, df) = (self.spaces[0].dim(), self.spaces[1].dim());
        let space = &self.spaces[s.index()];
        let mut rho = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                let mut acc = c(0.0);
                for src in 0..space.dim() {
                    let Some((dst, amp)) = space.apply_string(src, &[i], &[j]) else { continue };
                    let other = if s == Species::Boson { df } else { db };
                    for o in 0..other {
                        let (from, to) = match s {
                            Species::Boson => (self.index(src, o), self.index(dst, o)),
                            Species::Fermion => (self.index(o, src), self.index(o, dst)),
                        };
                        acc += psi[to].conj() * psi[from] * amp;
                    }
                }
                rho[(i, j)] = acc;
            }
        }
        rho
    }

    /// Single-particle density on the grid.
    pub fn grid_density(&self, psi: &[C64], s: Species) -> Vec<f64> {
        let rho = self.orbital_density(psi, s);
        let chi = &self.orbitals[s.index()];
        let m = self.n_orbitals();
        (0..chi.nrows())
            .map(|x| {
                let mut v = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        v += rho[(i, j)].re * chi[(x, i)] * chi[(x, j)];
                    }
                }
                v / self.dx
            })
            .collect()
    }

    /// Projection of a layered state onto the fixed configuration basis.
    pub fn project(&self, state: &MBState) -> Vec<C64> {
        let proj: Vec<DMatrix<C64>> = Species::BOTH
            .iter()
            .map(|&s| {
                let chi = self.orbitals[s.index()].map(c);
                let overlap = chi.transpose() * state.spfs(s);
                let m_ml = overlap.ncols();
                let ml_space = FockSpace::new(self.spaces[s.index()].statistics, self.spaces[s.index()].n_particles, m_ml);
                let ed_space = &self.spaces[s.index()];
                let coeffs = state.coeffs(s);
                let ml_table = crate::ansatz::enumerate_occupations(ml_space.statistics, ml_space.n_particles, m_ml)
                    .expect("valid species");
                // number-state overlaps, ML states mapped through the solver's ordering
                let mut out = DMatrix::zeros(ed_space.dim(), coeffs.ncols());
                for (a, occ_ed) in ed_space.states.iter().enumerate() {
                    for (b, occ_ml) in ml_table.iter().enumerate() {
                        let ov = number_state_overlap(ed_space.statistics, occ_ed, occ_ml, &overlap);
                        if ov != c(0.0) {
                            for k in 0..coeffs.ncols() {
                                out[(a, k)] += ov * coeffs[(b, k)];
                            }
                        }
                    }
                }
                out
            })
            .collect();
        let mut psi = vec![c(0.0); self.dim()];
        for (k, &lambda) in state.schmidt.iter().enumerate() {
            let w = lambda.sqrt();
            for b in 0..self.spaces[0].dim() {
                let pb = proj[0][(b, k)];
                if pb == c(0.0) {
                    continue;
                }
                for f in 0..self.spaces[1].dim() {
                    psi[self.index(b, f)] += pb * proj[1][(f, k)] * w;
                }
            }
        }
        psi
    }
}

/// `<n; chi | m; phi>` for overlap matrix `S = chi^H phi`.
fn number_state_overlap(stats: Statistics, n: &[u8], m: &[u8], s: &DMatrix<C64>) -> C64 {
    let expand = |occ: &[u8]| -> Vec<usize> {
        occ.iter()
            .enumerate()
            .flat_map(|(i, &k)| std::iter::repeat(i).take(k as usize))
            .collect()
    };
    let rows = expand(n);
    let cols = expand(m);
    let sub = DMatrix::from_fn(rows.len(), cols.len(), |a, b| s[(rows[a], cols[b])]);
    match stats {
        Statistics::Fermionic => linalg::determinant(&sub),
        Statistics::Bosonic => {
            let fact = |occ: &[u8]| -> f64 { occ.iter().map(|&k| (1..=k as u64).product::<u64>() as f64).product() };
            linalg::permanent(&sub) / (fact(n) * fact(m)).sqrt()
        }
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r.min(usize::MAX as u128) as usize
}

/// Real symmetric Hamiltonian in compressed-row form.
#[derive(Debug, Clone)]
pub struct FciHamiltonian {
    pub dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl FciHamiltonian {
    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        for r in 0..self.dim {
            let mut acc = c(0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += x[self.cols[k]] * self.vals[k];
            }
            y[r] = acc;
        }
    }

    pub fn element(&self, r: usize, col: usize) -> f64 {
        (self.row_ptr[r]..self.row_ptr[r + 1])
            .find(|&k| self.cols[k] == col)
            .map_or(0.0, |k| self.vals[k])
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |r, col| self.element(r, col))
    }

    pub fn expectation(&self, psi: &[C64]) -> f64 {
        let mut h = vec![c(0.0); self.dim];
        self.apply(psi, &mut h);
        psi.iter().zip(&h).map(|(a, b)| (a.conj() * b).re).sum()
    }
}

/// Contact integrals `sum_x a_i b_j a_k b_l / dx` as a matrix indexed
/// `[(i*m + k), (j*m + l)]`.
fn contact_integrals(a: &DMatrix<f64>, b: &DMatrix<f64>, dx: f64) -> DMatrix<f64> {
    let m = a.ncols();
    let pairs = |o: &DMatrix<f64>| DMatrix::from_fn(o.nrows(), m * m, |x, ik| o[(x, ik / m)] * o[(x, ik % m)]);
    pairs(a).transpose() * pairs(b) / dx
}

/// Nonzero `(i, k, src, dst, amplitude)` of every `a^dag_i a_k`.
fn one_body_entries(space: &FockSpace) -> Vec<(usize, usize, usize, usize, f64)> {
    let m = space.n_orbitals;
    let mut out = Vec::new();
    for i in 0..m {
        for k in 0..m {
            for src in 0..space.dim() {
                if let Some((dst, a)) = space.apply_string(src, &[i], &[k]) {
                    out.push((i, k, src, dst, a));
                }
            }
        }
    }
    out
}

/// `H = sum h_ij a^dag_i a_j + (g_BB/2) sum V b^dag_i b^dag_j b_l b_k
///    + g_FB sum V b^dag_i b_k f^dag_j f_l` in the fixed basis.
pub fn fci_hamiltonian(system: &CheckedSystem, basis: &FciBasis) -> Result<FciHamiltonian> {
    let m = basis.n_orbitals();
    let g = system.interactions();
    let [bs, fs] = &basis.spaces;
    let (db, df) = (bs.dim(), fs.dim());
    // species-local parts
    let mut hb: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); db];
    let mut hf: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); df];
    let ops_b = one_body_entries(bs);
    let ops_f = one_body_entries(fs);
    for &(i, k, src, dst, a) in &ops_b {
        *hb[dst].entry(src).or_default() += basis.one_body[0][(i, k)] * a;
    }
    for &(i, k, src, dst, a) in &ops_f {
        *hf[dst].entry(src).or_default() += basis.one_body[1][(i, k)] * a;
    }
    if g.g_bb != 0.0 {
        let v = contact_integrals(&basis.orbitals[0], &basis.orbitals[0], basis.dx);
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for l in 0..m {
                        let w = 0.5 * g.g_bb * v[(i * m + k, j * m + l)];
                        if w == 0.0 {
                            continue;
                        }
                        for src in 0..db {
                            if let Some((dst, a)) = bs.apply_string(src, &[i, j], &[k, l]) {
                                *hb[dst].entry(src).or_default() += w * a;
                            }
                        }
                    }
                }
            }
        }
    }
    let v_fb = (g.g_fb != 0.0).then(|| contact_integrals(&basis.orbitals[0], &basis.orbitals[1], basis.dx));
    let mut row_ptr = vec![0];
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut row: std::collections::BTreeMap<usize, f64> = Default::default();
    // rows[dst] collects (src, value)
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); db * df];
    for b in 0..db {
        for f in 0..df {
            let dst = b * df + f;
            for (&b_src, &a) in &hb[b] {
                rows[dst].push((b_src * df + f, a));
            }
            for (&f_src, &a) in &hf[f] {
                rows[dst].push((b * df + f_src, a));
            }
        }
    }
    if let Some(v) = &v_fb {
        for &(i, k, bsrc, bdst, ab) in &ops_b {
            for &(j, l, fsrc, fdst, af) in &ops_f {
                let w = g.g_fb * v[(i * m + k, j * m + l)];
                rows[bdst * df + fdst].push((bsrc * df + fsrc, w * ab * af));
            }
        }
    }
    for entries in rows {
        row.clear();
        for (col, a) in entries {
            *row.entry(col).or_default() += a;
        }
        for (&col, &a) in &row {
            if a != 0.0 {
                cols.push(col);
                vals.push(a);
            }
        }
        row_ptr.push(cols.len());
    }
    Ok(FciHamiltonian {
        dim: db * df,
        row_ptr,
        cols,
        vals,
    })
}

/// Lowest eigenpair, residual below `1e-10`.
pub fn ed_ground_state(h: &FciHamiltonian) -> Result<(f64, Vec<C64>)> {
    let start: Vec<C64> = (0..h.dim).map(|i| c(1.0 / (1.0 + i as f64))).collect();
    krylov::lanczos_lowest(h.dim, |x, y| h.apply(x, y), &start, 1e-10, 400)
}

/// `exp(-i H t) psi` in Krylov steps of at most `0.1`.
pub fn ed_propagate(h: &FciHamiltonian, psi: &[C64], t: f64) -> Result<Vec<C64>> {
    let steps = (t.abs() / 0.1).ceil().max(1.0) as usize;
    let dt = t / steps as f64;
    let mut v = psi.to_vec();
    for _ in 0..steps {
        v = krylov::expm_krylov(|x, y| h.apply(x, y), &v, dt, 1e-13, 60)?;
    }
    Ok(v)
}

pub fn fidelity(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>().norm()
}
