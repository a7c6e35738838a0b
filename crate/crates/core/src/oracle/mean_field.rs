//! Split-step Gross-Pitaevskii solver for the bosons coupled to time-dependent
//! Hartree-Fock orbitals for the fermions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, c};
use crate::model::{CheckedSystem, Species};
use crate::C64;

/// Grid orbitals in DVR coefficients: one condensate orbital, `N_F` fermion orbitals.
#[derive(Debug, Clone)]
pub struct MeanFieldState {
    pub boson: DVector<C64>,
    pub fermions: DMatrix<C64>,
    pub time: f64,
}

impl MeanFieldState {
    pub fn density(&self, s: Species, system: &CheckedSystem) -> Vec<f64> {
        let dx = system.grid().dx();
        match s {
            Species::Boson => {
                let n = system.species(Species::Boson).count as f64;
                self.boson.iter().map(|z| n * z.norm_sqr() / dx).collect()
            }
            Species::Fermion => (0..self.fermions.nrows())
                .map(|x| self.fermions.row(x).iter().map(|z| z.norm_sqr()).sum::<f64>() / dx)
                .collect(),
        }
    }
}

/// Fourth-order composition of Strang steps.
const YOSHIDA: [f64; 3] = [1.351_207_191_959_657_7, -1.702_414_383_919_315_3, 1.351_207_191_959_657_7];

struct Kinetic {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
}

impl Kinetic {
    fn new(system: &CheckedSystem, s: Species) -> Self {
        let (values, vectors) = linalg::eigh_real(&system.one_body(s).kinetic);
        Self { vectors, values }
    }

    /// `exp(-i T tau)` (real time) or `exp(-T tau)` (imaginary time) as a dense matrix.
    fn propagator(&self, tau: f64, imaginary: bool) -> DMatrix<C64> {
        let phases = self.values.map(|e| if imaginary { c((-e * tau).exp()) } else { C64::new(0.0, -e * tau).exp() });
        let u = self.vectors.map(c);
        &u * DMatrix::from_diagonal(&phases) * u.transpose()
    }
}

pub struct SplitStep<'a> {
    system: &'a CheckedSystem,
    dt: f64,
    imaginary: bool,
    kinetic: [Vec<DMatrix<C64>>; 2],
    potential: [DVector<f64>; 2],
}

impl<'a> SplitStep<'a> {
    pub fn new(system: &'a CheckedSystem, dt: f64, imaginary: bool) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        let kinetic = Species::BOTH.map(|s| {
            let k = Kinetic::new(system, s);
            YOSHIDA.iter().map(|w| k.propagator(w * dt, imaginary)).collect()
        });
        let potential = Species::BOTH.map(|s| system.one_body(s).potential.clone());
        Ok(Self {
            system,
            dt,
            imaginary,
            kinetic,
            potential,
        })
    }

    /// Multiply by `exp(-i V tau)`. The densities entering `V` are unchanged by
    /// a real-time phase, so this sub-step is exact.
    fn potential_step(&self, st: &mut MeanFieldState, tau: f64) {
        let dx = self.system.grid().dx();
        let g = self.system.interactions();
        let nb = self.system.species(Species::Boson).count as f64;
        let n = st.boson.len();
        let rho_b: Vec<f64> = st.boson.iter().map(|z| z.norm_sqr() / dx).collect();
        let rho_f: Vec<f64> = (0..n)
            .map(|x| st.fermions.row(x).iter().map(|z| z.norm_sqr()).sum::<f64>() / dx)
            .collect();
        let factor = |v: f64| if self.imaginary { c((-v * tau).exp()) } else { C64::new(0.0, -v * tau).exp() };
        for x in 0..n {
            let vb = self.potential[0][x] + g.g_bb * (nb - 1.0) * rho_b[x] + g.g_fb * rho_f[x];
            let vf = self.potential[1][x] + g.g_fb * nb * rho_b[x];
            st.boson[x] *= factor(vb);
            let ff = factor(vf);
            for k in 0..st.fermions.ncols() {
                st.fermions[(x, k)] *= ff;
            }
        }
    }

    fn kinetic_step(&self, st: &mut MeanFieldState, stage: usize) {
        st.boson = &self.kinetic[0][stage] * &st.boson;
        st.fermions = &self.kinetic[1][stage] * &st.fermions;
    }

    pub fn step(&self, st: &mut MeanFieldState) {
        for (stage, w) in YOSHIDA.iter().enumerate() {
            let tau = w * self.dt;
            self.potential_step(st, 0.5 * tau);
            self.kinetic_step(st, stage);
            self.potential_step(st, 0.5 * tau);
        }
        if self.imaginary {
            let norm = st.boson.norm();
            st.boson /= c(norm);
            linalg::gram_schmidt(&mut st.fermions);
        }
        st.time += self.dt;
    }

    /// Mean-field energy of a normalized state.
    pub fn energy(&self, st: &MeanFieldState) -> f64 {
        let dx = self.system.grid().dx();
        let g = self.system.interactions();
        let nb = self.system.species(Species::Boson).count as f64;
        let hb = self.system.one_body(Species::Boson).hamiltonian().map(c);
        let hf = self.system.one_body(Species::Fermion).hamiltonian().map(c);
        let eb = (st.boson.adjoint() * &hb * &st.boson)[(0, 0)].re * nb;
        let ef = (st.fermions.adjoint() * &hf * &st.fermions).trace().re;
        let rho_b: Vec<f64> = st.boson.iter().map(|z| nb * z.norm_sqr()).collect();
        let rho_f: Vec<f64> = (0..st.boson.len())
            .map(|x| st.fermions.row(x).iter().map(|z| z.norm_sqr()).sum::<f64>())
            .collect();
        let bb: f64 = rho_b.iter().map(|r| r * r).sum::<f64>() * 0.5 * g.g_bb * (nb - 1.0) / nb / dx;
        let fb: f64 = rho_b.iter().zip(&rho_f).map(|(a, b)| a * b).sum::<f64>() * g.g_fb / dx;
        eb + ef + bb + fb
    }
}

/// Real-time evolution by `t` with steps of at most `dt`.
pub fn gp_split_step(system: &CheckedSystem, initial: &MeanFieldState, t: f64, dt: f64) -> Result<MeanFieldState> {
    let steps = (t / dt).ceil().max(1.0) as usize;
    let solver = SplitStep::new(system, t / steps as f64, false)?;
    let mut st = initial.clone();
    let t_end = initial.time + t;
    for _ in 0..steps {
        solver.step(&mut st);
    }
    st.time = t_end;
    Ok(st)
}

/// Imaginary-time relaxation by `tau` from the lowest one-body orbitals.
pub fn gp_ground_state(system: &CheckedSystem, tau: f64, dt: f64) -> Result<MeanFieldState> {
    let nf = system.species(Species::Fermion).count;
    let lowest = |s: Species, k: usize| {
        let (_, v) = linalg::eigh_real(&system.one_body(s).hamiltonian());
        v.columns(0, k).map(c)
    };
    let mut st = MeanFieldState {
        boson: lowest(Species::Boson, 1).column(0).into_owned(),
        fermions: lowest(Species::Fermion, nf),
        time: 0.0,
    };
    let steps = (tau / dt).ceil() as usize;
    if steps == 0 {
        return Ok(st);
    }
    let solver = SplitStep::new(system, tau / steps as f64, true)?;
    for _ in 0..steps {
        solver.step(&mut st);
    }
    st.time = 0.0;
    Ok(st)
}

pub fn l2_distance(a: &[f64], b: &[f64], dx: f64) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() * dx).sqrt()
}
