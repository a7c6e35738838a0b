//! Position-space reduced densities, natural populations, position variance
//! and coherence functions.

use nalgebra::DMatrix;

use crate::ansatz::{LayeredBasis, MBState};
use crate::error::{Error, Result};
use crate::linalg::{self, c};
use crate::model::{CheckedSystem, Species};
use crate::propagator::{orbital_rdms, OrbitalDensities};
use crate::C64;

/// One-body density matrix `rho(x_a, x_b) = <psi^dag(x_b) psi(x_a)>` on the
/// grid, with quadrature trace `N`.
#[derive(Debug, Clone)]
pub struct DensityMatrix1 {
    pub species: Species,
    pub matrix: DMatrix<C64>,
    pub dx: f64,
    pub time: f64,
}

/// Two-body density `rho(x_a, x_b) = <psi^dag_s(x_a) psi^dag_t(x_b) psi_t(x_b) psi_s(x_a)>`.
#[derive(Debug, Clone)]
pub struct DensityMatrix2Diag {
    pub species: (Species, Species),
    pub matrix: DMatrix<f64>,
    pub dx: f64,
    pub time: f64,
}

#[derive(Debug, Clone)]
pub struct NaturalOrbitals {
    /// Descending.
    pub populations: Vec<f64>,
    /// Columns are quadrature-normalized grid functions.
    pub orbitals: DMatrix<C64>,
}

/// A coherence function with entries masked where a density is below the
/// floor.
#[derive(Debug, Clone)]
pub struct Coherence<T: nalgebra::Scalar> {
    pub values: DMatrix<T>,
    /// Per grid point: density above the floor.
    pub defined: Vec<bool>,
}

impl<T: nalgebra::Scalar + Copy> Coherence<T> {
    pub fn get(&self, a: usize, b: usize) -> Option<T> {
        (self.defined[a] && self.defined[b]).then(|| self.values[(a, b)])
    }
}

/// Cached analysis of one state.
pub struct StateAnalysis<'a> {
    pub system: &'a CheckedSystem,
    pub state: &'a MBState,
    pub rdm: OrbitalDensities,
}

impl<'a> StateAnalysis<'a> {
    pub fn new(system: &'a CheckedSystem, basis: &LayeredBasis, state: &'a MBState) -> Result<Self> {
        state.check_shapes(basis, system.grid().len())?;
        let rdm = orbital_rdms(&state.layered(), basis);
        Ok(Self { system, state, rdm })
    }

    fn dx(&self) -> f64 {
        self.system.grid().dx()
    }

    pub fn rho1(&self, s: Species) -> DensityMatrix1 {
        let phi = self.state.spfs(s);
        let r = &self.rdm.rho1[s.index()];
        DensityMatrix1 {
            species: s,
            matrix: phi * r.transpose() * phi.adjoint() / c(self.dx()),
            dx: self.dx(),
            time: self.state.time,
        }
    }

    /// Diagonal of `rho1` without forming the full matrix.
    pub fn density(&self, s: Species) -> Vec<f64> {
        let phi = self.state.spfs(s);
        let r = &self.rdm.rho1[s.index()];
        let m = r.nrows();
        (0..phi.nrows())
            .map(|j| {
                let mut v = c(0.0);
                for p in 0..m {
                    for q in 0..m {
                        v += r[(p, q)] * phi[(j, p)].conj() * phi[(j, q)];
                    }
                }
                v.re / self.dx()
            })
            .collect()
    }

    pub fn rho2_diag(&self, s: Species, t: Species) -> DensityMatrix2Diag {
        let pair = |sp: Species| {
            let phi = self.state.spfs(sp);
            let m = phi.ncols();
            DMatrix::from_fn(m * m, phi.nrows(), |pq, x| phi[(x, pq / m)].conj() * phi[(x, pq % m)])
        };
        let ps = pair(s);
        let dx2 = self.dx() * self.dx();
        let full = if s == t {
            ps.transpose() * &self.rdm.rho2[s.index()] * &ps
        } else {
            let pt = pair(t);
            match s {
                Species::Fermion => ps.transpose() * &self.rdm.inter * &pt,
                Species::Boson => ps.transpose() * self.rdm.inter.transpose() * &pt,
            }
        };
        DensityMatrix2Diag {
            species: (s, t),
            matrix: full.map(|z| z.re / dx2),
            dx: self.dx(),
            time: self.state.time,
        }
    }

    /// Per-particle variance `<x^2> - <x>^2` of the density.
    pub fn position_variance(&self, s: Species) -> f64 {
        variance_of_density(self.system.grid().points(), &self.density(s), self.dx())
    }

    /// Natural populations from the orbital density matrix, descending.
    pub fn natural_populations(&self, s: Species) -> Vec<f64> {
        let (values, _) = linalg::eigh(&self.rdm.rho1[s.index()]);
        let mut v: Vec<f64> = values.iter().copied().collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    fn density_floor(&self, s: Species) -> f64 {
        1e-8 * self.system.species(s).count as f64 / self.system.grid().box_length()
    }

    pub fn g1(&self, s: Species) -> Coherence<C64> {
        let dm = self.rho1(s);
        let dens: Vec<f64> = (0..dm.matrix.nrows()).map(|j| dm.matrix[(j, j)].re).collect();
        let floor = self.density_floor(s);
        let defined: Vec<bool> = dens.iter().map(|&d| d > floor).collect();
        let values = DMatrix::from_fn(dens.len(), dens.len(), |a, b| {
            if defined[a] && defined[b] {
                dm.matrix[(a, b)] / (dens[a] * dens[b]).sqrt()
            } else {
                C64::new(f64::NAN, f64::NAN)
            }
        });
        Coherence { values, defined }
    }

    pub fn g2(&self, s: Species, t: Species) -> Coherence<f64> {
        let r2 = self.rho2_diag(s, t);
        let ds = self.density(s);
        let dt = self.density(t);
        let (fs, ft) = (self.density_floor(s), self.density_floor(t));
        let defined: Vec<bool> = ds.iter().zip(&dt).map(|(&a, &b)| a > fs && b > ft).collect();
        let def_s: Vec<bool> = ds.iter().map(|&a| a > fs).collect();
        let def_t: Vec<bool> = dt.iter().map(|&b| b > ft).collect();
        let values = DMatrix::from_fn(ds.len(), dt.len(), |a, b| {
            if def_s[a] && def_t[b] {
                r2.matrix[(a, b)] / (ds[a] * dt[b])
            } else {
                f64::NAN
            }
        });
        Coherence { values, defined }
    }
}

pub fn rho1(system: &CheckedSystem, state: &MBState, s: Species) -> Result<DensityMatrix1> {
    let basis = LayeredBasis::new(system)?;
    Ok(StateAnalysis::new(system, &basis, state)?.rho1(s))
}

pub fn density(system: &CheckedSystem, state: &MBState, s: Species) -> Result<Vec<f64>> {
    let basis = LayeredBasis::new(system)?;
    Ok(StateAnalysis::new(system, &basis, state)?.density(s))
}

pub fn rho2_diag(system: &CheckedSystem, state: &MBState, s: Species, t: Species) -> Result<DensityMatrix2Diag> {
    let basis = LayeredBasis::new(system)?;
    Ok(StateAnalysis::new(system, &basis, state)?.rho2_diag(s, t))
}

pub fn position_variance(system: &CheckedSystem, state: &MBState, s: Species) -> Result<f64> {
    let basis = LayeredBasis::new(system)?;
    Ok(StateAnalysis::new(system, &basis, state)?.position_variance(s))
}

pub fn g1(system: &CheckedSystem, state: &MBState, s: Species) -> Result<Coherence<C64>> {
    let basis = LayeredBasis::new(system)?;
    Ok(StateAnalysis::new(system, &basis, state)?.g1(s))
}

pub fn g2(system: &CheckedSystem, state: &MBState, s: Species, t: Species) -> Result<Coherence<f64>> {
    let basis = LayeredBasis::new(system)?;
    Ok(StateAnalysis::new(system, &basis, state)?.g2(s, t))
}

/// Per-particle `<x^2> - <x>^2` of a grid density.
pub fn variance_of_density(points: &[f64], density: &[f64], dx: f64) -> f64 {
    let n: f64 = density.iter().sum::<f64>() * dx;
    let mean: f64 = points.iter().zip(density).map(|(x, d)| x * d).sum::<f64>() * dx / n;
    let second: f64 = points.iter().zip(density).map(|(x, d)| x * x * d).sum::<f64>() * dx / n;
    second - mean * mean
}

/// Eigen-decomposition of a one-body density matrix as an integral kernel.
pub fn natural_populations(dm: &DensityMatrix1) -> NaturalOrbitals {
    let kernel = &dm.matrix * c(dm.dx);
    let (values, vectors) = linalg::eigh(&kernel);
    let n = values.len();
    let weight_peak = |col: usize| -> usize {
        (0..n)
            .max_by(|&a, &b| vectors[(a, col)].norm_sqr().total_cmp(&vectors[(b, col)].norm_sqr()))
            .unwrap_or(0)
    };
    let mut order: Vec<usize> = (0..n).collect();
    let scale = values.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    order.sort_by(|&a, &b| {
        if (values[a] - values[b]).abs() <= 1e-10 * scale {
            weight_peak(a).cmp(&weight_peak(b))
        } else {
            values[b].total_cmp(&values[a])
        }
    });
    let mut orbitals = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = vectors.column(src);
        let peak = col.iter().copied().fold(c(0.0), |acc, z| if z.norm() > acc.norm() + 1e-14 { z } else { acc });
        let phase = if peak.norm() > 0.0 { peak.conj() / peak.norm() } else { c(1.0) };
        orbitals.set_column(dst, &(col * phase / c(dm.dx.sqrt())));
    }
    NaturalOrbitals {
        populations: order.iter().map(|&i| values[i]).collect(),
        orbitals,
    }
}

/// Variance via natural orbitals: `sum_i n_i <chi_i|x^k|chi_i>`.
pub fn variance_from_natural_orbitals(points: &[f64], nat: &NaturalOrbitals, dx: f64) -> f64 {
    let total: f64 = nat.populations.iter().sum();
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for (i, &n_i) in nat.populations.iter().enumerate() {
        for (j, &x) in points.iter().enumerate() {
            let w = n_i * nat.orbitals[(j, i)].norm_sqr() * dx;
            m1 += w * x;
            m2 += w * x * x;
        }
    }
    m2 / total - (m1 / total).powi(2)
}

/// Shape overlap `int rho_a rho_b / sqrt(int rho_a^2 int rho_b^2)` in [0, 1].
pub fn density_overlap(a: &[f64], b: &[f64]) -> f64 {
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    ab / (aa * bb).sqrt()
}

/// Sampled `Sigma^2(t)` of one species.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl VarianceSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return Err(Error::invalid("variance_series", "times and values must be non-empty and of equal length"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("variance_series.times", "must be strictly increasing"));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("variance_series.values", "must be nonnegative"));
        }
        Ok(Self { times, values })
    }

    pub fn initial(&self) -> f64 {
        self.values[0]
    }
}

/// `(1/T) int_0^T [Sigma^2(t) - Sigma^2(0)] dt` by the trapezoidal rule,
/// interpolating linearly inside the last interval.
pub fn time_averaged_variance(series: &VarianceSeries, t_avg: f64) -> Result<f64> {
    let t0 = series.times[0];
    let last = *series.times.last().unwrap();
    if !(t_avg > 0.0) || t0 + t_avg > last * (1.0 + 1e-12) + 1e-12 {
        return Err(Error::invalid(
            "T",
            format!("averaging window {t_avg} exceeds the recorded span [{t0}, {last}]"),
        ));
    }
    let t_end = t0 + t_avg;
    let base = series.initial();
    let mut integral = 0.0;
    for i in 0..series.times.len() - 1 {
        let (ta, tb) = (series.times[i], series.times[i + 1]);
        if ta >= t_end {
            break;
        }
        let (va, vb) = (series.values[i] - base, series.values[i + 1] - base);
        if tb <= t_end {
            integral += 0.5 * (va + vb) * (tb - ta);
        } else {
            let frac = (t_end - ta) / (tb - ta);
            let v_end = va + frac * (vb - va);
            integral += 0.5 * (va + v_end) * (t_end - ta);
        }
    }
    Ok(integral / t_avg)
}
