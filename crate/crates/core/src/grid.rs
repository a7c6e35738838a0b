//! Sine discrete-variable representation on a hard-wall box.
//!
//! Grid functions are stored as DVR coefficients `c_j`, related to the
//! function values by `f(x_j) = c_j / sqrt(dx)`. An orthonormal set of
//! orbitals is therefore orthonormal as plain complex vectors, and the
//! contact interaction between two species becomes the diagonal
//! `g / dx` on the grid.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::TrapSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n_points: usize,
    pub x_minus: f64,
    pub x_plus: f64,
}

impl GridSpec {
    pub fn new(n_points: usize, x_minus: f64, x_plus: f64) -> Self {
        Self {
            n_points,
            x_minus,
            x_plus,
        }
    }

    /// Symmetric box `[-half_extent, half_extent]`.
    pub fn symmetric(n_points: usize, half_extent: f64) -> Self {
        Self::new(n_points, -half_extent, half_extent)
    }

    /// Box holding `wells` lattice sites of period `pi`, centred on a minimum.
    pub fn wells(n_points: usize, wells: usize) -> Self {
        Self::symmetric(n_points, wells as f64 * std::f64::consts::FRAC_PI_2)
    }

    pub fn length(&self) -> f64 {
        self.x_plus - self.x_minus
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points < 2 {
            return Err(Error::invalid("grid.n_points", "at least two DVR points are required"));
        }
        if !(self.x_minus.is_finite() && self.x_plus.is_finite()) || self.x_minus >= self.x_plus {
            return Err(Error::invalid("grid", "box edges must satisfy x_minus < x_plus"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    spec: GridSpec,
    points: Vec<f64>,
    weight: f64,
}

pub fn build_grid(spec: GridSpec) -> Result<Grid> {
    spec.validate()?;
    let weight = spec.length() / (spec.n_points + 1) as f64;
    let points = (1..=spec.n_points)
        .map(|j| spec.x_minus + j as f64 * weight)
        .collect();
    Ok(Grid {
        spec,
        points,
        weight,
    })
}

impl Grid {
    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Uniform quadrature weight, equal to the point spacing.
    pub fn dx(&self) -> f64 {
        self.weight
    }

    pub fn box_length(&self) -> f64 {
        self.spec.length()
    }

    /// Kinetic energy `-(1/2m) d^2/dx^2` in the sine DVR (Colbert-Miller closed form).
    pub fn kinetic_matrix(&self, mass: f64) -> DMatrix<f64> {
        let n = self.len();
        let np1 = (n + 1) as f64;
        let l = self.box_length();
        let pref = std::f64::consts::PI.powi(2) / (4.0 * mass * l * l);
        let half_angle = std::f64::consts::PI / (2.0 * np1);
        DMatrix::from_fn(n, n, |a, b| {
            let (i, j) = ((a + 1) as f64, (b + 1) as f64);
            if a == b {
                let s = (2.0 * half_angle * i).sin();
                pref * ((2.0 * np1 * np1 + 1.0) / 3.0 - 1.0 / (s * s))
            } else {
                let sign = if (a + b) % 2 == 0 { 1.0 } else { -1.0 };
                let sm = (half_angle * (i - j)).sin();
                let sp = (half_angle * (i + j)).sin();
                sign * pref * (1.0 / (sm * sm) - 1.0 / (sp * sp))
            }
        })
    }

    /// Harmonic trap plus lattice, sampled on the grid.
    pub fn potential_vector(&self, trap: &TrapSpec, mass: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.points.iter().map(|&x| trap.potential(x, mass)),
        )
    }

    /// `dx * sum(samples)`.
    pub fn quadrature_integrate(&self, samples: &[f64]) -> Result<f64> {
        if samples.len() != self.len() {
            return Err(Error::ShapeMismatch {
                what: "quadrature samples",
                expected: self.len(),
                found: samples.len(),
            });
        }
        Ok(self.weight * samples.iter().sum::<f64>())
    }

    /// First index whose grid point lies at or beyond `x`.
    pub fn index_at_or_after(&self, x: f64) -> usize {
        self.points.partition_point(|&p| p < x - 1e-12)
    }
}
