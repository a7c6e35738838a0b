//! Physical description of the Bose-Fermi mixture.
//!
//! Units: hbar = M = k = 1, so lengths are in 1/k and the lattice period is pi.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{build_grid, Grid, GridSpec};

/// |zeta(1/2)|.
pub const ZETA_HALF_ABS: f64 = 1.460_354_508_809_586_8;

/// Lattice wavenumber; the period is `pi / k`.
pub const LATTICE_WAVENUMBER: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Statistics {
    Bosonic,
    Fermionic,
}

/// Species label. The discriminant is used to index per-species arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Species {
    Boson = 0,
    Fermion = 1,
}

impl Species {
    pub const BOTH: [Species; 2] = [Species::Boson, Species::Fermion];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn other(self) -> Species {
        match self {
            Species::Boson => Species::Fermion,
            Species::Fermion => Species::Boson,
        }
    }

    pub fn statistics(self) -> Statistics {
        match self {
            Species::Boson => Statistics::Bosonic,
            Species::Fermion => Statistics::Fermionic,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Species::Boson => "B",
            Species::Fermion => "F",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeciesSpec {
    pub species: Species,
    pub count: usize,
    pub mass: f64,
    pub n_orbitals: usize,
}

impl SpeciesSpec {
    pub fn bosons(count: usize, n_orbitals: usize) -> Self {
        Self {
            species: Species::Boson,
            count,
            mass: 1.0,
            n_orbitals,
        }
    }

    pub fn fermions(count: usize, n_orbitals: usize) -> Self {
        Self {
            species: Species::Fermion,
            count,
            mass: 1.0,
            n_orbitals,
        }
    }

    pub fn with_mass(mut self, mass: f64) -> Self {
        self.mass = mass;
        self
    }

    pub fn statistics(&self) -> Statistics {
        self.species.statistics()
    }

    /// Number of permanents or determinants spanned by the orbitals.
    pub fn n_configurations(&self) -> usize {
        match self.statistics() {
            Statistics::Bosonic => binomial(self.count + self.n_orbitals - 1, self.n_orbitals - 1),
            Statistics::Fermionic => binomial(self.n_orbitals, self.count),
        }
    }

    fn validate(&self, path: &str) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid(format!("{path}.count"), "particle number must be positive"));
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::invalid(format!("{path}.mass"), "mass must be positive"));
        }
        if self.n_orbitals == 0 {
            return Err(Error::invalid(format!("{path}.n_orbitals"), "at least one orbital is required"));
        }
        if self.statistics() == Statistics::Fermionic && self.n_orbitals < self.count {
            return Err(Error::invalid(
                format!("{path}.n_orbitals"),
                format!(
                    "Pauli exclusion: {} fermions need at least as many orbitals, got {}",
                    self.count, self.n_orbitals
                ),
            ));
        }
        Ok(())
    }
}

/// Contact couplings. Identical spin-polarized fermions do not scatter in the
/// s-wave channel, so there is no fermion-fermion coupling to store.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionSpec {
    pub g_bb: f64,
    pub g_fb: f64,
}

impl InteractionSpec {
    pub fn new(g_bb: f64, g_fb: f64) -> Self {
        Self { g_bb, g_fb }
    }

    pub fn g_ff(&self) -> f64 {
        0.0
    }

    fn validate(&self) -> Result<()> {
        if !(self.g_bb.is_finite() && self.g_bb >= 0.0) {
            return Err(Error::invalid("interactions.g_bb", "must be finite and >= 0"));
        }
        if !(self.g_fb.is_finite() && self.g_fb >= 0.0) {
            return Err(Error::invalid("interactions.g_fb", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Harmonic trap of frequency `omega` superimposed on `v0 sin^2(k x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapSpec {
    pub omega: f64,
    pub v0: f64,
}

impl TrapSpec {
    pub fn new(omega: f64, v0: f64) -> Self {
        Self { omega, v0 }
    }

    pub fn period(&self) -> f64 {
        PI / LATTICE_WAVENUMBER
    }

    pub fn potential(&self, x: f64, mass: f64) -> f64 {
        0.5 * mass * self.omega * self.omega * x * x + self.v0 * (LATTICE_WAVENUMBER * x).sin().powi(2)
    }

    fn validate(&self) -> Result<()> {
        if !(self.omega.is_finite() && self.omega >= 0.0) {
            return Err(Error::invalid("trap.omega", "must be finite and >= 0"));
        }
        if !(self.v0.is_finite() && self.v0 >= 0.0) {
            return Err(Error::invalid("trap.v0", "lattice depth must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub bosons: SpeciesSpec,
    pub fermions: SpeciesSpec,
    pub interactions: InteractionSpec,
    pub trap: TrapSpec,
    pub grid: GridSpec,
    pub schmidt_rank: usize,
}

impl SystemSpec {
    /// 20 bosons and 2 fermions in 19 wells, immiscible couplings, C = (10;8;4).
    pub fn full_scale() -> Self {
        Self {
            bosons: SpeciesSpec::bosons(20, 4),
            fermions: SpeciesSpec::fermions(2, 8),
            interactions: InteractionSpec::new(0.05, 0.2),
            trap: TrapSpec::new(0.1, 3.0),
            grid: GridSpec::wells(475, 19),
            schmidt_rank: 10,
        }
    }

    pub fn species(&self, s: Species) -> &SpeciesSpec {
        match s {
            Species::Boson => &self.bosons,
            Species::Fermion => &self.fermions,
        }
    }

    pub fn species_mut(&mut self, s: Species) -> &mut SpeciesSpec {
        match s {
            Species::Boson => &mut self.bosons,
            Species::Fermion => &mut self.fermions,
        }
    }

    /// Configuration triple `(M; m_F; m_B)`.
    pub fn configuration(&self) -> (usize, usize, usize) {
        (self.schmidt_rank, self.fermions.n_orbitals, self.bosons.n_orbitals)
    }

    pub fn with_configuration(mut self, m: usize, m_f: usize, m_b: usize) -> Self {
        self.schmidt_rank = m;
        self.fermions.n_orbitals = m_f;
        self.bosons.n_orbitals = m_b;
        self
    }
}

/// Per-species single-particle operators sampled on the grid.
#[derive(Debug, Clone)]
pub struct OneBody {
    pub kinetic: DMatrix<f64>,
    pub potential: DVector<f64>,
}

impl OneBody {
    pub fn hamiltonian(&self) -> DMatrix<f64> {
        let mut h = self.kinetic.clone();
        for (j, v) in self.potential.iter().enumerate() {
            h[(j, j)] += v;
        }
        h
    }
}

/// A validated system with its grid and one-body operators attached.
#[derive(Debug, Clone)]
pub struct CheckedSystem {
    spec: SystemSpec,
    grid: Grid,
    one_body: [OneBody; 2],
    well_edges: Vec<f64>,
}

impl CheckedSystem {
    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn one_body(&self, s: Species) -> &OneBody {
        &self.one_body[s.index()]
    }

    pub fn species(&self, s: Species) -> &SpeciesSpec {
        self.spec.species(s)
    }

    pub fn interactions(&self) -> &InteractionSpec {
        &self.spec.interactions
    }

    pub fn schmidt_rank(&self) -> usize {
        self.spec.schmidt_rank
    }

    /// Lattice barrier positions inside the box plus the two walls.
    pub fn well_edges(&self) -> &[f64] {
        &self.well_edges
    }

    pub fn well_count(&self) -> usize {
        self.well_edges.len() - 1
    }
}

pub fn validate_system(spec: &SystemSpec) -> Result<CheckedSystem> {
    spec.grid.validate()?;
    spec.bosons.validate("bosons")?;
    spec.fermions.validate("fermions")?;
    if spec.bosons.species != Species::Boson {
        return Err(Error::invalid("bosons.species", "must be labelled B"));
    }
    if spec.fermions.species != Species::Fermion {
        return Err(Error::invalid("fermions.species", "must be labelled F"));
    }
    spec.interactions.validate()?;
    spec.trap.validate()?;
    if spec.schmidt_rank == 0 {
        return Err(Error::invalid("schmidt_rank", "must be at least 1"));
    }
    for s in Species::BOTH {
        let dim = spec.species(s).n_configurations();
        if spec.schmidt_rank > dim {
            return Err(Error::invalid(
                "schmidt_rank",
                format!(
                    "M = {} exceeds the {} configurations available to species {}",
                    spec.schmidt_rank,
                    dim,
                    s.label()
                ),
            ));
        }
    }
    let grid = build_grid(spec.grid)?;
    let one_body = Species::BOTH.map(|s| {
        let mass = spec.species(s).mass;
        OneBody {
            kinetic: grid.kinetic_matrix(mass),
            potential: grid.potential_vector(&spec.trap, mass),
        }
    });
    let g = spec.grid;
    let mut well_edges = vec![g.x_minus];
    let first = (g.x_minus / FRAC_PI_2).floor() as i64;
    let last = (g.x_plus / FRAC_PI_2).ceil() as i64;
    for j in first..=last {
        let x = j as f64 * FRAC_PI_2;
        if j.rem_euclid(2) == 1 && x > g.x_minus + 1e-9 && x < g.x_plus - 1e-9 {
            well_edges.push(x);
        }
    }
    well_edges.push(g.x_plus);
    Ok(CheckedSystem {
        spec: spec.clone(),
        grid,
        one_body,
        well_edges,
    })
}

/// Instantaneous change of the trap frequency.
pub fn quench(spec: &SystemSpec, omega_f: f64) -> Result<SystemSpec> {
    if !(omega_f.is_finite() && omega_f >= 0.0) {
        return Err(Error::invalid("omega_f", "postquench frequency must be finite and >= 0"));
    }
    let mut out = spec.clone();
    out.trap.omega = omega_f;
    Ok(out)
}

/// Olshanii's effective 1D coupling for s-wave scattering length `a_s` under
/// transverse confinement of length `a_perp`.
pub fn effective_coupling_1d(a_s: f64, a_perp: f64, mass: f64) -> Result<f64> {
    if !(a_perp.is_finite() && a_perp > 0.0) {
        return Err(Error::invalid("a_perp", "transverse length must be positive"));
    }
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::invalid("mass", "must be positive"));
    }
    let denominator = 1.0 - ZETA_HALF_ABS * a_s / (std::f64::consts::SQRT_2 * a_perp);
    if denominator <= 0.0 {
        return Err(Error::ResonancePole { denominator });
    }
    Ok(2.0 * a_s / (mass * a_perp * a_perp) / denominator)
}

pub(crate) fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}
