//! Quick verification battery run by the command-line `oracle` subcommand,
//! with reference values persisted as a versioned fixture.

use std::fmt::Write as _;
use std::fs;
use std::ops::ControlFlow;
use std::path::Path;

use super::{ed_ground_state, fci_hamiltonian, gp_split_step, l2_distance, FciBasis, MeanFieldState, PairHamiltonian};
use crate::ansatz::{encode_state, init_guess, InitStrategy, LayeredBasis};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::model::{quench, validate_system, CheckedSystem, InteractionSpec, Species, SpeciesSpec, SystemSpec, TrapSpec};
use crate::observables::StateAnalysis;
use crate::propagator::{propagate, relax, PropagationOptions, RelaxOptions};

pub const FIXTURE_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    fn below(name: &'static str, value: f64, limit: f64) -> Self {
        Self {
            name,
            value,
            limit,
            passed: value < limit,
        }
    }
}

fn system(n_b: usize, n_f: usize, g: (f64, f64), grid: GridSpec, conf: (usize, usize, usize)) -> Result<CheckedSystem> {
    validate_system(&SystemSpec {
        bosons: SpeciesSpec::bosons(n_b, conf.2),
        fermions: SpeciesSpec::fermions(n_f, conf.1),
        interactions: InteractionSpec::new(g.0, g.1),
        trap: TrapSpec::new(0.1, 3.0),
        grid,
        schmidt_rank: conf.0,
    })
}

/// One boson and one fermion in five wells, the system the fixture describes.
pub fn pair_system() -> Result<CheckedSystem> {
    system(1, 1, (0.0, 0.2), GridSpec::wells(121, 5), (4, 4, 4))
}

/// Run the battery; when `out` is given, write the fixture there.
pub fn run_suite(out: Option<&Path>) -> Result<Vec<Check>> {
    let mut checks = Vec::new();

    let free = system(1, 2, (0.0, 0.0), GridSpec::wells(41, 3), (1, 3, 1))?;
    let basis = FciBasis::new(&free, 4)?;
    let (e_free, _) = ed_ground_state(&fci_hamiltonian(&free, &basis)?)?;
    let exact_free: f64 = basis.one_body[1][(0, 0)] + basis.one_body[1][(1, 1)] + basis.one_body[0][(0, 0)];
    checks.push(Check::below("ed_free_spectrum", (e_free - exact_free).abs(), 1e-10));

    let sys = pair_system()?;
    let ml = relax(&sys, &init_guess(&sys, InitStrategy::default())?, &RelaxOptions::default())?;
    let basis = FciBasis::new(&sys, 6)?;
    let (e_ed, _) = ed_ground_state(&fci_hamiltonian(&sys, &basis)?)?;
    let (e_exact, _) = PairHamiltonian::new(&sys)?.ground_state()?;
    let e_ml = ml.energies.total;
    checks.push(Check::below("ml_vs_ed6_relative_energy", ((e_ml - e_ed) / e_ed).abs(), 1e-3));
    checks.push(Check::below("ml_below_exact_grid_energy", e_exact - e_ml, 1e-10));

    let mf_sys = system(4, 2, (1.0, 0.05), GridSpec::wells(81, 5), (1, 2, 1))?;
    let ground = relax(&mf_sys, &init_guess(&mf_sys, InitStrategy::default())?, &RelaxOptions::default())?.state;
    let post = validate_system(&quench(mf_sys.spec(), 0.05)?)?;
    let lb = LayeredBasis::new(&post)?;
    let mut mf = MeanFieldState {
        boson: ground.spfs(Species::Boson).column(0).into_owned(),
        fermions: ground.spfs(Species::Fermion).clone(),
        time: 0.0,
    };
    let mut opts = PropagationOptions::default();
    opts.integrator.abs_tol = 1e-11;
    opts.integrator.rel_tol = 1e-11;
    opts.output_interval = 1.0;
    let mut worst: f64 = 0.0;
    propagate(&post, &ground, 5.0, &opts, None, |obs| {
        let an = StateAnalysis::new(&post, &lb, obs.state)?;
        mf = gp_split_step(&post, &mf, obs.state.time - mf.time, 0.005)?;
        for s in Species::BOTH {
            worst = worst.max(l2_distance(&an.density(s), &mf.density(s, &post), post.grid().dx()));
        }
        Ok(ControlFlow::Continue(()))
    })?;
    checks.push(Check::below("ml_single_orbital_vs_mean_field_density", worst, 1e-6));

    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let state_path = dir.join("oracle_pair_ground_state.bfq");
        fs::write(&state_path, encode_state(&ml.state, 1, 1)).map_err(|e| Error::io(&state_path, e))?;
        let mut manifest = String::new();
        writeln!(manifest, "version = {FIXTURE_VERSION}").unwrap();
        writeln!(manifest, "system = 1 boson + 1 fermion, 5 wells, 121 points, g_fb = 0.2, V0 = 3, omega = 0.1").unwrap();
        writeln!(manifest, "state = oracle_pair_ground_state.bfq (C = (4;4;4))").unwrap();
        writeln!(manifest, "energy_ml = {e_ml:.15e}").unwrap();
        writeln!(manifest, "energy_ed_6_orbitals = {e_ed:.15e}").unwrap();
        writeln!(manifest, "energy_exact_grid = {e_exact:.15e}").unwrap();
        for c in &checks {
            writeln!(manifest, "check.{} = {:.6e} (limit {:.1e}, {})", c.name, c.value, c.limit, if c.passed { "pass" } else { "fail" }).unwrap();
        }
        let path = dir.join("oracle_manifest.txt");
        fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    }
    Ok(checks)
}
