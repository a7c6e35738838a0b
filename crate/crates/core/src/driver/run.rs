//! Relax, quench and propagate one configuration, with a trajectory CSV,
//! density heatmaps, snapshots and resumable checkpoints.

use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::artifacts::{write_atomic, Checkpoint, Heatmap, RunPaths};
use super::config::RunConfig;
use crate::ansatz::{encode_state, init_guess, orthonormality_error, total_norm, LayeredBasis, MBState};
use crate::error::{Error, Result};
use crate::model::{quench, validate_system, CheckedSystem, Species};
use crate::observables::{time_averaged_variance, StateAnalysis, VarianceSeries};
use crate::propagator::{energy, propagate, relax, EomContext, Relaxed};

/// Options that steer a run without being part of its configuration.
#[derive(Debug, Clone, Default)]
pub struct RunControl {
    /// Continue from this checkpoint instead of relaxing.
    pub resume: Option<PathBuf>,
    /// Stop after the first output time at or beyond this, as if interrupted.
    pub stop_after: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub omega_f: f64,
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    pub var_b: Vec<f64>,
    pub var_f: Vec<f64>,
    pub max_norm_error: f64,
    pub max_ortho_error: f64,
    pub final_state: MBState,
    /// False if the run stopped before `t_final`.
    pub completed: bool,
    pub wall_time: f64,
}

impl RunArtifacts {
    pub fn variances(&self, s: Species) -> &[f64] {
        match s {
            Species::Boson => &self.var_b,
            Species::Fermion => &self.var_f,
        }
    }

    /// Time-averaged position variance over `[0, t_avg]`.
    pub fn mean_variance(&self, s: Species, t_avg: f64) -> Result<f64> {
        let series = VarianceSeries::new(self.times.clone(), self.variances(s).to_vec())?;
        time_averaged_variance(&series, t_avg)
    }

    /// Largest `|E(t) - E(0)| / |E(0)|` over the trajectory.
    pub fn relative_energy_drift(&self) -> f64 {
        let e0 = self.energies[0];
        self.energies.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0.abs().max(f64::MIN_POSITIVE)
    }
}

/// Ground state of the configuration from the seeded initial guess.
pub fn relax_ground_state(cfg: &RunConfig) -> Result<Relaxed> {
    let system = cfg.system()?;
    let guess = init_guess(&system, cfg.init_strategy())?;
    let relaxed = relax(&system, &guess, &cfg.relax_options())?;
    log::info!(
        "relaxed: E = {:.12}, tau = {}, schmidt = {:?}",
        relaxed.energies.total,
        relaxed.tau,
        relaxed.state.schmidt
    );
    Ok(relaxed)
}

pub fn write_ground_state(cfg: &RunConfig, state: &MBState, path: &Path) -> Result<()> {
    write_atomic(path, &encode_state(state, cfg.n_fermions, cfg.n_bosons))
}

/// Relax, quench to the single configured `omega_f` and propagate, or
/// continue from a checkpoint.
pub fn run_single(cfg: &RunConfig, control: &RunControl) -> Result<RunArtifacts> {
    let omegas = cfg.omegas();
    if omegas.len() != 1 {
        return Err(Error::Config {
            line: 0,
            key: "omega_f".into(),
            reason: format!("a single run needs exactly one postquench frequency, got {}", omegas.len()),
        });
    }
    let paths = RunPaths::new(&cfg.output_dir);
    fs::create_dir_all(&paths.dir).map_err(|e| Error::io(&paths.dir, e))?;
    match &control.resume {
        Some(cp) => {
            let checkpoint = Checkpoint::read(cp)?;
            execute(cfg, omegas[0], &paths, Start::Resume(checkpoint), control.stop_after)
        }
        None => {
            let relaxed = relax_ground_state(cfg)?;
            write_ground_state(cfg, &relaxed.state, &paths.ground_state())?;
            execute(cfg, omegas[0], &paths, Start::Fresh(&relaxed.state), control.stop_after)
        }
    }
}

/// Quench a given ground state and propagate into `dir`.
pub fn run_quench(cfg: &RunConfig, ground: &MBState, omega_f: f64, dir: &Path) -> Result<RunArtifacts> {
    let paths = RunPaths::new(dir);
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    execute(cfg, omega_f, &paths, Start::Fresh(ground), None)
}

enum Start<'a> {
    Fresh(&'a MBState),
    Resume(Checkpoint),
}

fn csv_header(cfg: &RunConfig) -> String {
    let mut h = String::from("t,energy,norm_error,ortho_error,var_b,var_f");
    for k in 1..=cfg.schmidt_rank {
        write!(h, ",lambda_{k}").unwrap();
    }
    for k in 1..=cfg.m_b {
        write!(h, ",nat_pop_b_{k}").unwrap();
    }
    for k in 1..=cfg.m_f {
        write!(h, ",nat_pop_f_{k}").unwrap();
    }
    h
}

/// Per-output-time quantities.
struct Row {
    t: f64,
    energy: f64,
    norm_error: f64,
    ortho_error: f64,
    var: [f64; 2],
    density: [Vec<f64>; 2],
    line: String,
}

fn measure(system: &CheckedSystem, basis: &LayeredBasis, state: &MBState, energy: f64) -> Result<Row> {
    let an = StateAnalysis::new(system, basis, state)?;
    let norm_error = (total_norm(state)? - 1.0).abs();
    let ortho_error = orthonormality_error(state);
    let var = [an.position_variance(Species::Boson), an.position_variance(Species::Fermion)];
    let mut line = String::new();
    for v in [state.time, energy, norm_error, ortho_error, var[0], var[1]] {
        write!(line, "{v:.17e},").unwrap();
    }
    let tail = state
        .schmidt
        .iter()
        .copied()
        .chain(an.natural_populations(Species::Boson))
        .chain(an.natural_populations(Species::Fermion));
    for v in tail {
        write!(line, "{v:.17e},").unwrap();
    }
    line.pop();
    Ok(Row {
        t: state.time,
        energy,
        norm_error,
        ortho_error,
        var,
        density: [an.density(Species::Boson), an.density(Species::Fermion)],
        line,
    })
}

fn write_snapshot(path: &Path, system: &CheckedSystem, basis: &LayeredBasis, state: &MBState) -> Result<()> {
    let an = StateAnalysis::new(system, basis, state)?;
    let (b, f) = (Species::Boson, Species::Fermion);
    let (db, df) = (an.density(b), an.density(f));
    let (g1b, g1f) = (an.g1(b), an.g1(f));
    let (g2bb, g2ff, g2fb) = (an.g2(b, b), an.g2(f, f), an.g2(f, b));
    let n = db.len();
    let mut text = format!("# t = {:.17e}\nx,rho_b,rho_f,g1_b_mirror,g1_f_mirror,g2_bb,g2_ff,g2_fb\n", state.time);
    let opt = |v: Option<f64>| v.map_or("nan".to_string(), |v| format!("{v:.17e}"));
    for (j, x) in system.grid().points().iter().enumerate() {
        let mirror = n - 1 - j;
        writeln!(
            text,
            "{x:.17e},{:.17e},{:.17e},{},{},{},{},{}",
            db[j],
            df[j],
            opt(g1b.get(j, mirror).map(|z| z.norm())),
            opt(g1f.get(j, mirror).map(|z| z.norm())),
            opt(g2bb.get(j, j)),
            opt(g2ff.get(j, j)),
            opt(g2fb.get(j, j)),
        )
        .unwrap();
    }
    write_atomic(path, text.as_bytes())
}

fn append_density(file: &mut BufWriter<File>, row: &[f64], path: &Path) -> Result<()> {
    for v in row {
        file.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn open_append(path: &Path) -> Result<BufWriter<File>> {
    let f = OpenOptions::new().append(true).create(true).open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufWriter::new(f))
}

/// Keep the first `rows` data rows of the trajectory and density logs.
fn truncate_outputs(paths: &RunPaths, rows: usize, n_points: usize) -> Result<Vec<String>> {
    let traj = paths.trajectory();
    let text = fs::read_to_string(&traj).map_err(|e| Error::io(&traj, e))?;
    let lines: Vec<String> = text.lines().skip(1).take(rows).map(str::to_string).collect();
    if lines.len() != rows {
        return Err(Error::Format(format!("{} holds {} rows, checkpoint expects {rows}", traj.display(), lines.len())));
    }
    let header = text.lines().next().unwrap_or_default();
    let mut kept = format!("{header}\n");
    for l in &lines {
        kept.push_str(l);
        kept.push('\n');
    }
    write_atomic(&traj, kept.as_bytes())?;
    for s in Species::BOTH {
        let p = paths.density_rows(s);
        let f = OpenOptions::new().write(true).open(&p).map_err(|e| Error::io(&p, e))?;
        let want = (rows * n_points * 8) as u64;
        let have = f.metadata().map_err(|e| Error::io(&p, e))?.len();
        if have < want {
            return Err(Error::Format(format!("{} is shorter than the checkpoint", p.display())));
        }
        f.set_len(want).map_err(|e| Error::io(&p, e))?;
    }
    Ok(lines)
}

fn parse_row(line: &str) -> Result<[f64; 6]> {
    let mut out = [0.0; 6];
    let mut it = line.split(',');
    for v in out.iter_mut() {
        let field = it.next().ok_or_else(|| Error::Format(format!("short trajectory row `{line}`")))?;
        *v = field.parse().map_err(|_| Error::Format(format!("bad number `{field}` in trajectory")))?;
    }
    Ok(out)
}

struct Log {
    times: Vec<f64>,
    energies: Vec<f64>,
    var: [Vec<f64>; 2],
    max_norm: f64,
    max_ortho: f64,
}

impl Log {
    fn push(&mut self, t: f64, e: f64, norm: f64, ortho: f64, var: [f64; 2]) {
        self.times.push(t);
        self.energies.push(e);
        self.var[0].push(var[0]);
        self.var[1].push(var[1]);
        self.max_norm = self.max_norm.max(norm);
        self.max_ortho = self.max_ortho.max(ortho);
    }
}

fn execute(cfg: &RunConfig, omega_f: f64, paths: &RunPaths, start: Start, stop_after: Option<f64>) -> Result<RunArtifacts> {
    let clock = Instant::now();
    let system = validate_system(&quench(&cfg.system_spec(), omega_f)?)?;
    let basis = LayeredBasis::new(&system)?;
    let n_points = system.grid().len();
    let mut log = Log {
        times: Vec::new(),
        energies: Vec::new(),
        var: [Vec::new(), Vec::new()],
        max_norm: 0.0,
        max_ortho: 0.0,
    };
    let traj_path = paths.trajectory();
    let (initial, resume, initial_energy) = match start {
        Start::Fresh(ground) => {
            let mut state = ground.clone();
            state.time = 0.0;
            let ctx = EomContext::new(&system, &basis);
            let e0 = energy(&state.layered(), &ctx).total;
            let row = measure(&system, &basis, &state, e0)?;
            write_atomic(&traj_path, format!("{}\n{}\n", csv_header(cfg), row.line).as_bytes())?;
            for s in Species::BOTH {
                let p = paths.density_rows(s);
                let mut f = BufWriter::new(File::create(&p).map_err(|e| Error::io(&p, e))?);
                append_density(&mut f, &row.density[s.index()], &p)?;
                f.flush().map_err(|e| Error::io(&p, e))?;
            }
            log.push(row.t, row.energy, row.norm_error, row.ortho_error, row.var);
            for &ts in &cfg.snapshot_times {
                if ts <= 0.0 {
                    write_snapshot(&paths.snapshot(0.0), &system, &basis, &state)?;
                    break;
                }
            }
            (state, None, e0)
        }
        Start::Resume(cp) => {
            if cp.state.spfs(Species::Boson).nrows() != n_points {
                return Err(Error::Format("checkpoint grid does not match the configuration".into()));
            }
            for line in truncate_outputs(paths, cp.rows, n_points)? {
                let [t, e, norm, ortho, vb, vf] = parse_row(&line)?;
                log.push(t, e, norm, ortho, [vb, vf]);
            }
            log::info!("resuming at t = {} from {} rows", cp.state.time, cp.rows);
            (cp.state, Some(cp.meta), cp.initial_energy)
        }
    };

    let mut traj = open_append(&traj_path)?;
    let density_paths = Species::BOTH.map(|s| paths.density_rows(s));
    let mut dens = [open_append(&density_paths[0])?, open_append(&density_paths[1])?];
    let checkpoint_path = paths.checkpoint();
    let mut last_checkpoint = Instant::now();
    let mut prev_t = initial.time;
    let options = cfg.propagation_options();

    let outcome = propagate(&system, &initial, cfg.t_final, &options, resume, |obs| {
        let state = obs.state;
        let row = measure(&system, &basis, state, obs.energies.total)?;
        writeln!(traj, "{}", row.line).map_err(|e| Error::io(&traj_path, e))?;
        for s in Species::BOTH {
            append_density(&mut dens[s.index()], &row.density[s.index()], &density_paths[s.index()])?;
        }
        log.push(row.t, row.energy, row.norm_error, row.ortho_error, row.var);
        if cfg.snapshot_times.iter().any(|&ts| ts > prev_t && ts <= row.t + 1e-12) {
            write_snapshot(&paths.snapshot(row.t), &system, &basis, state)?;
        }
        prev_t = row.t;
        let stop = stop_after.is_some_and(|ts| row.t >= ts - 1e-12);
        let due = cfg.checkpoint_interval == 0.0 || last_checkpoint.elapsed().as_secs_f64() >= cfg.checkpoint_interval;
        if due || stop || row.t >= cfg.t_final {
            traj.flush().map_err(|e| Error::io(&traj_path, e))?;
            for s in Species::BOTH {
                dens[s.index()].flush().map_err(|e| Error::io(&density_paths[s.index()], e))?;
            }
            Checkpoint {
                state: state.clone(),
                n_fermions: cfg.n_fermions,
                n_bosons: cfg.n_bosons,
                meta: obs.meta,
                initial_energy,
                rows: log.times.len(),
            }
            .write(&checkpoint_path)?;
            last_checkpoint = Instant::now();
        }
        Ok(if stop { ControlFlow::Break(()) } else { ControlFlow::Continue(()) })
    });
    let propagated = outcome.map_err(|e| Error::RunFailed {
        checkpoint: if checkpoint_path.exists() {
            checkpoint_path.display().to_string()
        } else {
            "none".into()
        },
        source: Box::new(e),
    })?;
    traj.flush().map_err(|e| Error::io(&traj_path, e))?;
    for s in Species::BOTH {
        dens[s.index()].flush().map_err(|e| Error::io(&density_paths[s.index()], e))?;
    }
    drop(dens);

    let completed = !propagated.interrupted;
    let artifacts = RunArtifacts {
        dir: paths.dir.clone(),
        omega_f,
        times: log.times,
        energies: log.energies,
        var_b: log.var[0].clone(),
        var_f: log.var[1].clone(),
        max_norm_error: log.max_norm,
        max_ortho_error: log.max_ortho,
        final_state: propagated.state,
        completed,
        wall_time: clock.elapsed().as_secs_f64(),
    };
    if completed {
        finish(cfg, paths, &system, &artifacts)?;
    }
    Ok(artifacts)
}

fn finish(cfg: &RunConfig, paths: &RunPaths, system: &CheckedSystem, run: &RunArtifacts) -> Result<()> {
    write_atomic(&paths.final_state(), &encode_state(&run.final_state, cfg.n_fermions, cfg.n_bosons))?;
    let x = system.grid().points().to_vec();
    for s in Species::BOTH {
        let p = paths.density_rows(s);
        let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
        let values: Vec<f64> = bytes.chunks_exact(8).map(|w| f64::from_le_bytes(w.try_into().unwrap())).collect();
        if values.len() != run.times.len() * x.len() {
            return Err(Error::Format(format!("{} does not match the trajectory length", p.display())));
        }
        let heatmap = Heatmap {
            times: run.times.clone(),
            x: x.clone(),
            values,
        };
        heatmap.write(&paths.density_heatmap(s), &format!("density_{}", s.label().to_lowercase()))?;
        fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
    }
    let t_avg = cfg.t_average();
    let mut text = String::new();
    writeln!(text, "omega_f = {}", run.omega_f).unwrap();
    writeln!(text, "t_final = {}", cfg.t_final).unwrap();
    writeln!(text, "T_average = {t_avg}").unwrap();
    writeln!(text, "mean_var_b = {:.10e}", run.mean_variance(Species::Boson, t_avg)?).unwrap();
    writeln!(text, "mean_var_f = {:.10e}", run.mean_variance(Species::Fermion, t_avg)?).unwrap();
    writeln!(text, "initial_energy = {:.12e}", run.energies[0]).unwrap();
    writeln!(text, "final_energy = {:.12e}", run.energies[run.energies.len() - 1]).unwrap();
    writeln!(text, "relative_energy_drift = {:.3e}", run.relative_energy_drift()).unwrap();
    writeln!(text, "max_norm_error = {:.3e}", run.max_norm_error).unwrap();
    writeln!(text, "max_ortho_error = {:.3e}", run.max_ortho_error).unwrap();
    write_atomic(&paths.summary(), text.as_bytes())
}
