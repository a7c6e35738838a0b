use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bfq_core::driver::{
    emit_report, parse_config, relax_ground_state, run_ladder, run_scan, run_single, validate_config, write_ground_state,
    RunConfig, RunControl,
};
use bfq_core::error::{Error, Result};
use bfq_core::model::Species;
use bfq_core::oracle::run_suite;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bfq", version, about = "Ground states and quench dynamics of 1D Bose-Fermi mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named preset applied before the configuration file.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for scans and ladders.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Checkpoint to continue from.
    #[arg(long, global = true)]
    resume: Option<PathBuf>,
    /// Seed of the initial-guess perturbation.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Relax to the ground state and save it.
    Relax,
    /// Relax, quench to `omega_f` and propagate.
    Run,
    /// Quench the ground state to every frequency in `omega_f_list`.
    Scan,
    /// Repeat a run over the configured ladder of (M; m_f; m_b).
    Ladder,
    /// Plot the artifacts found in a run or scan directory.
    Report {
        /// Directory holding trajectory.csv and/or scan.csv.
        input: PathBuf,
    },
    /// Run the verification battery against the brute-force solvers.
    Oracle,
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut text = String::new();
    if let Some(name) = &common.preset {
        text.push_str(&format!("preset = {name}\n"));
    }
    let offset = text.lines().count();
    if let Some(path) = &common.config {
        let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.push_str(&body);
    }
    let mut cfg = parse_config(&text).map_err(|e| match e {
        Error::Config { line, key, reason } if line > offset => Error::Config {
            line: line - offset,
            key,
            reason,
        },
        other => other,
    })?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    validate_config(&cfg)?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<()> {
    let out_dir = || cli.common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    match &cli.command {
        Command::Relax => {
            let cfg = load_config(&cli.common)?;
            fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
            let relaxed = relax_ground_state(&cfg)?;
            let path = cfg.output_dir.join("ground_state.bfq");
            write_ground_state(&cfg, &relaxed.state, &path)?;
            println!("energy = {:.12}", relaxed.energies.total);
            println!("schmidt = {:?}", relaxed.state.schmidt);
            println!("state = {}", path.display());
        }
        Command::Run => {
            let cfg = load_config(&cli.common)?;
            let control = RunControl {
                resume: cli.common.resume.clone(),
                stop_after: None,
            };
            let run = run_single(&cfg, &control)?;
            let t = cfg.t_average();
            println!("omega_f = {}", run.omega_f);
            println!("mean_var_b = {:.10}", run.mean_variance(Species::Boson, t)?);
            println!("mean_var_f = {:.10}", run.mean_variance(Species::Fermion, t)?);
            println!("max_norm_error = {:.3e}", run.max_norm_error);
            println!("trajectory = {}", run.dir.join("trajectory.csv").display());
        }
        Command::Scan => {
            let cfg = load_config(&cli.common)?;
            let scan = run_scan(&cfg)?;
            print!("{}", scan.to_csv());
            if let Some(r) = scan.rows.iter().find(|r| r.failure.is_some()) {
                log::warn!("scan row omega_f = {} failed", r.omega_f);
            }
        }
        Command::Ladder => {
            let cfg = load_config(&cli.common)?;
            print!("{}", run_ladder(&cfg)?.to_text());
        }
        Command::Report { input } => {
            for p in emit_report(input, &out_dir())? {
                println!("{}", p.display());
            }
        }
        Command::Oracle => {
            let out = cli.common.out.clone();
            let checks = run_suite(out.as_deref())?;
            let mut failed = 0;
            for c in &checks {
                println!(
                    "{} {}: {:.3e} (limit {:.1e})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.limit
                );
                failed += usize::from(!c.passed);
            }
            if failed > 0 {
                return Err(Error::invalid("oracle", format!("{failed} check(s) failed")));
            }
        }
    }
    Ok(())
}

fn report_error(err: &Error, out: Option<&Path>) {
    let line = serde_json::json!({
        "level": "error",
        "kind": err.kind(),
        "message": err.to_string(),
    })
    .to_string();
    eprintln!("{line}");
    if let Some(dir) = out.filter(|d| d.is_dir()) {
        let path = dir.join("errors.jsonl");
        if let Ok(mut f) = OpenOptions::new().append(true).create(true).open(&path) {
            let _ = writeln!(f, "{line}");
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(&e, cli.common.out.as_deref());
            ExitCode::FAILURE
        }
    }
}
