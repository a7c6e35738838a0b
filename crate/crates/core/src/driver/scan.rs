//! Postquench-frequency scans and convergence ladders.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::artifacts::write_atomic;
use super::config::{RunConfig, Rung};
use super::run::{relax_ground_state, run_quench, write_ground_state, RunArtifacts};
use crate::error::{Error, Result};
use crate::model::Species;

/// Rows whose norm error reaches this are flagged as failed.
pub const NORM_ERROR_LIMIT: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub omega_f: f64,
    pub mean_var_b: f64,
    pub mean_var_f: f64,
    pub final_energy: f64,
    pub max_norm_error: f64,
    pub wall_time: f64,
    /// Reason the row failed, if it did.
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ScanResult {
    pub ground_energy: f64,
    pub t_average: f64,
    pub rows: Vec<ScanRow>,
}

impl ScanResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("omega_f,mean_var_b,mean_var_f,final_energy,max_norm_error,wall_time,status\n");
        for r in &self.rows {
            let status = r.failure.as_deref().map_or("ok".to_string(), |f| format!("failed: {}", f.replace(',', ";")));
            writeln!(
                out,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.3e},{:.3},{status}",
                r.omega_f, r.mean_var_b, r.mean_var_f, r.final_energy, r.max_norm_error, r.wall_time
            )
            .unwrap();
        }
        out
    }

    /// Inverse of [`ScanResult::to_csv`] for the numeric columns.
    pub fn rows_from_csv(text: &str) -> Result<Vec<ScanRow>> {
        let mut rows = Vec::new();
        for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.splitn(7, ',').collect();
            if fields.len() != 7 {
                return Err(Error::Format(format!("short scan row `{line}`")));
            }
            let num = |i: usize| -> Result<f64> {
                fields[i]
                    .parse()
                    .map_err(|_| Error::Format(format!("bad number `{}` in scan table", fields[i])))
            };
            rows.push(ScanRow {
                omega_f: num(0)?,
                mean_var_b: num(1)?,
                mean_var_f: num(2)?,
                final_energy: num(3)?,
                max_norm_error: num(4)?,
                wall_time: num(5)?,
                failure: fields[6].strip_prefix("failed: ").map(str::to_string),
            });
        }
        Ok(rows)
    }
}

pub fn row_dir(out: &Path, omega_f: f64) -> PathBuf {
    out.join(format!("omega_{omega_f:.6}"))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid("workers", e.to_string()))
}

fn summarize(run: &RunArtifacts, t_avg: f64) -> Result<ScanRow> {
    let failure = (run.max_norm_error >= NORM_ERROR_LIMIT)
        .then(|| format!("norm error {:.3e} exceeds {NORM_ERROR_LIMIT:e}", run.max_norm_error));
    Ok(ScanRow {
        omega_f: run.omega_f,
        mean_var_b: run.mean_variance(Species::Boson, t_avg)?,
        mean_var_f: run.mean_variance(Species::Fermion, t_avg)?,
        final_energy: run.energies[run.energies.len() - 1],
        max_norm_error: run.max_norm_error,
        wall_time: run.wall_time,
        failure,
    })
}

/// Relax once, then quench to every listed frequency on a worker pool.
/// A failing row is recorded and the scan continues.
pub fn run_scan(cfg: &RunConfig) -> Result<ScanResult> {
    let omegas = cfg.omegas();
    if omegas.is_empty() {
        return Err(Error::Config {
            line: 0,
            key: "omega_f_list".into(),
            reason: "a scan needs at least one postquench frequency".into(),
        });
    }
    for (i, w) in omegas.iter().enumerate() {
        if omegas[..i].iter().any(|v| format!("{v:.6}") == format!("{w:.6}")) {
            return Err(Error::Config {
                line: 0,
                key: "omega_f_list".into(),
                reason: format!("duplicate frequency {w}"),
            });
        }
    }
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let relaxed = relax_ground_state(cfg)?;
    write_ground_state(cfg, &relaxed.state, &out.join("ground_state.bfq"))?;
    let t_avg = cfg.t_average();
    let ground = &relaxed.state;
    let rows: Vec<ScanRow> = pool(cfg.workers)?.install(|| {
        omegas
            .par_iter()
            .map(|&w| {
                let outcome = run_quench(cfg, ground, w, &row_dir(out, w)).and_then(|run| summarize(&run, t_avg));
                outcome.unwrap_or_else(|e| {
                    log::warn!("scan row omega_f = {w} failed: {e}");
                    ScanRow {
                        omega_f: w,
                        mean_var_b: f64::NAN,
                        mean_var_f: f64::NAN,
                        final_energy: f64::NAN,
                        max_norm_error: f64::NAN,
                        wall_time: 0.0,
                        failure: Some(e.to_string()),
                    }
                })
            })
            .collect()
    });
    let result = ScanResult {
        ground_energy: relaxed.energies.total,
        t_average: t_avg,
        rows,
    };
    write_atomic(&out.join("scan.csv"), result.to_csv().as_bytes())?;
    Ok(result)
}

#[derive(Debug, Clone)]
pub struct LadderRun {
    pub rung: Rung,
    pub times: Vec<f64>,
    pub var_b: Vec<f64>,
    pub var_f: Vec<f64>,
}

/// Relative deviations between two rungs, measured against the larger one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderDeviation {
    pub from: Rung,
    pub to: Rung,
    pub final_b: f64,
    pub final_f: f64,
    pub max_b: f64,
    pub max_f: f64,
}

#[derive(Debug, Clone)]
pub struct LadderResult {
    pub omega_f: f64,
    pub runs: Vec<LadderRun>,
    /// Successive pairs of rungs.
    pub deviations: Vec<LadderDeviation>,
}

impl LadderResult {
    pub fn to_text(&self) -> String {
        let mut out = format!("omega_f = {}\nfrom,to,final_dev_b,final_dev_f,max_dev_b,max_dev_f\n", self.omega_f);
        for d in &self.deviations {
            writeln!(
                out,
                "{},{},{:.6e},{:.6e},{:.6e},{:.6e}",
                d.from, d.to, d.final_b, d.final_f, d.max_b, d.max_f
            )
            .unwrap();
        }
        out
    }
}

fn relative(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE)).collect()
}

pub fn deviation(a: &LadderRun, b: &LadderRun) -> Result<LadderDeviation> {
    if a.times.len() != b.times.len() || a.times.iter().zip(&b.times).any(|(x, y)| (x - y).abs() > 1e-9) {
        return Err(Error::invalid("ladder", "rungs were sampled at different times"));
    }
    let (db, df) = (relative(&a.var_b, &b.var_b), relative(&a.var_f, &b.var_f));
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    Ok(LadderDeviation {
        from: a.rung,
        to: b.rung,
        final_b: db[db.len() - 1],
        final_f: df[df.len() - 1],
        max_b: max(&db),
        max_f: max(&df),
    })
}

/// Run every rung of the configured ladder at the single `omega_f` and
/// compare successive rungs.
pub fn run_ladder(cfg: &RunConfig) -> Result<LadderResult> {
    let omegas = cfg.omegas();
    if omegas.len() != 1 {
        return Err(Error::Config {
            line: 0,
            key: "omega_f".into(),
            reason: "a ladder runs at exactly one postquench frequency".into(),
        });
    }
    let omega_f = omegas[0];
    for rung in &cfg.ladder {
        cfg.with_rung(*rung).system().map_err(|e| Error::Config {
            line: 0,
            key: "ladder".into(),
            reason: format!("rung {rung}: {e}"),
        })?;
    }
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let runs: Vec<Result<LadderRun>> = pool(cfg.workers)?.install(|| {
        cfg.ladder
            .par_iter()
            .enumerate()
            .map(|(i, &rung)| {
                let rcfg = cfg.with_rung(rung);
                let dir = out.join(format!("rung{}_{}_{}_{}", i + 1, rung.m, rung.m_f, rung.m_b));
                let relaxed = relax_ground_state(&rcfg)?;
                let run = run_quench(&rcfg, &relaxed.state, omega_f, &dir)?;
                Ok(LadderRun {
                    rung,
                    times: run.times,
                    var_b: run.var_b,
                    var_f: run.var_f,
                })
            })
            .collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let deviations = runs
        .windows(2)
        .map(|w| deviation(&w[0], &w[1]))
        .collect::<Result<Vec<_>>>()?;
    let result = LadderResult {
        omega_f,
        runs,
        deviations,
    };
    write_atomic(&out.join("ladder.csv"), result.to_text().as_bytes())?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_rungs_have_zero_deviation() {
        let run = LadderRun {
            rung: Rung { m: 2, m_f: 2, m_b: 2 },
            times: vec![0.0, 1.0],
            var_b: vec![1.0, 2.0],
            var_f: vec![3.0, 4.0],
        };
        let d = deviation(&run, &run).unwrap();
        assert_eq!((d.final_b, d.final_f, d.max_b, d.max_f), (0.0, 0.0, 0.0, 0.0));
        let mut other = run.clone();
        other.var_b[1] = 2.2;
        let d = deviation(&run, &other).unwrap();
        assert!((d.final_b - 0.2 / 2.2).abs() < 1e-15);
    }

    #[test]
    fn scan_csv_round_trip() {
        let result = ScanResult {
            ground_energy: 1.0,
            t_average: 10.0,
            rows: vec![
                ScanRow {
                    omega_f: 0.02,
                    mean_var_b: 1.0 / 3.0,
                    mean_var_f: 2.5,
                    final_energy: -0.1,
                    max_norm_error: 1e-13,
                    wall_time: 1.5,
                    failure: None,
                },
                ScanRow {
                    omega_f: 0.04,
                    mean_var_b: f64::NAN,
                    mean_var_f: f64::NAN,
                    final_energy: f64::NAN,
                    max_norm_error: f64::NAN,
                    wall_time: 0.0,
                    failure: Some("step size underflow".into()),
                },
            ],
        };
        let rows = ScanResult::rows_from_csv(&result.to_csv()).unwrap();
        assert_eq!(rows[0].mean_var_b, 1.0 / 3.0);
        assert_eq!(rows[1].failure.as_deref(), Some("step size underflow"));
        assert!(rows[1].mean_var_b.is_nan());
    }
}
