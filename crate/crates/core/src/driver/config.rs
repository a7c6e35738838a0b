//! Line-oriented `key = value` run configuration and named presets.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;
use std::path::PathBuf;

use crate::ansatz::InitStrategy;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::model::{validate_system, CheckedSystem, InteractionSpec, SpeciesSpec, SystemSpec, TrapSpec};
use crate::propagator::{IntegratorSettings, PropagationOptions, RelaxOptions, DEFAULT_RHO_EPS};

/// Configuration triple `(M; m_F; m_B)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rung {
    pub m: usize,
    pub m_f: usize,
    pub m_b: usize,
}

impl std::fmt::Display for Rung {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({};{};{})", self.m, self.m_f, self.m_b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub n_bosons: usize,
    pub n_fermions: usize,
    pub g_bb: f64,
    pub g_fb: f64,
    pub v0: f64,
    pub omega_i: f64,
    pub mass_b: f64,
    pub mass_f: f64,
    pub grid_points: usize,
    pub x_half_extent: f64,
    pub schmidt_rank: usize,
    pub m_f: usize,
    pub m_b: usize,
    pub omega_f: Option<f64>,
    pub omega_f_list: Vec<f64>,
    pub t_final: f64,
    pub dt_out: f64,
    /// Averaging horizon; `None` means `t_final`.
    pub t_average: Option<f64>,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub rho_eps: f64,
    pub relax_energy_tol: f64,
    pub max_relax_time: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Wall-clock seconds between checkpoints; zero checkpoints at every output.
    pub checkpoint_interval: f64,
    pub snapshot_times: Vec<f64>,
    pub ladder: Vec<Rung>,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: None,
            n_bosons: 20,
            n_fermions: 2,
            g_bb: 0.05,
            g_fb: 0.2,
            v0: 3.0,
            omega_i: 0.1,
            mass_b: 1.0,
            mass_f: 1.0,
            grid_points: 475,
            x_half_extent: 19.0 * FRAC_PI_2,
            schmidt_rank: 10,
            m_f: 8,
            m_b: 4,
            omega_f: None,
            omega_f_list: Vec::new(),
            t_final: 300.0,
            dt_out: 0.5,
            t_average: None,
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            initial_step: 1e-3,
            max_step: 0.1,
            rho_eps: DEFAULT_RHO_EPS,
            relax_energy_tol: 1e-9,
            max_relax_time: 2000.0,
            seed: 0,
            output_dir: PathBuf::from("out"),
            checkpoint_interval: 60.0,
            snapshot_times: Vec::new(),
            ladder: vec![
                Rung { m: 10, m_f: 8, m_b: 3 },
                Rung { m: 15, m_f: 8, m_b: 3 },
                Rung { m: 10, m_f: 8, m_b: 4 },
            ],
            workers: 1,
        }
    }
}

pub const PRESETS: &[&str] = &[
    "immiscible",
    "miscible",
    "barrier-v1",
    "barrier-v3",
    "barrier-v6",
    "mass-imbalance",
    "reduced-immiscible",
    "reduced-miscible",
    "reduced-barrier-v1",
    "reduced-barrier-v3",
    "reduced-barrier-v6",
    "reduced-mass-imbalance",
];

/// Named parameter set. The `reduced-*` variants have 8 bosons in 9 wells on
/// 161 points with C = (6;6;3) and run to t = 100.
pub fn preset(name: &str) -> Option<RunConfig> {
    let (reduced, base) = match name.strip_prefix("reduced-") {
        Some(rest) => (true, rest),
        None => (false, name),
    };
    let mut cfg = RunConfig::default();
    match base {
        "immiscible" | "barrier-v3" => {}
        "miscible" => {
            cfg.g_bb = 1.0;
            cfg.g_fb = 0.05;
        }
        "barrier-v1" => cfg.v0 = 1.0,
        "barrier-v6" => cfg.v0 = 6.0,
        "mass-imbalance" => cfg.mass_b = 2.0,
        _ => return None,
    }
    if reduced {
        cfg.n_bosons = 8;
        cfg.grid_points = 161;
        cfg.x_half_extent = 9.0 * FRAC_PI_2;
        cfg.schmidt_rank = 6;
        cfg.m_f = 6;
        cfg.m_b = 3;
        cfg.t_final = 100.0;
        cfg.ladder = vec![
            Rung { m: 4, m_f: 4, m_b: 2 },
            Rung { m: 6, m_f: 6, m_b: 3 },
            Rung { m: 8, m_f: 8, m_b: 4 },
        ];
    }
    cfg.preset = Some(name.to_string());
    Some(cfg)
}

impl RunConfig {
    pub fn system_spec(&self) -> SystemSpec {
        SystemSpec {
            bosons: SpeciesSpec::bosons(self.n_bosons, self.m_b).with_mass(self.mass_b),
            fermions: SpeciesSpec::fermions(self.n_fermions, self.m_f).with_mass(self.mass_f),
            interactions: InteractionSpec::new(self.g_bb, self.g_fb),
            trap: TrapSpec::new(self.omega_i, self.v0),
            grid: GridSpec::symmetric(self.grid_points, self.x_half_extent),
            schmidt_rank: self.schmidt_rank,
        }
    }

    pub fn system(&self) -> Result<CheckedSystem> {
        validate_system(&self.system_spec())
    }

    pub fn with_rung(&self, rung: Rung) -> Self {
        let mut out = self.clone();
        out.schmidt_rank = rung.m;
        out.m_f = rung.m_f;
        out.m_b = rung.m_b;
        out
    }

    pub fn t_average(&self) -> f64 {
        self.t_average.unwrap_or(self.t_final)
    }

    /// Postquench frequencies: the list if given, else the single value.
    pub fn omegas(&self) -> Vec<f64> {
        if !self.omega_f_list.is_empty() {
            self.omega_f_list.clone()
        } else {
            self.omega_f.into_iter().collect()
        }
    }

    pub fn init_strategy(&self) -> InitStrategy {
        InitStrategy::default().with_seed(self.seed)
    }

    pub fn propagation_options(&self) -> PropagationOptions {
        PropagationOptions {
            integrator: IntegratorSettings {
                abs_tol: self.abs_tol,
                rel_tol: self.rel_tol,
                initial_step: self.initial_step,
                max_step: self.max_step,
                ..PropagationOptions::default().integrator
            },
            output_interval: self.dt_out,
            rho_eps: self.rho_eps,
            ..PropagationOptions::default()
        }
    }

    pub fn relax_options(&self) -> RelaxOptions {
        RelaxOptions {
            energy_tol: self.relax_energy_tol,
            max_tau: self.max_relax_time,
            rho_eps: self.rho_eps,
            ..RelaxOptions::default()
        }
    }
}

fn parse_f64(key: &str, line: usize, v: &str) -> Result<f64> {
    let x: f64 = v.parse().map_err(|_| config_err(line, key, format!("`{v}` is not a number")))?;
    if !x.is_finite() {
        return Err(config_err(line, key, "must be finite"));
    }
    Ok(x)
}

fn parse_usize(key: &str, line: usize, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| config_err(line, key, format!("`{v}` is not a non-negative integer")))
}

fn parse_list(key: &str, line: usize, v: &str) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| parse_f64(key, line, x.trim())).collect()
}

fn parse_ladder(key: &str, line: usize, v: &str) -> Result<Vec<Rung>> {
    v.split(',')
        .map(|r| {
            let parts: Vec<&str> = r.trim().trim_matches(|c| c == '(' || c == ')').split(';').collect();
            if parts.len() != 3 {
                return Err(config_err(line, key, format!("rung `{}` is not M;m_f;m_b", r.trim())));
            }
            Ok(Rung {
                m: parse_usize(key, line, parts[0].trim())?,
                m_f: parse_usize(key, line, parts[1].trim())?,
                m_b: parse_usize(key, line, parts[2].trim())?,
            })
        })
        .collect()
}

fn config_err(line: usize, key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        line,
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn apply(cfg: &mut RunConfig, key: &str, line: usize, v: &str) -> Result<()> {
    let f = |v| parse_f64(key, line, v);
    let u = |v| parse_usize(key, line, v);
    match key {
        "n_bosons" => cfg.n_bosons = u(v)?,
        "n_fermions" => cfg.n_fermions = u(v)?,
        "g_bb" => cfg.g_bb = f(v)?,
        "g_fb" => cfg.g_fb = f(v)?,
        "v0" => cfg.v0 = f(v)?,
        "omega_i" => cfg.omega_i = f(v)?,
        "mass_b" => cfg.mass_b = f(v)?,
        "mass_f" => cfg.mass_f = f(v)?,
        "grid_points" => cfg.grid_points = u(v)?,
        "x_half_extent" => cfg.x_half_extent = f(v)?,
        "wells" => cfg.x_half_extent = u(v)? as f64 * FRAC_PI_2,
        "M" => cfg.schmidt_rank = u(v)?,
        "m_f" => cfg.m_f = u(v)?,
        "m_b" => cfg.m_b = u(v)?,
        "omega_f" => cfg.omega_f = Some(f(v)?),
        "omega_f_list" => cfg.omega_f_list = parse_list(key, line, v)?,
        "t_final" => cfg.t_final = f(v)?,
        "dt_out" => cfg.dt_out = f(v)?,
        "T_average" => cfg.t_average = Some(f(v)?),
        "abs_tol" => cfg.abs_tol = f(v)?,
        "rel_tol" => cfg.rel_tol = f(v)?,
        "initial_step" => cfg.initial_step = f(v)?,
        "max_step" => cfg.max_step = f(v)?,
        "rho_eps" => cfg.rho_eps = f(v)?,
        "relax_energy_tol" => cfg.relax_energy_tol = f(v)?,
        "max_relax_time" => cfg.max_relax_time = f(v)?,
        "seed" => cfg.seed = v.parse().map_err(|_| config_err(line, key, format!("`{v}` is not a u64")))?,
        "output_dir" => cfg.output_dir = PathBuf::from(v),
        "checkpoint_interval" => cfg.checkpoint_interval = f(v)?,
        "snapshot_times" => cfg.snapshot_times = parse_list(key, line, v)?,
        "ladder" => cfg.ladder = parse_ladder(key, line, v)?,
        "workers" => cfg.workers = u(v)?,
        _ => return Err(config_err(line, key, "unknown key")),
    }
    Ok(())
}

/// Parse and validate a configuration. `preset` is applied first regardless
/// of where it appears; every other key overrides it.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut entries = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| config_err(line, content, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        if let Some(first) = seen.insert(key.to_string(), line) {
            return Err(config_err(line, key, format!("duplicate key (first set on line {first})")));
        }
        entries.push((line, key.to_string(), value.to_string()));
    }
    if seen.contains_key("wells") && seen.contains_key("x_half_extent") {
        return Err(config_err(seen["wells"], "wells", "conflicts with x_half_extent"));
    }
    let mut cfg = match entries.iter().find(|(_, k, _)| k == "preset") {
        Some((line, key, name)) => preset(name).ok_or_else(|| {
            config_err(*line, key, format!("unknown preset `{name}`; known: {}", PRESETS.join(", ")))
        })?,
        None => RunConfig::default(),
    };
    for (line, key, value) in &entries {
        if key != "preset" {
            apply(&mut cfg, key, *line, value)?;
        }
    }
    let line_of = |key: &str| seen.get(key).copied().unwrap_or(0);
    validate(&cfg, &line_of)?;
    Ok(cfg)
}

/// Check a configuration built in code; errors carry line 0.
pub fn validate_config(cfg: &RunConfig) -> Result<()> {
    validate(cfg, &|_| 0)
}

fn validate(cfg: &RunConfig, line_of: &dyn Fn(&str) -> usize) -> Result<()> {
    let err = |key: &str, reason: String| config_err(line_of(key), key, reason);
    if cfg.m_f < cfg.n_fermions {
        let key = if line_of("m_f") > 0 { "m_f" } else { "n_fermions" };
        return Err(err(
            key,
            format!("{} fermions need at least as many orbitals, got m_f = {}", cfg.n_fermions, cfg.m_f),
        ));
    }
    for (key, v) in [("t_final", cfg.t_final), ("dt_out", cfg.dt_out)] {
        if !(v > 0.0) {
            return Err(err(key, "must be positive".into()));
        }
    }
    if let Some(t) = cfg.t_average {
        if !(t > 0.0 && t <= cfg.t_final) {
            return Err(err("T_average", format!("must lie in (0, t_final = {}]", cfg.t_final)));
        }
    }
    for (key, v) in [
        ("abs_tol", cfg.abs_tol),
        ("rel_tol", cfg.rel_tol),
        ("initial_step", cfg.initial_step),
        ("max_step", cfg.max_step),
        ("rho_eps", cfg.rho_eps),
        ("relax_energy_tol", cfg.relax_energy_tol),
        ("max_relax_time", cfg.max_relax_time),
    ] {
        if !(v > 0.0) {
            return Err(err(key, "must be positive".into()));
        }
    }
    if cfg.checkpoint_interval < 0.0 {
        return Err(err("checkpoint_interval", "must be >= 0".into()));
    }
    if cfg.workers == 0 {
        return Err(err("workers", "must be at least 1".into()));
    }
    for w in cfg.omegas() {
        if w < 0.0 {
            let key = if cfg.omega_f_list.is_empty() { "omega_f" } else { "omega_f_list" };
            return Err(err(key, format!("postquench frequency {w} is negative")));
        }
    }
    if cfg.ladder.is_empty() {
        return Err(err("ladder", "needs at least one rung".into()));
    }
    if let Some(r) = cfg.ladder.iter().find(|r| r.m == 0 || r.m_f == 0 || r.m_b == 0) {
        return Err(err("ladder", format!("rung {r} has a zero entry")));
    }
    validate_system(&cfg.system_spec()).map_err(|e| match e {
        Error::Invalid { path, reason } => {
            let key = config_key(&path);
            config_err(line_of(key), key, reason)
        }
        other => other,
    })?;
    Ok(())
}

/// Config key responsible for a system-spec field path.
fn config_key(path: &str) -> &'static str {
    match path {
        p if p.starts_with("grid.n_points") => "grid_points",
        p if p.starts_with("grid") => "x_half_extent",
        "bosons.count" => "n_bosons",
        "fermions.count" => "n_fermions",
        "bosons.mass" => "mass_b",
        "fermions.mass" => "mass_f",
        p if p.starts_with("bosons") => "m_b",
        p if p.starts_with("fermions") => "m_f",
        p if p.contains("g_bb") => "g_bb",
        p if p.contains("g_fb") => "g_fb",
        p if p.contains("v0") => "v0",
        p if p.starts_with("trap") => "omega_i",
        _ => "M",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!((cfg.n_bosons, cfg.n_fermions, cfg.grid_points), (20, 2, 475));
        assert_eq!((cfg.schmidt_rank, cfg.m_f, cfg.m_b), (10, 8, 4));
        assert_eq!((cfg.v0, cfg.omega_i), (3.0, 0.1));
        assert_eq!(cfg.t_average(), cfg.t_final);
    }

    #[test]
    fn list_and_comments() {
        let cfg = parse_config("# scan\nomega_f_list = 0.0, 0.0175, 0.05  # three\n").unwrap();
        assert_eq!(cfg.omegas(), vec![0.0, 0.0175, 0.05]);
    }

    #[test]
    fn pauli_violation_reports_line() {
        match parse_config("n_fermions = 2\nm_f = 1\n").unwrap_err() {
            Error::Config { line, key, .. } => assert_eq!((line, key.as_str()), (2, "m_f")),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_key_and_bad_value() {
        match parse_config("\n\nbogus = 1").unwrap_err() {
            Error::Config { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(parse_config("g_bb = abc"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(parse_config("g_bb = 1\ng_bb = 2"), Err(Error::Config { line: 2, .. })));
        assert!(matches!(parse_config("grid_points = 1"), Err(Error::Config { line: 1, .. })));
    }

    #[test]
    fn preset_applies_first() {
        let cfg = parse_config("g_fb = 0.3\npreset = reduced-miscible\n").unwrap();
        assert_eq!((cfg.g_bb, cfg.g_fb, cfg.n_bosons), (1.0, 0.3, 8));
        for name in PRESETS {
            let p = preset(name).unwrap();
            validate_config(&p).unwrap();
        }
        assert_eq!(preset("mass-imbalance").unwrap().mass_b, 2.0);
        assert_eq!(preset("reduced-barrier-v6").unwrap().v0, 6.0);
        assert!(preset("nonsense").is_none());
    }

    #[test]
    fn ladder_parses() {
        let cfg = parse_config("ladder = 4;4;2, (6;6;3)").unwrap();
        assert_eq!(cfg.ladder, vec![Rung { m: 4, m_f: 4, m_b: 2 }, Rung { m: 6, m_f: 6, m_b: 3 }]);
    }
}
