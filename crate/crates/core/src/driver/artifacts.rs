//! On-disk artifacts of a run: checkpoints, density heatmaps, trajectory rows.
//!
//! A checkpoint is a state snapshot followed by a trailer:
//!
//! ```text
//! b"BFQM"
//! f64 x 4      step size, previous error, energy shift, initial energy
//! u64          trajectory data rows written, counting the t = 0 row
//! ```
//!
//! A heatmap is `b"BFQH"`, `u64 rows, u64 cols`, then `rows * cols` f64
//! row-major, with a text sidecar naming the axes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::ansatz::{decode_state, encode_state, MBState};
use crate::error::{Error, Result};
use crate::model::Species;
use crate::propagator::{ControllerState, ResumeMeta};

const META_MAGIC: &[u8; 4] = b"BFQM";
const HEATMAP_MAGIC: &[u8; 4] = b"BFQH";

/// Write through a temporary file and rename, so readers never see a torn file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: MBState,
    pub n_fermions: usize,
    pub n_bosons: usize,
    pub meta: ResumeMeta,
    pub initial_energy: f64,
    pub rows: usize,
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = encode_state(&self.state, self.n_fermions, self.n_bosons);
        out.extend_from_slice(META_MAGIC);
        for v in [
            self.meta.controller.step_size,
            self.meta.controller.previous_error,
            self.meta.energy_shift,
            self.initial_energy,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.rows as u64).to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (header, state, used) = decode_state(bytes)?;
        let rest = &bytes[used..];
        if rest.len() != 4 + 5 * 8 || &rest[..4] != META_MAGIC {
            return Err(Error::Format("checkpoint trailer missing or malformed".into()));
        }
        let word = |i: usize| -> [u8; 8] { rest[4 + 8 * i..12 + 8 * i].try_into().unwrap() };
        let f = |i| f64::from_le_bytes(word(i));
        Ok(Self {
            state,
            n_fermions: header.n_f,
            n_bosons: header.n_b,
            meta: ResumeMeta {
                controller: ControllerState {
                    step_size: f(0),
                    previous_error: f(1),
                },
                energy_shift: f(2),
            },
            initial_energy: f(3),
            rows: u64::from_le_bytes(word(4)) as usize,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

/// Row-major heatmap of a field sampled on `x` at times `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = HEATMAP_MAGIC.to_vec();
        out.extend_from_slice(&(self.times.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.x.len() as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Decode the binary part; times and positions come from the sidecar.
    pub fn decode_values(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
        if bytes.len() < 20 || &bytes[..4] != HEATMAP_MAGIC {
            return Err(Error::Format("not a heatmap container".into()));
        }
        let rows = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
        let cols = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = &bytes[20..];
        if body.len() != rows * cols * 8 {
            return Err(Error::Format(format!("heatmap body has {} bytes, expected {}", body.len(), rows * cols * 8)));
        }
        let values = body.chunks_exact(8).map(|w| f64::from_le_bytes(w.try_into().unwrap())).collect();
        Ok((rows, cols, values))
    }

    pub fn sidecar(&self, quantity: &str) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:.17e}")).collect::<Vec<_>>().join(",");
        format!(
            "quantity = {quantity}\nrows = t\ncols = x\nn_rows = {}\nn_cols = {}\nt = {}\nx = {}\n",
            self.times.len(),
            self.x.len(),
            join(&self.times),
            join(&self.x)
        )
    }

    pub fn write(&self, path: &Path, quantity: &str) -> Result<()> {
        write_atomic(path, &self.encode())?;
        write_atomic(&sidecar_path(path), self.sidecar(quantity).as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let (rows, cols, values) = Self::decode_values(&bytes)?;
        let side = sidecar_path(path);
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let field = |name: &str| -> Result<Vec<f64>> {
            let line = text
                .lines()
                .find_map(|l| l.strip_prefix(&format!("{name} = ")))
                .ok_or_else(|| Error::Format(format!("sidecar lacks `{name}`")))?;
            if line.is_empty() {
                return Ok(Vec::new());
            }
            line.split(',')
                .map(|v| v.parse().map_err(|_| Error::Format(format!("bad number `{v}` in sidecar"))))
                .collect()
        };
        let (times, x) = (field("t")?, field("x")?);
        if times.len() != rows || x.len() != cols {
            return Err(Error::Format("sidecar axes disagree with heatmap shape".into()));
        }
        Ok(Self { times, x, values })
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("txt")
}

/// File layout of one run directory.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub dir: PathBuf,
}

impl RunPaths {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
    pub fn trajectory(&self) -> PathBuf {
        self.dir.join("trajectory.csv")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.dir.join("checkpoint.bfq")
    }
    pub fn final_state(&self) -> PathBuf {
        self.dir.join("final_state.bfq")
    }
    pub fn ground_state(&self) -> PathBuf {
        self.dir.join("ground_state.bfq")
    }
    /// Raw rows accumulated while running, turned into a heatmap at the end.
    pub fn density_rows(&self, s: Species) -> PathBuf {
        self.dir.join(format!("density_{}.rows", s.label().to_lowercase()))
    }
    pub fn density_heatmap(&self, s: Species) -> PathBuf {
        self.dir.join(format!("density_{}.bin", s.label().to_lowercase()))
    }
    pub fn snapshot(&self, t: f64) -> PathBuf {
        self.dir.join(format!("snapshot_t{t:.4}.csv"))
    }
    pub fn summary(&self) -> PathBuf {
        self.dir.join("summary.txt")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::init_guess;
    use crate::grid::GridSpec;
    use crate::model::{validate_system, InteractionSpec, SpeciesSpec, SystemSpec, TrapSpec};

    #[test]
    fn checkpoint_round_trip() {
        let spec = SystemSpec {
            bosons: SpeciesSpec::bosons(2, 2),
            fermions: SpeciesSpec::fermions(1, 2),
            interactions: InteractionSpec::new(0.1, 0.2),
            trap: TrapSpec::new(0.1, 1.0),
            grid: GridSpec::wells(21, 3),
            schmidt_rank: 2,
        };
        let sys = validate_system(&spec).unwrap();
        let state = init_guess(&sys, Default::default()).unwrap();
        let cp = Checkpoint {
            state,
            n_fermions: 1,
            n_bosons: 2,
            meta: ResumeMeta {
                controller: ControllerState {
                    step_size: 0.0123,
                    previous_error: 0.5,
                },
                energy_shift: -1.25,
            },
            initial_energy: 3.5,
            rows: 17,
        };
        let back = Checkpoint::decode(&cp.encode()).unwrap();
        assert_eq!(back, cp);
        let mut bytes = cp.encode();
        bytes.pop();
        assert!(Checkpoint::decode(&bytes).is_err());
    }

    #[test]
    fn heatmap_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.bin");
        let h = Heatmap {
            times: vec![0.0, 0.5],
            x: vec![-1.0, 0.0, 1.0],
            values: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0 + 1e-15],
        };
        h.write(&path, "density_b").unwrap();
        assert_eq!(Heatmap::read(&path).unwrap(), h);
        assert!(fs::read_to_string(sidecar_path(&path)).unwrap().contains("rows = t"));
    }
}
