//! Binary state container.
//!
//! Layout (all little-endian):
//!
//! ```text
//! b"BFQ1"
//! u64 x 6      M, m_F, m_B, N_F, N_B, n_points
//! f64          time
//! f64 x M      Schmidt weights lambda_k
//! c64 x M*dF   fermionic coefficients, row-major in (k, number-state index)
//! c64 x M*dB   bosonic coefficients, same ordering
//! c64 x mF*n   fermionic orbitals, row-major in (orbital, grid point)
//! c64 x mB*n   bosonic orbitals
//! ```
//!
//! `c64` is an `(re, im)` pair of f64. Number states follow the
//! descending-lexicographic order of `enumerate_occupations`.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{binomial, Species};
use crate::C64;

use super::state::MBState;

pub const MAGIC: &[u8; 4] = b"BFQ1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SnapshotHeader {
    pub schmidt_rank: usize,
    pub m_f: usize,
    pub m_b: usize,
    pub n_f: usize,
    pub n_b: usize,
    pub n_points: usize,
}

impl SnapshotHeader {
    fn dims(&self) -> (usize, usize) {
        (binomial(self.m_f, self.n_f), binomial(self.n_b + self.m_b - 1, self.m_b - 1))
    }
}

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_c64(out: &mut Vec<u8>, v: C64) {
    put_f64(out, v.re);
    put_f64(out, v.im);
}

/// Encode with particle numbers supplied by the caller.
pub fn encode_state(state: &MBState, n_f: usize, n_b: usize) -> Vec<u8> {
    let f = Species::Fermion;
    let b = Species::Boson;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    for v in [
        state.schmidt_rank(),
        state.spfs(f).ncols(),
        state.spfs(b).ncols(),
        n_f,
        n_b,
        state.spfs(f).nrows(),
    ] {
        put_u64(&mut out, v);
    }
    put_f64(&mut out, state.time);
    for &l in &state.schmidt {
        put_f64(&mut out, l);
    }
    for s in [f, b] {
        let cmat = state.coeffs(s);
        for k in 0..cmat.ncols() {
            for i in 0..cmat.nrows() {
                put_c64(&mut out, cmat[(i, k)]);
            }
        }
    }
    for s in [f, b] {
        let phi = state.spfs(s);
        for orb in 0..phi.ncols() {
            for j in 0..phi.nrows() {
                put_c64(&mut out, phi[(j, orb)]);
            }
        }
    }
    out
}

pub fn write_state<W: Write>(w: &mut W, state: &MBState, n_f: usize, n_b: usize) -> std::io::Result<()> {
    w.write_all(&encode_state(state, n_f, n_b))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::Format("dimension overflow".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn c64(&mut self) -> Result<C64> {
        Ok(C64::new(self.f64()?, self.f64()?))
    }
}

/// Decode a state; returns the header and the number of bytes consumed.
pub fn decode_state(bytes: &[u8]) -> Result<(SnapshotHeader, MBState, usize)> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::Format("missing BFQ1 magic".into()));
    }
    let header = SnapshotHeader {
        schmidt_rank: cur.u64()?,
        m_f: cur.u64()?,
        m_b: cur.u64()?,
        n_f: cur.u64()?,
        n_b: cur.u64()?,
        n_points: cur.u64()?,
    };
    if header.m_b == 0 || header.m_f == 0 || header.schmidt_rank == 0 {
        return Err(Error::Format("zero dimension in header".into()));
    }
    let (d_f, d_b) = header.dims();
    let needed = 8 * (1 + header.schmidt_rank)
        + 16 * (header.schmidt_rank * (d_f + d_b) + header.n_points * (header.m_f + header.m_b));
    if bytes.len() < cur.pos + needed {
        return Err(Error::Format(format!(
            "payload of {} bytes is shorter than the {} implied by the header",
            bytes.len() - cur.pos,
            needed
        )));
    }
    let time = cur.f64()?;
    let schmidt = (0..header.schmidt_rank).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
    let mut read_block = |rows: usize, cols: usize| -> Result<DMatrix<C64>> {
        let mut m = DMatrix::zeros(rows, cols);
        for k in 0..cols {
            for i in 0..rows {
                m[(i, k)] = cur.c64()?;
            }
        }
        Ok(m)
    };
    let c_f = read_block(d_f, header.schmidt_rank)?;
    let c_b = read_block(d_b, header.schmidt_rank)?;
    let phi_f = read_block(header.n_points, header.m_f)?;
    let phi_b = read_block(header.n_points, header.m_b)?;
    let consumed = cur.pos;
    let mut coeffs = [DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)];
    let mut spfs = [DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)];
    coeffs[Species::Fermion.index()] = c_f;
    coeffs[Species::Boson.index()] = c_b;
    spfs[Species::Fermion.index()] = phi_f;
    spfs[Species::Boson.index()] = phi_b;
    Ok((
        header,
        MBState {
            schmidt,
            coeffs,
            spfs,
            time,
        },
        consumed,
    ))
}

pub fn read_state<R: Read>(r: &mut R) -> Result<(SnapshotHeader, MBState)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Format(format!("read failed: {e}")))?;
    let (h, s, _) = decode_state(&bytes)?;
    Ok((h, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::state::{init_guess, InitStrategy};
    use crate::grid::GridSpec;
    use crate::model::{validate_system, InteractionSpec, SpeciesSpec, SystemSpec, TrapSpec};
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn round_trip_is_bit_exact(seed in 0u64..10_000, m in 1usize..4, m_b in 1usize..4, n_b in 1usize..5) {
            let spec = SystemSpec {
                bosons: SpeciesSpec::bosons(n_b, m_b.max(if m > 1 { 2 } else { 1 })),
                fermions: SpeciesSpec::fermions(2, 2 + m),
                interactions: InteractionSpec::new(0.1, 0.1),
                trap: TrapSpec::new(0.1, 3.0),
                grid: GridSpec::wells(21, 3),
                schmidt_rank: m,
            };
            prop_assume!(validate_system(&spec).is_ok());
            let sys = validate_system(&spec).unwrap();
            let mut st = init_guess(&sys, InitStrategy::default().with_seed(seed)).unwrap();
            st.time = seed as f64 * 0.123;
            st.spfs[0][(3, 0)] = C64::new(f64::MIN_POSITIVE, -0.0);
            let bytes = encode_state(&st, 2, n_b);
            let (h, back, used) = decode_state(&bytes).unwrap();
            prop_assert_eq!(used, bytes.len());
            prop_assert_eq!(h.n_b, n_b);
            prop_assert_eq!(encode_state(&back, 2, n_b), bytes);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode_state(b"NOPE").is_err());
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&[1u8; 16]);
        assert!(decode_state(&bytes).is_err());
    }
}
