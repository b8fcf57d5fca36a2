//! Binary metric snapshots.
//!
//! Layout, all little-endian:
//!
//! | bytes | field |
//! |---|---|
//! | 6 | magic `AFLOW1` |
//! | 4 | format version (u32, currently 1) |
//! | 4 | N (u32) |
//! | 1 | active axes bitmask, bit j for real axis j |
//! | 48 | six periods (f64) |
//! | 8 | time t (f64) |
//! | 8 | alpha_prime (f64) |
//! | 16·9·N^k | `g_{p̄q}` as (re, im) f64 pairs; point-major, then p̄, then q |
//!
//! `k` is the number of active axes. Nothing follows the payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::flow::FlowState;
use crate::lattice::{GridSpec, REAL_AXES};
use crate::tensor::MetricField;

pub const MAGIC: &[u8; 6] = b"AFLOW1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 6 + 4 + 4 + 1 + 8 * REAL_AXES + 8 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotHeader {
    pub version: u32,
    pub n: usize,
    pub mask: u8,
    pub periods: [f64; REAL_AXES],
    pub t: f64,
    pub alpha_prime: f64,
}

impl SnapshotHeader {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::from_mask(self.n, self.mask, self.periods).map_err(|e| bad("mask", e.to_string()))
    }
}

fn bad(field: &'static str, message: impl Into<String>) -> Error {
    Error::Snapshot {
        field,
        message: message.into(),
    }
}

/// Serializes `g` at time `t` into snapshot bytes.
pub fn encode(g: &MetricField, t: f64, alpha_prime: f64) -> Vec<u8> {
    let grid = g.grid();
    let npts = grid.num_points();
    let mut out = Vec::with_capacity(HEADER_LEN + 144 * npts);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    out.push(grid.active_mask());
    for p in grid.periods() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out.extend_from_slice(&t.to_le_bytes());
    out.extend_from_slice(&alpha_prime.to_le_bytes());
    let data = g.data();
    for pt in 0..npts {
        for pq in 0..9 {
            let z = data[pq * npts + pt];
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(bad(field, format!("truncated: needs {n} bytes at offset {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, field: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn f64(&mut self, field: &'static str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }
}

fn decode_header(c: &mut Cursor) -> Result<SnapshotHeader> {
    if c.take(6, "magic")? != MAGIC {
        return Err(bad("magic", "not an AFLOW1 snapshot"));
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(bad("version", format!("unsupported version {version}, expected {VERSION}")));
    }
    let n = c.u32("n")? as usize;
    if n < 2 || n % 2 != 0 {
        return Err(bad("n", format!("grid size {n} is not an even integer ≥ 2")));
    }
    let mask = c.take(1, "mask")?[0];
    if mask >> REAL_AXES != 0 {
        return Err(bad("mask", format!("bits above axis 5 set in {mask:#010b}")));
    }
    let mut periods = [0.0; REAL_AXES];
    for p in periods.iter_mut() {
        *p = c.f64("periods")?;
        if !(*p > 0.0 && p.is_finite()) {
            return Err(bad("periods", format!("period {p} is not positive")));
        }
    }
    let t = c.f64("t")?;
    if !t.is_finite() {
        return Err(bad("t", "time is not finite"));
    }
    let alpha_prime = c.f64("alpha_prime")?;
    if !(alpha_prime >= 0.0 && alpha_prime.is_finite()) {
        return Err(bad("alpha_prime", format!("{alpha_prime} is not a non-negative real")));
    }
    Ok(SnapshotHeader {
        version,
        n,
        mask,
        periods,
        t,
        alpha_prime,
    })
}

/// Parses snapshot bytes into the header and the validated metric.
pub fn decode(bytes: &[u8]) -> Result<(SnapshotHeader, MetricField)> {
    let mut c = Cursor { bytes, pos: 0 };
    let h = decode_header(&mut c)?;
    let grid = h.grid()?;
    let npts = grid.num_points();
    let payload = c.take(144 * npts, "payload")?;
    if c.pos != bytes.len() {
        return Err(bad("payload", format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    let mut data = vec![Complex64::new(0.0, 0.0); 9 * npts];
    for (k, chunk) in payload.chunks_exact(16).enumerate() {
        let (pt, pq) = (k / 9, k % 9);
        data[pq * npts + pt] = Complex64::new(
            f64::from_le_bytes(chunk[..8].try_into().unwrap()),
            f64::from_le_bytes(chunk[8..].try_into().unwrap()),
        );
    }
    let g = MetricField::new(grid, data).map_err(|e| bad("payload", e.to_string()))?;
    Ok((h, g))
}

pub fn save_snapshot(s: &FlowState, alpha_prime: f64, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode(&s.g, s.t, alpha_prime))?;
    w.flush()?;
    Ok(())
}

/// Loads a snapshot with its header; derived quantities are recomputed.
pub fn read_snapshot(path: &Path) -> Result<(SnapshotHeader, FlowState)> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let (h, g) = decode(&bytes)?;
    let state = FlowState::new(g, h.t)?;
    Ok((h, state))
}

pub fn load_snapshot(path: &Path) -> Result<FlowState> {
    read_snapshot(path).map(|(_, s)| s)
}

/// Reads only the header.
pub fn read_header(path: &Path) -> Result<SnapshotHeader> {
    let mut buf = vec![0u8; HEADER_LEN];
    let mut f = File::open(path)?;
    let mut got = 0;
    while got < HEADER_LEN {
        let k = f.read(&mut buf[got..])?;
        if k == 0 {
            break;
        }
        got += k;
    }
    decode_header(&mut Cursor { bytes: &buf[..got], pos: 0 })
}
