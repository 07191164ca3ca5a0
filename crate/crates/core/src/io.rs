//! Output formats: CSV tables, the JSON run summary and binary field dumps.
//!
//! A field dump is little-endian throughout:
//!
//! ```text
//! magic  b"FHNFIELD"
//! d, N   u64, u64
//! L, dt  f64, f64
//! n_steps, seed, slices   u64, u64, u64
//! data   slices * N^d f64, slice-major, last axis fastest
//! ```

use crate::error::{Error, Result};
use crate::noise::SpaceTimeLattice;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"FHNFIELD";

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

/// `{command, config_hash, pass_fail, metrics}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub command: String,
    pub config_hash: String,
    pub pass_fail: Option<bool>,
    pub metrics: serde_json::Value,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub lattice: SpaceTimeLattice,
    pub seed: u64,
    pub slices: Vec<Vec<f64>>,
}

pub fn write_field_dump(path: &Path, lattice: &SpaceTimeLattice, seed: u64, slices: &[&[f64]]) -> Result<()> {
    let sites = lattice.sites();
    if slices.iter().any(|s| s.len() != sites) {
        return Err(Error::InvalidParameter("slice length differs from N^d".into()));
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(MAGIC)?;
    for v in [lattice.d as u64, lattice.n as u64] {
        out.write_all(&v.to_le_bytes())?;
    }
    for v in [lattice.side, lattice.dt] {
        out.write_all(&v.to_le_bytes())?;
    }
    for v in [lattice.n_steps as u64, seed, slices.len() as u64] {
        out.write_all(&v.to_le_bytes())?;
    }
    for s in slices {
        for v in s.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_field_dump(path: &Path) -> Result<FieldDump> {
    let mut input = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Config(format!("{} is not a field dump", path.display())));
    }
    let mut word = [0u8; 8];
    let mut next = |input: &mut dyn Read| -> Result<[u8; 8]> {
        input.read_exact(&mut word)?;
        Ok(word)
    };
    let d = u64::from_le_bytes(next(&mut input)?) as usize;
    let n = u64::from_le_bytes(next(&mut input)?) as usize;
    let side = f64::from_le_bytes(next(&mut input)?);
    let dt = f64::from_le_bytes(next(&mut input)?);
    let n_steps = u64::from_le_bytes(next(&mut input)?) as usize;
    let seed = u64::from_le_bytes(next(&mut input)?);
    let count = u64::from_le_bytes(next(&mut input)?) as usize;
    let lattice = SpaceTimeLattice::new(d, n, side, dt, n_steps)?;
    let mut slices = Vec::with_capacity(count);
    for _ in 0..count {
        let mut s = Vec::with_capacity(lattice.sites());
        for _ in 0..lattice.sites() {
            s.push(f64::from_le_bytes(next(&mut input)?));
        }
        slices.push(s);
    }
    Ok(FieldDump { lattice, seed, slices })
}
