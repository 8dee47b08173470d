//! Binary design export.
//!
//! Layout: a 16-byte header (`DESIGN_MAGIC`, then `n`, `p`, dtype code as
//! little-endian `u32`), followed by `n·p` little-endian `f64` values in
//! column-major order. A JSON sidecar at `<path>.json` records the layout
//! and the generation parameters.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use faer::Mat;
use serde::{Deserialize, Serialize};

use super::StandardizedDesign;
use crate::{Error, Result};

pub const DESIGN_MAGIC: [u8; 4] = *b"MRZ1";
const DTYPE_F64: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSidecar {
    pub n: usize,
    pub p: usize,
    pub dtype: String,
    pub byte_order: String,
    pub layout: String,
    pub standardized: bool,
    /// Free-form generation parameters (seed, design kind, ...).
    pub generation: serde_json::Value,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the design and its sidecar; returns the sidecar path.
pub fn write_design(path: &Path, design: &StandardizedDesign, generation: serde_json::Value) -> Result<PathBuf> {
    let (n, p) = (design.n(), design.p());
    let dims = |v: usize| u32::try_from(v).map_err(|_| Error::domain(format!("dimension {v} exceeds u32")));
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&DESIGN_MAGIC)?;
    out.write_all(&dims(n)?.to_le_bytes())?;
    out.write_all(&dims(p)?.to_le_bytes())?;
    out.write_all(&DTYPE_F64.to_le_bytes())?;
    for j in 0..p {
        for v in design.z().col(j).iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;

    let sidecar = DesignSidecar {
        n,
        p,
        dtype: "f64".into(),
        byte_order: "little".into(),
        layout: "column-major".into(),
        standardized: design.is_standardized(),
        generation,
    };
    let side = sidecar_path(path);
    serde_json::to_writer_pretty(BufWriter::new(File::create(&side)?), &sidecar)?;
    Ok(side)
}

/// Reads a design written by [`write_design`]. The sidecar is optional;
/// when present it must agree with the header.
pub fn read_design(path: &Path) -> Result<StandardizedDesign> {
    let mut input = BufReader::new(File::open(path)?);
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    if header[..4] != DESIGN_MAGIC {
        return Err(Error::domain(format!("{} is not a design file", path.display())));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (n, p, dtype) = (word(4), word(8), word(12));
    if dtype != DTYPE_F64 as usize {
        return Err(Error::domain(format!("unsupported dtype code {dtype}")));
    }
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() != n * p * 8 {
        return Err(Error::domain(format!("expected {} data bytes, found {}", n * p * 8, bytes.len())));
    }
    let value = |i: usize, j: usize| {
        let at = (j * n + i) * 8;
        f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"))
    };
    let z = Mat::<f64>::from_fn(n, p, value);

    let side = sidecar_path(path);
    let standardized = if side.exists() {
        let meta: DesignSidecar = serde_json::from_reader(BufReader::new(File::open(&side)?))?;
        if meta.n != n || meta.p != p {
            return Err(Error::domain("sidecar dimensions disagree with the header"));
        }
        meta.standardized
    } else {
        false
    };
    let design = StandardizedDesign::from_raw(z)?;
    Ok(StandardizedDesign { standardized, ..design })
}
