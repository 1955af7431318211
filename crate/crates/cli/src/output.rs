//! File formats: trajectory CSV, state dumps and JSON documents.
//!
//! Floats are written with `{:e}`, the shortest decimal that parses back to the
//! same double. Lines end in LF.

use std::fmt::Write as _;
use std::path::Path;

use dyadic_core::{TreeShape, TreeState};
use serde::Serialize;

use crate::error::CliError;

pub const DUMP_MAGIC: &[u8; 4] = b"DYAD";
pub const DUMP_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// One emitted time of a run, already in tree units.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub t: f64,
    pub energies: Vec<f64>,
    /// Accumulated flux from generation `g` into `g + 1`, for `g < depth`.
    pub flux: Vec<f64>,
    pub residual: f64,
}

impl Row {
    pub fn total_energy(&self) -> f64 {
        self.energies.iter().sum()
    }
}

pub fn trajectory_header(depth: usize) -> String {
    let mut s = String::from("t,E_total");
    for g in 0..=depth {
        write!(s, ",E_{g}").unwrap();
    }
    for g in 0..depth {
        write!(s, ",flux_{g}").unwrap();
    }
    s.push_str(",residual\n");
    s
}

pub fn trajectory_csv(depth: usize, rows: &[Row]) -> String {
    let mut s = trajectory_header(depth);
    for r in rows {
        write!(s, "{:e},{:e}", r.t, r.total_energy()).unwrap();
        for e in &r.energies {
            write!(s, ",{e:e}").unwrap();
        }
        for f in &r.flux {
            write!(s, ",{f:e}").unwrap();
        }
        writeln!(s, ",{:e}", r.residual).unwrap();
    }
    s
}

/// `n,Z_n,Y_n` rows from `n = −1`, where `Z_{−1} = g` and `Y_{−1} = f`.
pub fn profile_csv(z: &[f64], y_minus_one: f64, y: &[f64]) -> String {
    let mut s = String::from("n,Z_n,Y_n\n");
    writeln!(s, "-1,{:e},{:e}", z[0], y_minus_one).unwrap();
    for (n, yn) in y.iter().enumerate() {
        writeln!(s, "{n},{:e},{yn:e}", z[n + 1]).unwrap();
    }
    s
}

/// Generic `header` plus one row per entry of `columns`' common length, indexed by `n`.
pub fn indexed_csv(header: &str, columns: &[&[f64]]) -> String {
    let mut s = format!("{header}\n");
    let len = columns.iter().map(|c| c.len()).min().unwrap_or(0);
    for n in 0..len {
        write!(s, "{n}").unwrap();
        for c in columns {
            write!(s, ",{:e}", c[n]).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn encode_state(state: &TreeState) -> Vec<u8> {
    let shape = state.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * shape.len());
    out.extend_from_slice(DUMP_MAGIC);
    out.extend_from_slice(&DUMP_VERSION.to_le_bytes());
    out.extend_from_slice(&(shape.branching() as u32).to_le_bytes());
    out.extend_from_slice(&(shape.depth() as u32).to_le_bytes());
    for v in state.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_state(bytes: &[u8]) -> Result<TreeState, String> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != DUMP_MAGIC {
        return Err("not a DYAD state dump".into());
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    if word(4) != DUMP_VERSION {
        return Err(format!("unsupported dump version {}", word(4)));
    }
    let shape = TreeShape::new(word(8) as usize, word(12) as usize).map_err(|e| e.to_string())?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * shape.len() {
        return Err(format!(
            "dump holds {} bytes of values, branching {} depth {} needs {}",
            body.len(),
            shape.branching(),
            shape.depth(),
            8 * shape.len()
        ));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    TreeState::new(shape, values).map_err(|e| e.to_string())
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Output {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    write_file(path, s)
}
