//! Field persistence, CSV tables and run manifests.
//!
//! Binary field layout (little-endian):
//!
//! ```text
//! offset  size      content
//! 0       8         magic "PCGLFLD1"
//! 8       4         u32 grid size n
//! 12      1         u8 domain: 0 = physical values, 1 = Fourier coefficients
//! 13      16·n³     (re, im) f64 pairs in row-major order
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{inverse, Field, GridSpec, SpectralField, C64};

pub const MAGIC: &[u8; 8] = b"PCGLFLD1";
const HEADER: usize = 13;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Domain {
    Physical = 0,
    Spectral = 1,
}

fn encode(n: usize, domain: Domain, values: &[C64]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER + 16 * values.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.push(domain as u8);
    for v in values {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    buf
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_path(path);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

pub fn save_field(path: &Path, field: &Field) -> Result<()> {
    let g = field.grid();
    write_atomic(path, &encode(g.n(), Domain::Physical, field.values()))
}

pub fn save_spectral(path: &Path, spec: &SpectralField) -> Result<()> {
    let g = spec.grid();
    write_atomic(path, &encode(g.n(), Domain::Spectral, spec.coeffs()))
}

/// Raw contents of a field file.
pub fn read_raw(path: &Path) -> Result<(GridSpec, Domain, Vec<C64>)> {
    let bytes = fs::read(path)?;
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER {
        return Err(bad(format!("file is {} bytes, shorter than the header", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let grid = GridSpec::new(n).map_err(|e| bad(format!("bad grid size: {e}")))?;
    let domain = match bytes[12] {
        0 => Domain::Physical,
        1 => Domain::Spectral,
        t => return Err(bad(format!("unknown domain tag {t}"))),
    };
    let want = HEADER + 16 * grid.len();
    if bytes.len() != want {
        return Err(bad(format!("expected {want} bytes for n = {n}, found {}", bytes.len())));
    }
    let values = bytes[HEADER..]
        .chunks_exact(16)
        .map(|c| {
            C64::new(
                f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
            )
        })
        .collect();
    Ok((grid, domain, values))
}

/// Loads a field, transforming back to physical space if it was stored as
/// Fourier coefficients.
pub fn load_field(path: &Path) -> Result<Field> {
    let (grid, domain, values) = read_raw(path)?;
    match domain {
        Domain::Physical => Field::from_values(grid, values),
        Domain::Spectral => Ok(inverse(&SpectralField::from_coeffs(grid, values)?)),
    }
}

/// A table cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(x) => format_float(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Self {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.headers.len(), "row width differs from header");
        self.rows.push(row);
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub fn emit_csv(table: &Table, path: &Path) -> Result<()> {
    write_atomic(path, table.to_csv_string()?.as_bytes())
}

/// Run record written next to the outputs.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub constants: Vec<serde_json::Value>,
    pub outputs: Vec<String>,
    pub summary: serde_json::Value,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, config: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: None,
            config,
            constants: Vec::new(),
            outputs: Vec::new(),
            summary: serde_json::Value::Null,
            wall_clock_seconds: 0.0,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        write_atomic(path, s.as_bytes())
    }
}
