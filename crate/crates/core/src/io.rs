//! CSV tables and JSON sidecars.
//!
//! Numbers are written with 17 significant digits so that every value
//! round-trips; lines end in `\n`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::{Error, Result};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

/// `{:.16e}`, with non-finite values spelled `nan`, `inf`, `-inf`.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.16e}")
    }
}

/// Renders equal-length columns under `header`.
pub fn csv_string(header: &[String], columns: &[&[f64]]) -> Result<String> {
    if header.len() != columns.len() {
        return Err(Error::DimensionMismatch { expected: header.len(), found: columns.len() });
    }
    let rows = columns.first().map_or(0, |c| c.len());
    if let Some(bad) = columns.iter().find(|c| c.len() != rows) {
        return Err(Error::DimensionMismatch { expected: rows, found: bad.len() });
    }
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..rows {
        for (j, col) in columns.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format_number(col[i]));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_csv(path: &Path, header: &[String], columns: &[&[f64]]) -> Result<()> {
    let text = csv_string(header, columns)?;
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

/// Metadata written next to every output file. The `config` is the fully
/// resolved run configuration, so a sidecar can be fed back as a config.
#[derive(Clone, Debug, Serialize)]
pub struct Sidecar<C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: C,
    pub seed: u64,
    pub n_diverged: usize,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    /// Command-specific diagnostics.
    pub details: serde_json::Value,
}

impl<C: Serialize> Sidecar<C> {
    pub fn new(command: &str, config: C, seed: u64, n_diverged: usize, details: serde_json::Value) -> Self {
        let timestamp =
            std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self {
            tool: "shem",
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            config,
            seed,
            n_diverged,
            timestamp,
            details,
        }
    }
}

/// `data.csv` → `data.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Matrix as aligned rows of `re+imi` entries.
pub fn format_matrix(op: &crate::Operator) -> String {
    let d = op.dim();
    let mut out = String::new();
    for i in 0..d {
        out.push_str("  [");
        for j in 0..d {
            let z = op[(i, j)];
            let _ = write!(out, "{}{:>12.5e}{:+12.5e}i", if j > 0 { ", " } else { "" }, z.re, z.im);
        }
        out.push_str("]\n");
    }
    out
}
