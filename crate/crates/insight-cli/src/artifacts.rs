//! Output artifacts with provenance.
//!
//! Every file a command writes carries the config hash, the effective
//! seed, and the tool version, so any report can be regenerated from
//! its inputs. CSV files put provenance on a leading `#` line; JSON
//! files wrap the payload in an envelope. Wall-clock measurements are
//! confined to columns whose names end in `_seconds` or `_us`, which
//! are the only fields allowed to differ between identical runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Identity of the run, stamped into everything it writes.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    pub fn new(config_hash: &str, seed: u64) -> Self {
        Self {
            config: config_hash.to_string(),
            seed,
            version: TOOL_VERSION.to_string(),
        }
    }

    pub fn comment_line(&self) -> String {
        format!(
            "# config={} seed={} version={}",
            self.config, self.seed, self.version
        )
    }
}

/// JSON envelope for structured artifacts.
#[derive(Debug, Serialize)]
pub struct Envelope<T> {
    pub config: String,
    pub seed: u64,
    pub version: String,
    pub payload: T,
}

pub fn write_json<T: Serialize>(
    path: &Path,
    prov: &Provenance,
    payload: &T,
) -> Result<()> {
    let envelope = Envelope {
        config: prov.config.clone(),
        seed: prov.seed,
        version: prov.version.clone(),
        payload,
    };
    let mut text = serde_json::to_string_pretty(&envelope)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// JSON lines: provenance object first, then one object per item.
pub fn write_jsonl<T: Serialize>(path: &Path, prov: &Provenance, items: &[T]) -> Result<()> {
    let mut text = serde_json::to_string(prov)?;
    text.push('\n');
    for item in items {
        text.push_str(&serde_json::to_string(item)?);
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// A CSV report: provenance comment, header, then rows. Values are
/// written with `Display`, which for `f64` is the shortest exact
/// round-trip form, so identical runs produce identical bytes.
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(prov: &Provenance, header: &[&str]) -> Self {
        let mut text = prov.comment_line();
        text.push('\n');
        text.push_str(&header.join(","));
        text.push('\n');
        Self {
            text,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.columns, "row width");
        let mut line = cells.join(",");
        line.push('\n');
        self.text.push_str(&line);
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, &self.text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

pub fn cell_f64(v: f64) -> String {
    format!("{v}")
}

/// Fixed-width table on stdout, suppressed by `--quiet`.
pub struct Table {
    widths: Vec<usize>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
        Self {
            widths: header.iter().map(|h| h.len()).collect(),
            rows: vec![header],
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        assert_eq!(cells.len(), self.widths.len(), "row width");
        for (w, c) in self.widths.iter_mut().zip(&cells) {
            *w = (*w).max(c.len());
        }
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, row) in self.rows.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                if j > 0 {
                    out.push_str("  ");
                }
                let _ = write!(out, "{cell:<width$}", width = self.widths[j]);
            }
            while out.ends_with(' ') {
                out.pop();
            }
            out.push('\n');
            if i == 0 {
                for (j, &w) in self.widths.iter().enumerate() {
                    if j > 0 {
                        out.push_str("  ");
                    }
                    out.push_str(&"-".repeat(w));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Output directory resolution: `--out` flag, then the config's
/// `[report] out_dir`, then `$INSIGHT_OUT_DIR`, then the working
/// directory. Created if missing.
pub fn resolve_out_dir(flag: Option<&Path>, config_dir: Option<&str>) -> Result<PathBuf> {
    let dir = flag
        .map(Path::to_path_buf)
        .or_else(|| config_dir.map(PathBuf::from))
        .or_else(|| std::env::var_os("INSIGHT_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}
