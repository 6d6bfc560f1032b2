//! CSV and JSON writers. Numbers use the shortest decimal form that parses back to the same `f64`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::FORMAT_VERSION;

/// Shortest round-trip decimal form of `v`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// First 16 hex digits of the SHA-256 of the canonical JSON form of `cfg`.
pub fn config_hash<C: Serialize>(cfg: &C) -> Result<String> {
    let bytes = serde_json::to_vec(cfg)?;
    Ok(hex::encode(Sha256::digest(&bytes))[..16].to_owned())
}

/// Writes every file of one command into `dir` with a shared provenance line.
pub struct OutputDir {
    dir: PathBuf,
    hash: String,
}

impl OutputDir {
    pub fn create(dir: &Path, hash: String) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_owned(),
            hash,
        })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Writes `rows` under `header`, preceded by the format comment line and followed by `trailer`
    /// comment lines.
    pub fn csv(
        &self,
        name: &str,
        convention: &str,
        header: &[String],
        rows: impl IntoIterator<Item = Vec<String>>,
        trailer: &[String],
    ) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let mut out = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        writeln!(
            out,
            "# format_version={FORMAT_VERSION} config_hash={} convention={convention}",
            self.hash
        )?;
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(header)?;
            for row in rows {
                w.write_record(&row)?;
            }
            w.flush()?;
        }
        for line in trailer {
            writeln!(out, "# {line}")?;
        }
        out.flush()?;
        Ok(path)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
