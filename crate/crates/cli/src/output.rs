//! Artifact writers. Every file carries the tool version, config hash and
//! master seed.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    kind: &'a str,
    data: &'a T,
}

#[derive(Debug, Clone)]
pub struct ArtifactWriter {
    dir: PathBuf,
    provenance: Provenance,
    written: Vec<PathBuf>,
}

/// Shortest round-trip decimal form.
pub fn num(v: f64) -> String {
    format!("{v}")
}

impl ArtifactWriter {
    pub fn new(dir: &Path, config_hash: String, seed: u64) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            provenance: Provenance {
                tool: "fockfb",
                version: TOOL_VERSION,
                config_hash,
                seed,
            },
            written: Vec::new(),
        })
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn json<T: Serialize>(&mut self, name: &str, kind: &str, data: &T) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let art = Artifact {
            provenance: &self.provenance,
            kind,
            data,
        };
        let mut text = serde_json::to_string_pretty(&art)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// CSV with a leading `#` provenance line.
    pub fn csv<I>(&mut self, name: &str, header: &[String], rows: I) -> Result<PathBuf>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let path = self.dir.join(name);
        let mut out = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        let p = &self.provenance;
        writeln!(
            out,
            "# {} {} config_hash={} seed={}",
            p.tool, p.version, p.config_hash, p.seed
        )?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.written.push(path.clone());
        Ok(path)
    }
}

/// Reads a CSV artifact written by [`ArtifactWriter::csv`], skipping the
/// provenance line.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path)?;
    let body: String = text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok((header, rows))
}
