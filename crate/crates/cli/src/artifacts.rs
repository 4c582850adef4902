//! Reading and writing stage outputs.
//!
//! CSV files start with one `# rolecast seed=.. config=..` comment line
//! followed by a header row. JSON files carry `seed` and `config_hash`
//! fields with the payload under `data`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub seed: u64,
    pub config_hash: String,
}

impl Stamp {
    fn comment(&self) -> String {
        format!(
            "# rolecast seed={} config={}\n",
            self.seed, self.config_hash
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub seed: u64,
    pub config_hash: String,
    #[serde(rename = "data")]
    pub body: T,
}

/// Output directory plus the stamp embedded in everything written there.
#[derive(Debug, Clone)]
pub struct Store {
    pub root: PathBuf,
    pub stamp: Stamp,
}

impl Store {
    pub fn new(root: PathBuf, seed: u64, config_hash: String) -> Self {
        Self {
            root,
            stamp: Stamp { seed, config_hash },
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn prepare(&self, rel: &str) -> Result<PathBuf> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, body: &T) -> Result<PathBuf> {
        let path = self.prepare(rel)?;
        let doc = Stamped {
            seed: self.stamp.seed,
            config_hash: self.stamp.config_hash.clone(),
            body,
        };
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn write_csv(&self, rel: &str, header: &[String], rows: &[Vec<String>]) -> Result<PathBuf> {
        let path = self.prepare(rel)?;
        let mut w = csv::WriterBuilder::new().from_writer(self.stamp.comment().into_bytes());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    /// Reads an upstream JSON artifact; a missing file names the stage that
    /// produces it.
    pub fn read_json<T: DeserializeOwned>(&self, rel: &str, producer: &str) -> Result<T> {
        let path = self.require(rel, producer)?;
        let text =
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let doc: Stamped<T> =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        self.check_stamp(&path, doc.seed, &doc.config_hash);
        Ok(doc.body)
    }

    pub fn read_csv(&self, rel: &str, producer: &str) -> Result<CsvTable> {
        let path = self.require(rel, producer)?;
        let text =
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        if let Some((seed, hash)) = text.lines().next().and_then(parse_comment) {
            self.check_stamp(&path, seed, hash);
        }
        read_csv_file(&path)
    }

    pub fn require(&self, rel: &str, producer: &str) -> Result<PathBuf> {
        let path = self.path(rel);
        if !path.exists() {
            bail!(
                "missing upstream artifact {} (run `rolecast {producer}` first)",
                path.display()
            );
        }
        Ok(path)
    }

    fn check_stamp(&self, path: &Path, seed: u64, hash: &str) {
        if seed != self.stamp.seed || hash != self.stamp.config_hash {
            log::warn!(
                "{} was written with seed={seed} config={hash}; current seed={} config={}",
                path.display(),
                self.stamp.seed,
                self.stamp.config_hash
            );
        }
    }
}

#[derive(Debug, Clone)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow::anyhow!("column `{name}` missing"))
    }
}

/// Seed and config hash from a `# rolecast seed=.. config=..` line.
fn parse_comment(line: &str) -> Option<(u64, &str)> {
    let rest = line.strip_prefix("# rolecast seed=")?;
    let (seed, hash) = rest.split_once(" config=")?;
    Some((seed.parse().ok()?, hash.trim()))
}

pub fn read_csv_file(path: &Path) -> Result<CsvTable> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let header = r.headers()?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok(CsvTable { header, rows })
}

pub fn fmt_f64(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else {
        format!("{v}")
    }
}
