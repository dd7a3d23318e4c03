//! Result files: CSV tables, JSON scalars and manifests, checksums.

/// Serde adapter for `f64` values that may be infinite (temperatures at
/// `beta = inf`). Finite values are plain JSON numbers; infinities are the
/// strings `"inf"` and `"-inf"`.
pub mod extended_float {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("expected a number or \"inf\", got {other:?}"))),
            },
        }
    }
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Fixed 17-significant-digit rendering, stable across platforms.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.replace([',', '\n'], ";"),
        }
    }
}

/// Column table; each header names the quantity and its reduced unit,
/// e.g. `omega [t_hop/hbar]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn from_columns(header: &[&str], columns: &[&[f64]]) -> Self {
        let mut t = Self::new(header);
        let n = columns.first().map_or(0, |c| c.len());
        for i in 0..n {
            t.rows.push(columns.iter().map(|c| Cell::Float(c[i])).collect());
        }
        t
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Reads the numeric columns of a CSV written by [`Table::render`].
pub fn read_csv_columns(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Format {
            path: path.into(),
            message: "empty file".into(),
        })?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut cols = vec![Vec::new(); header.len()];
    for (n, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(Error::Format {
                path: path.into(),
                message: format!("row {} has {} fields, expected {}", n + 1, fields.len(), header.len()),
            });
        }
        for (c, f) in fields.iter().enumerate() {
            let v = match *f {
                "inf" => f64::INFINITY,
                "-inf" => f64::NEG_INFINITY,
                "nan" => f64::NAN,
                s => s.parse().map_err(|_| Error::Format {
                    path: path.into(),
                    message: format!("row {} column {} is not a number: {s:?}", n + 1, c + 1),
                })?,
            };
            cols[c].push(v);
        }
    }
    Ok((header, cols))
}

/// JSON with keys sorted at every level and a trailing newline.
pub fn to_json_text<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Numeric(format!("cannot serialize: {e}")))?;
    Ok(serde_json::to_string_pretty(&v).map_err(|e| Error::Numeric(e.to_string()))? + "\n")
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.into(),
        message: e.to_string(),
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub wall_seconds: f64,
    pub seeds: Vec<u64>,
}

/// Inventory of an output directory. `stages` accumulates across stage runs
/// of the same configuration; `files` always lists every file present.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub threads: usize,
    pub stages: Vec<StageRecord>,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn checksums(&self) -> BTreeMap<String, String> {
        self.files.iter().map(|f| (f.path.clone(), f.sha256.clone())).collect()
    }
}

/// Writes a stage's files under one output directory and refreshes the manifest.
pub struct ArtifactWriter {
    root: PathBuf,
    stage: String,
    started: Instant,
}

impl ArtifactWriter {
    pub fn new(root: &Path, stage: &str) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            stage: stage.to_string(),
            started: Instant::now(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_bytes(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }

    pub fn write_table(&self, rel: &str, table: &Table) -> Result<()> {
        self.write_bytes(rel, table.render().as_bytes())
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<()> {
        self.write_bytes(rel, to_json_text(value)?.as_bytes())
    }

    /// Rescans the directory, checksums every file and records this stage.
    pub fn finish(self, config_hash: &str, threads: usize, seeds: Vec<u64>) -> Result<RunManifest> {
        let manifest_path = self.root.join(MANIFEST_FILE);
        let mut stages = Vec::new();
        if manifest_path.exists() {
            if let Ok(old) = read_json::<RunManifest>(&manifest_path) {
                if old.config_hash == config_hash {
                    stages = old.stages.into_iter().filter(|s| s.stage != self.stage).collect();
                }
            }
        }
        stages.push(StageRecord {
            stage: self.stage.clone(),
            wall_seconds: self.started.elapsed().as_secs_f64(),
            seeds,
        });
        let manifest = RunManifest {
            config_hash: config_hash.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            threads,
            stages,
            files: inventory(&self.root)?,
        };
        self.write_json(MANIFEST_FILE, &manifest)?;
        Ok(manifest)
    }
}

/// Every file below `root` except the manifest, sorted by relative path.
pub fn inventory(root: &Path) -> Result<Vec<FileEntry>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path
                .strip_prefix(root)
                .expect("walked below root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            if rel == MANIFEST_FILE {
                continue;
            }
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            out.push(FileEntry {
                path: rel,
                bytes: bytes.len() as u64,
                sha256: sha256_hex(&bytes),
            });
        }
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}
