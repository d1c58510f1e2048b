//! One TOML file per run, named by a hash of the command configuration.

use std::fs;
use std::path::{Path, PathBuf};

use cvgate::nlsq::Benchmark;
use cvgate::optimizer::{OptimizationRecord, RECORD_SCHEMA_VERSION};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

const INDEX: &str = "index.toml";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed record {path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("record {0} exists with different content; records are immutable")]
    Conflict(PathBuf),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRecord {
    pub schema_version: u32,
    pub kind: String,
    pub key: String,
    /// the command configuration the key was computed from
    pub config: toml::Table,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<OptimizationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<Benchmark>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub file: String,
    pub kind: String,
    pub key: String,
    pub kappa: f64,
    pub value: f64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct IndexFile {
    #[serde(default)]
    entries: Vec<IndexEntry>,
}

#[derive(Debug, Clone)]
pub struct ResultStore {
    dir: PathBuf,
}

/// Content key of a configuration: SHA-256 over the kind and the TOML text.
pub fn config_key(kind: &str, config: &toml::Table) -> String {
    let mut h = Sha256::new();
    h.update(kind.as_bytes());
    h.update(b"\n");
    h.update(toml::to_string(config).expect("tables serialize").as_bytes());
    h.finalize().iter().take(12).map(|b| format!("{b:02x}")).collect()
}

impl ResultStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, kind: &str, key: &str) -> PathBuf {
        self.dir.join(format!("{kind}-{key}.toml"))
    }

    pub fn read(path: &Path) -> Result<StoredRecord, StoreError> {
        let text = fs::read_to_string(path).map_err(io(path))?;
        let rec: StoredRecord = toml::from_str(&text)
            .map_err(|e| StoreError::Malformed { path: path.to_path_buf(), message: e.to_string() })?;
        if rec.schema_version != RECORD_SCHEMA_VERSION {
            return Err(StoreError::Malformed {
                path: path.to_path_buf(),
                message: format!("schema version {} (expected {RECORD_SCHEMA_VERSION})", rec.schema_version),
            });
        }
        Ok(rec)
    }

    /// The stored result for this configuration, if any.
    pub fn get(&self, kind: &str, config: &toml::Table) -> Result<Option<StoredRecord>, StoreError> {
        let path = self.path_for(kind, &config_key(kind, config));
        if path.exists() {
            Self::read(&path).map(Some)
        } else {
            Ok(None)
        }
    }

    /// Writes a new record. An existing file with identical content is
    /// accepted; different content is a conflict.
    pub fn put(&self, rec: &StoredRecord) -> Result<PathBuf, StoreError> {
        let path = self.path_for(&rec.kind, &rec.key);
        let text =
            toml::to_string(rec).map_err(|e| StoreError::Malformed { path: path.clone(), message: e.to_string() })?;
        if path.exists() {
            let old = fs::read_to_string(&path).map_err(io(&path))?;
            if old != text {
                return Err(StoreError::Conflict(path));
            }
            return Ok(path);
        }
        let tmp = path.with_extension("toml.tmp");
        fs::write(&tmp, &text).map_err(io(&tmp))?;
        fs::rename(&tmp, &path).map_err(io(&path))?;
        self.append_index(&path, rec)?;
        Ok(path)
    }

    pub fn new_record(kind: &str, config: toml::Table) -> StoredRecord {
        StoredRecord {
            schema_version: RECORD_SCHEMA_VERSION,
            kind: kind.to_string(),
            key: config_key(kind, &config),
            config,
            record: None,
            benchmark: None,
        }
    }

    fn entry(path: &Path, rec: &StoredRecord) -> IndexEntry {
        let (kappa, value) = match (&rec.record, &rec.benchmark) {
            (Some(r), _) => (r.kappa, r.r_v),
            (None, Some(b)) => (b.report.kappa, b.report.total),
            _ => (f64::NAN, f64::NAN),
        };
        IndexEntry {
            file: path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            kind: rec.kind.clone(),
            key: rec.key.clone(),
            kappa,
            value,
        }
    }

    fn append_index(&self, path: &Path, rec: &StoredRecord) -> Result<(), StoreError> {
        let mut idx = self.index()?;
        idx.retain(|e| e.key != rec.key || e.kind != rec.kind);
        idx.push(Self::entry(path, rec));
        self.write_index(&idx)
    }

    fn write_index(&self, entries: &[IndexEntry]) -> Result<(), StoreError> {
        let path = self.dir.join(INDEX);
        let text = toml::to_string(&IndexFile { entries: entries.to_vec() })
            .map_err(|e| StoreError::Malformed { path: path.clone(), message: e.to_string() })?;
        fs::write(&path, text).map_err(io(&path))
    }

    pub fn index(&self) -> Result<Vec<IndexEntry>, StoreError> {
        let path = self.dir.join(INDEX);
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&path).map_err(io(&path))?;
        let idx: IndexFile =
            toml::from_str(&text).map_err(|e| StoreError::Malformed { path: path.clone(), message: e.to_string() })?;
        Ok(idx.entries)
    }

    /// Rebuilds the index from the record files alone, sorted by file name.
    pub fn rebuild_index(&self) -> Result<Vec<IndexEntry>, StoreError> {
        let mut files: Vec<PathBuf> = fs::read_dir(&self.dir)
            .map_err(io(&self.dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml") && p.file_name().is_some_and(|n| n != INDEX))
            .collect();
        files.sort();
        let entries = files.iter().map(|p| Ok(Self::entry(p, &Self::read(p)?))).collect::<Result<Vec<_>, _>>()?;
        self.write_index(&entries)?;
        Ok(entries)
    }
}
