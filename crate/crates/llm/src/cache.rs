use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Backend, GenerationParams, GenerationRecord, LlmError, Result};

/// Directory of `{key}.json` files, one [`GenerationRecord`] each.
#[derive(Debug, Clone)]
pub struct CacheDir {
    root: PathBuf,
}

impl CacheDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        CacheDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.root.join(format!("{key}.json"))
    }

    fn io_err(path: &Path, source: std::io::Error) -> LlmError {
        LlmError::Cache {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn get(&self, key: &str) -> Result<Option<GenerationRecord>> {
        let path = self.path_for(key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Self::io_err(&path, e)),
        };
        let corrupt = |message: String| LlmError::Corrupt {
            path: path.display().to_string(),
            message,
        };
        let rec: GenerationRecord = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
        if rec.key != key {
            return Err(corrupt(format!("stored key {} does not match file name", rec.key)));
        }
        Ok(Some(rec))
    }

    /// Writes to a temporary file in the same directory, then renames it
    /// into place, so readers never see a partial record.
    pub fn put(&self, rec: &GenerationRecord) -> Result<()> {
        fs::create_dir_all(&self.root).map_err(|e| Self::io_err(&self.root, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.root).map_err(|e| Self::io_err(&self.root, e))?;
        let bytes = serde_json::to_vec_pretty(rec).expect("record serializes");
        tmp.write_all(&bytes).map_err(|e| Self::io_err(tmp.path(), e))?;
        let path = self.path_for(&rec.key);
        tmp.persist(&path).map_err(|e| Self::io_err(&path, e.error))?;
        Ok(())
    }
}

/// Serves completions from a cache. Without an inner backend a miss is an
/// error; with one, misses are generated and recorded.
pub struct ReplayBackend {
    cache: CacheDir,
    inner: Option<Box<dyn Backend>>,
}

impl ReplayBackend {
    pub fn strict(cache: CacheDir) -> Self {
        ReplayBackend { cache, inner: None }
    }

    pub fn recording(cache: CacheDir, inner: Box<dyn Backend>) -> Self {
        ReplayBackend {
            cache,
            inner: Some(inner),
        }
    }
}

impl Backend for ReplayBackend {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<GenerationRecord> {
        let key = params.cache_key(prompt);
        if let Some(rec) = self.cache.get(&key)? {
            return Ok(rec);
        }
        let Some(inner) = &self.inner else {
            return Err(LlmError::MissingKey { key });
        };
        let rec = inner.complete(prompt, params)?;
        self.cache.put(&rec)?;
        Ok(rec)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub records: usize,
    pub bytes: u64,
    pub distinct_models: usize,
    pub corrupt: usize,
}

/// Tallies a cache directory. Unreadable or mismatched records count as
/// corrupt rather than being skipped.
pub fn cache_stats(dir: &CacheDir) -> Result<CacheStats> {
    let mut stats = CacheStats::default();
    let entries = match fs::read_dir(dir.root()) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(stats),
        Err(e) => return Err(CacheDir::io_err(dir.root(), e)),
    };
    let mut models = BTreeSet::new();
    for entry in entries {
        let entry = entry.map_err(|e| CacheDir::io_err(dir.root(), e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let Some(key) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        stats.bytes += entry.metadata().map(|m| m.len()).unwrap_or(0);
        match dir.get(key) {
            Ok(Some(rec)) => {
                stats.records += 1;
                models.insert(rec.params.model);
            }
            _ => stats.corrupt += 1,
        }
    }
    stats.distinct_models = models.len();
    Ok(stats)
}
