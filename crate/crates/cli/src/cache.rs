//! Persistent table of m_ω values. Writers hold a lock and replace the file
//! atomically, so readers never see a partial document.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use radnls::ModelParams;
use serde::{Deserialize, Serialize};

use crate::config::GridSpec;
use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub m_omega: f64,
    pub params: ModelParams,
    pub grid: GridSpec,
}

pub fn cache_key(p: &ModelParams, g: &GridSpec) -> String {
    format!("{}_R{:.6}_n{}", p.cache_key(), g.r_max, g.n)
}

pub struct MOmegaCache {
    path: PathBuf,
    lock: Mutex<()>,
}

impl MOmegaCache {
    pub fn open(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            lock: Mutex::new(()),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn read(&self) -> Result<BTreeMap<String, CacheEntry>, RunError> {
        match fs::read_to_string(&self.path) {
            Ok(text) => Ok(serde_json::from_str(&text)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(BTreeMap::new()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn entries(&self) -> Result<BTreeMap<String, CacheEntry>, RunError> {
        let _g = self.lock.lock().unwrap();
        self.read()
    }

    pub fn get(&self, p: &ModelParams, g: &GridSpec) -> Result<Option<f64>, RunError> {
        Ok(self.entries()?.get(&cache_key(p, g)).map(|e| e.m_omega))
    }

    pub fn insert(&self, p: &ModelParams, g: &GridSpec, m_omega: f64) -> Result<(), RunError> {
        let _g = self.lock.lock().unwrap();
        let mut table = self.read()?;
        table.insert(
            cache_key(p, g),
            CacheEntry {
                m_omega,
                params: *p,
                grid: *g,
            },
        );
        let dir = match self.path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
        tmp.write_all(serde_json::to_string_pretty(&table)?.as_bytes())?;
        tmp.flush()?;
        tmp.persist(&self.path).map_err(|e| RunError::Io(e.error))?;
        Ok(())
    }
}
