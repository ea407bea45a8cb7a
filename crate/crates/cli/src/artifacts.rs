//! Output directory bookkeeping: every file a run writes goes through here so
//! the manifest can list it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::RunError;

pub const MANIFEST_NAME: &str = "manifest.json";

pub struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn register(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.dir.join(name)
    }

    /// One header row, then one row per record; numbers in shortest
    /// round-trip form.
    pub fn csv<R, I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), RunError>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator,
        R::Item: AsRef<str>,
    {
        let path = self.register(name);
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(header)?;
        for row in rows {
            let row: Vec<String> = row.into_iter().map(|c| c.as_ref().to_string()).collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), RunError> {
        let path = self.register(name);
        fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
        Ok(())
    }
}

/// Number formatting shared by every CSV.
pub fn num(x: f64) -> String {
    format!("{x}")
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct Checks {
    pub passed: BTreeMap<String, bool>,
    /// Checks that could not be evaluated for this run, with the reason.
    pub skipped: BTreeMap<String, String>,
    /// Scalars the checks were decided on.
    pub values: BTreeMap<String, f64>,
}

impl Checks {
    pub fn check(&mut self, name: &str, ok: bool) {
        self.passed.insert(name.to_string(), ok);
    }

    pub fn skip(&mut self, name: &str, why: impl Into<String>) {
        self.skipped.insert(name.to_string(), why.into());
    }

    pub fn value(&mut self, name: &str, x: f64) {
        self.values.insert(name.to_string(), x);
    }

    pub fn all_pass(&self) -> bool {
        self.passed.values().all(|&b| b)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub config: RunConfig,
    /// File names relative to the output directory, the manifest included.
    pub artifacts: Vec<String>,
    pub wall_time_s: f64,
    pub version: String,
    pub checks: Checks,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn succeeded(&self) -> bool {
        self.error.is_none() && self.checks.all_pass()
    }

    pub fn load(dir: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(dir.join(MANIFEST_NAME))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn write_manifest(
    mut art: Artifacts,
    config: &RunConfig,
    checks: Checks,
    error: Option<String>,
    wall: Duration,
) -> Result<RunManifest, RunError> {
    art.register(MANIFEST_NAME);
    let m = RunManifest {
        config: config.clone(),
        artifacts: art.files.clone(),
        wall_time_s: wall.as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        checks,
        error,
    };
    art.json(MANIFEST_NAME, &m)?;
    Ok(m)
}
