//! Running configs: one at a time or as a campaign of `[[run]]` tables on a
//! bounded worker pool. A failing run is recorded in its own manifest and
//! does not stop the others.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::artifacts::{write_manifest, Artifacts, Checks, RunManifest};
use crate::cache::{cache_key, MOmegaCache};
use crate::config::{parse_table, ConfigErrors, RunConfig};
use crate::tasks::{fresh_m_omega, run_task, RunContext, M_OMEGA_REL_TOL};
use crate::RunError;

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub workers: usize,
    pub cache: Option<PathBuf>,
    pub runs: Vec<RunConfig>,
}

/// A document with `[[run]]` tables, or a single run config.
pub fn parse_campaign(text: &str) -> Result<Campaign, ConfigErrors> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigErrors(vec![format!("not a TOML document: {}", e.message())]))?;
    let Some(runs) = table.get("run") else {
        let cfg = parse_table(&table)?;
        return Ok(Campaign {
            workers: 1,
            cache: cfg.options.cache.clone(),
            runs: vec![cfg],
        });
    };
    let mut errs = Vec::new();
    for k in table.keys() {
        if !["run", "workers", "cache"].contains(&k.as_str()) {
            errs.push(format!("unknown key `{k}`"));
        }
    }
    let workers = match table.get("workers") {
        None => 1,
        Some(v) => match v.as_integer() {
            Some(w) if w >= 1 => w as usize,
            _ => {
                errs.push("`workers` must be a positive integer".into());
                1
            }
        },
    };
    let cache = match table.get("cache") {
        None => None,
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(_) => {
            errs.push("`cache` must be a string".into());
            None
        }
    };
    let mut configs = Vec::new();
    match runs.as_array() {
        Some(list) if !list.is_empty() => {
            for (i, r) in list.iter().enumerate() {
                match r.as_table().map(parse_table) {
                    Some(Ok(c)) => configs.push(c),
                    Some(Err(e)) => errs.extend(e.0.into_iter().map(|m| format!("run {i}: {m}"))),
                    None => errs.push(format!("run {i}: must be a table")),
                }
            }
        }
        _ => errs.push("`run` must be a non-empty array of tables".into()),
    }
    let mut seen = BTreeSet::new();
    for c in &configs {
        if !seen.insert(c.output.clone()) {
            errs.push(format!("output directory {} is used by more than one run", c.output.display()));
        }
    }
    if !errs.is_empty() {
        return Err(ConfigErrors(errs));
    }
    Ok(Campaign {
        workers,
        cache,
        runs: configs,
    })
}

/// Run one config and write its manifest. Only failures to write into the
/// output directory are returned as errors; everything else ends up in the
/// manifest.
pub fn run_config(cfg: &RunConfig, cache: Option<&MOmegaCache>) -> Result<RunManifest, RunError> {
    let start = Instant::now();
    let mut art = Artifacts::create(&cfg.output)?;
    let mut checks = Checks::default();
    let own_cache = match (cache, &cfg.options.cache) {
        (None, Some(path)) => Some(MOmegaCache::open(path)),
        _ => None,
    };
    let cache = cache.or(own_cache.as_ref());
    let outcome = catch_unwind(AssertUnwindSafe(|| -> Result<(), RunError> {
        let mut ctx = RunContext::new(cfg, cache)?;
        run_task(&mut ctx, &mut art, &mut checks)
    }));
    let error = match outcome {
        Ok(Ok(())) => None,
        Ok(Err(e)) => Some(e.to_string()),
        Err(panic) => Some(format!(
            "run panicked: {}",
            panic
                .downcast_ref::<String>()
                .map(String::as_str)
                .or(panic.downcast_ref::<&str>().copied())
                .unwrap_or("unknown cause")
        )),
    };
    write_manifest(art, cfg, checks, error, start.elapsed())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SpotCheck {
    pub key: String,
    pub cached: f64,
    pub fresh: f64,
    pub relative_difference: f64,
    pub passed: bool,
}

pub struct CampaignReport {
    /// In config order; `Err` when the run could not even write its manifest.
    pub manifests: Vec<Result<RunManifest, String>>,
    pub spot_check: Option<Result<SpotCheck, String>>,
}

impl CampaignReport {
    pub fn all_checks_pass(&self) -> bool {
        self.manifests.iter().all(|m| m.as_ref().is_ok_and(|m| m.checks.all_pass()))
            && self.spot_check.as_ref().map_or(true, |s| s.as_ref().is_ok_and(|s| s.passed))
    }

    pub fn any_error(&self) -> bool {
        self.manifests.iter().any(|m| m.as_ref().map_or(true, |m| m.error.is_some()))
            || self.spot_check.as_ref().is_some_and(|s| s.is_err())
    }
}

pub fn run_campaign(c: &Campaign) -> Result<CampaignReport, RunError> {
    let cache = c.cache.as_ref().map(MOmegaCache::open);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(c.workers)
        .build()
        .map_err(|e| RunError::Run(e.to_string()))?;
    let manifests: Vec<Result<RunManifest, String>> = pool.install(|| {
        c.runs
            .par_iter()
            .map(|cfg| run_config(cfg, cache.as_ref()).map_err(|e| e.to_string()))
            .collect()
    });
    let spot_check = cache.as_ref().and_then(|cache| spot_check(c, cache));
    Ok(CampaignReport { manifests, spot_check })
}

/// Recompute the first cache entry this campaign's runs refer to.
fn spot_check(c: &Campaign, cache: &MOmegaCache) -> Option<Result<SpotCheck, String>> {
    let entries = match cache.entries() {
        Ok(e) => e,
        Err(e) => return Some(Err(e.to_string())),
    };
    let keys: BTreeSet<String> = c.runs.iter().map(|r| cache_key(&r.params, &r.grid)).collect();
    let (key, entry) = entries.iter().find(|(k, _)| keys.contains(*k))?;
    Some(
        fresh_m_omega(&entry.params, entry.grid.r_max, entry.grid.n)
            .map(|fresh| {
                let rel = (entry.m_omega - fresh).abs() / fresh.abs();
                SpotCheck {
                    key: key.clone(),
                    cached: entry.m_omega,
                    fresh,
                    relative_difference: rel,
                    passed: rel <= M_OMEGA_REL_TOL,
                }
            })
            .map_err(|e| e.to_string()),
    )
}
