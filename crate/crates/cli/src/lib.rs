//! Batch front end for radnls: run configurations, campaigns, the m_ω cache
//! and the CSV/JSON artifacts each run leaves behind.

pub mod artifacts;
pub mod cache;
pub mod campaign;
pub mod config;
pub mod tasks;

pub use artifacts::{Checks, RunManifest};
pub use campaign::{parse_campaign, run_campaign, run_config, Campaign, CampaignReport};
pub use config::{parse_config, ConfigErrors, RunConfig, Task};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigErrors),
    #[error(transparent)]
    Core(#[from] radnls::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Run(String),
}

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CHECK_FAILED: i32 = 1;
    pub const ERROR: i32 = 2;
}
