use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::files::sha256_file;

/// Provenance of one command run, embedded in every report it writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    /// SHA-256 of every input file, keyed by path as given.
    pub input_hashes: BTreeMap<String, String>,
    pub seed: u64,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    /// Config after defaults and command-line overrides.
    pub config: RunConfig,
}

fn now() -> String {
    OffsetDateTime::now_utc()
        .format(&Rfc3339)
        .unwrap_or_else(|_| "unknown".to_string())
}

impl RunManifest {
    pub fn start(
        command: &str,
        config_path: Option<&Path>,
        config: &RunConfig,
    ) -> Result<Self, CliError> {
        let mut manifest = Self {
            command: command.to_string(),
            config_path: config_path.map(|p| p.display().to_string()),
            input_hashes: BTreeMap::new(),
            seed: config.simulation.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: now(),
            finished_at: None,
            config: config.clone(),
        };
        if let Some(p) = config_path {
            manifest.add_input(p)?;
        }
        Ok(manifest)
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), CliError> {
        self.input_hashes
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn finish(&mut self) {
        self.finished_at = Some(now());
    }
}

/// A report body together with the manifest of the run that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub manifest: RunManifest,
    #[serde(flatten)]
    pub body: T,
}
