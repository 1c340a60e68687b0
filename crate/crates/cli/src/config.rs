//! JSON run configuration. Every field has a default, so `{}` is a valid
//! document; unknown keys are rejected.

use std::path::Path;

use rckl::solver::SolverConfig;
use rckl::synthbench::ExperimentConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Used by `train`.
    pub solver: SolverConfig,
    /// Used by `experiment` and `generate`.
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    pub fn parse(path: &Path, text: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| CliError::parse(path, e.line() as u64, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(path, &text)
    }

    pub fn load_or_default(path: Option<&Path>) -> CliResult<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.solver
            .validate()
            .map_err(|e| CliError::Config(format!("solver: {e}")))?;
        self.experiment
            .validate()
            .map_err(|e| CliError::Config(format!("experiment: {e}")))?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config is always serializable");
        s.push('\n');
        s
    }
}
