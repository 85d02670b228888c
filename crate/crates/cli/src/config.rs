//! Run configuration: a single JSON file drives every subcommand, with
//! command-line overrides for the seed and worker count. Unknown keys are
//! rejected and missing keys are reported with the offending name.

use std::path::Path;

use admm_mimo::model::{DatasetSpec, SnrPolicy, SystemConfig};
use admm_mimo::psnet::TrainConfig;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mc: usize,
    pub kc: usize,
    pub q: u32,
    #[serde(rename = "L")]
    pub layers: usize,
    pub n: usize,
    pub rho_init: f64,
    pub lr: f64,
    pub lr_decay: f64,
    pub epochs: usize,
    pub batch: usize,
    pub samples: usize,
    pub fd_step: f64,
    pub snr_db_grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(seed) = seed_override {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.system()?;
        if self.n < 1 {
            return Err(CliError::Config("n must be >= 1".into()));
        }
        if !(self.rho_init > 0.0) {
            return Err(CliError::Config(format!(
                "rho_init must be positive, got {}",
                self.rho_init
            )));
        }
        self.train_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.snr_db_grid.is_empty() {
            return Err(CliError::Config("snr_db_grid must be non-empty".into()));
        }
        if self.snr_db_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(CliError::Config(
                "snr_db_grid must be strictly increasing".into(),
            ));
        }
        if self.snr_db_grid.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Config("snr_db_grid must be finite".into()));
        }
        if self.trials < 1 {
            return Err(CliError::Config("trials must be >= 1".into()));
        }
        Ok(())
    }

    pub fn system(&self) -> Result<SystemConfig, CliError> {
        SystemConfig::new(self.mc, self.kc, self.q, self.layers)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            samples: self.samples,
            epochs: self.epochs,
            batch: self.batch,
            lr: self.lr,
            fd_step: self.fd_step,
            lr_decay: self.lr_decay,
        }
    }

    /// Training data policy: a single-point grid trains at that SNR, a
    /// longer grid trains uniformly over its range.
    pub fn snr_policy(&self) -> SnrPolicy {
        if self.snr_db_grid.len() == 1 {
            SnrPolicy::Fixed(self.snr_db_grid[0])
        } else {
            SnrPolicy::UniformRange(
                self.snr_db_grid[0],
                *self.snr_db_grid.last().expect("grid non-empty"),
            )
        }
    }

    pub fn dataset(&self) -> DatasetSpec {
        DatasetSpec {
            mc: self.mc,
            kc: self.kc,
            q: self.q,
            snr: self.snr_policy(),
            m: self.samples,
            seed: self.seed,
        }
    }
}
