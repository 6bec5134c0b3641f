//! Declarative experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use cpmes_cleanup::{CleanupConfig, TrainConfig};
use cpmes_core::optimizer::{OptimizerSettings, ProblemConfig, ProblemMode};
use cpmes_core::synthetic::SyntheticConfig;
use cpmes_core::Method;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: ProblemMode,
    pub methods: Vec<Method>,
    /// Regret checkpoints; the largest is the evaluation budget.
    pub budgets: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub n_baseline: usize,
    pub max_added: u32,
    pub alpha_steps: usize,
    pub min_return: f64,
    /// Defaults depend on `mode` when absent.
    pub optimizer: Option<OptimizerSettings>,
    pub synthetic: SyntheticConfig,
    pub cleanup: CleanupConfig,
    pub training: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::synthetic()
    }
}

impl ExperimentConfig {
    pub fn synthetic() -> Self {
        Self {
            mode: ProblemMode::Synthetic,
            methods: vec![Method::Cpmes, Method::Cei, Method::Cmes, Method::Mace, Method::Random],
            budgets: vec![4, 8, 12, 16, 20],
            batch_sizes: vec![1],
            seeds: vec![0, 1, 2, 3, 4],
            output_dir: PathBuf::from("out"),
            n_baseline: 5,
            max_added: 3,
            alpha_steps: 101,
            min_return: 0.0,
            optimizer: None,
            synthetic: SyntheticConfig::default(),
            cleanup: CleanupConfig::default(),
            training: TrainConfig::default(),
        }
    }

    pub fn marl() -> Self {
        Self { mode: ProblemMode::Marl, max_added: 5, methods: vec![Method::Cpmes, Method::Cei, Method::Cmes, Method::Mace], ..Self::synthetic() }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string_pretty(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.methods.is_empty() {
            return bad("methods must not be empty");
        }
        if self.budgets.is_empty() || self.budgets.contains(&0) {
            return bad("budgets must be non-empty and positive");
        }
        if self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return bad("budgets must be strictly increasing");
        }
        if self.batch_sizes.is_empty() || self.batch_sizes.contains(&0) {
            return bad("batch_sizes must be non-empty and positive");
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return bad("seeds must be distinct");
        }
        if self.mode == ProblemMode::Synthetic
            && (self.synthetic.n_baseline != self.n_baseline
                || self.synthetic.max_added != self.max_added
                || self.synthetic.alpha_steps != self.alpha_steps)
        {
            return bad("synthetic generator shape must match n_baseline, max_added and alpha_steps");
        }
        self.problem(self.seeds[0], self.batch_sizes[0]).validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.mode == ProblemMode::Marl {
            self.cleanup.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
            self.training.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn budget(&self) -> usize {
        *self.budgets.iter().max().expect("validated")
    }

    pub fn problem(&self, seed: u64, batch_size: usize) -> ProblemConfig {
        ProblemConfig {
            mode: self.mode,
            n_baseline: self.n_baseline,
            max_added: self.max_added,
            alpha_steps: self.alpha_steps,
            min_return: self.min_return,
            budget: self.budget(),
            batch_size,
            seed,
        }
    }

    pub fn optimizer_settings(&self) -> OptimizerSettings {
        self.optimizer.clone().unwrap_or_else(|| OptimizerSettings::for_mode(self.mode))
    }
}
