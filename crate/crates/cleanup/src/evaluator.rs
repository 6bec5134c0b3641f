//! Contract evaluation by training: the MARL black box behind the optimizer.

use std::sync::OnceLock;

use cpmes_core::{DesignPoint, EvaluationError, EvaluationRecord, Evaluator};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contract::Contract;
use crate::env::CleanupConfig;
use crate::train::{train, Scenario, TrainConfig, TrainError, TrainReport};

/// Greedy-evaluation summary of the no-contract baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub harvester_returns: Vec<f64>,
    pub welfare: f64,
}

impl Baseline {
    pub fn from_report(report: &TrainReport) -> Self {
        let n = report.scenario.n_harvesters;
        Self { harvester_returns: report.eval.mean_returns()[..n].to_vec(), welfare: report.eval.mean_welfare() }
    }
}

/// Trains under `design` and scores it against `baseline`.
///
/// Slack is the per-harvester change in mean greedy return; the indicator
/// requires every cleaner's mean return to reach `min_return` (inclusive);
/// the objective is mean welfare. A positive rate with nobody recruited
/// levies nothing, so it scores as the baseline and returns no report.
pub fn evaluate_contract(
    env: &CleanupConfig,
    config: &TrainConfig,
    design: &DesignPoint,
    baseline: &Baseline,
    min_return: f64,
    seed: u64,
) -> Result<(EvaluationRecord, Option<TrainReport>), TrainError> {
    let n_harvesters = baseline.harvester_returns.len();
    if design.n_added == 0 {
        let record = EvaluationRecord::new(*design, baseline.welfare, vec![0.0; n_harvesters], true)
            .map_err(|e| TrainError::Config(e.to_string()))?;
        return Ok((record, None));
    }
    let contract = Contract::new(design.alpha, design.n_added as usize)?;
    let report = train(env, config, Scenario { n_harvesters, contract }, seed)?;
    let returns = report.eval.mean_returns();
    let slack = returns[..n_harvesters].iter().zip(&baseline.harvester_returns).map(|(c, b)| c - b).collect();
    let indicator = returns[n_harvesters..].iter().all(|&r| r >= min_return);
    let record = EvaluationRecord::new(*design, report.eval.mean_welfare(), slack, indicator)
        .map_err(|e| TrainError::Config(e.to_string()))?;
    Ok((record, Some(report)))
}

type Hook = Box<dyn Fn(&DesignPoint, &TrainReport) + Send + Sync>;

/// Evaluates contracts by training from scratch under each. The baseline is
/// trained once on first use; batches train in parallel.
pub struct MarlEvaluator {
    pub env: CleanupConfig,
    pub train: TrainConfig,
    pub n_harvesters: usize,
    pub min_return: f64,
    pub seed: u64,
    baseline: OnceLock<Result<Baseline, String>>,
    on_trained: Option<Hook>,
}

impl MarlEvaluator {
    pub fn new(env: CleanupConfig, train: TrainConfig, n_harvesters: usize, min_return: f64, seed: u64) -> Self {
        Self { env, train, n_harvesters, min_return, seed, baseline: OnceLock::new(), on_trained: None }
    }

    /// Called after every training run (baseline included) with its report.
    pub fn with_hook(mut self, hook: impl Fn(&DesignPoint, &TrainReport) + Send + Sync + 'static) -> Self {
        self.on_trained = Some(Box::new(hook));
        self
    }

    pub fn baseline(&self) -> Result<&Baseline, String> {
        self.baseline
            .get_or_init(|| {
                let scenario = Scenario { n_harvesters: self.n_harvesters, contract: Contract { alpha: 0.0, n_cleaners: 0 } };
                let report = train(&self.env, &self.train, scenario, self.seed).map_err(|e| e.to_string())?;
                if let Some(hook) = &self.on_trained {
                    hook(&DesignPoint { alpha: 0.0, n_added: 0 }, &report);
                }
                Ok(Baseline::from_report(&report))
            })
            .as_ref()
            .map_err(Clone::clone)
    }
}

impl Evaluator for MarlEvaluator {
    fn evaluate(&self, design: &DesignPoint) -> Result<EvaluationRecord, EvaluationError> {
        let fail = |message: String| EvaluationError { design: *design, message };
        let baseline = self.baseline().map_err(|e| fail(format!("baseline training failed: {e}")))?;
        let (record, report) = evaluate_contract(&self.env, &self.train, design, baseline, self.min_return, self.seed)
            .map_err(|e| fail(e.to_string()))?;
        if let (Some(hook), Some(report)) = (&self.on_trained, &report) {
            hook(design, report);
        }
        Ok(record)
    }

    fn evaluate_batch(&self, designs: &[DesignPoint]) -> Vec<Result<EvaluationRecord, EvaluationError>> {
        designs.par_iter().map(|d| self.evaluate(d)).collect()
    }
}
