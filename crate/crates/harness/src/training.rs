//! Single-contract MARL runs with their exports.

use std::path::Path;

use cpmes_cleanup::evaluator::{evaluate_contract, Baseline};
use cpmes_cleanup::train::{render_episode, train};
use cpmes_cleanup::{CleanupConfig, Contract, Scenario, TrainConfig, TrainReport};
use cpmes_core::{DesignPoint, EvaluationRecord};
use serde::{Deserialize, Serialize};

use crate::artifacts::{curve_csv, episode_metrics_csv, episode_summary_csv, write_file, write_json};
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub design: DesignPoint,
    pub record: EvaluationRecord,
    pub baseline_welfare: f64,
    pub baseline_median_apples_150: f64,
    pub contract_median_apples_150: Option<f64>,
}

pub struct ContractRun {
    pub baseline: TrainReport,
    pub contract: Option<TrainReport>,
    pub record: EvaluationRecord,
}

/// Trains the baseline, then the contract `design`, at one seed.
pub fn run_contract(
    env: &CleanupConfig,
    config: &TrainConfig,
    n_harvesters: usize,
    design: DesignPoint,
    min_return: f64,
    seed: u64,
) -> Result<ContractRun, HarnessError> {
    let scenario = Scenario { n_harvesters, contract: Contract { alpha: 0.0, n_cleaners: 0 } };
    let baseline = train(env, config, scenario, seed)?;
    let (record, contract) =
        evaluate_contract(env, config, &design, &Baseline::from_report(&baseline), min_return, seed)?;
    Ok(ContractRun { baseline, contract, record })
}

/// Curve, evaluation metrics, a rendered greedy episode and the policy
/// snapshot of one trained scenario, under `dir/<label>_*`.
pub fn write_training(dir: &Path, label: &str, env: &CleanupConfig, report: &TrainReport, seed: u64) -> Result<(), HarnessError> {
    write_file(&dir.join(format!("{label}_curve.csv")), &curve_csv(&report.curve)?)?;
    let river = env.river_cells();
    write_file(&dir.join(format!("{label}_eval_steps.csv")), &episode_metrics_csv(&report.eval.episodes, river)?)?;
    write_file(&dir.join(format!("{label}_eval_episodes.csv")), &episode_summary_csv(&report.eval.episodes)?)?;
    let mut policies = report.policies.clone();
    let (_, frames) = render_episode(env, &report.scenario, &mut policies, seed)?;
    write_file(&dir.join(format!("{label}_render.log")), &frames.join("\n"))?;
    write_json(&dir.join(format!("{label}_policy.json")), &report.policies.snapshot(report.scenario))?;
    Ok(())
}

pub fn summarize(run: &ContractRun) -> TrainingSummary {
    TrainingSummary {
        design: run.record.design,
        record: run.record.clone(),
        baseline_welfare: run.baseline.eval.mean_welfare(),
        baseline_median_apples_150: run.baseline.eval.median_apples_at(150),
        contract_median_apples_150: run.contract.as_ref().map(|r| r.eval.median_apples_at(150)),
    }
}
