//! Observations of expensive evaluations and the optimization trace.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::DesignPoint;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecordError {
    #[error("design {0} recruits nobody, so its feasibility indicator must be 1")]
    IndicatorOnEmptyRoster(DesignPoint),
    #[error("non-finite value in record for {0}")]
    NonFinite(DesignPoint),
}

/// Outcome of evaluating one contract design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub design: DesignPoint,
    /// Principal's objective (system welfare).
    pub principal_objective: f64,
    /// Contract return minus baseline return, one per baseline agent.
    pub ir_slack_baseline: Vec<f64>,
    /// 1 iff every recruited agent reaches the minimum return.
    pub feasibility_indicator: bool,
    pub feasible: bool,
}

impl EvaluationRecord {
    pub fn new(
        design: DesignPoint,
        principal_objective: f64,
        ir_slack_baseline: Vec<f64>,
        feasibility_indicator: bool,
    ) -> Result<Self, RecordError> {
        if design.n_added == 0 && !feasibility_indicator {
            return Err(RecordError::IndicatorOnEmptyRoster(design));
        }
        if !principal_objective.is_finite() || ir_slack_baseline.iter().any(|s| !s.is_finite()) {
            return Err(RecordError::NonFinite(design));
        }
        let feasible = feasibility_indicator && ir_slack_baseline.iter().all(|&s| s >= 0.0);
        Ok(Self {
            design,
            principal_objective,
            ir_slack_baseline,
            feasibility_indicator,
            feasible,
        })
    }

    pub fn min_slack(&self) -> f64 {
        self.ir_slack_baseline.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `feasible ⇔ min slack ≥ 0 ∧ φ = 1`, and `φ = 1` when nobody is recruited.
    pub fn is_consistent(&self) -> bool {
        let expect = self.feasibility_indicator && self.min_slack() >= 0.0;
        self.feasible == expect && (self.design.n_added > 0 || self.feasibility_indicator)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("evaluation of {design} failed: {message}")]
pub struct EvaluationError {
    pub design: DesignPoint,
    pub message: String,
}

/// The expensive black box: synthetic lookup table or MARL training.
pub trait Evaluator: Sync {
    fn evaluate(&self, design: &DesignPoint) -> Result<EvaluationRecord, EvaluationError>;

    /// Evaluates a batch; results are in input order. Implementations may
    /// run the designs concurrently.
    fn evaluate_batch(&self, designs: &[DesignPoint]) -> Vec<Result<EvaluationRecord, EvaluationError>> {
        designs.iter().map(|d| self.evaluate(d)).collect()
    }
}

impl<E: Evaluator + ?Sized> Evaluator for &E {
    fn evaluate(&self, design: &DesignPoint) -> Result<EvaluationRecord, EvaluationError> {
        (**self).evaluate(design)
    }

    fn evaluate_batch(&self, designs: &[DesignPoint]) -> Vec<Result<EvaluationRecord, EvaluationError>> {
        (**self).evaluate_batch(designs)
    }
}

/// Best feasible objective after a given number of post-prior evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestSoFar {
    pub evaluations: usize,
    pub objective: Option<f64>,
}

/// What a strategy did in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub beta: f64,
    pub selected: Vec<DesignPoint>,
    pub scores: Vec<f64>,
    pub front_size: usize,
    /// Selection fell back to the highest-variance unevaluated design.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub method: String,
    pub seed: u64,
    pub batch_size: usize,
    pub n_priors: usize,
    pub records: Vec<EvaluationRecord>,
    /// Entry `k` is the state after `k` post-prior evaluations.
    pub best_feasible_so_far: Vec<BestSoFar>,
    pub rounds: Vec<RoundLog>,
}

impl OptimizationTrace {
    pub fn new(method: impl Into<String>, seed: u64, batch_size: usize) -> Self {
        Self {
            method: method.into(),
            seed,
            batch_size,
            n_priors: 0,
            records: Vec::new(),
            best_feasible_so_far: Vec::new(),
            rounds: Vec::new(),
        }
    }

    /// Appends prior records; must be called before any [`push`](Self::push).
    pub fn push_prior(&mut self, record: EvaluationRecord) {
        debug_assert_eq!(self.records.len(), self.n_priors);
        self.records.push(record);
        self.n_priors += 1;
        let best = self.best_feasible();
        self.best_feasible_so_far = vec![BestSoFar { evaluations: 0, objective: best }];
    }

    pub fn push(&mut self, record: EvaluationRecord) {
        if self.best_feasible_so_far.is_empty() {
            self.best_feasible_so_far.push(BestSoFar { evaluations: 0, objective: self.best_feasible() });
        }
        self.records.push(record);
        self.best_feasible_so_far.push(BestSoFar {
            evaluations: self.evaluations(),
            objective: self.best_feasible(),
        });
    }

    pub fn evaluations(&self) -> usize {
        self.records.len() - self.n_priors
    }

    pub fn priors(&self) -> &[EvaluationRecord] {
        &self.records[..self.n_priors]
    }

    pub fn best_feasible(&self) -> Option<f64> {
        best_feasible(&self.records)
    }

    pub fn best_feasible_record(&self) -> Option<&EvaluationRecord> {
        self.records
            .iter()
            .filter(|r| r.feasible)
            .fold(None, |acc: Option<&EvaluationRecord>, r| match acc {
                Some(b) if b.principal_objective >= r.principal_objective => Some(b),
                _ => Some(r),
            })
    }

    /// Best feasible objective after `evaluations` post-prior evaluations
    /// (clamped to what the trace contains).
    pub fn best_after(&self, evaluations: usize) -> Option<f64> {
        let end = (self.n_priors + evaluations).min(self.records.len());
        best_feasible(&self.records[..end])
    }

    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

pub fn best_feasible(records: &[EvaluationRecord]) -> Option<f64> {
    records
        .iter()
        .filter(|r| r.feasible)
        .map(|r| r.principal_objective)
        .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
}
