//! Seeded multi-method benchmark runs.

use std::collections::BTreeMap;

use cpmes_cleanup::MarlEvaluator;
use cpmes_core::optimizer::{run_strategy, ProblemMode, Proposal, RoundContext, Strategy};
use cpmes_core::pareto::ScoredDesign;
use cpmes_core::synthetic::generate_with;
use cpmes_core::{Evaluator, Method, OptimizationTrace, OptimizeError, PortableRng, SyntheticInstance};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::HarnessError;

/// The Pareto front a strategy selected from in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundFront {
    pub round: usize,
    pub members: Vec<ScoredDesign<f64>>,
}

/// Wraps a strategy and keeps every round's front.
pub struct Recording<S: ?Sized> {
    pub fronts: Vec<RoundFront>,
    inner: Box<S>,
}

impl Recording<dyn Strategy<f64>> {
    pub fn new(method: Method) -> Self {
        Self { fronts: Vec::new(), inner: method.strategy::<f64>() }
    }
}

impl Strategy<f64> for Recording<dyn Strategy<f64>> {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn needs_surrogates(&self) -> bool {
        self.inner.needs_surrogates()
    }

    fn propose(&mut self, ctx: &RoundContext<'_, f64>, rng: &mut PortableRng) -> Result<Proposal, OptimizeError> {
        let proposal = self.inner.propose(ctx, rng)?;
        if !proposal.front.is_empty() {
            self.fronts.push(RoundFront { round: ctx.round, members: proposal.front.clone() });
        }
        Ok(proposal)
    }
}

/// One (method, seed, batch size) cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub method: Method,
    pub seed: u64,
    pub batch_size: usize,
}

impl CellId {
    /// File stem used for this cell's artifacts.
    pub fn stem(&self) -> String {
        format!("{}_b{}_s{}", self.method.as_str(), self.batch_size, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub id: CellId,
    /// Complete trace, or everything evaluated before a failure.
    pub trace: OptimizationTrace,
    pub error: Option<String>,
    pub fronts: Vec<RoundFront>,
}

impl RunOutcome {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// What regret is measured against at one seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub optimum: f64,
    /// Regret charged when nothing feasible was found.
    pub sentinel: f64,
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub config: ExperimentConfig,
    pub runs: Vec<RunOutcome>,
    pub references: BTreeMap<u64, Reference>,
    pub instances: BTreeMap<u64, SyntheticInstance>,
}

impl Benchmark {
    pub fn failures(&self) -> impl Iterator<Item = &RunOutcome> {
        self.runs.iter().filter(|r| r.failed())
    }

    pub fn traces(&self) -> impl Iterator<Item = &OptimizationTrace> {
        self.runs.iter().filter(|r| !r.failed()).map(|r| &r.trace)
    }
}

/// Runs one method on one problem, resuming from `resume` if given.
pub fn run_cell<E: Evaluator>(
    config: &ExperimentConfig,
    id: CellId,
    evaluator: &E,
    resume: Option<OptimizationTrace>,
) -> RunOutcome {
    let problem = config.problem(id.seed, id.batch_size);
    let settings = config.optimizer_settings();
    let mut strategy = Recording::new(id.method);
    match run_strategy::<f64, _, _>(&problem, &settings, evaluator, &mut strategy, resume) {
        Ok(trace) => RunOutcome { id, trace, error: None, fronts: strategy.fronts },
        Err(e) => {
            warn!("{}: {e}", id.stem());
            RunOutcome { id, trace: *e.partial, error: Some(e.source.to_string()), fronts: strategy.fronts }
        }
    }
}

fn cells(config: &ExperimentConfig, seed: u64) -> Vec<CellId> {
    let mut out = Vec::new();
    for &batch_size in &config.batch_sizes {
        for &method in &config.methods {
            out.push(CellId { method, seed, batch_size });
        }
    }
    out
}

/// Runs every method at every seed and batch size. Failed cells are kept
/// with their partial traces; the other cells are unaffected.
pub fn run_benchmark(config: &ExperimentConfig) -> Result<Benchmark, HarnessError> {
    config.validate()?;
    let mut runs = Vec::new();
    let mut references = BTreeMap::new();
    let mut instances = BTreeMap::new();
    for &seed in &config.seeds {
        match config.mode {
            ProblemMode::Synthetic => {
                let instance = generate_with(seed, &config.synthetic)?;
                info!(
                    "seed {seed}: instance attempt {} with {:.1}% feasible, optimum {:.2} at {}",
                    instance.attempt,
                    100.0 * instance.feasible_fraction(),
                    instance.optimum.value,
                    instance.optimum.design
                );
                let outcomes: Vec<RunOutcome> =
                    cells(config, seed).into_par_iter().map(|id| run_cell(config, id, &instance, None)).collect();
                references.insert(seed, Reference { optimum: instance.optimum.value, sentinel: instance.regret_sentinel() });
                runs.extend(outcomes);
                instances.insert(seed, instance);
            }
            ProblemMode::Marl => {
                let evaluator = MarlEvaluator::new(
                    config.cleanup.clone(),
                    config.training.clone(),
                    config.n_baseline,
                    config.min_return,
                    seed,
                );
                let outcomes: Vec<RunOutcome> =
                    cells(config, seed).into_iter().map(|id| run_cell(config, id, &evaluator, None)).collect();
                references.insert(seed, marl_reference(&outcomes));
                runs.extend(outcomes);
            }
        }
    }
    Ok(Benchmark { config: config.clone(), runs, references, instances })
}

/// With no known optimum, regret is measured against the best feasible
/// objective any method found at this seed.
pub fn marl_reference(outcomes: &[RunOutcome]) -> Reference {
    let best = outcomes
        .iter()
        .filter_map(|o| o.trace.best_feasible())
        .fold(f64::NEG_INFINITY, f64::max);
    let optimum = if best.is_finite() { best } else { 0.0 };
    Reference { optimum, sentinel: optimum.abs() }
}
