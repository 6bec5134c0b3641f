//! The constrained Pareto max-value entropy search loop.
//!
//! Each round fits one GP for the principal objective, one per baseline
//! agent's IR slack and one for the recruited agents' feasibility
//! indicator; solves the cheap three-objective problem
//! `max (UCB_G, UCB_φ, Π_j Pr(IR_j ≥ 0))` with NSGA-II; and ranks the
//! resulting front by constrained MES to pick the next design or batch.
//!
//! The loop itself is shared with the baselines through [`Strategy`].

use std::cmp::Ordering;
use std::collections::HashSet;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{
    cmes_score, joint_pof, sample_feasible_max_values_from, sample_max_values_from, ucb, AcquisitionError,
    BetaSchedule, ConstraintPosterior, MaxValueSamples,
};
use crate::design::{DesignError, DesignPoint, DesignSpace};
use crate::gp::{Dataset, FittedGp, GpError, GpOptions, GpPosterior, HyperMode};
use crate::kernel::KernelSpec;
use crate::pareto::{nsga2, Nsga2Config, ParetoError, ParetoFront, ScoredDesign};
use crate::record::{EvaluationError, EvaluationRecord, Evaluator, OptimizationTrace, RoundLog};
use crate::rng::PortableRng;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("invalid problem configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("surrogate fit failed: {0}")]
    Surrogate(#[from] GpError),
    #[error(transparent)]
    Pareto(#[from] ParetoError),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
}

/// A failed run together with everything evaluated before the failure, so
/// it can be persisted and resumed.
#[derive(Debug, Error)]
#[error("optimization stopped after {} records: {source}", partial.records.len())]
pub struct RunError {
    pub partial: Box<OptimizationTrace>,
    #[source]
    pub source: OptimizeError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemMode {
    /// Instant lookup oracle; priors are the lattice corners plus three
    /// random designs.
    Synthetic,
    /// Each evaluation trains agents; priors are ten random designs.
    Marl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub mode: ProblemMode,
    /// Number of baseline agents (one IR constraint each).
    pub n_baseline: usize,
    pub max_added: u32,
    pub alpha_steps: usize,
    /// Minimum expected return for recruited agents.
    pub min_return: f64,
    /// Expensive evaluations after the priors.
    pub budget: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl ProblemConfig {
    pub fn synthetic(seed: u64) -> Self {
        Self {
            mode: ProblemMode::Synthetic,
            n_baseline: 5,
            max_added: 3,
            alpha_steps: 101,
            min_return: 0.0,
            budget: 20,
            batch_size: 1,
            seed,
        }
    }

    pub fn marl(seed: u64) -> Self {
        Self {
            mode: ProblemMode::Marl,
            n_baseline: 5,
            max_added: 5,
            alpha_steps: 101,
            min_return: 0.0,
            budget: 20,
            batch_size: 1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), OptimizeError> {
        if self.budget == 0 {
            return Err(OptimizeError::Config("budget must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(OptimizeError::Config("batch size must be at least 1".into()));
        }
        if self.n_baseline == 0 {
            return Err(OptimizeError::Config("need at least one baseline agent".into()));
        }
        self.space()?;
        Ok(())
    }

    pub fn space(&self) -> Result<DesignSpace, DesignError> {
        DesignSpace::new(self.max_added, self.alpha_steps)
    }
}

/// Grid on which posterior maxima are sampled for MES.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "size")]
pub enum MaxValueGrid {
    FullLattice,
    RandomSubset(usize),
}

/// Which maximum the entropy term is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaxValueTarget {
    /// The unconstrained maximum of the objective surrogate.
    Objective,
    /// The maximum over designs the constraint surrogates deem feasible,
    /// floored at the best feasible observation.
    Feasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateSettings {
    /// Observation noise for the objective and IR surrogates, in
    /// standardized target units.
    pub noise_variance: f64,
    /// Observation noise for the feasibility-indicator surrogate.
    pub phi_noise_variance: f64,
    pub standardize: bool,
    pub hyper: HyperMode,
    /// Initial SE lengthscales (alpha, recruits) before tuning.
    pub se_lengthscales: [f64; 2],
    pub matern_lengthscales: [f64; 2],
    /// Constant factor of the indicator kernel.
    pub phi_constant: f64,
}

impl Default for SurrogateSettings {
    fn default() -> Self {
        Self {
            noise_variance: 1e-6,
            phi_noise_variance: 1e-6,
            standardize: true,
            hyper: HyperMode::default(),
            se_lengthscales: [0.2, 0.5],
            matern_lengthscales: [0.2, 0.5],
            phi_constant: 1.0,
        }
    }
}

impl SurrogateSettings {
    pub fn for_mode(mode: ProblemMode) -> Self {
        match mode {
            ProblemMode::Synthetic => Self::default(),
            ProblemMode::Marl => Self { noise_variance: 1e-2, phi_noise_variance: 1e-2, ..Self::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    pub surrogates: SurrogateSettings,
    pub beta: BetaSchedule,
    pub max_value_samples: usize,
    pub max_value_grid: MaxValueGrid,
    pub max_value_target: MaxValueTarget,
    pub nsga2: Nsga2Config,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self::for_mode(ProblemMode::Synthetic)
    }
}

impl OptimizerSettings {
    pub fn for_mode(mode: ProblemMode) -> Self {
        Self {
            surrogates: SurrogateSettings::for_mode(mode),
            beta: BetaSchedule::default(),
            max_value_samples: 10,
            max_value_grid: match mode {
                ProblemMode::Synthetic => MaxValueGrid::FullLattice,
                ProblemMode::Marl => MaxValueGrid::RandomSubset(512),
            },
            max_value_target: MaxValueTarget::Feasible,
            nsga2: Nsga2Config::default(),
        }
    }
}

/// The `N_b + 2` surrogates fitted on one trace.
#[derive(Debug, Clone)]
pub struct Surrogates<T> {
    pub objective: FittedGp<T>,
    pub ir: Vec<FittedGp<T>>,
    pub phi: FittedGp<T>,
}

/// Threshold above which the indicator surrogate's latent counts as
/// feasible.
pub const PHI_THRESHOLD: f64 = 0.5;

impl<T: Scalar> Surrogates<T> {
    pub fn fit(
        space: DesignSpace,
        records: &[EvaluationRecord],
        n_baseline: usize,
        settings: &SurrogateSettings,
    ) -> Result<Self, GpError> {
        let points: Vec<DesignPoint> = records.iter().map(|r| r.design).collect();
        let noise = T::lit(settings.noise_variance);
        let se = KernelSpec::se_product(settings.se_lengthscales.map(T::lit).to_vec(), T::one());
        let opts = GpOptions { standardize: settings.standardize, hyper: settings.hyper };

        let targets = |f: &dyn Fn(&EvaluationRecord) -> f64| -> Vec<T> {
            records.iter().map(|r| T::lit(f(r))).collect()
        };
        let objective = FittedGp::fit(
            space,
            Dataset::new(points.clone(), targets(&|r| r.principal_objective), noise)?,
            se.clone(),
            opts,
        )?;
        let ir = (0..n_baseline)
            .map(|j| {
                FittedGp::fit(
                    space,
                    Dataset::new(
                        points.clone(),
                        targets(&|r| r.ir_slack_baseline.get(j).copied().unwrap_or(0.0)),
                        noise,
                    )?,
                    se.clone(),
                    opts,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let matern = KernelSpec::matern_product(
            settings.matern_lengthscales.map(T::lit).to_vec(),
            T::one(),
            T::lit(settings.phi_constant),
        );
        let phi = FittedGp::fit(
            space,
            Dataset::new(
                points,
                targets(&|r| if r.feasibility_indicator { 1.0 } else { 0.0 }),
                T::lit(settings.phi_noise_variance),
            )?,
            matern,
            GpOptions { standardize: false, hyper: settings.hyper },
        )?;
        Ok(Self { objective, ir, phi })
    }

    pub fn ir_posteriors(&self, x: &DesignPoint) -> Vec<ConstraintPosterior<T>> {
        self.ir
            .iter()
            .map(|gp| ConstraintPosterior::new(gp.predict(x), T::zero()))
            .collect()
    }

    /// IR constraints at 0 followed by the indicator at [`PHI_THRESHOLD`].
    pub fn constraint_posteriors(&self, x: &DesignPoint) -> Vec<ConstraintPosterior<T>> {
        let mut c = self.ir_posteriors(x);
        c.push(ConstraintPosterior::new(self.phi.predict(x), T::lit(PHI_THRESHOLD)));
        c
    }

    /// `Π_j Pr(IR_j(x) ≥ 0)`.
    pub fn ir_joint_pof(&self, x: &DesignPoint) -> T {
        self.ir
            .iter()
            .fold(T::one(), |acc, gp| acc * gp.predict(x).probability_above(T::zero()))
    }
}

/// The cheap multi-objective problem at iteration `t`:
/// `x ↦ [UCB_G(x), UCB_φ(x), Π_j Pr(IR_j(x) ≥ 0)]`.
pub fn build_mo_objectives<'a, T: Scalar>(
    surrogates: &'a Surrogates<T>,
    t: usize,
    schedule: &BetaSchedule,
) -> impl Fn(&DesignPoint) -> Vec<T> + 'a {
    let beta = T::lit(schedule.beta(t));
    move |x: &DesignPoint| {
        vec![
            ucb(&surrogates.objective.predict(x), beta),
            ucb(&surrogates.phi.predict(x), beta),
            surrogates.ir_joint_pof(x),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub designs: Vec<DesignPoint>,
    pub scores: Vec<f64>,
    pub fallback: bool,
}

/// Ranks the front by cMES and returns the best `batch_size` designs not yet
/// evaluated (ties: lower alpha, then fewer recruits). If every front member
/// was already evaluated, falls back to the unevaluated lattice design with
/// the largest objective posterior variance.
pub fn select_next<T: Scalar>(
    front: &ParetoFront<T>,
    surrogates: &Surrogates<T>,
    maxima: &MaxValueSamples<T>,
    batch_size: usize,
    evaluated: &HashSet<DesignPoint>,
    space: &DesignSpace,
) -> Selection {
    let mut seen = HashSet::new();
    let mut scored: Vec<(DesignPoint, T)> = front
        .designs()
        .filter(|d| !evaluated.contains(d) && seen.insert(**d))
        .map(|d| {
            let score = cmes_score(
                &surrogates.objective.predict(d),
                &surrogates.constraint_posteriors(d),
                maxima,
            );
            (*d, score)
        })
        .collect();
    if scored.is_empty() {
        return variance_fallback(surrogates, evaluated, space);
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.tie_order(&b.0))
    });
    scored.truncate(batch_size);
    Selection {
        designs: scored.iter().map(|s| s.0).collect(),
        scores: scored.iter().map(|s| s.1.as_f64()).collect(),
        fallback: false,
    }
}

pub(crate) fn variance_fallback<T: Scalar>(
    surrogates: &Surrogates<T>,
    evaluated: &HashSet<DesignPoint>,
    space: &DesignSpace,
) -> Selection {
    let best = space
        .lattice()
        .into_iter()
        .filter(|d| !evaluated.contains(d))
        .map(|d| (d, surrogates.objective.predict(&d).variance))
        .fold(None, |acc: Option<(DesignPoint, T)>, (d, v)| match acc {
            Some((_, bv)) if bv >= v => acc,
            _ => Some((d, v)),
        });
    match best {
        Some((d, v)) => {
            debug!("selection fell back to highest-variance design {d}");
            Selection { designs: vec![d], scores: vec![v.as_f64()], fallback: true }
        }
        None => Selection { designs: Vec::new(), scores: Vec::new(), fallback: true },
    }
}

/// Everything a strategy may look at when proposing designs.
pub struct RoundContext<'a, T> {
    pub space: &'a DesignSpace,
    pub config: &'a ProblemConfig,
    pub settings: &'a OptimizerSettings,
    pub surrogates: Option<&'a Surrogates<T>>,
    pub records: &'a [EvaluationRecord],
    pub evaluated: &'a HashSet<DesignPoint>,
    /// 1-based round index.
    pub round: usize,
    /// Number of designs wanted this round.
    pub request: usize,
}

impl<T: Scalar> RoundContext<'_, T> {
    pub fn surrogates(&self) -> &Surrogates<T> {
        self.surrogates.expect("strategy declared it needs surrogates")
    }

    pub fn beta(&self) -> f64 {
        self.settings.beta.beta(self.round)
    }

    pub fn incumbent(&self) -> Option<f64> {
        crate::record::best_feasible(self.records)
    }

    pub fn unevaluated(&self) -> Vec<DesignPoint> {
        self.space
            .lattice()
            .into_iter()
            .filter(|d| !self.evaluated.contains(d))
            .collect()
    }

    /// Grid for max-value sampling per the configured policy.
    pub fn max_value_grid(&self, rng: &mut PortableRng) -> Vec<DesignPoint> {
        let mut lattice = self.space.lattice();
        match self.settings.max_value_grid {
            MaxValueGrid::FullLattice => lattice,
            MaxValueGrid::RandomSubset(n) if n < lattice.len() => {
                rng.shuffle(&mut lattice);
                lattice.truncate(n);
                lattice
            }
            MaxValueGrid::RandomSubset(_) => lattice,
        }
    }

    pub fn sample_maxima(&self, rng: &mut PortableRng) -> Result<MaxValueSamples<T>, AcquisitionError> {
        let grid = self.max_value_grid(rng);
        let s = self.surrogates();
        let posts: Vec<GpPosterior<T>> = s.objective.predict_many(&grid);
        let count = self.settings.max_value_samples;
        match self.settings.max_value_target {
            MaxValueTarget::Objective => sample_max_values_from(&posts, count, rng),
            MaxValueTarget::Feasible => {
                let pof: Vec<T> = grid.iter().map(|d| joint_pof(&s.constraint_posteriors(d))).collect();
                sample_feasible_max_values_from(&posts, &pof, self.incumbent().map(T::lit), count, rng)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub designs: Vec<DesignPoint>,
    pub scores: Vec<f64>,
    pub front_size: usize,
    /// The Pareto front the designs were picked from, if any.
    pub front: Vec<ScoredDesign<f64>>,
    pub fallback: bool,
}

/// A rule for choosing the next designs given the current surrogates.
pub trait Strategy<T: Scalar> {
    fn name(&self) -> String;

    fn needs_surrogates(&self) -> bool {
        true
    }

    fn propose(&mut self, ctx: &RoundContext<'_, T>, rng: &mut PortableRng) -> Result<Proposal, OptimizeError>;
}

/// cPMES proper.
#[derive(Debug, Clone, Default)]
pub struct CpmesStrategy;

impl<T: Scalar> Strategy<T> for CpmesStrategy {
    fn name(&self) -> String {
        "cpmes".into()
    }

    fn propose(&mut self, ctx: &RoundContext<'_, T>, rng: &mut PortableRng) -> Result<Proposal, OptimizeError> {
        let surrogates = ctx.surrogates();
        let objectives = build_mo_objectives(surrogates, ctx.round, &ctx.settings.beta);
        let nsga = Nsga2Config { seed: rng.next_u64(), ..ctx.settings.nsga2 };
        let front = nsga2(ctx.space, objectives, &nsga)?;
        let maxima = ctx.sample_maxima(rng)?;
        let sel = select_next(&front, surrogates, &maxima, ctx.request, ctx.evaluated, ctx.space);
        debug!(
            "round {}: front {} -> {:?} (fallback {})",
            ctx.round,
            front.len(),
            sel.designs,
            sel.fallback
        );
        Ok(Proposal {
            designs: sel.designs,
            scores: sel.scores,
            front_size: front.len(),
            front: front.to_f64(),
            fallback: sel.fallback,
        })
    }
}

/// Evaluates the prior designs. Synthetic mode: both lattice corners plus
/// three seeded random designs; MARL mode: ten seeded random designs.
pub fn initialize_priors<E: Evaluator>(
    config: &ProblemConfig,
    method: &str,
    evaluator: &E,
) -> Result<OptimizationTrace, RunError> {
    let mut trace = OptimizationTrace::new(method, config.seed, config.batch_size);
    let designs = match prior_designs(config) {
        Ok(d) => d,
        Err(e) => return Err(RunError { partial: Box::new(trace), source: e }),
    };
    for (d, res) in designs.iter().zip(evaluator.evaluate_batch(&designs)) {
        match res {
            Ok(r) => trace.push_prior(r),
            Err(e) => {
                warn!("prior {d} failed: {e}");
                return Err(RunError { partial: Box::new(trace), source: e.into() });
            }
        }
    }
    Ok(trace)
}

/// The prior design set; identical for every method at a given seed.
pub fn prior_designs(config: &ProblemConfig) -> Result<Vec<DesignPoint>, OptimizeError> {
    let space = config.space()?;
    let mut rng = PortableRng::derive(config.seed, 0);
    let mut chosen: Vec<DesignPoint> = Vec::new();
    let (fixed, random) = match config.mode {
        ProblemMode::Synthetic => (vec![space.lower_corner(), space.upper_corner()], 3),
        ProblemMode::Marl => (Vec::new(), 10),
    };
    for d in fixed {
        if !chosen.contains(&d) {
            chosen.push(d);
        }
    }
    let target = (chosen.len() + random).min(space.len());
    while chosen.len() < target {
        let d = space.point(rng.below(space.len()));
        if !chosen.contains(&d) {
            chosen.push(d);
        }
    }
    Ok(chosen)
}

/// Runs `strategy` to completion, starting from `resume` if given (a trace
/// previously returned by this function or carried in a [`RunError`]).
pub fn run_strategy<T, S, E>(
    config: &ProblemConfig,
    settings: &OptimizerSettings,
    evaluator: &E,
    strategy: &mut S,
    resume: Option<OptimizationTrace>,
) -> Result<OptimizationTrace, RunError>
where
    T: Scalar,
    S: Strategy<T> + ?Sized,
    E: Evaluator,
{
    let name = strategy.name();
    if let Err(e) = config.validate() {
        return Err(RunError {
            partial: Box::new(OptimizationTrace::new(name, config.seed, config.batch_size)),
            source: e,
        });
    }
    let space = config.space().expect("validated");
    let mut trace = match resume {
        Some(t) => t,
        None => initialize_priors(config, &name, evaluator)?,
    };
    let mut evaluated: HashSet<DesignPoint> = trace.records.iter().map(|r| r.design).collect();
    let mut round = trace.rounds.len();

    macro_rules! bail {
        ($trace:expr, $err:expr) => {
            return Err(RunError { partial: Box::new($trace), source: $err.into() })
        };
    }

    while trace.evaluations() < config.budget {
        if evaluated.len() >= space.len() {
            info!("{name}: lattice exhausted after {} evaluations", trace.evaluations());
            break;
        }
        round += 1;
        let request = config.batch_size.min(config.budget - trace.evaluations());
        let surrogates = if strategy.needs_surrogates() {
            match Surrogates::<T>::fit(space, &trace.records, config.n_baseline, &settings.surrogates) {
                Ok(s) => Some(s),
                Err(e) => bail!(trace, e),
            }
        } else {
            None
        };
        let ctx = RoundContext {
            space: &space,
            config,
            settings,
            surrogates: surrogates.as_ref(),
            records: &trace.records,
            evaluated: &evaluated,
            round,
            request,
        };
        let mut rng = PortableRng::derive(config.seed, round as u64);
        let mut proposal = match strategy.propose(&ctx, &mut rng) {
            Ok(p) => p,
            Err(e) => bail!(trace, e),
        };
        let beta = ctx.beta();
        proposal.designs.truncate(request);
        proposal.scores.truncate(request);
        if proposal.designs.is_empty() {
            info!("{name}: no unevaluated design left to propose");
            break;
        }
        debug_assert!(proposal.designs.iter().all(|d| !evaluated.contains(d)));
        let results = evaluator.evaluate_batch(&proposal.designs);
        for res in results {
            match res {
                Ok(r) => {
                    evaluated.insert(r.design);
                    trace.push(r);
                }
                Err(e) => bail!(trace, e),
            }
        }
        trace.rounds.push(RoundLog {
            round,
            beta,
            selected: proposal.designs,
            scores: proposal.scores,
            front_size: proposal.front_size,
            fallback: proposal.fallback,
        });
    }
    Ok(trace)
}

/// cPMES with default `f64` surrogates.
pub fn run<E: Evaluator>(
    config: &ProblemConfig,
    settings: &OptimizerSettings,
    evaluator: &E,
) -> Result<OptimizationTrace, RunError> {
    run_strategy::<f64, _, _>(config, settings, evaluator, &mut CpmesStrategy, None)
}

/// Regret at one budget checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretPoint {
    pub budget: usize,
    pub regret: f64,
    /// No feasible design had been found; `regret` is the sentinel.
    pub flagged: bool,
}

pub const DEFAULT_CHECKPOINTS: [usize; 5] = [4, 8, 12, 16, 20];

/// `|best feasible found within budget − optimum|` at each checkpoint. When
/// nothing feasible has been seen (priors included) the regret is
/// `sentinel` and the point is flagged.
pub fn compute_regret(
    trace: &OptimizationTrace,
    true_optimum: f64,
    sentinel: f64,
    checkpoints: &[usize],
) -> Vec<RegretPoint> {
    checkpoints
        .iter()
        .map(|&budget| match trace.best_after(budget) {
            Some(best) => RegretPoint { budget, regret: (best - true_optimum).abs(), flagged: false },
            None => RegretPoint { budget, regret: sentinel, flagged: true },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(alpha: f64, n: u32, g: f64, slacks: Vec<f64>, phi: bool) -> EvaluationRecord {
        EvaluationRecord::new(DesignPoint { alpha, n_added: n }, g, slacks, phi).unwrap()
    }

    fn fixed_settings() -> SurrogateSettings {
        SurrogateSettings { hyper: HyperMode::Fixed, ..Default::default() }
    }

    fn records() -> Vec<EvaluationRecord> {
        vec![
            rec(0.0, 0, 100.0, vec![0.0, 0.0], true),
            rec(1.0, 3, 50.0, vec![-20.0, -10.0], false),
            rec(0.3, 2, 300.0, vec![5.0, -1.0], true),
            rec(0.6, 1, 200.0, vec![-3.0, 2.0], true),
        ]
    }

    #[test]
    fn objectives_compose_surrogate_scores() {
        let space = DesignSpace::new(3, 101).unwrap();
        let s = Surrogates::<f64>::fit(space, &records(), 2, &fixed_settings()).unwrap();
        let sched = BetaSchedule::default();
        let f = build_mo_objectives(&s, 3, &sched);
        let x = DesignPoint { alpha: 0.3, n_added: 2 };
        let v = f(&x);
        let beta = sched.beta(3);
        let g = s.objective.predict(&x);
        let phi = s.phi.predict(&x);
        let pof: f64 = s.ir.iter().map(|gp| gp.predict(&x).probability_above(0.0)).product();
        assert!((v[0] - (g.mean + beta.sqrt() * g.variance.sqrt())).abs() < 1e-12);
        assert!((v[1] - (phi.mean + beta.sqrt() * phi.variance.sqrt())).abs() < 1e-12);
        assert!((v[2] - pof).abs() < 1e-12);
    }

    #[test]
    fn empty_ir_set_gives_unit_product() {
        let space = DesignSpace::new(3, 101).unwrap();
        let s = Surrogates::<f64>::fit(space, &records(), 0, &fixed_settings()).unwrap();
        let f = build_mo_objectives(&s, 1, &BetaSchedule::default());
        assert_eq!(f(&DesignPoint { alpha: 0.5, n_added: 1 })[2], 1.0);
    }

    #[test]
    fn indicator_surrogate_interpolates_constant_one() {
        let space = DesignSpace::new(3, 101).unwrap();
        let recs: Vec<_> = (0..4).map(|i| rec(0.1 * i as f64, 1, 10.0, vec![1.0], true)).collect();
        let settings = SurrogateSettings { phi_noise_variance: 0.0, ..fixed_settings() };
        let s = Surrogates::<f64>::fit(space, &recs, 1, &settings).unwrap();
        let f = build_mo_objectives(&s, 1, &BetaSchedule::default());
        let v = f(&DesignPoint { alpha: 0.1, n_added: 1 });
        assert!((v[1] - 1.0).abs() < 1e-6);
    }

    fn front(designs: &[(f64, u32)]) -> ParetoFront<f64> {
        ParetoFront {
            members: designs
                .iter()
                .map(|&(a, n)| crate::pareto::ScoredDesign {
                    design: DesignPoint { alpha: a, n_added: n },
                    objectives: vec![0.0],
                })
                .collect(),
        }
    }

    #[test]
    fn select_next_cardinality_and_argmax() {
        let space = DesignSpace::new(3, 101).unwrap();
        let s = Surrogates::<f64>::fit(space, &records(), 2, &fixed_settings()).unwrap();
        let maxima = MaxValueSamples { samples: vec![400.0; 4] };
        let none = HashSet::new();
        let one = select_next(&front(&[(0.5, 1)]), &s, &maxima, 1, &none, &space);
        assert_eq!(one.designs, vec![DesignPoint { alpha: 0.5, n_added: 1 }]);
        let three = select_next(&front(&[(0.5, 1), (0.2, 3), (0.9, 0)]), &s, &maxima, 4, &none, &space);
        assert_eq!(three.designs.len(), 3);
        assert!(three.scores.windows(2).all(|w| w[0] >= w[1]));
        let top = select_next(&front(&[(0.5, 1), (0.2, 3), (0.9, 0)]), &s, &maxima, 1, &none, &space);
        assert_eq!(top.designs[0], three.designs[0]);
    }

    #[test]
    fn select_next_ties_prefer_low_alpha() {
        let space = DesignSpace::new(3, 101).unwrap();
        let s = Surrogates::<f64>::fit(space, &records(), 2, &fixed_settings()).unwrap();
        // Zero samples make every score 0.
        let maxima = MaxValueSamples { samples: vec![] };
        let sel = select_next(&front(&[(0.9, 0), (0.2, 3), (0.2, 1)]), &s, &maxima, 2, &HashSet::new(), &space);
        assert_eq!(
            sel.designs,
            vec![DesignPoint { alpha: 0.2, n_added: 1 }, DesignPoint { alpha: 0.2, n_added: 3 }]
        );
    }

    #[test]
    fn select_next_falls_back_when_front_is_spent() {
        let space = DesignSpace::new(3, 101).unwrap();
        let s = Surrogates::<f64>::fit(space, &records(), 2, &fixed_settings()).unwrap();
        let maxima = MaxValueSamples { samples: vec![400.0] };
        let evaluated: HashSet<_> = records().iter().map(|r| r.design).collect();
        let sel = select_next(&front(&[(0.3, 2)]), &s, &maxima, 1, &evaluated, &space);
        assert!(sel.fallback);
        assert_eq!(sel.designs.len(), 1);
        assert!(!evaluated.contains(&sel.designs[0]));
    }

    #[test]
    fn regret_uses_best_feasible_and_sentinel() {
        let mut t = OptimizationTrace::new("m", 0, 1);
        t.push_prior(rec(0.0, 0, 10.0, vec![-1.0], true));
        for i in 0..20 {
            let g = if i == 6 { 90.0 } else { 5.0 };
            t.push(rec(0.01 * (i + 1) as f64, 1, g, vec![if i >= 2 { 1.0 } else { -1.0 }], true));
        }
        let r = compute_regret(&t, 100.0, 150.0, &DEFAULT_CHECKPOINTS);
        assert!(!r[0].flagged && (r[0].regret - 95.0).abs() < 1e-12);
        assert_eq!(r[1].regret, 10.0);
        assert!(r.windows(2).all(|w| w[1].regret <= w[0].regret));
        let mut empty = OptimizationTrace::new("m", 0, 1);
        empty.push_prior(rec(0.0, 0, 10.0, vec![-1.0], true));
        let r = compute_regret(&empty, 100.0, 150.0, &[4]);
        assert!(r[0].flagged);
        assert_eq!(r[0].regret, 150.0);
    }

    #[test]
    fn config_validation() {
        let mut c = ProblemConfig::synthetic(1);
        assert!(c.validate().is_ok());
        c.budget = 0;
        assert!(c.validate().is_err());
        let mut c = ProblemConfig::synthetic(1);
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn prior_sets() {
        let c = ProblemConfig::synthetic(3);
        let p = prior_designs(&c).unwrap();
        assert_eq!(p.len(), 5);
        assert_eq!(p[0], DesignPoint { alpha: 0.0, n_added: 0 });
        assert_eq!(p[1], DesignPoint { alpha: 1.0, n_added: 3 });
        assert_eq!(p, prior_designs(&c).unwrap());
        let m = prior_designs(&ProblemConfig::marl(3)).unwrap();
        assert_eq!(m.len(), 10);
        let uniq: HashSet<_> = m.iter().collect();
        assert_eq!(uniq.len(), 10);
    }
}
