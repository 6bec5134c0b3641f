//! Seeded ground-truth contract problems that evaluate instantly.
//!
//! Every table is a smooth random field (a random Fourier mixture over the
//! normalized lattice) so that GP surrogates have something to learn. IR
//! slacks share a common component plus one independent field per baseline
//! agent, and are shifted so that a target fraction of the lattice is
//! feasible. The baseline contract `(0, 0)` has zero slack by construction.

use std::f64::consts::PI;

use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{DesignError, DesignPoint, DesignSpace};
use crate::record::{EvaluationError, EvaluationRecord, Evaluator};
use crate::rng::{PortableRng, RNG_STREAM_VERSION};

pub const GENERATOR_VERSION: &str = "fourier-mixture-v1";

const MAX_ATTEMPTS: u64 = 100;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("alpha grid needs at least 2 points, got {0}")]
    GridTooSmall(usize),
    #[error("invalid generator setting: {0}")]
    BadConfig(String),
    #[error("no acceptable instance after {0} attempts")]
    Exhausted(u64),
    #[error("instance file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("inconsistent instance: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_baseline: usize,
    pub max_added: u32,
    pub alpha_steps: usize,
    /// Fraction of lattice designs that should be feasible.
    pub feasible_fraction: f64,
    /// Objective values span `[0, objective_scale]`.
    pub objective_scale: f64,
    /// Fourier components per field.
    pub components: usize,
    /// Objective field lengthscales in normalized (alpha, recruits) units.
    pub objective_lengthscales: [f64; 2],
    /// Lengthscales of the short-range objective detail field.
    pub detail_lengthscales: [f64; 2],
    /// Weight of the detail field in the objective.
    pub detail_weight: f64,
    /// Objective gain per recruit, as a fraction of the field range.
    pub recruit_trend: f64,
    /// Lengthscales of the IR and indicator fields.
    pub constraint_lengthscales: [f64; 2],
    /// Weight of the component shared by all IR fields.
    pub ir_shared_weight: f64,
    /// How strongly the objective rewards the region the shared IR
    /// component penalizes (0 = independent).
    pub objective_conflict: f64,
    /// Fraction of designs with recruits whose indicator is 1.
    pub phi_fraction: f64,
    /// Multiplier from field units to slack units.
    pub slack_scale: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_baseline: 5,
            max_added: 3,
            alpha_steps: 101,
            feasible_fraction: 0.15,
            objective_scale: 3000.0,
            components: 24,
            objective_lengthscales: [0.2, 0.6],
            detail_lengthscales: [0.05, 0.4],
            detail_weight: 0.5,
            recruit_trend: 0.5,
            constraint_lengthscales: [0.1, 0.5],
            ir_shared_weight: 0.7,
            objective_conflict: 0.5,
            phi_fraction: 0.6,
            slack_scale: 100.0,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<(), SyntheticError> {
        if self.alpha_steps < 2 {
            return Err(SyntheticError::GridTooSmall(self.alpha_steps));
        }
        let bad = |m: &str| Err(SyntheticError::BadConfig(m.into()));
        if self.n_baseline == 0 {
            return bad("n_baseline must be at least 1");
        }
        if !(self.feasible_fraction > 0.0 && self.feasible_fraction < 1.0) {
            return bad("feasible_fraction must lie in (0, 1)");
        }
        if !(self.phi_fraction > 0.0 && self.phi_fraction <= 1.0) {
            return bad("phi_fraction must lie in (0, 1]");
        }
        let ls = [self.objective_lengthscales, self.detail_lengthscales, self.constraint_lengthscales];
        if self.components == 0 || ls.iter().flatten().any(|l| !(*l > 0.0)) {
            return bad("fields need components and positive lengthscales");
        }
        if !(self.objective_scale > 0.0 && self.slack_scale > 0.0) {
            return bad("scales must be positive");
        }
        Ok(())
    }
}

/// A random Fourier mixture `Σ a_k cos(w_k · x + b_k)` on `[0, 1]²`.
struct Field {
    terms: Vec<([f64; 2], f64, f64)>,
}

impl Field {
    fn draw(rng: &mut PortableRng, components: usize, lengthscales: [f64; 2]) -> Self {
        let terms = (0..components)
            .map(|_| {
                let w = [rng.normal() / lengthscales[0], rng.normal() / lengthscales[1]];
                let b = 2.0 * PI * rng.uniform();
                let a = rng.normal();
                (w, b, a)
            })
            .collect();
        Self { terms }
    }

    fn at(&self, x: [f64; 2]) -> f64 {
        self.terms
            .iter()
            .map(|(w, b, a)| a * (w[0] * x[0] + w[1] * x[1] + b).cos())
            .sum()
    }

    /// Values over the lattice, rescaled to `[0, 1]`.
    fn on(&self, space: &DesignSpace) -> Vec<f64> {
        let raw: Vec<f64> = space.lattice().iter().map(|d| self.at(space.features(d))).collect();
        normalize(&raw)
    }
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    v.iter().map(|x| if span > 0.0 { (x - lo) / span } else { 0.5 }).collect()
}

/// The `q`-quantile (lower) of `v`.
fn quantile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let i = ((q * s.len() as f64).floor() as usize).min(s.len() - 1);
    s[i]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEntry {
    pub design: DesignPoint,
    pub objective: f64,
    pub ir_slack: Vec<f64>,
    pub phi: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub design: DesignPoint,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticInstance {
    pub seed: u64,
    /// Regeneration attempt that produced this instance.
    pub attempt: u64,
    pub generator: String,
    pub rng: String,
    pub n_baseline: usize,
    pub space: DesignSpace,
    /// One entry per lattice design, in lattice order.
    pub entries: Vec<SyntheticEntry>,
    pub optimum: Optimum,
}

/// [`generate_with`] using the default settings and the given shape.
pub fn generate(
    seed: u64,
    n_baseline: usize,
    max_added: u32,
    alpha_grid_size: usize,
) -> Result<SyntheticInstance, SyntheticError> {
    generate_with(
        seed,
        &SyntheticConfig { n_baseline, max_added, alpha_steps: alpha_grid_size, ..Default::default() },
    )
}

pub fn generate_with(seed: u64, config: &SyntheticConfig) -> Result<SyntheticInstance, SyntheticError> {
    config.validate()?;
    let space = DesignSpace::new(config.max_added, config.alpha_steps)?;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = PortableRng::derive(seed, attempt);
        if let Some(inst) = attempt_instance(seed, attempt, config, space, &mut rng) {
            if attempt > 0 {
                info!("synthetic seed {seed}: accepted attempt {attempt}");
            }
            return Ok(inst);
        }
        info!("synthetic seed {seed}: attempt {attempt} rejected, regenerating");
    }
    Err(SyntheticError::Exhausted(MAX_ATTEMPTS))
}

fn attempt_instance(
    seed: u64,
    attempt: u64,
    config: &SyntheticConfig,
    space: DesignSpace,
    rng: &mut PortableRng,
) -> Option<SyntheticInstance> {
    let mut field = |ls: [f64; 2]| Field::draw(rng, config.components, ls).on(&space);
    let cl = config.constraint_lengthscales;
    let shared = field(cl);
    let own: Vec<Vec<f64>> = (0..config.n_baseline).map(|_| field(cl)).collect();
    let phi_field = field(cl);
    let objective_field = field(config.objective_lengthscales);
    let detail_field = field(config.detail_lengthscales);
    let lattice = space.lattice();

    let phi: Vec<bool> = {
        let with_recruits: Vec<f64> = lattice
            .iter()
            .zip(&phi_field)
            .filter(|(d, _)| d.n_added > 0)
            .map(|(_, v)| *v)
            .collect();
        let cut = if with_recruits.is_empty() { 0.0 } else { quantile(&with_recruits, 1.0 - config.phi_fraction) };
        lattice.iter().zip(&phi_field).map(|(d, v)| d.n_added == 0 || *v >= cut).collect()
    };

    let w = config.ir_shared_weight;
    let ir_raw: Vec<Vec<f64>> = (0..lattice.len())
        .map(|i| own.iter().map(|o| w * shared[i] + (1.0 - w) * o[i]).collect())
        .collect();
    let min_raw: Vec<f64> = ir_raw.iter().map(|v| v.iter().copied().fold(f64::INFINITY, f64::min)).collect();
    // Threshold so that the target fraction of the whole lattice is feasible.
    let candidates: Vec<f64> = (0..lattice.len()).filter(|&i| phi[i]).map(|i| min_raw[i]).collect();
    let wanted = (config.feasible_fraction * lattice.len() as f64).round() as usize;
    if candidates.len() < wanted.max(1) {
        return None;
    }
    let mut sorted = candidates;
    sorted.sort_by(|a, b| b.total_cmp(a));
    let threshold = sorted[wanted.max(1) - 1];

    let max_n = space.max_added.max(1) as f64;
    let objective_raw: Vec<f64> = (0..lattice.len())
        .map(|i| {
            objective_field[i] + config.detail_weight * detail_field[i] - config.objective_conflict * shared[i]
                + config.recruit_trend * lattice[i].n_added as f64 / max_n
        })
        .collect();
    let objective: Vec<f64> = normalize(&objective_raw).into_iter().map(|v| v * config.objective_scale).collect();

    let base = space.lower_corner();
    let entries: Vec<SyntheticEntry> = lattice
        .iter()
        .enumerate()
        .map(|(i, d)| SyntheticEntry {
            design: *d,
            objective: objective[i],
            ir_slack: if *d == base {
                vec![0.0; config.n_baseline]
            } else {
                ir_raw[i].iter().map(|v| config.slack_scale * (v - threshold)).collect()
            },
            phi: phi[i],
        })
        .collect();

    let feasible = entries.iter().filter(|e| entry_feasible(e)).count();
    let fraction = feasible as f64 / entries.len() as f64;
    if !(0.10..=0.25).contains(&fraction) {
        return None;
    }
    let optimum = brute_force_optimum(&entries)?;
    Some(SyntheticInstance {
        seed,
        attempt,
        generator: GENERATOR_VERSION.into(),
        rng: RNG_STREAM_VERSION.into(),
        n_baseline: config.n_baseline,
        space,
        entries,
        optimum,
    })
}

fn entry_feasible(e: &SyntheticEntry) -> bool {
    e.phi && e.ir_slack.iter().all(|s| *s >= 0.0)
}

/// Exhaustive scan for the best feasible entry (ties: lattice order).
pub fn brute_force_optimum(entries: &[SyntheticEntry]) -> Option<Optimum> {
    entries
        .iter()
        .filter(|e| entry_feasible(e))
        .fold(None, |best: Option<Optimum>, e| match best {
            Some(b) if b.value >= e.objective => Some(b),
            _ => Some(Optimum { design: e.design, value: e.objective }),
        })
}

impl SyntheticInstance {
    pub fn entry(&self, design: &DesignPoint) -> Option<&SyntheticEntry> {
        self.space.index_of(design).map(|i| &self.entries[i])
    }

    pub fn feasible_fraction(&self) -> f64 {
        self.entries.iter().filter(|e| entry_feasible(e)).count() as f64 / self.entries.len() as f64
    }

    /// Largest objective over the whole lattice, feasible or not.
    pub fn max_objective(&self) -> f64 {
        self.entries.iter().map(|e| e.objective).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Regret reported when a run never observes a feasible design.
    pub fn regret_sentinel(&self) -> f64 {
        self.max_objective()
    }

    pub fn to_json(&self) -> Result<String, SyntheticError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and checks an exported instance.
    pub fn from_json(s: &str) -> Result<Self, SyntheticError> {
        let inst: Self = serde_json::from_str(s)?;
        inst.check()?;
        Ok(inst)
    }

    pub fn check(&self) -> Result<(), SyntheticError> {
        let bad = |m: String| Err(SyntheticError::Inconsistent(m));
        if self.entries.len() != self.space.len() {
            return bad(format!("{} entries for a {}-point lattice", self.entries.len(), self.space.len()));
        }
        for (i, e) in self.entries.iter().enumerate() {
            if self.space.point(i) != e.design {
                return bad(format!("entry {i} is {} but lattice has {}", e.design, self.space.point(i)));
            }
            if e.ir_slack.len() != self.n_baseline {
                return bad(format!("entry {i} has {} slacks", e.ir_slack.len()));
            }
            if e.design.n_added == 0 && !e.phi {
                return bad(format!("entry {i} has no recruits but indicator 0"));
            }
        }
        match brute_force_optimum(&self.entries) {
            Some(o) if o == self.optimum => Ok(()),
            Some(o) => bad(format!("stored optimum {:?} but scan finds {:?}", self.optimum, o)),
            None => bad("no feasible design".into()),
        }
    }

    pub fn evaluate(&self, design: &DesignPoint) -> Result<EvaluationRecord, EvaluationError> {
        let e = self.entry(design).ok_or_else(|| EvaluationError {
            design: *design,
            message: "design is not on the instance lattice".into(),
        })?;
        EvaluationRecord::new(e.design, e.objective, e.ir_slack.clone(), e.phi)
            .map_err(|err| EvaluationError { design: *design, message: err.to_string() })
    }
}

impl Evaluator for SyntheticInstance {
    fn evaluate(&self, design: &DesignPoint) -> Result<EvaluationRecord, EvaluationError> {
        SyntheticInstance::evaluate(self, design)
    }
}
