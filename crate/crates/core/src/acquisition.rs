//! Acquisition functions over GP posteriors. All scores are for
//! maximization.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::DesignPoint;
use crate::gp::{FittedGp, GpPosterior};
use crate::rng::PortableRng;
use crate::scalar::{inv_mills_f64, log_norm_cdf_f64, norm_cdf, norm_pdf, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcquisitionError {
    #[error("candidate grid for max-value sampling is empty")]
    EmptyGrid,
    #[error("max-value sample count must be at least 1")]
    ZeroSamples,
    #[error("confidence parameter delta must lie in (0, 1], got {0}")]
    BadDelta(f64),
    #[error("input dimension must be at least 1")]
    ZeroDimension,
}

/// UCB exploration weight `β_t = 2 ln(d π² t² / 6δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSchedule {
    pub delta: f64,
    pub input_dimension: usize,
}

impl BetaSchedule {
    pub fn new(delta: f64, input_dimension: usize) -> Result<Self, AcquisitionError> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(AcquisitionError::BadDelta(delta));
        }
        if input_dimension == 0 {
            return Err(AcquisitionError::ZeroDimension);
        }
        Ok(Self { delta, input_dimension })
    }

    /// `t` counts iterations from 1; `t = 0` is treated as 1.
    pub fn beta(&self, t: usize) -> f64 {
        let t = t.max(1) as f64;
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        2.0 * (self.input_dimension as f64 * pi2 * t * t / (6.0 * self.delta)).ln()
    }
}

impl Default for BetaSchedule {
    fn default() -> Self {
        Self { delta: 0.1, input_dimension: 2 }
    }
}

pub fn ucb<T: Scalar>(post: &GpPosterior<T>, beta: T) -> T {
    post.mean + beta.max(T::zero()).sqrt() * post.std_dev()
}

/// Closed-form EI for maximization against `incumbent`.
pub fn expected_improvement<T: Scalar>(post: &GpPosterior<T>, incumbent: T) -> T {
    let diff = post.mean - incumbent;
    if post.variance <= T::zero() {
        return diff.max(T::zero());
    }
    let sd = post.std_dev();
    let z = diff / sd;
    (diff * norm_cdf(z) + sd * norm_pdf(z)).max(T::zero())
}

/// `Pr(f > incumbent)`.
pub fn probability_of_improvement<T: Scalar>(post: &GpPosterior<T>, incumbent: T) -> T {
    if post.variance <= T::zero() {
        return if post.mean > incumbent { T::one() } else { T::zero() };
    }
    norm_cdf((post.mean - incumbent) / post.std_dev())
}

/// A constraint surrogate's posterior together with its feasibility
/// threshold (`f ≥ threshold` is feasible).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintPosterior<T> {
    pub posterior: GpPosterior<T>,
    pub threshold: T,
}

impl<T: Scalar> ConstraintPosterior<T> {
    pub fn new(posterior: GpPosterior<T>, threshold: T) -> Self {
        Self { posterior, threshold }
    }

    pub fn pof(&self) -> T {
        self.posterior.probability_above(self.threshold)
    }
}

/// `Π_j Pr(c_j ≥ threshold_j)`; 1 for an empty list.
pub fn joint_pof<T: Scalar>(constraints: &[ConstraintPosterior<T>]) -> T {
    constraints.iter().fold(T::one(), |acc, c| acc * c.pof())
}

/// EI weighted by the joint probability of feasibility. Without a feasible
/// incumbent the score is the joint probability alone.
pub fn constrained_ei<T: Scalar>(
    objective: &GpPosterior<T>,
    constraints: &[ConstraintPosterior<T>],
    incumbent: Option<T>,
) -> T {
    let pof = joint_pof(constraints);
    match incumbent {
        Some(best) => expected_improvement(objective, best) * pof,
        None => pof,
    }
}

/// Samples of the objective's global maximum `y*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MaxValueSamples<T> {
    pub samples: Vec<T>,
}

impl<T: Scalar> MaxValueSamples<T> {
    pub fn count(&self) -> usize {
        self.samples.len()
    }
}

/// Draws `count` samples of the posterior maximum over `grid` from a Gumbel
/// distribution matched to the quartiles of `Π_i Φ((y - μ_i)/σ_i)`.
pub fn sample_max_values<T: Scalar>(
    gp: &FittedGp<T>,
    grid: &[DesignPoint],
    count: usize,
    rng: &mut PortableRng,
) -> Result<MaxValueSamples<T>, AcquisitionError> {
    if grid.is_empty() {
        return Err(AcquisitionError::EmptyGrid);
    }
    sample_max_values_from(&gp.predict_many(grid), count, rng)
}

/// As [`sample_max_values`] but on precomputed grid posteriors.
pub fn sample_max_values_from<T: Scalar>(
    posts: &[GpPosterior<T>],
    count: usize,
    rng: &mut PortableRng,
) -> Result<MaxValueSamples<T>, AcquisitionError> {
    if posts.is_empty() {
        return Err(AcquisitionError::EmptyGrid);
    }
    if count == 0 {
        return Err(AcquisitionError::ZeroSamples);
    }
    let (mu, sd) = moments(posts);
    let max_mean = mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if sd.iter().all(|&s| s <= 0.0) {
        return Ok(MaxValueSamples { samples: vec![T::lit(max_mean); count] });
    }
    let log_cdf = |y: f64| -> f64 { mu.iter().zip(&sd).map(|(&m, &s)| log_cdf_below(y, m, s)).sum() };
    let max_sd = sd.iter().copied().fold(0.0, f64::max);
    let samples = gumbel_samples(log_cdf, max_mean, max_sd, max_mean, count, rng);
    Ok(MaxValueSamples { samples: samples.into_iter().map(T::lit).collect() })
}

/// Samples of the maximum over the *feasible* part of the grid, where cell
/// `i` is feasible with probability `feasibility[i]` independently of its
/// value. The distribution is `Π_i [1 − p_i (1 − Φ((y − μ_i)/σ_i))]`; mass the
/// approximation puts below `floor` (typically the best feasible
/// observation) is clamped to it.
pub fn sample_feasible_max_values_from<T: Scalar>(
    posts: &[GpPosterior<T>],
    feasibility: &[T],
    floor: Option<T>,
    count: usize,
    rng: &mut PortableRng,
) -> Result<MaxValueSamples<T>, AcquisitionError> {
    if posts.is_empty() {
        return Err(AcquisitionError::EmptyGrid);
    }
    if count == 0 {
        return Err(AcquisitionError::ZeroSamples);
    }
    let (mu, sd) = moments(posts);
    let p: Vec<f64> = feasibility.iter().map(|v| v.as_f64().clamp(0.0, 1.0)).collect();
    let lowest = mu
        .iter()
        .zip(&sd)
        .map(|(m, s)| m - 10.0 * s)
        .fold(f64::INFINITY, f64::min);
    let floor = floor.map(|f| f.as_f64()).unwrap_or(lowest);
    let log_cdf = |y: f64| -> f64 {
        mu.iter()
            .zip(&sd)
            .zip(&p)
            .map(|((&m, &s), &pi)| {
                let above = 1.0 - log_cdf_below(y, m, s).exp();
                (1.0 - pi * above).max(0.0).ln()
            })
            .sum()
    };
    // Centre the search on the most promising likely-feasible cell.
    let centre = mu
        .iter()
        .zip(&p)
        .filter(|(_, &pi)| pi >= 0.5)
        .map(|(m, _)| *m)
        .fold(floor, f64::max);
    let max_sd = sd.iter().copied().fold(0.0, f64::max);
    if max_sd <= 0.0 {
        return Ok(MaxValueSamples { samples: vec![T::lit(centre); count] });
    }
    let samples = gumbel_samples(log_cdf, centre, max_sd, floor, count, rng);
    Ok(MaxValueSamples { samples: samples.into_iter().map(T::lit).collect() })
}

fn moments<T: Scalar>(posts: &[GpPosterior<T>]) -> (Vec<f64>, Vec<f64>) {
    (
        posts.iter().map(|p| p.mean.as_f64()).collect(),
        posts.iter().map(|p| p.std_dev().as_f64()).collect(),
    )
}

/// `ln Pr(Y ≤ y)` for `Y ~ N(m, s²)`, with `s = 0` a point mass.
fn log_cdf_below(y: f64, m: f64, s: f64) -> f64 {
    if s > 0.0 {
        log_norm_cdf_f64((y - m) / s)
    } else if y >= m {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}

/// Fits a Gumbel distribution to the quartiles of the CDF given by
/// `log_cdf` and draws `count` samples, each clamped to at least `floor`.
/// Quartiles the CDF already exceeds at `floor` are placed at `floor`.
fn gumbel_samples(
    log_cdf: impl Fn(f64) -> f64,
    centre: f64,
    spread: f64,
    floor: f64,
    count: usize,
    rng: &mut PortableRng,
) -> Vec<f64> {
    let spread = spread.max(1e-12);
    let quantile = |q: f64| -> f64 {
        let target = q.ln();
        if log_cdf(floor) >= target {
            return floor;
        }
        let mut lo = floor;
        let mut hi = centre.max(floor) + 12.0 * spread;
        while log_cdf(hi) < target {
            hi += 12.0 * spread;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if log_cdf(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * (1.0 + hi.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    };
    let (q25, q50, q75) = (quantile(0.25), quantile(0.5), quantile(0.75));
    let scale = (q75 - q25) / ((-(0.25f64).ln()).ln() - (-(0.75f64).ln()).ln());
    let loc = q50 + scale * (2.0f64.ln()).ln();
    (0..count)
        .map(|_| {
            let r = rng.uniform_open().min(1.0 - 1e-16);
            (loc - scale * (-r.ln()).ln()).max(floor)
        })
        .collect()
}

/// Max-value entropy search: expected reduction in the entropy of `f(x)`
/// from learning `y*`, averaged over the supplied samples.
pub fn mes_score<T: Scalar>(post: &GpPosterior<T>, maxima: &MaxValueSamples<T>) -> T {
    if post.variance <= T::zero() || maxima.samples.is_empty() {
        return T::zero();
    }
    let mu = post.mean.as_f64();
    let sd = post.std_dev().as_f64();
    let total: f64 = maxima
        .samples
        .iter()
        .map(|y| {
            let g = (y.as_f64() - mu) / sd;
            0.5 * g * inv_mills_f64(g) - log_norm_cdf_f64(g)
        })
        .sum();
    T::lit((total / maxima.count() as f64).max(0.0))
}

/// Objective MES weighted by the joint probability of feasibility of the
/// constraint posteriors.
pub fn cmes_score<T: Scalar>(
    objective: &GpPosterior<T>,
    constraints: &[ConstraintPosterior<T>],
    maxima: &MaxValueSamples<T>,
) -> T {
    mes_score(objective, maxima) * joint_pof(constraints)
}

/// MACE-style acquisition triple `(UCB, EI, PI)`, each weighted by the joint
/// probability of feasibility.
pub fn mace_score<T: Scalar>(
    objective: &GpPosterior<T>,
    constraints: &[ConstraintPosterior<T>],
    beta: T,
    incumbent: T,
) -> [T; 3] {
    let w = joint_pof(constraints);
    [
        ucb(objective, beta) * w,
        expected_improvement(objective, incumbent) * w,
        probability_of_improvement(objective, incumbent) * w,
    ]
}
