//! Zero-mean Gaussian-process regression over contract designs.
//!
//! A fitted model holds the Cholesky factor of `K + σ²I` and the weight
//! vector `(K + σ²I)⁻¹ y`; predictions are exact. Targets may be
//! standardized internally, in which case `noise_variance` is expressed in
//! standardized units.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{DesignPoint, DesignSpace};
use crate::kernel::{KernelError, KernelSpec};
use crate::linalg::{cholesky, dot, solve_lower, solve_upper_t};
use crate::rng::PortableRng;
use crate::scalar::{norm_cdf, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("dataset has {points} points but {targets} targets")]
    LengthMismatch { points: usize, targets: usize },
    #[error("noise variance must be finite and non-negative, got {0}")]
    BadNoise(f64),
    #[error("duplicate design {0} in a noiseless dataset")]
    DuplicateNoiseless(DesignPoint),
    #[error("non-finite target at index {0}")]
    NonFiniteTarget(usize),
    #[error("covariance matrix of {n} points is not positive definite even with jitter {jitter:e}")]
    NotPositiveDefinite { n: usize, jitter: f64 },
}

/// Observations for one surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Dataset<T> {
    pub points: Vec<DesignPoint>,
    pub targets: Vec<T>,
    pub noise_variance: T,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(points: Vec<DesignPoint>, targets: Vec<T>, noise_variance: T) -> Result<Self, GpError> {
        let data = Self { points, targets, noise_variance };
        data.validate()?;
        Ok(data)
    }

    pub fn empty(noise_variance: T) -> Self {
        Self { points: Vec::new(), targets: Vec::new(), noise_variance }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<(), GpError> {
        if self.points.len() != self.targets.len() {
            return Err(GpError::LengthMismatch {
                points: self.points.len(),
                targets: self.targets.len(),
            });
        }
        if !(self.noise_variance >= T::zero()) || !self.noise_variance.is_finite() {
            return Err(GpError::BadNoise(self.noise_variance.as_f64()));
        }
        if let Some(i) = self.targets.iter().position(|t| !t.is_finite()) {
            return Err(GpError::NonFiniteTarget(i));
        }
        if self.noise_variance == T::zero() {
            let mut seen = std::collections::HashSet::new();
            for p in &self.points {
                if !seen.insert(*p) {
                    return Err(GpError::DuplicateNoiseless(*p));
                }
            }
        }
        Ok(())
    }
}

/// Predictive distribution at one design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GpPosterior<T> {
    pub mean: T,
    pub variance: T,
}

impl<T: Scalar> GpPosterior<T> {
    /// Tiny negative variances from round-off are clamped to zero.
    pub fn new(mean: T, variance: T) -> Self {
        Self { mean, variance: variance.max(T::zero()) }
    }

    pub fn std_dev(&self) -> T {
        self.variance.sqrt()
    }

    /// `Pr(f ≥ threshold)`; a point mass when the variance is zero.
    pub fn probability_above(&self, threshold: T) -> T {
        if self.variance <= T::zero() {
            return if self.mean >= threshold { T::one() } else { T::zero() };
        }
        norm_cdf((self.mean - threshold) / self.std_dev())
    }
}

/// How kernel lengthscales are chosen at fit time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum HyperMode {
    /// Use the supplied kernel as is.
    Fixed,
    /// Maximize the log marginal likelihood over log-lengthscales with a
    /// multi-start compass search.
    MaxLikelihood {
        restarts: usize,
        min_lengthscale: f64,
        max_lengthscale: f64,
        seed: u64,
    },
}

impl Default for HyperMode {
    fn default() -> Self {
        HyperMode::MaxLikelihood {
            restarts: 8,
            min_lengthscale: 0.05,
            max_lengthscale: 5.0,
            seed: 0x6770,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpOptions {
    /// Shift/scale targets to zero mean and unit variance before fitting.
    pub standardize: bool,
    pub hyper: HyperMode,
}

impl Default for GpOptions {
    fn default() -> Self {
        Self { standardize: false, hyper: HyperMode::Fixed }
    }
}

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;

struct Factorization<T> {
    chol: Vec<Vec<T>>,
    weights: Vec<T>,
    jitter: f64,
}

fn factorize<T: Scalar>(
    kernel: &KernelSpec<T>,
    inputs: &[Vec<T>],
    y: &[T],
    noise: T,
) -> Result<Factorization<T>, GpError> {
    let mut k = kernel.gram(inputs);
    for (i, row) in k.iter_mut().enumerate() {
        row[i] = row[i] + noise;
    }
    let mut jitter = 0.0;
    loop {
        let attempt = if jitter == 0.0 {
            cholesky(&k)
        } else {
            let mut kj = k.clone();
            for (i, row) in kj.iter_mut().enumerate() {
                row[i] = row[i] + T::lit(jitter);
            }
            cholesky(&kj)
        };
        if let Some(chol) = attempt {
            let weights = solve_upper_t(&chol, &solve_lower(&chol, y));
            return Ok(Factorization { chol, weights, jitter });
        }
        jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
        if jitter > JITTER_MAX * 1.000_001 {
            return Err(GpError::NotPositiveDefinite { n: inputs.len(), jitter: JITTER_MAX });
        }
    }
}

fn log_marginal_likelihood<T: Scalar>(f: &Factorization<T>, y: &[T]) -> f64 {
    let n = y.len() as f64;
    let fit = dot(y, &f.weights).as_f64();
    let logdet: f64 = f.chol.iter().enumerate().map(|(i, r)| r[i].as_f64().ln()).sum();
    -0.5 * fit - logdet - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// A GP conditioned on a dataset. Immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct FittedGp<T> {
    space: DesignSpace,
    kernel: KernelSpec<T>,
    data: Dataset<T>,
    options: GpOptions,
    inputs: Vec<Vec<T>>,
    chol: Vec<Vec<T>>,
    weights: Vec<T>,
    y_shift: T,
    y_scale: T,
    jitter: f64,
    lml: f64,
}

impl<T: Scalar> FittedGp<T> {
    pub fn fit(
        space: DesignSpace,
        data: Dataset<T>,
        kernel: KernelSpec<T>,
        options: GpOptions,
    ) -> Result<Self, GpError> {
        kernel.validate()?;
        data.validate()?;
        let inputs: Vec<Vec<T>> = data.points.iter().map(|p| space.features::<T>(p).to_vec()).collect();

        let (y_shift, y_scale) = if options.standardize && !data.is_empty() {
            let n = T::from_usize(data.len()).unwrap();
            let mean = data.targets.iter().copied().sum::<T>() / n;
            let var = data.targets.iter().map(|&t| (t - mean) * (t - mean)).sum::<T>() / n;
            let sd = var.sqrt();
            (mean, if sd > T::lit(1e-12) { sd } else { T::one() })
        } else {
            (T::zero(), T::one())
        };
        let y: Vec<T> = data.targets.iter().map(|&t| (t - y_shift) / y_scale).collect();

        let kernel = match options.hyper {
            HyperMode::MaxLikelihood { restarts, min_lengthscale, max_lengthscale, seed }
                if !data.is_empty() =>
            {
                tune_lengthscales(
                    &kernel,
                    &inputs,
                    &y,
                    data.noise_variance,
                    restarts.max(1),
                    (min_lengthscale.ln(), max_lengthscale.ln()),
                    seed,
                )
            }
            _ => kernel,
        };

        let f = factorize(&kernel, &inputs, &y, data.noise_variance)?;
        let lml = if data.is_empty() { 0.0 } else { log_marginal_likelihood(&f, &y) };
        Ok(Self {
            space,
            kernel,
            data,
            options,
            inputs,
            chol: f.chol,
            weights: f.weights,
            y_shift,
            y_scale,
            jitter: f.jitter,
            lml,
        })
    }

    /// The prior: no observations.
    pub fn prior(space: DesignSpace, kernel: KernelSpec<T>) -> Result<Self, GpError> {
        Self::fit(space, Dataset::empty(T::zero()), kernel, GpOptions::default())
    }

    pub fn kernel(&self) -> &KernelSpec<T> {
        &self.kernel
    }

    pub fn dataset(&self) -> &Dataset<T> {
        &self.data
    }

    pub fn space(&self) -> &DesignSpace {
        &self.space
    }

    /// Jitter that had to be added to the diagonal (0 if none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    pub fn predict(&self, x: &DesignPoint) -> GpPosterior<T> {
        self.predict_features(&self.space.features::<T>(x))
    }

    pub fn predict_features(&self, x: &[T]) -> GpPosterior<T> {
        let kxx = self.kernel.eval(x, x);
        if self.inputs.is_empty() {
            return GpPosterior::new(self.y_shift, kxx * self.y_scale * self.y_scale);
        }
        let ks: Vec<T> = self.inputs.iter().map(|xi| self.kernel.eval(xi, x)).collect();
        let mean = dot(&ks, &self.weights);
        let v = solve_lower(&self.chol, &ks);
        let var = kxx - dot(&v, &v);
        GpPosterior::new(
            mean * self.y_scale + self.y_shift,
            var.max(T::zero()) * self.y_scale * self.y_scale,
        )
    }

    pub fn predict_many(&self, xs: &[DesignPoint]) -> Vec<GpPosterior<T>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    /// `Pr(f(x) ≥ threshold)` under the posterior.
    pub fn probability_of_feasibility(&self, x: &DesignPoint, threshold: T) -> T {
        self.predict(x).probability_above(threshold)
    }

    pub fn snapshot(&self) -> GpSnapshot<T> {
        GpSnapshot {
            space: self.space,
            kernel: self.kernel.clone(),
            dataset: self.data.clone(),
            standardize: self.options.standardize,
        }
    }
}

/// Serializable model state: kernel (with its fitted hyperparameters),
/// observations and noise. Restoring refits with the stored kernel held
/// fixed, which reproduces the original predictions exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GpSnapshot<T> {
    pub space: DesignSpace,
    pub kernel: KernelSpec<T>,
    pub dataset: Dataset<T>,
    pub standardize: bool,
}

impl<T: Scalar> GpSnapshot<T> {
    pub fn restore(self) -> Result<FittedGp<T>, GpError> {
        FittedGp::fit(
            self.space,
            self.dataset,
            self.kernel,
            GpOptions { standardize: self.standardize, hyper: HyperMode::Fixed },
        )
    }
}

fn tune_lengthscales<T: Scalar>(
    base: &KernelSpec<T>,
    inputs: &[Vec<T>],
    y: &[T],
    noise: T,
    restarts: usize,
    bounds: (f64, f64),
    seed: u64,
) -> KernelSpec<T> {
    let dim = base.dim();
    let (lo, hi) = bounds;
    let objective = |logs: &[f64]| -> f64 {
        let mut k = base.clone();
        k.lengthscales = logs.iter().map(|&l| T::lit(l.exp())).collect();
        match factorize(&k, inputs, y, noise) {
            Ok(f) => log_marginal_likelihood(&f, y),
            Err(_) => f64::NEG_INFINITY,
        }
    };

    let mut rng = PortableRng::seed_from(seed);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for r in 0..restarts {
        let start: Vec<f64> = if r == 0 {
            vec![0.5 * (lo + hi); dim]
        } else {
            (0..dim).map(|_| lo + (hi - lo) * rng.uniform()).collect()
        };
        let (val, x) = compass_search(&objective, start, lo, hi);
        if best.as_ref().map_or(true, |(b, _)| val > *b) {
            best = Some((val, x));
        }
    }
    match best {
        Some((v, logs)) if v.is_finite() => {
            let mut k = base.clone();
            k.lengthscales = logs.iter().map(|&l| T::lit(l.exp())).collect();
            k
        }
        _ => base.clone(),
    }
}

/// Coordinate pattern search, maximizing `f` inside the box `[lo, hi]^d`.
fn compass_search(f: &dyn Fn(&[f64]) -> f64, mut x: Vec<f64>, lo: f64, hi: f64) -> (f64, Vec<f64>) {
    let mut fx = f(&x);
    let mut step = 0.25 * (hi - lo);
    let mut evals = 0;
    while step > 1e-3 && evals < 400 {
        let mut improved = false;
        for d in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[d] = (y[d] + dir * step).clamp(lo, hi);
                if y[d] == x[d] {
                    continue;
                }
                let fy = f(&y);
                evals += 1;
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (fx, x)
}
