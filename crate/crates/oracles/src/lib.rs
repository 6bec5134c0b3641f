//! Reference implementations that share no code with the library under
//! test: dense matrix inversion for GP posteriors, pairwise dominance scans,
//! and plain Monte Carlo estimators.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Kernel choices mirrored from first principles on raw feature vectors.
#[derive(Debug, Clone)]
pub enum OracleKernel {
    /// `s² Π exp(-d²/(2ℓ²))`
    Se { lengthscales: Vec<f64>, variance: f64 },
    /// `c s² Π m(|d|/ℓ)` with the Matérn-5/2 profile `m`.
    Matern52 { lengthscales: Vec<f64>, variance: f64, constant: f64 },
}

impl OracleKernel {
    pub fn k(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            OracleKernel::Se { lengthscales, variance } => {
                let mut s = 0.0;
                for i in 0..x.len() {
                    let d = (x[i] - y[i]) / lengthscales[i];
                    s += d * d;
                }
                variance * (-0.5 * s).exp()
            }
            OracleKernel::Matern52 { lengthscales, variance, constant } => {
                let mut p = constant * variance;
                for i in 0..x.len() {
                    let r = ((x[i] - y[i]) / lengthscales[i]).abs();
                    let a = 5f64.sqrt() * r;
                    p *= (1.0 + a + a * a / 3.0) * (-a).exp();
                }
                p
            }
        }
    }
}

/// Posterior mean and variance at `query` by explicitly inverting
/// `K + noise·I`.
pub fn gp_posterior(
    kernel: &OracleKernel,
    xs: &[Vec<f64>],
    ys: &[f64],
    noise: f64,
    query: &[f64],
) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, kernel.k(query, query));
    }
    let k = DMatrix::from_fn(n, n, |i, j| kernel.k(&xs[i], &xs[j]) + if i == j { noise } else { 0.0 });
    let kinv = k.try_inverse().expect("oracle Gram matrix is singular");
    let ks = DVector::from_fn(n, |i, _| kernel.k(&xs[i], query));
    let y = DVector::from_column_slice(ys);
    let mean = (ks.transpose() * &kinv * y)[(0, 0)];
    let var = kernel.k(query, query) - (ks.transpose() * &kinv * &ks)[(0, 0)];
    (mean, var)
}

/// `a` dominates `b` under maximization.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
}

/// Indices not dominated by any other point, by the O(n²) pairwise scan.
pub fn non_dominated(points: &[Vec<f64>]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| !(0..points.len()).any(|j| j != i && dominates(&points[j], &points[i])))
        .collect()
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    fn from_sums(sum: f64, sum_sq: f64, n: usize) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let var = (sum_sq / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
        Self { mean, se: (var / nf).sqrt() }
    }

    /// `|value − mean| ≤ k·se`, with a floor for zero-variance estimates.
    pub fn agrees(&self, value: f64, k: f64) -> bool {
        (value - self.mean).abs() <= k * self.se + 1e-12 * (1.0 + value.abs())
    }
}

/// Independent Gaussian sampler (polar Marsaglia) on its own generator.
pub struct Normal {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl Normal {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha20Rng::seed_from_u64(seed), spare: None }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(s) = self.spare.take() {
            return s;
        }
        loop {
            let u: f64 = self.rng.gen_range(-1.0..1.0);
            let v: f64 = self.rng.gen_range(-1.0..1.0);
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.gen()
    }
}

fn estimate(n: usize, mut f: impl FnMut() -> f64) -> Estimate {
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let v = f();
        s += v;
        s2 += v * v;
    }
    Estimate::from_sums(s, s2, n)
}

/// `E[max(Y − incumbent, 0)]` for `Y ~ N(mean, sd²)`.
pub fn mc_expected_improvement(mean: f64, sd: f64, incumbent: f64, draws: usize, seed: u64) -> Estimate {
    let mut g = Normal::new(seed);
    estimate(draws, || (mean + sd * g.sample() - incumbent).max(0.0))
}

/// `Pr(Y ≥ threshold)`.
pub fn mc_probability_above(mean: f64, sd: f64, threshold: f64, draws: usize, seed: u64) -> Estimate {
    let mut g = Normal::new(seed);
    estimate(draws, || if mean + sd * g.sample() >= threshold { 1.0 } else { 0.0 })
}

/// Entropy reduction `H[N(μ,σ²)] − H[N(μ,σ²) | Y ≤ y*]` averaged over the
/// given maxima. The truncated entropy is estimated as `−E[ln p(Y)]` with
/// `Y` drawn by rejection from the untruncated normal; the truncation mass
/// is itself estimated from the same draws.
pub fn mc_entropy_reduction(mean: f64, sd: f64, maxima: &[f64], draws: usize, seed: u64) -> Estimate {
    let mut g = Normal::new(seed);
    let per = draws / maxima.len();
    let h_full = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * sd * sd).ln();
    let mut total_mean = 0.0;
    let mut total_var = 0.0;
    for &ys in maxima {
        // Sample once and split into kept / rejected to get both the mass
        // and the conditional expectation.
        let mut kept = Vec::with_capacity(per);
        for _ in 0..per {
            let y = mean + sd * g.sample();
            if y <= ys {
                kept.push(y);
            }
        }
        let mass = kept.len() as f64 / per as f64;
        let ln_norm = |y: f64| -> f64 {
            let z = (y - mean) / sd;
            -0.5 * z * z - (sd * (2.0 * std::f64::consts::PI).sqrt()).ln()
        };
        // −E[ln p_trunc(Y)] = −E[ln p(Y)] + ln mass
        let m = kept.len().max(2);
        let (mut s, mut s2) = (0.0, 0.0);
        for &y in &kept {
            let v = -ln_norm(y);
            s += v;
            s2 += v * v;
        }
        let e = Estimate::from_sums(s, s2, m);
        let h_trunc = e.mean + mass.ln();
        // Delta-method variance of ln(mass).
        let var_ln_mass = (1.0 - mass) / (mass * per as f64);
        total_mean += h_full - h_trunc;
        total_var += e.se * e.se + var_ln_mass;
    }
    let k = maxima.len() as f64;
    Estimate { mean: total_mean / k, se: total_var.sqrt() / k }
}

/// Mean of `max_i Y_i` for independent `Y_i ~ N(μ_i, σ_i²)`.
pub fn mc_mean_max(means: &[f64], sds: &[f64], draws: usize, seed: u64) -> Estimate {
    let mut g = Normal::new(seed);
    estimate(draws, || {
        means
            .iter()
            .zip(sds)
            .map(|(m, s)| m + s * g.sample())
            .fold(f64::NEG_INFINITY, f64::max)
    })
}

/// Pearson χ² statistic of observed counts against a uniform expectation.
pub fn chi_square_uniform(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let e = total as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum()
}

/// Upper 1% points of χ² for small degrees of freedom.
pub fn chi_square_critical_01(dof: usize) -> f64 {
    const TABLE: [f64; 10] = [6.635, 9.210, 11.345, 13.277, 15.086, 16.812, 18.475, 20.090, 21.666, 23.209];
    TABLE[dof - 1]
}

/// Pure-strategy Nash equilibria of a bimatrix game by exhaustive
/// best-response check: `(a, b)` such that neither player gains by deviating.
pub fn pure_nash(row: &[Vec<f64>], col: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in 0..row.len() {
        for b in 0..row[a].len() {
            let row_best = (0..row.len()).all(|x| row[x][b] <= row[a][b]);
            let col_best = (0..row[a].len()).all(|y| col[a][y] <= col[a][b]);
            if row_best && col_best {
                out.push((a, b));
            }
        }
    }
    out
}

/// Ordinary least-squares slope of `ys` on `xs`, via the normal equations
/// solved by nalgebra.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let a = nalgebra::DMatrix::from_fn(xs.len(), 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
    let y = nalgebra::DVector::from_column_slice(ys);
    let ata = a.transpose() * &a;
    let coef = ata.try_inverse().expect("at least two distinct abscissae") * a.transpose() * y;
    coef[1]
}
