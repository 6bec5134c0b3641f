//! Cumulative regret components against a known optimum.
//!
//! For post-prior iteration `t` with evaluated design `x_t`:
//!
//! - `R1 += G(x*) − G(x_t)`
//! - `R2 += φ(x*) − φ(x_t)`
//! - `R3 += Σ_j (1[IR_j(x*) ≥ 0] − Pr(ÎR_j(x*) ≥ 0))`, where the surrogate
//!   probability comes from IR models fitted on the records available before
//!   step `t`.
//!
//! The norm is Euclidean.

use cpmes_core::optimizer::{ProblemMode, SurrogateSettings, Surrogates};
use cpmes_core::{DesignPoint, OptimizationTrace, SyntheticInstance};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// Iteration range of the reported log-log slope.
pub const SLOPE_RANGE: (usize, usize) = (5, 20);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentPoint {
    pub t: usize,
    pub design: DesignPoint,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretComponents {
    pub method: String,
    pub seed: u64,
    pub optimum: DesignPoint,
    pub points: Vec<ComponentPoint>,
    /// Least-squares slope of `ln ‖R‖` on `ln t` over [`SLOPE_RANGE`].
    pub slope: Option<f64>,
}

pub fn regret_components(
    trace: &OptimizationTrace,
    instance: &SyntheticInstance,
    mode: ProblemMode,
    settings: &SurrogateSettings,
) -> Result<RegretComponents, HarnessError> {
    if mode != ProblemMode::Synthetic {
        return Err(HarnessError::UnsupportedMode("regret components need a known optimum".into()));
    }
    let star = instance.optimum.design;
    let star_entry = instance.entry(&star).expect("optimum lies on the lattice");
    let star_ir: Vec<f64> = star_entry.ir_slack.iter().map(|&s| if s >= 0.0 { 1.0 } else { 0.0 }).collect();
    let star_phi = if star_entry.phi { 1.0 } else { 0.0 };

    let (mut r1, mut r2, mut r3) = (0.0, 0.0, 0.0);
    let mut points = Vec::with_capacity(trace.evaluations());
    for t in 1..=trace.evaluations() {
        let idx = trace.n_priors + t - 1;
        let x = trace.records[idx].design;
        let entry = instance
            .entry(&x)
            .ok_or_else(|| HarnessError::Config(format!("trace design {x} is not on the instance lattice")))?;
        r1 += instance.optimum.value - entry.objective;
        r2 += star_phi - if entry.phi { 1.0 } else { 0.0 };
        let surrogates = Surrogates::<f64>::fit(instance.space, &trace.records[..idx], instance.n_baseline, settings)
            .map_err(|e| HarnessError::Config(format!("surrogate fit at t={t}: {e}")))?;
        r3 += surrogates
            .ir_posteriors(&star)
            .iter()
            .zip(&star_ir)
            .map(|(c, truth)| truth - c.pof())
            .sum::<f64>();
        let norm = (r1 * r1 + r2 * r2 + r3 * r3).sqrt();
        points.push(ComponentPoint { t, design: x, r1, r2, r3, norm });
    }
    let slope = loglog_slope(&points);
    Ok(RegretComponents { method: trace.method.clone(), seed: trace.seed, optimum: star, points, slope })
}

/// Needs at least two points in range with positive norm.
pub fn loglog_slope(points: &[ComponentPoint]) -> Option<f64> {
    let (lo, hi) = SLOPE_RANGE;
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.t >= lo && p.t <= hi && p.norm > 0.0)
        .map(|p| ((p.t as f64).ln(), p.norm.ln()))
        .collect();
    if xy.len() < 2 {
        return None;
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xy.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xy.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    Some(sxy / sxx)
}

pub fn components_csv(all: &[RegretComponents]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "seed", "t", "alpha", "n_added", "r1", "r2", "r3", "norm"])?;
    for c in all {
        for p in &c.points {
            w.write_record([
                c.method.clone(),
                c.seed.to_string(),
                p.t.to_string(),
                p.design.alpha.to_string(),
                p.design.n_added.to_string(),
                p.r1.to_string(),
                p.r2.to_string(),
                p.r3.to_string(),
                p.norm.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(t: usize, norm: f64) -> ComponentPoint {
        ComponentPoint { t, design: DesignPoint { alpha: 0.0, n_added: 0 }, r1: norm, r2: 0.0, r3: 0.0, norm }
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<_> = (1..=25).map(|t| pt(t, 3.0 * (t as f64).powf(0.5))).collect();
        assert!((loglog_slope(&pts).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(loglog_slope(&pts[..5]), None);
    }

    #[test]
    fn marl_mode_is_rejected() {
        let inst = cpmes_core::synthetic::generate(0, 2, 3, 11).unwrap();
        let t = OptimizationTrace::new("cpmes", 0, 1);
        let err = regret_components(&t, &inst, ProblemMode::Marl, &SurrogateSettings::default()).unwrap_err();
        assert!(matches!(err, HarnessError::UnsupportedMode(_)));
    }
}
