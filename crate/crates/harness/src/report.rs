//! Regret aggregation: mean and 95% Student-t interval over seeds.

use std::collections::BTreeMap;

use cpmes_core::optimizer::compute_regret;
use cpmes_core::Method;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::bench::{CellId, Reference, RunOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedRegret {
    pub seed: u64,
    pub regret: f64,
    /// Nothing feasible had been found; `regret` is the sentinel.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretCell {
    pub method: Method,
    pub batch_size: usize,
    pub budget: usize,
    pub mean: f64,
    /// `t_{0.975, n−1} · s / √n` over the `n` seeds; absent for `n < 2`.
    pub ci_half_width: Option<f64>,
    pub per_seed: Vec<SeedRegret>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub methods: Vec<Method>,
    pub batch_sizes: Vec<usize>,
    pub budgets: Vec<usize>,
    pub cells: Vec<RegretCell>,
    /// Cells whose run failed; they are excluded from the aggregates.
    pub failed: Vec<CellId>,
}

/// Half-width of the two-sided 95% Student-t interval for the mean.
pub fn t_interval_half_width(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).ok()?.inverse_cdf(0.975);
    Some(t * (var / n as f64).sqrt())
}

impl RegretReport {
    /// Pure aggregation over completed runs.
    pub fn build(
        runs: &[RunOutcome],
        references: &BTreeMap<u64, Reference>,
        methods: &[Method],
        batch_sizes: &[usize],
        budgets: &[usize],
    ) -> Self {
        let mut cells = Vec::new();
        for &batch_size in batch_sizes {
            for &method in methods {
                let mut series: Vec<Vec<SeedRegret>> = vec![Vec::new(); budgets.len()];
                let mut matching: Vec<&RunOutcome> = runs
                    .iter()
                    .filter(|r| !r.failed() && r.id.method == method && r.id.batch_size == batch_size)
                    .collect();
                matching.sort_by_key(|r| r.id.seed);
                for run in matching {
                    let Some(reference) = references.get(&run.id.seed) else { continue };
                    let points = compute_regret(&run.trace, reference.optimum, reference.sentinel, budgets);
                    for (k, p) in points.iter().enumerate() {
                        series[k].push(SeedRegret { seed: run.id.seed, regret: p.regret, flagged: p.flagged });
                    }
                }
                for (k, per_seed) in series.into_iter().enumerate() {
                    if per_seed.is_empty() {
                        continue;
                    }
                    let values: Vec<f64> = per_seed.iter().map(|s| s.regret).collect();
                    cells.push(RegretCell {
                        method,
                        batch_size,
                        budget: budgets[k],
                        mean: values.iter().sum::<f64>() / values.len() as f64,
                        ci_half_width: t_interval_half_width(&values),
                        per_seed,
                    });
                }
            }
        }
        let failed = runs.iter().filter(|r| r.failed()).map(|r| r.id).collect();
        Self { methods: methods.to_vec(), batch_sizes: batch_sizes.to_vec(), budgets: budgets.to_vec(), cells, failed }
    }

    pub fn cell(&self, method: Method, batch_size: usize, budget: usize) -> Option<&RegretCell> {
        self.cells.iter().find(|c| c.method == method && c.batch_size == batch_size && c.budget == budget)
    }

    /// Long-format CSV: one row per (method, batch size, budget).
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "batch_size", "budget", "mean_regret", "ci95_half_width", "n_seeds", "flagged", "per_seed"])?;
        for c in &self.cells {
            let per_seed: Vec<String> = c.per_seed.iter().map(|s| format!("{}:{}", s.seed, s.regret)).collect();
            w.write_record([
                c.method.as_str().to_string(),
                c.batch_size.to_string(),
                c.budget.to_string(),
                c.mean.to_string(),
                c.ci_half_width.map_or(String::new(), |h| h.to_string()),
                c.per_seed.len().to_string(),
                c.per_seed.iter().filter(|s| s.flagged).count().to_string(),
                per_seed.join(";"),
            ])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is UTF-8"))
    }

    /// Budget rows × method columns of "mean ± half-width" for one batch size.
    pub fn table(&self, batch_size: usize) -> Vec<Vec<String>> {
        let mut rows = vec![std::iter::once("T_max".to_string())
            .chain(self.methods.iter().map(|m| m.as_str().to_string()))
            .collect::<Vec<_>>()];
        for &budget in &self.budgets {
            let mut row = vec![budget.to_string()];
            for &method in &self.methods {
                row.push(match self.cell(method, batch_size, budget) {
                    Some(c) => match c.ci_half_width {
                        Some(h) => format!("{:.1} ± {:.1}", c.mean, h),
                        None => format!("{:.1}", c.mean),
                    },
                    None => "failed".into(),
                });
            }
            rows.push(row);
        }
        rows
    }

    pub fn table_csv(&self, batch_size: usize) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in self.table(batch_size) {
            w.write_record(&row)?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is UTF-8"))
    }

    pub fn table_markdown(&self, batch_size: usize) -> String {
        let rows = self.table(batch_size);
        let mut out = String::new();
        for (i, row) in rows.iter().enumerate() {
            out.push_str(&format!("| {} |\n", row.join(" | ")));
            if i == 0 {
                out.push_str(&format!("|{}\n", "---|".repeat(row.len())));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_interval_matches_table_value() {
        // t_{0.975,4} = 2.776445105
        let h = t_interval_half_width(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let expected = 2.776445105 * (2.5f64 / 5.0).sqrt();
        assert!((h - expected).abs() < 1e-6, "{h} vs {expected}");
        assert!(t_interval_half_width(&[3.0]).is_none());
        assert_eq!(t_interval_half_width(&[2.0, 2.0, 2.0]), Some(0.0));
    }
}
