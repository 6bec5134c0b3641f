//! CSV and JSON artifacts. Every writer is a pure function of its input so
//! identical runs give byte-identical files.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use cpmes_cleanup::train::{moving_average, CurvePoint, EpisodeOutcome};
use cpmes_core::{DesignPoint, OptimizationTrace};
use serde::{Deserialize, Serialize};

use crate::bench::RoundFront;
use crate::HarnessError;

/// Moving-average window of exported training curves.
pub const CURVE_WINDOW: usize = 100;

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, HarnessError> {
    let bytes = w.into_inner().map_err(|e| HarnessError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    write_file(path, &serde_json::to_string_pretty(value)?)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// One row per evaluated design, priors first. `round` is 0 for priors.
pub fn trace_csv(trace: &OptimizationTrace) -> Result<String, HarnessError> {
    let n_slack = trace.records.iter().map(|r| r.ir_slack_baseline.len()).max().unwrap_or(0);
    let round_of: HashMap<DesignPoint, usize> =
        trace.rounds.iter().flat_map(|r| r.selected.iter().map(move |d| (*d, r.round))).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = [
        "index", "phase", "round", "alpha", "n_added", "objective", "indicator", "feasible", "min_slack", "best_feasible",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((0..n_slack).map(|j| format!("slack_{j}")));
    w.write_record(&header)?;
    let mut best: Option<f64> = None;
    for (i, r) in trace.records.iter().enumerate() {
        if r.feasible {
            best = Some(best.map_or(r.principal_objective, |b| b.max(r.principal_objective)));
        }
        let prior = i < trace.n_priors;
        let mut row = vec![
            i.to_string(),
            if prior { "prior" } else { "search" }.to_string(),
            if prior { 0 } else { round_of.get(&r.design).copied().unwrap_or(0) }.to_string(),
            r.design.alpha.to_string(),
            r.design.n_added.to_string(),
            r.principal_objective.to_string(),
            u8::from(r.feasibility_indicator).to_string(),
            u8::from(r.feasible).to_string(),
            r.min_slack().to_string(),
            best.map_or(String::new(), |b| b.to_string()),
        ];
        row.extend((0..n_slack).map(|j| r.ir_slack_baseline.get(j).map_or(String::new(), |s| s.to_string())));
        w.write_record(&row)?;
    }
    finish(w)
}

/// NSGA-II fronts per round: one row per front member.
pub fn fronts_csv(fronts: &[RoundFront]) -> Result<String, HarnessError> {
    let n_obj = fronts.iter().flat_map(|f| f.members.iter().map(|m| m.objectives.len())).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["round", "alpha", "n_added"].iter().map(|s| s.to_string()).collect();
    header.extend((0..n_obj).map(|k| format!("objective_{k}")));
    w.write_record(&header)?;
    for front in fronts {
        for m in &front.members {
            let mut row = vec![front.round.to_string(), m.design.alpha.to_string(), m.design.n_added.to_string()];
            row.extend(m.objectives.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    finish(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub alpha: f64,
    pub n_added: u32,
    pub objective: f64,
    pub method: String,
    pub seed: u64,
}

/// Every feasible evaluated design across `traces`, priors included.
pub fn emit_feasible_heatmap<'a>(traces: impl IntoIterator<Item = &'a OptimizationTrace>) -> Vec<HeatmapRow> {
    traces
        .into_iter()
        .flat_map(|t| {
            t.records.iter().filter(|r| r.feasible).map(move |r| HeatmapRow {
                alpha: r.design.alpha,
                n_added: r.design.n_added,
                objective: r.principal_objective,
                method: t.method.clone(),
                seed: t.seed,
            })
        })
        .collect()
}

pub fn heatmap_csv(rows: &[HeatmapRow]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["alpha", "n_added", "objective", "method", "seed"])?;
    for r in rows {
        w.write_record([r.alpha.to_string(), r.n_added.to_string(), r.objective.to_string(), r.method.clone(), r.seed.to_string()])?;
    }
    finish(w)
}

/// Training curve with a trailing moving average of the collective reward.
pub fn curve_csv(curve: &[CurvePoint]) -> Result<String, HarnessError> {
    let rewards: Vec<f64> = curve.iter().map(|c| c.collective_reward).collect();
    let ma = moving_average(&rewards, CURVE_WINDOW);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["episode", "epsilon", "collective_reward", "moving_average", "welfare", "harvested", "cleaned"])?;
    for (c, m) in curve.iter().zip(ma) {
        w.write_record([
            c.episode.to_string(),
            c.epsilon.to_string(),
            c.collective_reward.to_string(),
            m.to_string(),
            c.welfare.to_string(),
            c.harvested.to_string(),
            c.cleaned.to_string(),
        ])?;
    }
    finish(w)
}

/// Per-timestep apples and waste density of evaluation episodes.
pub fn episode_metrics_csv(episodes: &[EpisodeOutcome], river_cells: usize) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["episode", "timestep", "apples", "waste_density"])?;
    for (e, ep) in episodes.iter().enumerate() {
        for (t, (a, waste)) in ep.apples.iter().zip(&ep.waste).enumerate() {
            w.write_record([
                e.to_string(),
                t.to_string(),
                a.to_string(),
                (*waste as f64 / river_cells as f64).to_string(),
            ])?;
        }
    }
    finish(w)
}

/// Per-episode summary of evaluation episodes.
pub fn episode_summary_csv(episodes: &[EpisodeOutcome]) -> Result<String, HarnessError> {
    let n = episodes.first().map_or(0, |e| e.returns.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> =
        ["episode", "welfare", "collective_reward", "harvested", "cleaned"].iter().map(|s| s.to_string()).collect();
    header.extend((0..n).map(|i| format!("return_{i}")));
    w.write_record(&header)?;
    for (e, ep) in episodes.iter().enumerate() {
        let mut row = vec![
            e.to_string(),
            ep.welfare.to_string(),
            ep.collective_reward.to_string(),
            ep.harvested.to_string(),
            ep.cleaned.to_string(),
        ];
        row.extend(ep.returns.iter().map(|r| r.to_string()));
        w.write_record(&row)?;
    }
    finish(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cpmes_core::EvaluationRecord;

    fn trace() -> OptimizationTrace {
        let mut t = OptimizationTrace::new("cpmes", 3, 1);
        t.push_prior(EvaluationRecord::new(DesignPoint::new(0.0, 0).unwrap(), 10.0, vec![0.0, 0.0], true).unwrap());
        t.push(EvaluationRecord::new(DesignPoint::new(0.5, 2).unwrap(), 20.0, vec![1.0, -1.0], true).unwrap());
        t.push(EvaluationRecord::new(DesignPoint::new(0.2, 1).unwrap(), 15.0, vec![1.0, 2.0], true).unwrap());
        t
    }

    #[test]
    fn trace_csv_shape() {
        let csv = trace_csv(&trace()).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].ends_with("slack_0,slack_1"));
        assert!(lines[2].starts_with("1,search,0,0.5,2,20,1,0,-1,10,"));
        assert!(lines[3].contains(",15,1,1,1,15,"));
    }

    #[test]
    fn heatmap_counts_feasible_records() {
        let t = trace();
        let rows = emit_feasible_heatmap([&t]);
        assert_eq!(rows.len(), 2);
        let empty: Vec<OptimizationTrace> = Vec::new();
        assert_eq!(heatmap_csv(&emit_feasible_heatmap(&empty)).unwrap().lines().count(), 1);
    }
}
