//! On-disk layout of a benchmark directory.
//!
//! ```text
//! config.toml                 effective configuration
//! references.json             per-seed regret reference
//! cells.json                  every cell with its error, if any
//! traces/<cell>.json|.csv     evaluation traces
//! fronts/<cell>.csv           per-round Pareto fronts
//! instances/seed_<s>.json     synthetic instances
//! report.json|.csv            regret report
//! table_b<B>.csv|.md          budget × method tables
//! heatmap.csv                 feasible evaluated designs
//! components.csv|.json        cumulative regret components (cpmes, synthetic)
//! failed.txt                  one line per failed cell
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use cpmes_core::optimizer::ProblemMode;
use cpmes_core::{Method, OptimizationTrace, SyntheticInstance};
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, fronts_csv, heatmap_csv, read_json, trace_csv, write_file, write_json};
use crate::bench::{Benchmark, CellId, Reference, RunOutcome};
use crate::components::{components_csv, regret_components, RegretComponents};
use crate::config::ExperimentConfig;
use crate::report::RegretReport;
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStatus {
    pub id: CellId,
    pub error: Option<String>,
}

pub fn report_of(bench: &Benchmark) -> RegretReport {
    let c = &bench.config;
    RegretReport::build(&bench.runs, &bench.references, &c.methods, &c.batch_sizes, &c.budgets)
}

/// Components for every successful cPMES run; synthetic mode only.
pub fn components_of(bench: &Benchmark) -> Result<Vec<RegretComponents>, HarnessError> {
    let settings = bench.config.optimizer_settings().surrogates;
    bench
        .runs
        .iter()
        .filter(|r| !r.failed() && r.id.method == Method::Cpmes)
        .map(|r| {
            let instance = &bench.instances[&r.id.seed];
            regret_components(&r.trace, instance, bench.config.mode, &settings)
        })
        .collect()
}

pub fn write_report(dir: &Path, report: &RegretReport) -> Result<(), HarnessError> {
    write_json(&dir.join("report.json"), report)?;
    write_file(&dir.join("report.csv"), &report.to_csv()?)?;
    for &b in &report.batch_sizes {
        write_file(&dir.join(format!("table_b{b}.csv")), &report.table_csv(b)?)?;
        write_file(&dir.join(format!("table_b{b}.md")), &report.table_markdown(b))?;
    }
    Ok(())
}

/// Writes every artifact of `bench` under `dir` and returns its report.
pub fn write_benchmark(dir: &Path, bench: &Benchmark) -> Result<RegretReport, HarnessError> {
    write_file(&dir.join("config.toml"), &bench.config.to_toml()?)?;
    write_json(&dir.join("references.json"), &bench.references)?;
    let statuses: Vec<CellStatus> = bench.runs.iter().map(|r| CellStatus { id: r.id, error: r.error.clone() }).collect();
    write_json(&dir.join("cells.json"), &statuses)?;
    for run in &bench.runs {
        let stem = run.id.stem();
        write_file(&dir.join("traces").join(format!("{stem}.json")), &run.trace.to_json()?)?;
        write_file(&dir.join("traces").join(format!("{stem}.csv")), &trace_csv(&run.trace)?)?;
        if !run.fronts.is_empty() {
            write_file(&dir.join("fronts").join(format!("{stem}.csv")), &fronts_csv(&run.fronts)?)?;
        }
    }
    for (seed, instance) in &bench.instances {
        write_file(&dir.join("instances").join(format!("seed_{seed}.json")), &instance.to_json()?)?;
    }
    write_file(&dir.join("heatmap.csv"), &heatmap_csv(&artifacts::emit_feasible_heatmap(bench.traces()))?)?;
    if bench.config.mode == ProblemMode::Synthetic {
        let components = components_of(bench)?;
        write_file(&dir.join("components.csv"), &components_csv(&components)?)?;
        write_json(&dir.join("components.json"), &components)?;
    }
    let failed: String = bench
        .failures()
        .map(|r| format!("{}: {}\n", r.id.stem(), r.error.as_deref().unwrap_or("")))
        .collect();
    write_file(&dir.join("failed.txt"), &failed)?;
    let report = report_of(bench);
    write_report(dir, &report)?;
    Ok(report)
}

/// Reloads a benchmark directory. Fronts are not reloaded.
pub fn load_benchmark(dir: &Path) -> Result<Benchmark, HarnessError> {
    let config = ExperimentConfig::load(&dir.join("config.toml"))?;
    let references: BTreeMap<u64, Reference> = read_json(&dir.join("references.json"))?;
    let statuses: Vec<CellStatus> = read_json(&dir.join("cells.json"))?;
    let runs = statuses
        .into_iter()
        .map(|s| {
            let path = dir.join("traces").join(format!("{}.json", s.id.stem()));
            let trace: OptimizationTrace = read_json(&path)?;
            Ok(RunOutcome { id: s.id, trace, error: s.error, fronts: Vec::new() })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let mut instances = BTreeMap::new();
    if config.mode == ProblemMode::Synthetic {
        for &seed in references.keys() {
            let path = dir.join("instances").join(format!("seed_{seed}.json"));
            let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
            instances.insert(seed, SyntheticInstance::from_json(&text)?);
        }
    }
    Ok(Benchmark { config, runs, references, instances })
}
