use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cpmes_cleanup::MarlEvaluator;
use cpmes_core::optimizer::{ProblemMode, Surrogates};
use cpmes_core::synthetic::generate_with;
use cpmes_core::{DesignPoint, Method, OptimizationTrace};
use cpmes_harness::archive::{load_benchmark, report_of, write_benchmark, write_report};
use cpmes_harness::artifacts::{fronts_csv, read_json, trace_csv, write_file, write_json};
use cpmes_harness::training::{run_contract, summarize, write_training};
use cpmes_harness::{run_benchmark, run_cell, CellId, ExperimentConfig};
use log::{error, info};

#[derive(Parser)]
#[command(name = "cpmes", version, about = "Constrained Bayesian optimization of multi-agent contracts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured method at every seed and batch size.
    Bench(Common),
    /// Run one method at one seed.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "cpmes")]
        method: String,
        /// Continue from a saved (partial) trace.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Train the baseline and one contract and export curves and renders.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 5)]
        n_added: u32,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Recompute the regret report of a benchmark directory.
    Report {
        /// Directory written by `bench`.
        dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Synthetic,
    Marl,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    budgets: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    batch_sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut config = match (&self.config, self.mode) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(ModeArg::Marl)) => ExperimentConfig::marl(),
            (None, _) => ExperimentConfig::synthetic(),
        };
        if let Some(mode) = self.mode {
            config.mode = match mode {
                ModeArg::Synthetic => ProblemMode::Synthetic,
                ModeArg::Marl => ProblemMode::Marl,
            };
        }
        if let Some(s) = &self.seeds {
            config.seeds = s.clone();
        }
        if let Some(b) = &self.budgets {
            config.budgets = b.clone();
        }
        if let Some(b) = &self.batch_sizes {
            config.batch_sizes = b.clone();
        }
        if let Some(m) = &self.methods {
            config.methods = m.iter().map(|s| parse_method(s)).collect::<Result<_>>()?;
        }
        if let Some(o) = &self.out {
            config.output_dir = o.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

fn parse_method(s: &str) -> Result<Method> {
    s.parse::<Method>().map_err(|e| anyhow::anyhow!("{e}"))
}

fn bench(common: &Common) -> Result<bool> {
    let config = common.config()?;
    let started = std::time::Instant::now();
    let bench = run_benchmark(&config)?;
    let dir = &config.output_dir;
    let report = write_benchmark(dir, &bench)?;
    for &b in &config.batch_sizes {
        println!("batch size {b}\n{}", report.table_markdown(b));
    }
    info!("{} cells in {:.1}s, artifacts in {}", bench.runs.len(), started.elapsed().as_secs_f64(), dir.display());
    for run in bench.failures() {
        error!("cell {} failed: {}", run.id.stem(), run.error.as_deref().unwrap_or(""));
    }
    let ok = bench.failures().next().is_none();
    Ok(ok)
}

fn optimize(common: &Common, method: &str, resume: Option<&Path>) -> Result<bool> {
    let config = common.config()?;
    let id = CellId { method: parse_method(method)?, seed: config.seeds[0], batch_size: config.batch_sizes[0] };
    let resume: Option<OptimizationTrace> = resume.map(read_json).transpose()?;
    let dir = &config.output_dir;
    let outcome = match config.mode {
        ProblemMode::Synthetic => {
            let instance = generate_with(id.seed, &config.synthetic)?;
            write_file(&dir.join(format!("instance_s{}.json", id.seed)), &instance.to_json()?)?;
            run_cell(&config, id, &instance, resume)
        }
        ProblemMode::Marl => {
            let evaluator = MarlEvaluator::new(
                config.cleanup.clone(),
                config.training.clone(),
                config.n_baseline,
                config.min_return,
                id.seed,
            );
            run_cell(&config, id, &evaluator, resume)
        }
    };
    let stem = id.stem();
    write_file(&dir.join(format!("{stem}.json")), &outcome.trace.to_json()?)?;
    write_file(&dir.join(format!("{stem}.csv")), &trace_csv(&outcome.trace)?)?;
    if !outcome.fronts.is_empty() {
        write_file(&dir.join(format!("{stem}_fronts.csv")), &fronts_csv(&outcome.fronts)?)?;
    }
    if let Some(e) = &outcome.error {
        error!("{stem} failed after {} evaluations: {e}", outcome.trace.evaluations());
        return Ok(false);
    }
    let space = config.problem(id.seed, id.batch_size).space()?;
    let settings = config.optimizer_settings().surrogates;
    let surrogates = Surrogates::<f64>::fit(space, &outcome.trace.records, config.n_baseline, &settings)?;
    write_json(&dir.join(format!("{stem}_gp.json")), &surrogates.objective.snapshot())?;
    match outcome.trace.best_feasible_record() {
        Some(r) => println!("best feasible {} with objective {:.4}", r.design, r.principal_objective),
        None => println!("no feasible design found"),
    }
    Ok(true)
}

fn train_cmd(common: &Common, alpha: f64, n_added: u32, episodes: Option<usize>) -> Result<bool> {
    let mut config = common.config()?;
    if let Some(e) = episodes {
        config.training.episodes = e;
    }
    let design = DesignPoint::new(alpha, n_added)?;
    let dir = &config.output_dir;
    for &seed in &config.seeds {
        let run = run_contract(&config.cleanup, &config.training, config.n_baseline, design, config.min_return, seed)?;
        let sub = dir.join(format!("seed_{seed}"));
        write_training(&sub, "baseline", &config.cleanup, &run.baseline, seed)?;
        if let Some(report) = &run.contract {
            write_training(&sub, "contract", &config.cleanup, report, seed)?;
        }
        let summary = summarize(&run);
        write_json(&sub.join("summary.json"), &summary)?;
        println!(
            "seed {seed}: baseline welfare {:.2} (median apples@150 {}), contract welfare {:.2}{}, feasible {}",
            summary.baseline_welfare,
            summary.baseline_median_apples_150,
            summary.record.principal_objective,
            summary.contract_median_apples_150.map_or(String::new(), |a| format!(" (median apples@150 {a})")),
            summary.record.feasible
        );
    }
    Ok(true)
}

fn report(dir: &Path) -> Result<bool> {
    let bench = load_benchmark(dir).with_context(|| format!("loading {}", dir.display()))?;
    let report = report_of(&bench);
    write_report(dir, &report)?;
    for &b in &report.batch_sizes {
        println!("batch size {b}\n{}", report.table_markdown(b));
    }
    Ok(report.failed.is_empty())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Bench(common) => bench(common),
        Command::Optimize { common, method, resume } => optimize(common, method, resume.as_deref()),
        Command::Train { common, alpha, n_added, episodes } => train_cmd(common, *alpha, *n_added, *episodes),
        Command::Report { dir } => report(dir),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            if let Some(source) = e.chain().nth(1) {
                error!("{e}: {source}");
            } else {
                error!("{e}");
            }
            ExitCode::from(2)
        }
    }
}
