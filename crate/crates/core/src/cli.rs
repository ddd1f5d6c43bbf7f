//! Command-line interface.
//!
//! Every subcommand writes its artifacts under `--out-dir` and ends its
//! standard output with one `RESULT key=value ...` line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::affinity::Dataset;
use crate::eda::{default_alpha_grid, EdaFit, EdaMethod, EstimateOptions};
use crate::error::{Error, Result, StageExt};
use crate::evaluation::RetrievalCurve;
use crate::io::{
    ensure_dir, load_bundled, load_csv, load_embedding, save_curve, save_embedding, save_metrics, save_table,
    LabelColumn, Metrics, RunArtifacts,
};
use crate::optimizer::OptimizerConfig;
use crate::pipeline::{self, RunSettings, SweepResult};

#[derive(Debug, Parser)]
#[command(name = "alphasne", version, about = "Alpha-divergence stochastic neighbor embedding")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Embed a dataset at one alpha and score the map.
    Embed {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        alpha: f64,
    },
    /// Average the retrieval AUC over seeded runs for each alpha of a grid.
    SweepAlpha {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = pipeline::DEFAULT_REPEATS)]
        repeats: usize,
    },
    /// Select alpha with the EDA objective.
    EstimateAlpha {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, value_enum, default_value_t = MethodArg::Sm)]
        method: MethodArg,
    },
    /// Score a previously saved embedding against a dataset.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        embedding: PathBuf,
    },
    /// Convert a saved sweep or estimation report into an alpha curve CSV.
    Curve {
        /// `sweep.json` or `eda.json` from an earlier run.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Score matching
    Sm,
    /// Maximum likelihood
    Ml,
}

#[derive(Debug, Clone, Args)]
#[group(id = "source", required = true, multiple = false)]
pub struct SourceArgs {
    /// CSV file with one row per point.
    #[arg(long, group = "source")]
    pub data: Option<PathBuf>,
    /// Bundled dataset: iris or wine.
    #[arg(long, group = "source")]
    pub dataset: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Label column, by header name or zero-based index.
    #[arg(long)]
    pub labels_col: Option<LabelColumn>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Z-score every feature before computing affinities.
    #[arg(long)]
    pub standardize: bool,
    #[arg(long, default_value_t = pipeline::DEFAULT_PERPLEXITY)]
    pub perplexity: f64,
    #[arg(long, default_value_t = crate::evaluation::DEFAULT_K_INPUT)]
    pub k_input: usize,
    #[arg(long, default_value_t = crate::evaluation::DEFAULT_K_MAX)]
    pub k_max: usize,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizerArgs {
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub momentum_initial: Option<f64>,
    #[arg(long)]
    pub momentum_final: Option<f64>,
    #[arg(long)]
    pub momentum_switch_iter: Option<usize>,
    #[arg(long)]
    pub jitter_std: Option<f64>,
    #[arg(long)]
    pub jitter_iters: Option<usize>,
    #[arg(long)]
    pub init_std: Option<f64>,
    #[arg(long)]
    pub output_dim: Option<usize>,
    /// Keep iterating after the convergence test passes.
    #[arg(long)]
    pub no_early_stop: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Comma-separated alpha values (default 0.05, 0.10, ..., 1.0).
    #[arg(long, value_delimiter = ',')]
    pub alpha_grid: Option<Vec<f64>>,
}

impl GridArgs {
    fn grid(&self) -> Vec<f64> {
        self.alpha_grid.clone().unwrap_or_else(default_alpha_grid)
    }
}

impl OptimizerArgs {
    fn config(&self) -> OptimizerConfig {
        let mut c = OptimizerConfig::default();
        macro_rules! set {
            ($($field:ident <- $arg:ident),*) => {
                $(if let Some(v) = self.$arg { c.$field = v; })*
            };
        }
        set!(
            max_iters <- iters,
            learning_rate <- learning_rate,
            seed <- seed,
            momentum_initial <- momentum_initial,
            momentum_final <- momentum_final,
            momentum_switch_iter <- momentum_switch_iter,
            jitter_initial_std <- jitter_std,
            jitter_decay_iters <- jitter_iters,
            init_std <- init_std,
            output_dim <- output_dim
        );
        c.stop_on_convergence = !self.no_early_stop;
        c
    }
}

impl CommonArgs {
    fn settings(&self) -> RunSettings {
        RunSettings {
            perplexity: self.perplexity,
            k_input: self.k_input,
            k_max: self.k_max,
            standardize: self.standardize,
            optimizer: self.optimizer.config(),
        }
    }

    fn load(&self) -> Result<Dataset> {
        match (&self.source.data, &self.source.dataset) {
            (Some(path), _) => load_csv(path, self.labels_col.as_ref()),
            (None, Some(name)) => load_bundled(name),
            (None, None) => Err(Error::invalid("either --data or --dataset is required")),
        }
        .stage("load")
    }

    fn source_name(&self) -> String {
        match (&self.source.data, &self.source.dataset) {
            (Some(p), _) => p.display().to_string(),
            (None, Some(n)) => n.clone(),
            _ => String::new(),
        }
    }
}

#[derive(Serialize)]
struct Snapshot<'a, T: Serialize> {
    command: &'a str,
    data: String,
    settings: RunSettings,
    #[serde(flatten)]
    extra: T,
}

fn snapshot<T: Serialize>(command: &str, common: &CommonArgs, settings: &RunSettings, extra: T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(Snapshot {
        command,
        data: common.source_name(),
        settings: settings.clone(),
        extra,
    })?)
}

struct Run {
    artifacts: RunArtifacts,
    summary: Vec<(&'static str, String)>,
}

fn artifacts(metrics_path: PathBuf, config: serde_json::Value, started: SystemTime) -> RunArtifacts {
    RunArtifacts {
        embedding_path: None,
        metrics_path,
        curve_path: None,
        table_paths: Vec::new(),
        config_snapshot: config,
        started,
        finished: SystemTime::now(),
    }
}

fn cmd_embed(common: &CommonArgs, alpha: f64) -> Result<Run> {
    let started = SystemTime::now();
    let mut settings = common.settings();
    settings.optimizer.alpha = alpha;
    let config = snapshot("embed", common, &settings, json!({}))?;
    let dataset = common.load()?;
    let prepared = pipeline::prepare(&dataset, &settings)?;
    let run = pipeline::embed_and_score(&prepared, &settings.optimizer, &settings)?;

    let dir = &common.out_dir;
    ensure_dir(dir).stage("save")?;
    let emb_path = dir.join("embedding.csv");
    let metrics_path = dir.join("metrics.json");
    let curve_path = dir.join("curve.csv");
    save_embedding(&run.result.embedding, dataset.labels(), &emb_path).stage("save")?;
    save_curve(&run.curve, &curve_path).stage("save")?;
    let metrics = Metrics::new(&run.curve, None, Some(run.result.final_cost), config.clone());
    save_metrics(&metrics, &metrics_path).stage("save")?;

    println!(
        "embedded {} points at alpha {alpha}: {} iterations, cost {:.6}, AUC {:.6}",
        dataset.n(),
        run.result.embedding.iteration,
        run.result.final_cost,
        run.curve.auc
    );
    let mut artifacts = artifacts(metrics_path, config, started);
    artifacts.embedding_path = Some(emb_path);
    artifacts.curve_path = Some(curve_path);
    Ok(Run {
        artifacts,
        summary: vec![
            ("alpha", alpha.to_string()),
            ("auc", run.curve.auc.to_string()),
            ("final_cost", run.result.final_cost.to_string()),
            ("converged", run.result.converged.to_string()),
        ],
    })
}

fn sweep_table(sweep: &SweepResult, path: &Path) -> Result<()> {
    let repeats = sweep.seeds.len();
    let mut header = vec!["alpha".to_string(), "mean_auc".to_string(), "std_auc".to_string()];
    header.extend(sweep.seeds.iter().map(|s| format!("auc_seed{s}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<f64>> = sweep
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![r.alpha, r.mean_auc, r.std_auc];
            row.extend(&r.aucs[..repeats]);
            row
        })
        .collect();
    save_table(&header, &rows, path)
}

fn cmd_sweep(common: &CommonArgs, grid: &GridArgs, repeats: usize) -> Result<Run> {
    let started = SystemTime::now();
    let grid = grid.grid();
    let settings = common.settings();
    let config = snapshot("sweep-alpha", common, &settings, json!({ "alpha_grid": grid, "repeats": repeats }))?;
    let dataset = common.load()?;
    let prepared = pipeline::prepare(&dataset, &settings)?;
    let sweep = pipeline::sweep_alpha(&prepared, &settings, &grid, repeats)?;

    let best = sweep.row(sweep.best_alpha).expect("best alpha is a grid value");
    let curve = RetrievalCurve {
        points: best.mean_curve.clone(),
        auc: sweep.best_mean_auc,
        k_input: settings.k_input,
        k_max: best.mean_curve.len(),
        capped: best.mean_curve.len() < settings.k_max,
    };

    let dir = &common.out_dir;
    ensure_dir(dir).stage("save")?;
    let table = dir.join("sweep.csv");
    let report = dir.join("sweep.json");
    let metrics_path = dir.join("metrics.json");
    let curve_path = dir.join("curve.csv");
    sweep_table(&sweep, &table).stage("save")?;
    std::fs::write(&report, serde_json::to_string_pretty(&sweep)? + "\n")
        .map_err(|e| Error::io(&report, e))
        .stage("save")?;
    save_curve(&curve, &curve_path).stage("save")?;
    let mut metrics = Metrics::new(&curve, None, None, config.clone());
    metrics.alpha_grid = Some(grid.clone());
    metrics.selected_alpha = Some(sweep.best_alpha);
    save_metrics(&metrics, &metrics_path).stage("save")?;

    for r in &sweep.rows {
        println!("alpha {:<5} mean AUC {:.6} (sd {:.6})", r.alpha, r.mean_auc, r.std_auc);
    }
    println!("best alpha {} with mean AUC {:.6}", sweep.best_alpha, sweep.best_mean_auc);
    let mut artifacts = artifacts(metrics_path, config, started);
    artifacts.curve_path = Some(curve_path);
    artifacts.table_paths = vec![table, report];
    Ok(Run {
        artifacts,
        summary: vec![
            ("best_alpha", sweep.best_alpha.to_string()),
            ("best_mean_auc", sweep.best_mean_auc.to_string()),
            ("rows", sweep.rows.len().to_string()),
        ],
    })
}

fn alpha_curve_rows(fit: &EdaFit, aucs: &[f64]) -> Vec<Vec<f64>> {
    fit.grid
        .iter()
        .enumerate()
        .map(|(k, &alpha)| {
            let c = fit.candidates[k].as_ref();
            vec![
                alpha,
                fit.objectives[k],
                fit.phis[k],
                c.map_or(f64::NAN, |c| c.score_matching_data.value),
                c.map_or(f64::NAN, |c| c.score_matching.value),
                c.and_then(|c| c.log_likelihood).map_or(f64::NAN, |l| l.value),
                aucs.get(k).copied().unwrap_or(f64::NAN),
            ]
        })
        .collect()
}

const ALPHA_CURVE_HEADER: [&str; 7] = [
    "alpha",
    "objective",
    "phi",
    "score_matching",
    "score_matching_transformed",
    "log_likelihood",
    "auc",
];

fn cmd_estimate(common: &CommonArgs, grid: &GridArgs, method: MethodArg) -> Result<Run> {
    let started = SystemTime::now();
    let grid = grid.grid();
    let method = match method {
        MethodArg::Sm => EdaMethod::ScoreMatching,
        MethodArg::Ml => EdaMethod::MaxLikelihood,
    };
    let options = EstimateOptions::with_method(method);
    let settings = common.settings();
    let config = snapshot("estimate-alpha", common, &settings, json!({ "alpha_grid": grid, "method": method }))?;
    let dataset = common.load()?;
    let prepared = pipeline::prepare(&dataset, &settings)?;
    let est = pipeline::estimate(&prepared, &settings, &grid, options)?;

    let dir = &common.out_dir;
    ensure_dir(dir).stage("save")?;
    let emb_path = dir.join("embedding.csv");
    let metrics_path = dir.join("metrics.json");
    let curve_path = dir.join("curve.csv");
    let report = dir.join("eda.json");
    let table = dir.join("alpha_curve.csv");
    save_embedding(&est.selected, dataset.labels(), &emb_path).stage("save")?;
    save_curve(&est.curve, &curve_path).stage("save")?;
    let report_json = json!({ "fit": est.fit, "candidate_aucs": est.candidate_aucs.iter().map(|a| a.is_finite().then_some(*a)).collect::<Vec<_>>() });
    std::fs::write(&report, serde_json::to_string_pretty(&report_json)? + "\n")
        .map_err(|e| Error::io(&report, e))
        .stage("save")?;
    save_table(&ALPHA_CURVE_HEADER, &alpha_curve_rows(&est.fit, &est.candidate_aucs), &table).stage("save")?;
    save_metrics(&Metrics::new(&est.curve, Some(&est.fit), None, config.clone()), &metrics_path).stage("save")?;

    for (k, alpha) in est.fit.grid.iter().enumerate() {
        println!(
            "alpha {:<5} objective {:>14.6e} phi {:.4e} AUC {:.6}",
            alpha, est.fit.objectives[k], est.fit.phis[k], est.candidate_aucs[k]
        );
    }
    for f in &est.fit.failures {
        println!("alpha {} failed: {}", f.alpha, f.message);
    }
    println!(
        "selected alpha {} ({}), AUC {:.6}",
        est.fit.selected_alpha,
        method.name(),
        est.curve.auc
    );
    let mut artifacts = artifacts(metrics_path, config, started);
    artifacts.embedding_path = Some(emb_path);
    artifacts.curve_path = Some(curve_path);
    artifacts.table_paths = vec![report, table];
    Ok(Run {
        artifacts,
        summary: vec![
            ("selected_alpha", est.fit.selected_alpha.to_string()),
            ("method", method.name().to_string()),
            ("auc", est.curve.auc.to_string()),
        ],
    })
}

fn cmd_evaluate(common: &CommonArgs, embedding: &Path) -> Result<Run> {
    let started = SystemTime::now();
    let settings = common.settings();
    let config = snapshot("evaluate", common, &settings, json!({ "embedding": embedding.display().to_string() }))?;
    let dataset = common.load()?;
    let (emb, _) = load_embedding(embedding).stage("load embedding")?;
    if emb.n() != dataset.n() {
        return Err(Error::dims(format!(
            "dataset has {} rows but embedding has {}",
            dataset.n(),
            emb.n()
        )))
        .stage("evaluate");
    }
    let features = if settings.standardize { dataset.standardized() } else { dataset };
    let curve = crate::evaluation::retrieval_auc(features.data(), emb.coords.view(), settings.k_input, settings.k_max)
        .stage("evaluation")?;

    let dir = &common.out_dir;
    ensure_dir(dir).stage("save")?;
    let metrics_path = dir.join("metrics.json");
    let curve_path = dir.join("curve.csv");
    save_curve(&curve, &curve_path).stage("save")?;
    save_metrics(&Metrics::new(&curve, None, None, config.clone()), &metrics_path).stage("save")?;
    println!("AUC {:.6} over output neighborhoods 1..={}", curve.auc, curve.k_max);
    let mut artifacts = artifacts(metrics_path, config, started);
    artifacts.curve_path = Some(curve_path);
    Ok(Run {
        artifacts,
        summary: vec![("auc", curve.auc.to_string())],
    })
}

fn cmd_curve(input: &Path, output: &Path) -> Result<Run> {
    let started = SystemTime::now();
    let text = std::fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let rows = if value.get("rows").is_some() {
        let sweep: SweepResult = serde_json::from_value(value)?;
        let rows: Vec<Vec<f64>> = sweep.rows.iter().map(|r| vec![r.alpha, r.mean_auc, r.std_auc]).collect();
        save_table(&["alpha", "mean_auc", "std_auc"], &rows, output)?;
        rows.len()
    } else if let Some(fit) = value.get("fit") {
        let fit: EdaFit = serde_json::from_value(fit.clone())?;
        let aucs: Vec<f64> = value
            .get("candidate_aucs")
            .and_then(|a| a.as_array())
            .map(|a| a.iter().map(|v| v.as_f64().unwrap_or(f64::NAN)).collect())
            .unwrap_or_default();
        let rows = alpha_curve_rows(&fit, &aucs);
        save_table(&ALPHA_CURVE_HEADER, &rows, output)?;
        rows.len()
    } else {
        return Err(Error::invalid(format!(
            "{} is neither a sweep nor an estimation report",
            input.display()
        )));
    };
    println!("wrote {rows} rows to {}", output.display());
    let mut artifacts = artifacts(output.to_path_buf(), json!({ "input": input.display().to_string() }), started);
    artifacts.table_paths = vec![output.to_path_buf()];
    Ok(Run {
        artifacts,
        summary: vec![("rows", rows.to_string())],
    })
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<RunArtifacts> {
    let (name, run) = execute(cli)?;
    let fields: Vec<String> = run.summary.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("RESULT command={name} {}", fields.join(" "));
    Ok(run.artifacts)
}

fn execute(cli: &Cli) -> Result<(&'static str, Run)> {
    let jobs = match &cli.command {
        Command::Embed { common, .. }
        | Command::SweepAlpha { common, .. }
        | Command::EstimateAlpha { common, .. }
        | Command::Evaluate { common, .. } => common.jobs,
        Command::Curve { .. } => None,
    };
    let go = || match &cli.command {
        Command::Embed { common, alpha } => cmd_embed(common, *alpha).map(|r| ("embed", r)),
        Command::SweepAlpha { common, grid, repeats } => cmd_sweep(common, grid, *repeats).map(|r| ("sweep-alpha", r)),
        Command::EstimateAlpha { common, grid, method } => {
            cmd_estimate(common, grid, *method).map(|r| ("estimate-alpha", r))
        }
        Command::Evaluate { common, embedding } => cmd_evaluate(common, embedding).map(|r| ("evaluate", r)),
        Command::Curve { input, output } => cmd_curve(input, output).map(|r| ("curve", r)),
    };
    match jobs {
        Some(0) => Err(Error::invalid("--jobs must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?
            .install(go),
        None => go(),
    }
}

/// Parses `args` and runs the command. Returns the process exit status:
/// 0 on success, 2 for usage errors, 1 for runtime failures.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(_) => 0,
        Err(e) => {
            let mut msg = e.to_string();
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                if !msg.contains(&s.to_string()) {
                    msg.push_str(&format!(": {s}"));
                }
                src = s.source();
            }
            eprintln!("error: {msg}");
            1
        }
    }
}
