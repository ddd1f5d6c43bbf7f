//! End-to-end runs: affinities, optimization and scoring, alpha sweeps and
//! alpha estimation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affinity::{affinities, BandwidthSet, Dataset, NeighborProbabilities};
use crate::divergence::{asne_cost, output_probabilities, CostReport, Embedding};
use crate::eda::{check_grid, estimate_alpha_with_embeddings, EdaFit, EstimateOptions};
use crate::error::{Error, Result, StageExt};
use crate::evaluation::{retrieval_auc, CurvePoint, RetrievalCurve, DEFAULT_K_INPUT, DEFAULT_K_MAX};
use crate::optimizer::{run_embedding, EmbedResult, OptimizerConfig};

pub const DEFAULT_PERPLEXITY: f64 = 20.0;
pub const DEFAULT_REPEATS: usize = 5;

/// Settings shared by every run on a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSettings {
    pub perplexity: f64,
    pub k_input: usize,
    pub k_max: usize,
    /// Z-score every feature before computing affinities.
    pub standardize: bool,
    pub optimizer: OptimizerConfig,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            perplexity: DEFAULT_PERPLEXITY,
            k_input: DEFAULT_K_INPUT,
            k_max: DEFAULT_K_MAX,
            standardize: false,
            optimizer: OptimizerConfig::default(),
        }
    }
}

/// A dataset with its input probabilities.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Features as used for affinities and input neighborhoods.
    pub dataset: Dataset,
    pub p: NeighborProbabilities,
    pub bandwidths: BandwidthSet,
}

pub fn prepare(dataset: &Dataset, settings: &RunSettings) -> Result<Prepared> {
    let dataset = if settings.standardize {
        dataset.standardized()
    } else {
        dataset.clone()
    };
    let (p, bandwidths) = affinities(&dataset, settings.perplexity).stage("affinities")?;
    Ok(Prepared { dataset, p, bandwidths })
}

/// An optimized map with its cost and retrieval curve.
#[derive(Debug, Clone)]
pub struct ScoredEmbedding {
    pub result: EmbedResult,
    pub cost: CostReport,
    pub curve: RetrievalCurve,
}

/// Retrieval curve of `embedding` against the prepared input features.
pub fn score(prepared: &Prepared, embedding: &Embedding, settings: &RunSettings) -> Result<RetrievalCurve> {
    retrieval_auc(prepared.dataset.data(), embedding.coords.view(), settings.k_input, settings.k_max).stage("evaluation")
}

/// Optimizes a map with `config` and scores it.
pub fn embed_and_score(prepared: &Prepared, config: &OptimizerConfig, settings: &RunSettings) -> Result<ScoredEmbedding> {
    let result = run_embedding(&prepared.p, config).stage("optimizer")?;
    let q = output_probabilities(&result.embedding).stage("output probabilities")?;
    let cost = asne_cost(&prepared.p, &q, config.alpha).stage("cost")?;
    let curve = score(prepared, &result.embedding, settings)?;
    Ok(ScoredEmbedding { result, cost, curve })
}

/// Seeds of the repeated runs: `seed, seed + 1, ...`.
pub fn repeat_seeds(seed: u64, repeats: usize) -> Vec<u64> {
    (0..repeats as u64).map(|r| seed.wrapping_add(r)).collect()
}

/// AUCs of one grid value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub aucs: Vec<f64>,
    pub mean_auc: f64,
    /// Sample standard deviation (zero for a single repeat).
    pub std_auc: f64,
    /// Pointwise mean of the repeats' retrieval curves.
    pub mean_curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Grid value with the highest mean AUC (first one on ties).
    pub best_alpha: f64,
    pub best_mean_auc: f64,
    pub seeds: Vec<u64>,
}

impl SweepResult {
    pub fn row(&self, alpha: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| (r.alpha - alpha).abs() < 1e-12)
    }
}

/// Runs `repeats` seeded embeddings per grid value and averages their AUC.
pub fn sweep_alpha(prepared: &Prepared, settings: &RunSettings, grid: &[f64], repeats: usize) -> Result<SweepResult> {
    check_grid(grid)?;
    if repeats == 0 {
        return Err(Error::invalid("repeats must be at least 1"));
    }
    let seeds = repeat_seeds(settings.optimizer.seed, repeats);
    let jobs: Vec<(usize, u64)> = (0..grid.len()).flat_map(|g| seeds.iter().map(move |s| (g, *s))).collect();
    let curves: Vec<RetrievalCurve> = jobs
        .par_iter()
        .map(|&(g, seed)| {
            let config = settings.optimizer.clone().with_alpha(grid[g]).with_seed(seed);
            embed_and_score(prepared, &config, settings).map(|s| s.curve)
        })
        .collect::<Result<_>>()?;

    let rows: Vec<SweepRow> = grid
        .iter()
        .zip(curves.chunks(repeats))
        .map(|(&alpha, c)| {
            let a: Vec<f64> = c.iter().map(|c| c.auc).collect();
            let mean = a.iter().sum::<f64>() / repeats as f64;
            let var = if repeats > 1 {
                a.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (repeats - 1) as f64
            } else {
                0.0
            };
            SweepRow {
                alpha,
                aucs: a,
                mean_auc: mean,
                std_auc: var.sqrt(),
                mean_curve: mean_points(c),
            }
        })
        .collect();
    let best = rows
        .iter()
        .fold(&rows[0], |best, r| if r.mean_auc > best.mean_auc { r } else { best });
    Ok(SweepResult {
        best_alpha: best.alpha,
        best_mean_auc: best.mean_auc,
        rows,
        seeds,
    })
}

/// Pointwise mean of curves over the same output sizes.
pub fn mean_points(curves: &[RetrievalCurve]) -> Vec<CurvePoint> {
    let r = curves.len() as f64;
    (0..curves[0].points.len())
        .map(|k| CurvePoint {
            k: curves[0].points[k].k,
            recall: curves.iter().map(|c| c.points[k].recall).sum::<f64>() / r,
            precision: curves.iter().map(|c| c.points[k].precision).sum::<f64>() / r,
        })
        .collect()
}

/// EDA selection together with the scored embedding at the chosen value.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub fit: EdaFit,
    pub selected: Embedding,
    pub curve: RetrievalCurve,
    /// Retrieval AUC of every candidate's map (`NaN` for failures).
    pub candidate_aucs: Vec<f64>,
}

/// Embeds once per grid value with the configured seed and selects `alpha`
/// through the EDA objective.
pub fn estimate(prepared: &Prepared, settings: &RunSettings, grid: &[f64], options: EstimateOptions) -> Result<Estimate> {
    let embed = |alpha: f64| {
        let config = settings.optimizer.clone().with_alpha(alpha);
        run_embedding(&prepared.p, &config).map(|r| r.embedding)
    };
    let (fit, embeddings) = estimate_alpha_with_embeddings(&prepared.p, embed, grid, options).stage("alpha estimation")?;
    let mut candidate_aucs = Vec::with_capacity(grid.len());
    let mut selected = None;
    for (alpha, emb) in grid.iter().zip(embeddings) {
        match emb {
            Some(e) => {
                let curve = score(prepared, &e, settings)?;
                candidate_aucs.push(curve.auc);
                if *alpha == fit.selected_alpha && selected.is_none() {
                    selected = Some((e, curve));
                }
            }
            None => candidate_aucs.push(f64::NAN),
        }
    }
    let (selected, curve) = selected.expect("the selected candidate has an embedding");
    Ok(Estimate {
        fit,
        selected,
        curve,
        candidate_aucs,
    })
}
