//! Steepest descent with momentum and early-stage jitter for the alpha-SNE
//! cost.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::affinity::{NeighborProbabilities, ProbabilityKind};
use crate::divergence::{gradient_from_logs, log_matrix, output_probabilities_with_log, Embedding};
use crate::error::{Error, Result};

/// Window (in iterations) of the convergence test.
pub const CONVERGENCE_WINDOW: usize = 50;
/// Relative cost decrease over [`CONVERGENCE_WINDOW`] below which a run is
/// considered converged.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-6;
/// Number of learning-rate halvings attempted after a non-finite step.
pub const MAX_STEP_RETRIES: usize = 10;

const JITTER_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub alpha: f64,
    pub learning_rate: f64,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    pub momentum_switch_iter: usize,
    pub max_iters: usize,
    pub jitter_initial_std: f64,
    pub jitter_decay_iters: usize,
    pub init_std: f64,
    pub seed: u64,
    pub output_dim: usize,
    /// Stop as soon as the convergence test passes.
    pub stop_on_convergence: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            alpha: 1.0,
            learning_rate: 0.2,
            momentum_initial: 0.5,
            momentum_final: 0.8,
            momentum_switch_iter: 250,
            max_iters: 1000,
            jitter_initial_std: 0.3,
            jitter_decay_iters: 50,
            init_std: 1e-4,
            seed: 0,
            output_dim: 2,
            stop_on_convergence: true,
        }
    }
}

impl OptimizerConfig {
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::invalid(format!("{what} out of range: {v}")));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha", self.alpha);
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate", self.learning_rate);
        }
        for (name, m) in [("momentum_initial", self.momentum_initial), ("momentum_final", self.momentum_final)] {
            if !(0.0..1.0).contains(&m) {
                return bad(name, m);
            }
        }
        if !(self.jitter_initial_std.is_finite() && self.jitter_initial_std >= 0.0) {
            return bad("jitter_initial_std", self.jitter_initial_std);
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return bad("init_std", self.init_std);
        }
        if self.output_dim == 0 {
            return bad("output_dim", 0.0);
        }
        if self.max_iters == 0 {
            return bad("max_iters", 0.0);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedResult {
    pub embedding: Embedding,
    pub cost_trace: Vec<f64>,
    pub final_cost: f64,
    pub converged: bool,
    /// Learning rate in effect at the end of the run, after any halvings.
    pub learning_rate: f64,
}

/// Random generator used for the initial coordinates.
pub fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random generator used for jitter noise; independent of [`init_rng`].
pub fn jitter_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(JITTER_STREAM);
    rng
}

/// I.i.d. Gaussian coordinates with standard deviation `init_std`.
pub fn init_embedding(n: usize, config: &OptimizerConfig) -> Result<Embedding> {
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 points, got {n}")));
    }
    if !(config.init_std.is_finite() && config.init_std > 0.0) || config.output_dim == 0 {
        return Err(Error::invalid("init_std must be positive and output_dim at least 1"));
    }
    let normal = Normal::new(0.0, config.init_std).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = init_rng(config.seed);
    let coords = Array2::from_shape_simple_fn((n, config.output_dim), || normal.sample(&mut rng));
    Ok(Embedding {
        coords,
        iteration: 0,
        seed: config.seed,
    })
}

/// Cost and gradient of the alpha-SNE objective at a point of the map.
struct Evaluation {
    cost: f64,
    grad: Array2<f64>,
}

/// Caches `log P` so each step only needs the output side.
pub(crate) struct Objective<'a> {
    p: &'a NeighborProbabilities,
    lnp: Array2<f64>,
    alpha: f64,
}

impl<'a> Objective<'a> {
    pub(crate) fn new(p: &'a NeighborProbabilities, alpha: f64) -> Self {
        Objective {
            p,
            lnp: log_matrix(p.probs()),
            alpha,
        }
    }

    fn evaluate(&self, coords: &Array2<f64>) -> Evaluation {
        let (q, lnq) = output_probabilities_with_log(coords.view());
        let (grad, rows) = gradient_from_logs(
            self.p.probs(),
            self.lnp.view(),
            q.view(),
            lnq.view(),
            coords.view(),
            self.alpha,
        );
        Evaluation {
            cost: rows.iter().sum(),
            grad,
        }
    }
}

fn is_usable(e: &Evaluation) -> bool {
    e.cost.is_finite() && e.grad.iter().all(|v| v.is_finite())
}

/// Minimizes `sum_i D_alpha(p_i || q_i)` over the map points.
///
/// Each iteration records the cost at the current map, then moves by
/// `momentum * previous_step - learning_rate * gradient`, plus Gaussian
/// jitter during the first `jitter_decay_iters` iterations. A step that
/// yields a non-finite cost or gradient is retried with half the learning
/// rate.
pub fn run_embedding(p: &NeighborProbabilities, config: &OptimizerConfig) -> Result<EmbedResult> {
    if p.kind() != ProbabilityKind::Input {
        return Err(Error::invalid("run_embedding expects input probabilities"));
    }
    config.validate()?;
    let n = p.n();
    let mut embedding = init_embedding(n, config)?;
    let objective = Objective::new(p, config.alpha);
    let mut rng = jitter_rng(config.seed);
    let jitter = Normal::new(0.0, config.jitter_initial_std).map_err(|e| Error::invalid(e.to_string()))?;

    let mut y = std::mem::take(&mut embedding.coords);
    let mut velocity = Array2::<f64>::zeros(y.dim());
    let mut lr = config.learning_rate;
    let mut current = objective.evaluate(&y);
    if !is_usable(&current) {
        return Err(Error::numerical("non-finite cost at the initial map"));
    }
    let mut trace = Vec::with_capacity(config.max_iters);
    let mut converged = false;
    let mut iter = 0;

    loop {
        trace.push(current.cost);
        if has_converged(&trace, iter, config) {
            converged = true;
            if config.stop_on_convergence {
                break;
            }
        }
        if trace.len() == config.max_iters {
            break;
        }

        let momentum = if iter < config.momentum_switch_iter {
            config.momentum_initial
        } else {
            config.momentum_final
        };
        let noise = if iter < config.jitter_decay_iters && config.jitter_initial_std > 0.0 {
            Some(Array2::from_shape_simple_fn(y.dim(), || jitter.sample(&mut rng)))
        } else {
            None
        };

        let mut accepted = None;
        for _ in 0..=MAX_STEP_RETRIES {
            let mut step = &velocity * momentum;
            step.scaled_add(-lr, &current.grad);
            let mut candidate = &y + &step;
            if let Some(noise) = &noise {
                candidate += noise;
            }
            let eval = objective.evaluate(&candidate);
            if is_usable(&eval) && candidate.iter().all(|v| v.is_finite()) {
                accepted = Some((candidate, step, eval));
                break;
            }
            lr *= 0.5;
        }
        let Some((candidate, step, eval)) = accepted else {
            return Err(Error::numerical(format!(
                "non-finite cost at iteration {iter} after {MAX_STEP_RETRIES} learning-rate halvings"
            )));
        };
        y = candidate;
        velocity = step;
        current = eval;
        iter += 1;
    }

    let final_cost = *trace.last().expect("trace has at least one entry");
    Ok(EmbedResult {
        embedding: Embedding {
            coords: y,
            iteration: iter,
            seed: config.seed,
        },
        cost_trace: trace,
        final_cost,
        converged,
        learning_rate: lr,
    })
}

fn has_converged(trace: &[f64], iter: usize, config: &OptimizerConfig) -> bool {
    if trace.len() <= CONVERGENCE_WINDOW || iter < config.jitter_decay_iters + CONVERGENCE_WINDOW {
        return false;
    }
    let last = trace[trace.len() - 1];
    let earlier = trace[trace.len() - 1 - CONVERGENCE_WINDOW];
    let scale = earlier.abs().max(f64::MIN_POSITIVE);
    (earlier - last) / scale < CONVERGENCE_TOLERANCE
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_coordinates() {
        let c = OptimizerConfig::default().with_seed(7);
        assert_eq!(init_embedding(20, &c).unwrap(), init_embedding(20, &c).unwrap());
        let other = init_embedding(20, &c.clone().with_seed(8)).unwrap();
        assert_ne!(init_embedding(20, &c).unwrap(), other);
    }

    #[test]
    fn init_scale() {
        let c = OptimizerConfig::default().with_seed(3);
        let e = init_embedding(100, &c).unwrap();
        let v: Vec<f64> = e.coords.iter().copied().collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        assert!((0.5e-4..=2e-4).contains(&sd), "{sd}");
    }

    #[test]
    fn output_dim_sets_columns() {
        let c = OptimizerConfig {
            output_dim: 3,
            ..Default::default()
        };
        assert_eq!(init_embedding(5, &c).unwrap().coords.dim(), (5, 3));
        assert!(init_embedding(1, &c).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        assert!(OptimizerConfig::default().with_alpha(1.5).validate().is_err());
        let c = OptimizerConfig {
            momentum_final: 1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = OptimizerConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
