//! Stochastic neighbor embedding under the alpha-divergence.
//!
//! The pipeline turns a feature table into input neighbor probabilities
//! ([`affinity`]), optimizes a low-dimensional map against them
//! ([`optimizer`]) and scores the map by neighborhood retrieval
//! ([`evaluation`]). [`eda`] picks `alpha` from the data through the EDA
//! density, and [`pipeline`] ties the stages together.

pub mod affinity;
pub mod cli;
pub mod divergence;
pub mod eda;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod optimizer;
pub mod pipeline;
pub mod quadrature;

pub use affinity::{affinities, Dataset, NeighborProbabilities, ProbabilityKind};
pub use divergence::{alpha_divergence, asne_cost, asne_gradient, output_probabilities, CostReport, Embedding};
pub use eda::{estimate_alpha, EdaFit, EdaMethod};
pub use error::{Error, Result};
pub use evaluation::{retrieval_auc, RetrievalCurve};
pub use optimizer::{run_embedding, EmbedResult, OptimizerConfig};
