//! Genetic-algorithm weight search for soft-voting classifier ensembles.
//!
//! The crate consumes exported per-model class distributions, finds simplex
//! weights that maximize development-split weighted (or macro) F1, applies them
//! to held-out splits, and reports shared-task metrics and corpus statistics.

pub mod cli;
pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod ga;
pub mod io;
pub mod manifest;
pub mod metrics;
pub mod oracle;
pub mod synth;

pub use ensemble::{
    argmax_labels, softmax_rows, uniform_average, validate_pool, weighted_average, ClassAssignments,
    EnsembleWeights, GoldLabels, LabelSet, ModelPool, PredictionMatrix, ValidationReport,
};
pub use error::{Error, Result};
pub use ga::{apply_weights, evolve, fitness, GaConfig, Genome, OptimizationResult};
pub use metrics::{confusion, full_report, macro_f1, per_class_prf, weighted_f1, ConfusionMatrix, Metric, MetricsReport};
pub use oracle::{enumerate_simplex, grid_search, GridSpec};
