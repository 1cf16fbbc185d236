//! Validation framework for continuous prediction systems.
//!
//! Accuracy statistics, a random-guessing baseline, significance tests,
//! Glass's Δ effect sizes and a decision procedure producing preference
//! orders over prediction systems.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accuracy;
pub mod baseline;
pub mod cli;
pub mod effect;
pub mod error;
pub mod harness;
pub mod inference;
pub mod ingest;
pub mod predictors;
pub mod preference;
pub mod report;
mod summary;

pub use accuracy::{
    absolute_residuals, mar, mdmre, mmre, pred, relative_errors, standardised_accuracy, AccuracyReport, PredictionRun,
    DEFAULT_PRED_LEVEL,
};
pub use baseline::{
    exact_expected_mar, histogram, histogram_csv, simulate, BaselineDistribution, ExactBaseline, HistogramBin,
    OutcomeSample,
};
pub use effect::{categorize, glass_delta, glass_delta_from_residuals, EffectCategory, EffectSize};
pub use error::{Error, Result};
pub use harness::{evaluate, run_validation, Evaluation, StatsConfig, ValidationScheme};
pub use inference::{mann_whitney_u, wilcoxon_paired, wilcoxon_signed_rank, Method, Tail, TestResult};
pub use ingest::{load_dataset, load_predictions, DatasetOptions};
pub use predictors::{fit, predict, Dataset, FittedPredictor, PredictorKind, PredictorSpec};
pub use preference::{
    build_order, compare_all, decide, emit_dot, evaluate_pair, hasse_edges, versus_guessing, DecisionConfig, Evidence,
    PairVerdict, PreferenceGraph, Relation,
};
pub use report::{render_report, BaselineSummary, Format, Report, RunTable};
