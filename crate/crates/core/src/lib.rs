//! Group-fairness auditing for binary classifiers when gold-standard labels
//! are scarce but unlabeled records are plentiful.
//!
//! The crate estimates group-specific performance metrics (TPR, FPR, PPV,
//! NPV, F1, accuracy, Brier score) and their between-group disparities from a
//! validation set in which only a subset of records carries the outcome
//! label. Three estimation routes are provided:
//!
//! * [`supervised`] — labeled-data-only moment estimators with
//!   influence-function standard errors;
//! * [`ss`] — the semi-supervised estimator, which imputes missing outcomes
//!   with a per-group penalized logistic working model over a polynomial
//!   basis of the score and auxiliary covariates ([`imputation`]), then
//!   averages the imputations over the unlabeled records;
//! * [`ji`] — a Beta-calibration baseline that recalibrates the score per
//!   group and uses it directly as the imputed outcome (point estimates
//!   only).
//!
//! [`sim`] contains a Monte Carlo harness that measures bias, relative
//! efficiency and confidence-interval coverage of all three routes on two
//! synthetic data-generating scenarios.

pub mod error;
pub mod imputation;
pub mod ji;
pub mod metrics;
pub mod rng;
pub mod sim;
pub mod ss;
pub mod supervised;

pub use error::{Error, Result};
pub use metrics::{
    classify, disparity, metric_from_moments, AuditDataset, AuditRecord, CovariateKind,
    CovariateSchema, EstimateTriple, FairnessMetric, GroupMoments, Method, MetricEstimate, Scope,
};

/// 97.5% standard-normal quantile used for all 95% confidence intervals.
pub const Z_975: f64 = 1.96;
