//! Domain types and the unified metric algebra shared by every estimator.
//!
//! All seven group-specific metrics are functions of five conditional means
//! `mu_a^Z = E(Z | A = a)` for `Z` in `{Y, D, S^2, SY, DY}`:
//!
//! | metric | formula |
//! |--------|---------|
//! | TPR    | `mu_dy / mu_y` |
//! | FPR    | `(mu_d - mu_dy) / (1 - mu_y)` |
//! | PPV    | `mu_dy / mu_d` |
//! | NPV    | `(1 - mu_d - mu_y + mu_dy) / (1 - mu_d)` |
//! | F1     | `2 mu_dy / (mu_d + mu_y)` |
//! | ACC    | `1 - mu_y - mu_d + 2 mu_dy` |
//! | BS     | `mu_s2 - 2 mu_sy + mu_y` |
//!
//! Estimators differ only in how they estimate the moments; the algebra here
//! is shared.

use crate::error::{Error, Result};
use crate::Z_975;
use serde::{Deserialize, Serialize};

/// The seven group-specific performance metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FairnessMetric {
    Tpr,
    Fpr,
    Ppv,
    Npv,
    F1,
    Acc,
    Bs,
}

impl FairnessMetric {
    pub const ALL: [FairnessMetric; 7] = [
        FairnessMetric::Tpr,
        FairnessMetric::Fpr,
        FairnessMetric::Ppv,
        FairnessMetric::Npv,
        FairnessMetric::F1,
        FairnessMetric::Acc,
        FairnessMetric::Bs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FairnessMetric::Tpr => "TPR",
            FairnessMetric::Fpr => "FPR",
            FairnessMetric::Ppv => "PPV",
            FairnessMetric::Npv => "NPV",
            FairnessMetric::F1 => "F1",
            FairnessMetric::Acc => "ACC",
            FairnessMetric::Bs => "BS",
        }
    }

    /// The fairness criterion satisfied when the metric's disparity is zero.
    pub fn criterion(self) -> &'static str {
        match self {
            FairnessMetric::Tpr => "equal opportunity",
            FairnessMetric::Fpr => "predictive equality",
            FairnessMetric::Ppv => "positive predictive parity",
            FairnessMetric::Npv => "negative predictive parity",
            FairnessMetric::F1 => "F1 score parity",
            FairnessMetric::Acc => "overall accuracy equality",
            FairnessMetric::Bs => "Brier score parity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "TPR" => Ok(FairnessMetric::Tpr),
            "FPR" => Ok(FairnessMetric::Fpr),
            "PPV" => Ok(FairnessMetric::Ppv),
            "NPV" => Ok(FairnessMetric::Npv),
            "F1" => Ok(FairnessMetric::F1),
            "ACC" => Ok(FairnessMetric::Acc),
            "BS" => Ok(FairnessMetric::Bs),
            other => Err(Error::InvalidInput(format!("unknown metric '{other}'"))),
        }
    }
}

impl std::fmt::Display for FairnessMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Classification `D = I(S >= c)`. The comparison is inclusive at the cutoff.
pub fn classify(s: f64, c: f64) -> Result<bool> {
    if !(0.0..=1.0).contains(&s) || s.is_nan() {
        return Err(Error::ScoreOutOfRange(s));
    }
    check_cutoff(c)?;
    Ok(s >= c)
}

pub(crate) fn check_cutoff(c: f64) -> Result<()> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::CutoffOutOfRange(c));
    }
    Ok(())
}

/// The five conditional means for one group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupMoments {
    pub group: u8,
    pub mu_y: f64,
    pub mu_d: f64,
    pub mu_s2: f64,
    pub mu_sy: f64,
    pub mu_dy: f64,
}

/// Evaluate one metric from a group's moments.
///
/// Errors with [`Error::DegenerateGroup`] when the metric's denominator is
/// exactly zero, naming the offending moment.
pub fn metric_from_moments(metric: FairnessMetric, m: &GroupMoments) -> Result<f64> {
    let degenerate = |moment: &'static str, value: f64| Error::DegenerateGroup {
        group: m.group,
        metric: metric.name(),
        moment,
        value,
    };
    match metric {
        FairnessMetric::Tpr => {
            if m.mu_y == 0.0 {
                return Err(degenerate("mu_y", m.mu_y));
            }
            Ok(m.mu_dy / m.mu_y)
        }
        FairnessMetric::Fpr => {
            if m.mu_y == 1.0 {
                return Err(degenerate("1 - mu_y", 0.0));
            }
            Ok((m.mu_d - m.mu_dy) / (1.0 - m.mu_y))
        }
        FairnessMetric::Ppv => {
            if m.mu_d == 0.0 {
                return Err(degenerate("mu_d", m.mu_d));
            }
            Ok(m.mu_dy / m.mu_d)
        }
        FairnessMetric::Npv => {
            if m.mu_d == 1.0 {
                return Err(degenerate("1 - mu_d", 0.0));
            }
            Ok((1.0 - m.mu_d - m.mu_y + m.mu_dy) / (1.0 - m.mu_d))
        }
        FairnessMetric::F1 => {
            if m.mu_d + m.mu_y == 0.0 {
                return Err(degenerate("mu_d + mu_y", 0.0));
            }
            Ok(2.0 * m.mu_dy / (m.mu_d + m.mu_y))
        }
        FairnessMetric::Acc => Ok(1.0 - m.mu_y - m.mu_d + 2.0 * m.mu_dy),
        FairnessMetric::Bs => Ok(m.mu_s2 - 2.0 * m.mu_sy + m.mu_y),
    }
}

/// Disparity `Delta_M = M_0 - M_1` between the two groups' metrics.
pub fn disparity(metric: FairnessMetric, m0: &GroupMoments, m1: &GroupMoments) -> Result<f64> {
    Ok(metric_from_moments(metric, m0)? - metric_from_moments(metric, m1)?)
}

/// A single validation observation. The outcome is `None` for unlabeled
/// records; the classification `D` is always derived from `(s, cutoff)` and
/// never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditRecord {
    pub y: Option<bool>,
    pub s: f64,
    pub a: u8,
    pub w: Vec<f64>,
}

impl AuditRecord {
    pub fn labeled(y: bool, s: f64, a: u8, w: Vec<f64>) -> Self {
        AuditRecord { y: Some(y), s, a, w }
    }

    pub fn unlabeled(s: f64, a: u8, w: Vec<f64>) -> Self {
        AuditRecord { y: None, s, a, w }
    }

    pub fn is_labeled(&self) -> bool {
        self.y.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovariateKind {
    Continuous,
    Categorical,
}

/// Covariate schema shared by every record of a dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CovariateSchema {
    pub kinds: Vec<CovariateKind>,
}

impl CovariateSchema {
    pub fn all_continuous(p: usize) -> Self {
        CovariateSchema {
            kinds: vec![CovariateKind::Continuous; p],
        }
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn continuous_indices(&self) -> Vec<usize> {
        self.indices_of(CovariateKind::Continuous)
    }

    pub fn categorical_indices(&self) -> Vec<usize> {
        self.indices_of(CovariateKind::Categorical)
    }

    fn indices_of(&self, kind: CovariateKind) -> Vec<usize> {
        self.kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == kind)
            .map(|(i, _)| i)
            .collect()
    }
}

/// The audit dataset: records, cutoff, and per-group labeled/unlabeled counts.
#[derive(Debug, Clone)]
pub struct AuditDataset {
    records: Vec<AuditRecord>,
    cutoff: f64,
    schema: CovariateSchema,
    n_labeled: [usize; 2],
    n_unlabeled: [usize; 2],
}

impl AuditDataset {
    /// Validates every record (score range, covariate arity) and requires at
    /// least one labeled record in each group.
    pub fn new(records: Vec<AuditRecord>, cutoff: f64, schema: CovariateSchema) -> Result<Self> {
        check_cutoff(cutoff)?;
        let mut n_labeled = [0usize; 2];
        let mut n_unlabeled = [0usize; 2];
        for r in &records {
            if !(0.0..=1.0).contains(&r.s) || r.s.is_nan() {
                return Err(Error::ScoreOutOfRange(r.s));
            }
            if r.a > 1 {
                return Err(Error::InvalidInput(format!(
                    "group label {} is not binary",
                    r.a
                )));
            }
            if r.w.len() != schema.len() {
                return Err(Error::SchemaMismatch {
                    expected: schema.len(),
                    got: r.w.len(),
                });
            }
            if r.is_labeled() {
                n_labeled[r.a as usize] += 1;
            } else {
                n_unlabeled[r.a as usize] += 1;
            }
        }
        for a in 0..2u8 {
            if n_labeled[a as usize] == 0 {
                return Err(Error::EmptyGroup {
                    group: a,
                    partition: "labeled",
                });
            }
        }
        Ok(AuditDataset {
            records,
            cutoff,
            schema,
            n_labeled,
            n_unlabeled,
        })
    }

    pub fn records(&self) -> &[AuditRecord] {
        &self.records
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn schema(&self) -> &CovariateSchema {
        &self.schema
    }

    /// Labeled count `n_a` for one group.
    pub fn n_labeled(&self, a: u8) -> usize {
        self.n_labeled[a as usize]
    }

    /// Unlabeled count `N_a` for one group.
    pub fn n_unlabeled(&self, a: u8) -> usize {
        self.n_unlabeled[a as usize]
    }

    pub fn total_labeled(&self) -> usize {
        self.n_labeled[0] + self.n_labeled[1]
    }

    pub fn total_unlabeled(&self) -> usize {
        self.n_unlabeled[0] + self.n_unlabeled[1]
    }

    /// Labeled group proportion `rho_a = n_a / n`.
    pub fn rho(&self, a: u8) -> f64 {
        self.n_labeled(a) as f64 / self.total_labeled() as f64
    }

    /// Classification of a record under this dataset's cutoff.
    pub fn d(&self, record: &AuditRecord) -> bool {
        record.s >= self.cutoff
    }

    pub fn labeled_in_group(&self, a: u8) -> impl Iterator<Item = &AuditRecord> {
        self.records
            .iter()
            .filter(move |r| r.a == a && r.is_labeled())
    }

    pub fn unlabeled_in_group(&self, a: u8) -> impl Iterator<Item = &AuditRecord> {
        self.records
            .iter()
            .filter(move |r| r.a == a && !r.is_labeled())
    }
}

/// Which quantity an estimate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scope {
    Group(u8),
    Disparity,
}

/// Which estimation route produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Supervised,
    Infairness,
    Ji,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Supervised => "supervised",
            Method::Infairness => "infairness",
            Method::Ji => "ji",
        }
    }
}

/// A point estimate with (when available) its influence-function standard
/// error and 95% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    pub metric: FairnessMetric,
    pub scope: Scope,
    pub method: Method,
    pub point: f64,
    pub se: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

impl MetricEstimate {
    pub fn with_se(
        metric: FairnessMetric,
        scope: Scope,
        method: Method,
        point: f64,
        se: f64,
    ) -> Self {
        MetricEstimate {
            metric,
            scope,
            method,
            point,
            se: Some(se),
            ci_low: Some(point - Z_975 * se),
            ci_high: Some(point + Z_975 * se),
        }
    }

    pub fn point_only(metric: FairnessMetric, scope: Scope, method: Method, point: f64) -> Self {
        MetricEstimate {
            metric,
            scope,
            method,
            point,
            se: None,
            ci_low: None,
            ci_high: None,
        }
    }

    /// Two-sided z-test p-value for the null that the estimand is zero.
    pub fn p_value(&self) -> Option<f64> {
        use statrs::distribution::{ContinuousCDF, Normal};
        let se = self.se?;
        if se <= 0.0 {
            return None;
        }
        let z = (self.point / se).abs();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        Some(2.0 * (1.0 - normal.cdf(z)))
    }
}

/// Group-0, group-1 and disparity estimates for one metric under one method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateTriple {
    pub group0: MetricEstimate,
    pub group1: MetricEstimate,
    pub delta: MetricEstimate,
}
