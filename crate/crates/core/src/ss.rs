//! The semi-supervised estimator: unlabeled-data moments with per-group
//! imputed outcomes, and influence-function inference.
//!
//! Moments not involving `Y` (`mu_d`, `mu_s2`) are plain empirical means
//! over the unlabeled group records. Moments involving `Y` replace it with
//! the working-model imputation `m = expit(theta' B)`:
//! `mu_y = mean(m)`, `mu_sy = mean(S m)`, `mu_dy = mean(D m)`.
//!
//! Standard errors evaluate the per-record influence functions on the
//! labeled group records, where the residual `r = Y - m` appears in place of
//! the raw outcome terms of the supervised expansion:
//!
//! | metric | IF_ss |
//! |--------|-------|
//! | TPR    | `(mu_y)^-1 r (D - TPR)` |
//! | FPR    | `(1-mu_y)^-1 r (FPR - D)` |
//! | PPV    | `(mu_d)^-1 D r` |
//! | NPV    | `(1-mu_d)^-1 (D - 1) r` |
//! | F1     | `(mu_d+mu_y)^-1 r (2D - F1)` |
//! | ACC    | `r (2D - 1)` |
//! | BS     | `r (1 - 2S)` |

use crate::error::{Error, Result};
use crate::imputation::{fit_imputation_model, ImputationConfig, ImputationModel};
use crate::metrics::{
    metric_from_moments, AuditDataset, EstimateTriple, FairnessMetric, GroupMoments, Method,
    MetricEstimate, Scope,
};
use crate::supervised::{estimate_supervised, variance_from_influence, InfluenceVector};
use serde::{Deserialize, Serialize};

/// How each semi-supervised moment was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MomentSource {
    EmpiricalOverUnlabeled,
    ImputedOverUnlabeled,
}

/// Per-moment provenance of an [`SsMoments`] value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MomentProvenance {
    pub mu_y: MomentSource,
    pub mu_d: MomentSource,
    pub mu_s2: MomentSource,
    pub mu_sy: MomentSource,
    pub mu_dy: MomentSource,
}

/// Semi-supervised group moments with their provenance.
#[derive(Debug, Clone)]
pub struct SsMoments {
    pub moments: GroupMoments,
    pub provenance: MomentProvenance,
}

/// Semi-supervised moments for group `a` from a fitted working model.
pub fn ss_moments(data: &AuditDataset, model: &ImputationModel, a: u8) -> Result<SsMoments> {
    let mut n = 0usize;
    let (mut sy, mut sd, mut ss2, mut ssy, mut sdy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in data.unlabeled_in_group(a) {
        let m = model.impute(r, data.cutoff())?;
        let d = f64::from(data.d(r));
        n += 1;
        sy += m;
        sd += d;
        ss2 += r.s * r.s;
        ssy += r.s * m;
        sdy += d * m;
    }
    if n == 0 {
        return Err(Error::EmptyGroup {
            group: a,
            partition: "unlabeled",
        });
    }
    let nf = n as f64;
    Ok(SsMoments {
        moments: GroupMoments {
            group: a,
            mu_y: sy / nf,
            mu_d: sd / nf,
            mu_s2: ss2 / nf,
            mu_sy: ssy / nf,
            mu_dy: sdy / nf,
        },
        provenance: MomentProvenance {
            mu_y: MomentSource::ImputedOverUnlabeled,
            mu_d: MomentSource::EmpiricalOverUnlabeled,
            mu_s2: MomentSource::EmpiricalOverUnlabeled,
            mu_sy: MomentSource::ImputedOverUnlabeled,
            mu_dy: MomentSource::ImputedOverUnlabeled,
        },
    })
}

/// Per-record semi-supervised influence function for group `a`, evaluated on
/// the labeled group records with the fitted model plugged in.
pub fn influence_ss(
    data: &AuditDataset,
    metric: FairnessMetric,
    a: u8,
    model: &ImputationModel,
    moments: &SsMoments,
    point: f64,
) -> Result<InfluenceVector> {
    let m = &moments.moments;
    let mut values = Vec::with_capacity(data.n_labeled(a));
    for r in data.labeled_in_group(a) {
        let y = f64::from(r.y == Some(true));
        let d = f64::from(data.d(r));
        let resid = y - model.impute(r, data.cutoff())?;
        let v = match metric {
            FairnessMetric::Tpr => resid * (d - point) / m.mu_y,
            FairnessMetric::Fpr => resid * (point - d) / (1.0 - m.mu_y),
            FairnessMetric::Ppv => d * resid / m.mu_d,
            FairnessMetric::Npv => (d - 1.0) * resid / (1.0 - m.mu_d),
            FairnessMetric::F1 => resid * (2.0 * d - point) / (m.mu_d + m.mu_y),
            FairnessMetric::Acc => resid * (2.0 * d - 1.0),
            FairnessMetric::Bs => resid * (1.0 - 2.0 * r.s),
        };
        values.push(v);
    }
    Ok(InfluenceVector {
        metric,
        group: a,
        values,
    })
}

/// A pair of fitted per-group working models plus selection diagnostics.
#[derive(Debug, Clone)]
pub struct InfairnessFit {
    pub models: [ImputationModel; 2],
}

impl InfairnessFit {
    /// Fit both groups' working models (separate order, penalty and
    /// coefficients per group).
    pub fn fit(data: &AuditDataset, config: &ImputationConfig, seed: u64) -> Result<Self> {
        for a in 0..2u8 {
            if data.n_unlabeled(a) == 0 {
                return Err(Error::EmptyGroup {
                    group: a,
                    partition: "unlabeled",
                });
            }
        }
        let m0 = fit_imputation_model(data, 0, config, seed)?;
        let m1 = fit_imputation_model(data, 1, config, seed)?;
        Ok(InfairnessFit { models: [m0, m1] })
    }

    /// Estimates for one metric from the fitted models.
    pub fn estimate(&self, data: &AuditDataset, metric: FairnessMetric) -> Result<EstimateTriple> {
        let mut points = [0.0f64; 2];
        let mut group_estimates = Vec::with_capacity(2);
        let mut influences = Vec::with_capacity(2);
        for a in 0..2u8 {
            let model = &self.models[a as usize];
            let sm = ss_moments(data, model, a)?;
            let point = metric_from_moments(metric, &sm.moments)?;
            let iv = influence_ss(data, metric, a, model, &sm, point)?;
            let n_a = iv.values.len();
            if n_a < 2 {
                return Err(Error::InsufficientData {
                    group: a,
                    context: "influence-function variance",
                    needed: 2,
                    got: n_a,
                });
            }
            let se = (iv.mean_square() / n_a as f64).sqrt();
            points[a as usize] = point;
            group_estimates.push(MetricEstimate::with_se(
                metric,
                Scope::Group(a),
                Method::Infairness,
                point,
                se,
            ));
            influences.push(iv);
        }
        let se_delta = variance_from_influence(&influences[0], &influences[1])?;
        Ok(EstimateTriple {
            group0: group_estimates[0],
            group1: group_estimates[1],
            delta: MetricEstimate::with_se(
                metric,
                Scope::Disparity,
                Method::Infairness,
                points[0] - points[1],
                se_delta,
            ),
        })
    }
}

/// Convenience wrapper: fit per-group models and estimate one metric.
pub fn estimate_infairness(
    data: &AuditDataset,
    metric: FairnessMetric,
    config: &ImputationConfig,
    seed: u64,
) -> Result<EstimateTriple> {
    InfairnessFit::fit(data, config, seed)?.estimate(data, metric)
}

/// Supervised and semi-supervised standard errors side by side, with the
/// estimated-variance relative efficiency `(se_sup / se_ss)^2`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EfficiencyComparison {
    pub metric: FairnessMetric,
    pub se_supervised: f64,
    pub se_ss: f64,
    pub relative_efficiency: f64,
}

/// Estimated-variance relative efficiency from the two disparity SEs.
pub fn relative_efficiency(se_supervised: f64, se_ss: f64) -> f64 {
    (se_supervised / se_ss).powi(2)
}

/// Run both estimators on the same dataset and compare their disparity SEs.
pub fn efficiency_comparison(
    data: &AuditDataset,
    metric: FairnessMetric,
    config: &ImputationConfig,
    seed: u64,
) -> Result<EfficiencyComparison> {
    let sup = estimate_supervised(data, metric)?;
    let ss = estimate_infairness(data, metric, config, seed)?;
    let se_sup = sup.delta.se.expect("supervised se always present");
    let se_ss = ss.delta.se.expect("ss se always present");
    Ok(EfficiencyComparison {
        metric,
        se_supervised: se_sup,
        se_ss,
        relative_efficiency: relative_efficiency(se_sup, se_ss),
    })
}
