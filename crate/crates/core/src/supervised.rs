//! Labeled-data-only estimation with influence-function standard errors.
//!
//! Group moments are sample means over the labeled group records; metrics
//! and disparities come from the shared moment algebra. Standard errors use
//! the per-record influence functions of the plug-in estimators, with every
//! nuisance quantity evaluated at its estimated value:
//!
//! | metric | IF_sup |
//! |--------|--------|
//! | TPR    | `(mu_y)^-1 Y (D - TPR)` |
//! | FPR    | `(1-mu_y)^-1 (1-Y)(D - FPR)` |
//! | PPV    | `(mu_d)^-1 D (Y - PPV)` |
//! | NPV    | `(1-mu_d)^-1 (1-D)(1 - Y - NPV)` |
//! | F1     | `(mu_d+mu_y)^-1 {D(Y - F1) + Y(D - F1)}` |
//! | ACC    | `1 - (Y-D)^2 - ACC` |
//! | BS     | `(S-Y)^2 - BS` |

use crate::error::{Error, Result};
use crate::metrics::{
    metric_from_moments, AuditDataset, EstimateTriple, FairnessMetric, GroupMoments, Method,
    MetricEstimate, Scope,
};

/// Per-record influence-function contributions within one group.
#[derive(Debug, Clone)]
pub struct InfluenceVector {
    pub metric: FairnessMetric,
    pub group: u8,
    pub values: Vec<f64>,
}

impl InfluenceVector {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn mean_square(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64
    }
}

/// Labeled-group sample means of `Y, D, S^2, SY, DY`.
pub fn group_moments_supervised(data: &AuditDataset, a: u8) -> Result<GroupMoments> {
    let mut n = 0usize;
    let (mut sy, mut sd, mut ss2, mut ssy, mut sdy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in data.labeled_in_group(a) {
        let y = f64::from(r.y == Some(true));
        let d = f64::from(data.d(r));
        n += 1;
        sy += y;
        sd += d;
        ss2 += r.s * r.s;
        ssy += r.s * y;
        sdy += d * y;
    }
    if n == 0 {
        return Err(Error::EmptyGroup {
            group: a,
            partition: "labeled",
        });
    }
    let n = n as f64;
    Ok(GroupMoments {
        group: a,
        mu_y: sy / n,
        mu_d: sd / n,
        mu_s2: ss2 / n,
        mu_sy: ssy / n,
        mu_dy: sdy / n,
    })
}

/// Per-record supervised influence function for one group, evaluated with
/// plugged-in moments and point estimate.
pub fn influence_supervised(
    data: &AuditDataset,
    metric: FairnessMetric,
    a: u8,
    moments: &GroupMoments,
    point: f64,
) -> InfluenceVector {
    let values = data
        .labeled_in_group(a)
        .map(|r| {
            let y = f64::from(r.y == Some(true));
            let d = f64::from(data.d(r));
            match metric {
                FairnessMetric::Tpr => y * (d - point) / moments.mu_y,
                FairnessMetric::Fpr => (1.0 - y) * (d - point) / (1.0 - moments.mu_y),
                FairnessMetric::Ppv => d * (y - point) / moments.mu_d,
                FairnessMetric::Npv => (1.0 - d) * (1.0 - y - point) / (1.0 - moments.mu_d),
                FairnessMetric::F1 => {
                    (d * (y - point) + y * (d - point)) / (moments.mu_d + moments.mu_y)
                }
                FairnessMetric::Acc => 1.0 - (y - d) * (y - d) - point,
                FairnessMetric::Bs => (r.s - y) * (r.s - y) - point,
            }
        })
        .collect();
    InfluenceVector {
        metric,
        group: a,
        values,
    }
}

/// Standard error of the disparity from the two groups' influence vectors:
/// `sqrt( sum_a n_a^-1 * mean(IF_a^2) )`, the finite-sample plug-in of the
/// asymptotic variance `sum_a rho_a^-1 E[IF^2 | A=a] / n`.
pub fn variance_from_influence(if0: &InfluenceVector, if1: &InfluenceVector) -> Result<f64> {
    for iv in [if0, if1] {
        if iv.values.len() < 2 {
            return Err(Error::InsufficientData {
                group: iv.group,
                context: "influence-function variance",
                needed: 2,
                got: iv.values.len(),
            });
        }
    }
    let var: f64 = [if0, if1]
        .iter()
        .map(|iv| iv.mean_square() / iv.values.len() as f64)
        .sum();
    Ok(var.sqrt())
}

fn group_se(iv: &InfluenceVector) -> Result<f64> {
    if iv.values.len() < 2 {
        return Err(Error::InsufficientData {
            group: iv.group,
            context: "influence-function variance",
            needed: 2,
            got: iv.values.len(),
        });
    }
    Ok((iv.mean_square() / iv.values.len() as f64).sqrt())
}

/// Supervised estimates (point, SE, CI) for both groups and the disparity.
pub fn estimate_supervised(data: &AuditDataset, metric: FairnessMetric) -> Result<EstimateTriple> {
    let m0 = group_moments_supervised(data, 0)?;
    let m1 = group_moments_supervised(data, 1)?;
    let p0 = metric_from_moments(metric, &m0)?;
    let p1 = metric_from_moments(metric, &m1)?;
    let if0 = influence_supervised(data, metric, 0, &m0, p0);
    let if1 = influence_supervised(data, metric, 1, &m1, p1);
    let se_delta = variance_from_influence(&if0, &if1)?;
    Ok(EstimateTriple {
        group0: MetricEstimate::with_se(
            metric,
            Scope::Group(0),
            Method::Supervised,
            p0,
            group_se(&if0)?,
        ),
        group1: MetricEstimate::with_se(
            metric,
            Scope::Group(1),
            Method::Supervised,
            p1,
            group_se(&if1)?,
        ),
        delta: MetricEstimate::with_se(
            metric,
            Scope::Disparity,
            Method::Supervised,
            p0 - p1,
            se_delta,
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{AuditRecord, CovariateSchema};

    fn four_row_group() -> AuditDataset {
        // (y, s): d = I(s >= 0.5)
        let rows = [(true, 0.9), (true, 0.4), (false, 0.8), (false, 0.1)];
        let mut records: Vec<AuditRecord> = rows
            .iter()
            .map(|&(y, s)| AuditRecord::labeled(y, s, 0, vec![]))
            .collect();
        // mirror the same rows in group 1 so the dataset is valid
        records.extend(
            rows.iter()
                .map(|&(y, s)| AuditRecord::labeled(y, s, 1, vec![])),
        );
        AuditDataset::new(records, 0.5, CovariateSchema::default()).unwrap()
    }

    #[test]
    fn hand_computed_moments() {
        let data = four_row_group();
        let m = group_moments_supervised(&data, 0).unwrap();
        assert!((m.mu_y - 0.5).abs() < 1e-15);
        assert!((m.mu_d - 0.5).abs() < 1e-15);
        assert!((m.mu_dy - 0.25).abs() < 1e-15);
        assert!((m.mu_sy - 0.325).abs() < 1e-15);
        assert!((m.mu_s2 - 0.405).abs() < 1e-15);
    }

    #[test]
    fn all_negative_outcomes_zero_the_y_moments() {
        let records = vec![
            AuditRecord::labeled(false, 0.9, 0, vec![]),
            AuditRecord::labeled(false, 0.2, 0, vec![]),
            AuditRecord::labeled(true, 0.5, 1, vec![]),
        ];
        let data = AuditDataset::new(records, 0.5, CovariateSchema::default()).unwrap();
        let m = group_moments_supervised(&data, 0).unwrap();
        assert_eq!(m.mu_y, 0.0);
        assert_eq!(m.mu_dy, 0.0);
        assert_eq!(m.mu_sy, 0.0);
    }

    #[test]
    fn single_record_moments_are_the_record() {
        let records = vec![
            AuditRecord::labeled(true, 0.6, 0, vec![]),
            AuditRecord::labeled(true, 0.6, 1, vec![]),
        ];
        let data = AuditDataset::new(records, 0.5, CovariateSchema::default()).unwrap();
        let m = group_moments_supervised(&data, 0).unwrap();
        assert_eq!(m.mu_y, 1.0);
        assert_eq!(m.mu_d, 1.0);
        assert_eq!(m.mu_dy, 1.0);
        assert!((m.mu_sy - 0.6).abs() < 1e-15);
        assert!((m.mu_s2 - 0.36).abs() < 1e-15);
    }

    #[test]
    fn identical_groups_have_zero_disparity() {
        let data = four_row_group();
        for metric in FairnessMetric::ALL {
            let est = estimate_supervised(&data, metric).unwrap();
            assert_eq!(est.delta.point, 0.0, "{metric}");
        }
    }

    #[test]
    fn tpr_estimate_is_ratio_of_moments() {
        let data = four_row_group();
        let est = estimate_supervised(&data, FairnessMetric::Tpr).unwrap();
        assert!((est.group0.point - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tpr_influence_plugin_value() {
        let data = four_row_group();
        let m = group_moments_supervised(&data, 0).unwrap();
        let iv = influence_supervised(&data, FairnessMetric::Tpr, 0, &m, 0.5);
        // record (y=1, d=1): IF = (1/0.5) * 1 * (1 - 0.5) = 1.0
        assert!((iv.values[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn acc_and_bs_influences_are_exactly_centered() {
        let data = four_row_group();
        for metric in [FairnessMetric::Acc, FairnessMetric::Bs] {
            let m = group_moments_supervised(&data, 0).unwrap();
            let point = metric_from_moments(metric, &m).unwrap();
            let iv = influence_supervised(&data, metric, 0, &m, point);
            assert!(iv.mean().abs() < 1e-14, "{metric}: {}", iv.mean());
        }
    }

    #[test]
    fn perfect_classifier_record_contributes_nothing_to_acc() {
        let records = vec![
            AuditRecord::labeled(true, 0.9, 0, vec![]),
            AuditRecord::labeled(false, 0.1, 0, vec![]),
            AuditRecord::labeled(true, 0.8, 1, vec![]),
            AuditRecord::labeled(false, 0.2, 1, vec![]),
        ];
        let data = AuditDataset::new(records, 0.5, CovariateSchema::default()).unwrap();
        let m = group_moments_supervised(&data, 0).unwrap();
        let point = metric_from_moments(FairnessMetric::Acc, &m).unwrap();
        assert_eq!(point, 1.0);
        let iv = influence_supervised(&data, FairnessMetric::Acc, 0, &m, point);
        assert!(iv.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn variance_from_influence_hand_value() {
        let if0 = InfluenceVector {
            metric: FairnessMetric::Acc,
            group: 0,
            values: vec![1.0, -1.0],
        };
        let if1 = InfluenceVector {
            metric: FairnessMetric::Acc,
            group: 1,
            values: vec![1.0, -1.0],
        };
        let se = variance_from_influence(&if0, &if1).unwrap();
        assert!((se - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_influences_give_zero_se() {
        let iv = |group| InfluenceVector {
            metric: FairnessMetric::Bs,
            group,
            values: vec![0.0, 0.0, 0.0],
        };
        assert_eq!(variance_from_influence(&iv(0), &iv(1)).unwrap(), 0.0);
    }

    #[test]
    fn single_record_group_cannot_estimate_se() {
        let iv0 = InfluenceVector {
            metric: FairnessMetric::Tpr,
            group: 0,
            values: vec![0.3],
        };
        let iv1 = InfluenceVector {
            metric: FairnessMetric::Tpr,
            group: 1,
            values: vec![0.1, 0.2],
        };
        assert!(matches!(
            variance_from_influence(&iv0, &iv1),
            Err(Error::InsufficientData { group: 0, .. })
        ));
    }

    #[test]
    fn brier_machinery_is_label_flip_invariant() {
        // Replacing S by 1-S and Y by 1-Y leaves (S-Y)^2 unchanged.
        let rows = [(true, 0.9), (true, 0.4), (false, 0.8), (false, 0.1)];
        let make = |flip: bool| {
            let mut records: Vec<AuditRecord> = Vec::new();
            for a in 0..2u8 {
                records.extend(rows.iter().map(|&(y, s)| {
                    if flip {
                        AuditRecord::labeled(!y, 1.0 - s, a, vec![])
                    } else {
                        AuditRecord::labeled(y, s, a, vec![])
                    }
                }));
            }
            AuditDataset::new(records, 0.5, CovariateSchema::default()).unwrap()
        };
        let direct = estimate_supervised(&make(false), FairnessMetric::Bs).unwrap();
        let flipped = estimate_supervised(&make(true), FairnessMetric::Bs).unwrap();
        assert!((direct.group0.point - flipped.group0.point).abs() < 1e-15);
        let (a, b) = (direct.group0.se.unwrap(), flipped.group0.se.unwrap());
        assert!((a - b).abs() < 1e-15);
    }
}
