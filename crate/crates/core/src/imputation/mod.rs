//! Per-group working-model fitting for outcome imputation: polynomial basis
//! construction, ridge-penalized estimating-equation solving, cross-validated
//! penalty selection and GBIC order selection.

pub mod basis;
pub mod select;
pub mod solver;

pub use basis::{build_basis, BasisSpec, Standardization};
pub use select::{select_lambda_cv, select_order_gbic, GbicOptions};
pub use solver::{fit_theta, Fit};

use crate::error::{Error, Result};
use crate::metrics::{AuditDataset, AuditRecord};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// How the polynomial order is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OrderSelection {
    /// Cross-validated GBIC over orders 1..=10.
    Auto,
    Fixed(usize),
}

/// How the ridge penalty is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PenaltySelection {
    /// 10-fold cross-validation over the adaptive grid.
    CrossValidated,
    Fixed(f64),
}

/// Configuration of the per-group working-model fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationConfig {
    pub order: OrderSelection,
    pub penalty: PenaltySelection,
    pub folds: usize,
    /// Whether auxiliary covariates enter the basis at all (the score always
    /// does). Off gives the score-only variant.
    pub use_covariates: bool,
    /// Use the unscaled GBIC fit term variant.
    pub gbic_unscaled_fit_term: bool,
}

impl Default for ImputationConfig {
    fn default() -> Self {
        ImputationConfig {
            order: OrderSelection::Auto,
            penalty: PenaltySelection::CrossValidated,
            folds: 10,
            use_covariates: true,
            gbic_unscaled_fit_term: false,
        }
    }
}

impl ImputationConfig {
    pub fn score_only() -> Self {
        ImputationConfig {
            use_covariates: false,
            ..ImputationConfig::default()
        }
    }
}

/// A fitted per-group working model `E(Y | S, W, A=a) = expit(theta' B)`.
#[derive(Debug, Clone)]
pub struct ImputationModel {
    pub group: u8,
    pub basis: BasisSpec,
    pub theta: DVector<f64>,
    pub lambda: f64,
    /// Newton iterations of the final fit.
    pub iterations: usize,
    /// Final max-norm of the penalized score.
    pub residual_norm: f64,
}

impl ImputationModel {
    /// Imputed outcome probability for one record.
    pub fn impute(&self, record: &AuditRecord, cutoff: f64) -> Result<f64> {
        let row = self.basis.build(record, cutoff)?;
        let eta: f64 = row.iter().zip(self.theta.iter()).map(|(b, t)| b * t).sum();
        Ok(solver::expit(eta))
    }
}

/// Fit the working model on the labeled records of group `a`.
///
/// The order is selected first (when `Auto`) under a small pilot penalty,
/// then the penalty for the selected order, then the final solve; the basis
/// standardization is learned once from the group's labeled records.
pub fn fit_imputation_model(
    data: &AuditDataset,
    a: u8,
    config: &ImputationConfig,
    seed: u64,
) -> Result<ImputationModel> {
    let records: Vec<&AuditRecord> = data.labeled_in_group(a).collect();
    if records.is_empty() {
        return Err(Error::EmptyGroup {
            group: a,
            partition: "labeled",
        });
    }
    let outcomes: Vec<f64> = records
        .iter()
        .map(|r| if r.y == Some(true) { 1.0 } else { 0.0 })
        .collect();
    let (continuous, categorical) = if config.use_covariates {
        (
            data.schema().continuous_indices(),
            data.schema().categorical_indices(),
        )
    } else {
        (Vec::new(), Vec::new())
    };

    let order = match config.order {
        OrderSelection::Fixed(k) => k,
        OrderSelection::Auto => {
            let template = BasisSpec::new(1, continuous.clone(), categorical.clone())?;
            let options = GbicOptions {
                folds: config.folds,
                unscaled_fit_term: config.gbic_unscaled_fit_term,
                ..GbicOptions::default()
            };
            select_order_gbic(
                &records,
                &outcomes,
                &template,
                data.cutoff(),
                seed ^ u64::from(a),
                &options,
            )
            .map_err(|e| tag_group(e, a))?
        }
    };

    let spec = BasisSpec::new(order, continuous, categorical)?
        .learn_standardization(records.iter().copied(), data.cutoff())?;
    let matrix = spec.matrix(records.iter().copied(), data.cutoff())?;

    let lambda = match config.penalty {
        PenaltySelection::Fixed(l) => {
            if l < 0.0 {
                return Err(Error::InvalidInput(format!("negative penalty {l}")));
            }
            l
        }
        PenaltySelection::CrossValidated => {
            select_lambda_cv(&matrix, &outcomes, config.folds, seed ^ u64::from(a))
                .map_err(|e| tag_group(e, a))?
        }
    };

    let fit = fit_theta(&matrix, &outcomes, lambda)?;
    Ok(ImputationModel {
        group: a,
        basis: spec,
        theta: fit.theta,
        lambda,
        iterations: fit.iterations,
        residual_norm: fit.residual_norm,
    })
}

fn tag_group(e: Error, a: u8) -> Error {
    match e {
        Error::InsufficientData {
            context,
            needed,
            got,
            ..
        } => Error::InsufficientData {
            group: a,
            context,
            needed,
            got,
        },
        other => other,
    }
}
