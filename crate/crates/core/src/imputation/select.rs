//! Data-driven selection of the ridge penalty and the polynomial order.
//!
//! The penalty is chosen by 10-fold cross-validation over a 20-point grid
//! `lambda_scale * n_a^-eta`, `eta` evenly spaced on [1.05, 2.5], where
//! `lambda_scale = max_j |n_a^-1 sum_i B_ij (y_i - ybar)|` over the
//! standardized non-intercept columns. Every candidate is therefore
//! o(n_a^-1/2), the rate the estimating-equation theory requires. Held-out
//! binomial deviance decides; ties break toward the larger penalty.
//!
//! The polynomial order is chosen by cross-validated GBIC: per fold, an
//! order-1 working model is fit on the training folds, its per-column score
//! components are projected onto the order-alpha basis (coefficients learned
//! on the training folds), and the five GBIC terms are evaluated from the
//! held-out residuals. The `n_a` appearing in the criterion is the group's
//! full labeled count (sums range over the held-out fold), which keeps the
//! classic `n log sigma^2` versus `log(n) * dim` balance intact under
//! cross-validation. Orders that cannot support the residual-variance
//! divisor or the held-out Gram matrices, or whose criterion is non-finite,
//! are skipped.

use crate::error::{Error, Result};
use crate::imputation::basis::BasisSpec;
use crate::imputation::solver::{expit, fit_theta};
use crate::metrics::AuditRecord;
use crate::rng;
use nalgebra::{Cholesky, DMatrix};
use rand::seq::SliceRandom;
use rand::Rng;

pub const LAMBDA_GRID_LEN: usize = 20;
pub const ETA_MIN: f64 = 1.05;
pub const ETA_MAX: f64 = 2.5;
/// Small fixed penalty used while selecting the order, before the penalty
/// itself is selected.
pub const PILOT_LAMBDA: f64 = 1e-4;
pub const MAX_ORDER: usize = 10;

/// Shuffle indices into `k` near-equal folds.
pub fn assign_folds(n: usize, k: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut at = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[at..at + len].to_vec());
        at += len;
    }
    folds
}

/// Data-adaptive penalty scale: the largest absolute column score of the
/// centered outcome over the non-intercept columns.
pub fn lambda_scale(basis: &DMatrix<f64>, y: &[f64]) -> f64 {
    let n = basis.nrows() as f64;
    let ybar = y.iter().sum::<f64>() / n;
    let mut max = 0.0f64;
    for j in 1..basis.ncols() {
        let s: f64 = (0..basis.nrows())
            .map(|i| basis[(i, j)] * (y[i] - ybar))
            .sum::<f64>()
            / n;
        max = max.max(s.abs());
    }
    max
}

/// Candidate penalties, largest first.
pub fn lambda_grid(scale: f64, n_a: usize) -> Vec<f64> {
    let n = n_a as f64;
    (0..LAMBDA_GRID_LEN)
        .map(|i| {
            let eta =
                ETA_MIN + (ETA_MAX - ETA_MIN) * i as f64 / (LAMBDA_GRID_LEN - 1) as f64;
            scale * n.powf(-eta)
        })
        .collect()
}

/// Mean binomial deviance of predictions `p` against outcomes `y`.
fn mean_deviance(y: &[f64], p: &[f64]) -> f64 {
    let mut total = 0.0;
    for (yi, pi) in y.iter().zip(p) {
        let pi = pi.clamp(1e-12, 1.0 - 1e-12);
        total += -2.0 * (yi * pi.ln() + (1.0 - yi) * (1.0 - pi).ln());
    }
    total / y.len() as f64
}

fn submatrix(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), m.ncols());
    for (i, &r) in rows.iter().enumerate() {
        out.set_row(i, &m.row(r));
    }
    out
}

fn subvec(v: &[f64], rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&r| v[r]).collect()
}

/// Select the ridge penalty by k-fold cross-validated held-out deviance.
///
/// `basis` holds one standardized row per labeled group record. Requires
/// `n_a >= 2k`. Candidates that fail to converge on any training split are
/// dropped; an error is returned only if every candidate fails.
pub fn select_lambda_cv(basis: &DMatrix<f64>, y: &[f64], k: usize, seed: u64) -> Result<f64> {
    let n = basis.nrows();
    if n < 2 * k {
        return Err(Error::InsufficientData {
            group: u8::MAX,
            context: "penalty cross-validation",
            needed: 2 * k,
            got: n,
        });
    }
    let grid = lambda_grid(lambda_scale(basis, y), n);
    let mut rng = rng::rng_for(seed, rng::streams::LAMBDA_CV);
    let folds = assign_folds(n, k, &mut rng);

    let mut sum_dev = vec![0.0f64; grid.len()];
    let mut failed = vec![false; grid.len()];
    for f in 0..k {
        let held = &folds[f];
        let train: Vec<usize> = (0..k)
            .filter(|j| *j != f)
            .flat_map(|j| folds[j].iter().copied())
            .collect();
        let b_train = submatrix(basis, &train);
        let y_train = subvec(y, &train);
        let b_held = submatrix(basis, held);
        let y_held = subvec(y, held);
        for (ci, &lam) in grid.iter().enumerate() {
            if failed[ci] {
                continue;
            }
            match fit_theta(&b_train, &y_train, lam) {
                Ok(fit) => {
                    let eta = &b_held * &fit.theta;
                    let preds: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
                    sum_dev[ci] += mean_deviance(&y_held, &preds) / k as f64;
                }
                Err(_) => failed[ci] = true,
            }
        }
    }
    // Grid is descending, so scanning with strict improvement breaks ties
    // toward the larger penalty.
    let mut best: Option<(usize, f64)> = None;
    for ci in 0..grid.len() {
        if failed[ci] {
            continue;
        }
        match best {
            Some((_, d)) if sum_dev[ci] >= d => {}
            _ => best = Some((ci, sum_dev[ci])),
        }
    }
    best.map(|(ci, _)| grid[ci]).ok_or_else(|| {
        Error::CrossValidation("no penalty candidate converged on all folds".into())
    })
}

/// Cholesky solve against `m`, ridge-regularizing once if the factorization
/// fails on a rank-deficient Gram matrix.
fn chol_or_ridge(m: DMatrix<f64>, what: &str) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    let p = m.ncols();
    match Cholesky::new(m.clone()) {
        Some(c) => Some(c),
        None => {
            log::warn!("{what}: rank-deficient Gram matrix; adding 1e-8 ridge");
            let mut r = m;
            for d in 0..p {
                r[(d, d)] += 1e-8;
            }
            Cholesky::new(r)
        }
    }
}

fn log_det(chol: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let l = chol.l_dirty();
    (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0
}

/// Options for GBIC order selection.
#[derive(Debug, Clone)]
pub struct GbicOptions {
    pub folds: usize,
    pub pilot_lambda: f64,
    pub max_order: usize,
    /// Use the raw `sum eps^2 / sigma^2` fit term instead of the
    /// `n_a^-1`-scaled variant.
    pub unscaled_fit_term: bool,
}

impl Default for GbicOptions {
    fn default() -> Self {
        GbicOptions {
            folds: 10,
            pilot_lambda: PILOT_LAMBDA,
            max_order: MAX_ORDER,
            unscaled_fit_term: false,
        }
    }
}

/// Select the polynomial order for one group's working model by
/// cross-validated GBIC.
///
/// `records` are the labeled records of one group; `template` fixes the
/// covariate roles (its order is ignored). Returns the order minimizing the
/// fold-averaged criterion.
pub fn select_order_gbic(
    records: &[&AuditRecord],
    outcomes: &[f64],
    template: &BasisSpec,
    cutoff: f64,
    seed: u64,
    options: &GbicOptions,
) -> Result<usize> {
    let n = records.len();
    let k = options.folds;
    if n < 2 * k {
        return Err(Error::InsufficientData {
            group: u8::MAX,
            context: "order cross-validation",
            needed: 2 * k,
            got: n,
        });
    }
    let q_plus1 = template.t_dim();

    // Basis matrices per order, standardized once from the full group.
    let mut bases = Vec::with_capacity(options.max_order);
    for order in 1..=options.max_order {
        let spec = BasisSpec::new(order, template.continuous.clone(), template.categorical.clone())?
            .learn_standardization(records.iter().copied(), cutoff)?;
        bases.push(spec.matrix(records.iter().copied(), cutoff)?);
    }
    let b1 = &bases[0];
    let dim1 = b1.ncols();

    let mut rng = rng::rng_for(seed, rng::streams::ORDER_CV);
    let folds = assign_folds(n, k, &mut rng);

    // Per-order criterion values by fold. A fold can be uninformative for an
    // order (singular held-out Gram, e.g. a constant D column within a small
    // fold); such folds are skipped, and an order stays feasible as long as
    // at least half its folds evaluate.
    let mut fold_values: Vec<Vec<f64>> = vec![Vec::new(); options.max_order];
    for f in 0..k {
        let held = &folds[f];
        let train: Vec<usize> = (0..k)
            .filter(|j| *j != f)
            .flat_map(|j| folds[j].iter().copied())
            .collect();
        let m = held.len();

        let b1_train = submatrix(b1, &train);
        let y_train = subvec(outcomes, &train);
        let fit = fit_theta(&b1_train, &y_train, options.pilot_lambda)?;

        // Score components U_ij = B1_ij * (y_i - g(theta' B1_i)).
        let score_matrix = |rows: &[usize]| -> DMatrix<f64> {
            let b = submatrix(b1, rows);
            let eta = &b * &fit.theta;
            let mut u = b;
            for i in 0..rows.len() {
                let r = outcomes[rows[i]] - expit(eta[i]);
                for j in 0..dim1 {
                    u[(i, j)] *= r;
                }
            }
            u
        };
        let u_train = score_matrix(&train);
        let u_held = score_matrix(held);

        for (oi, ba) in bases.iter().enumerate() {
            let alpha = oi + 1;
            let div = n as f64 - (q_plus1 * alpha) as f64 - 1.0;
            // The held-out Gram matrices are singular once the basis is wider
            // than the fold, so such orders are infeasible.
            if div <= 0.0 || ba.ncols() > m {
                fold_values[oi].push(f64::INFINITY);
                continue;
            }
            let ba_train = submatrix(ba, &train);
            let ba_held = submatrix(ba, held);
            let p = ba.ncols();

            let gram_train = ba_train.transpose() * &ba_train;
            let Some(chol_train) = chol_or_ridge(gram_train, "order-selection projection") else {
                fold_values[oi].push(f64::INFINITY);
                continue;
            };
            let gamma = chol_train.solve(&(ba_train.transpose() * &u_train));
            let eps = &u_held - &ba_held * gamma;

            let gram_held = ba_held.transpose() * &ba_held;
            let mut fold_total = 0.0;
            for j in 0..dim1 {
                let eps_j = eps.column(j);
                let sse: f64 = eps_j.iter().map(|e| e * e).sum();
                let sigma2 = sse / div;
                if sigma2 <= 0.0 {
                    fold_total = f64::INFINITY;
                    break;
                }
                // H_j = sum_i eps_ij^2 b_i b_i'; M_j = (sigma2 G)^-1 H_j.
                let mut weighted = ba_held.clone();
                for i in 0..m {
                    let e2 = eps_j[i] * eps_j[i];
                    for c in 0..p {
                        weighted[(i, c)] *= e2;
                    }
                }
                let h = ba_held.transpose() * weighted;
                let sg = &gram_held * sigma2;
                let (trace, log_det_m) = match (Cholesky::new(sg), Cholesky::new(h.clone())) {
                    (Some(chol_sg), Some(chol_h)) => {
                        let solved = chol_sg.solve(&h);
                        (solved.trace(), log_det(&chol_h) - log_det(&chol_sg))
                    }
                    _ => {
                        fold_total = f64::INFINITY;
                        break;
                    }
                };
                let fit_term = if options.unscaled_fit_term {
                    sse / sigma2
                } else {
                    sse / sigma2 / n as f64
                };
                fold_total += fit_term
                    + n as f64 * sigma2.ln()
                    + (n as f64).ln() * (q_plus1 * alpha) as f64
                    + trace
                    - log_det_m;
                if !fold_total.is_finite() {
                    fold_total = f64::INFINITY;
                    break;
                }
            }
            fold_values[oi].push(fold_total);
        }
    }

    let mut best: Option<(usize, f64)> = None;
    for (oi, values) in fold_values.iter().enumerate() {
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        if finite.len() < k.div_ceil(2) {
            continue;
        }
        let mean = finite.iter().sum::<f64>() / finite.len() as f64;
        match best {
            Some((_, t)) if mean >= t => {}
            _ => best = Some((oi + 1, mean)),
        }
    }
    best.map(|(order, _)| order).ok_or(Error::NoFeasibleOrder)
}
