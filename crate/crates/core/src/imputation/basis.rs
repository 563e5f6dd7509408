//! Polynomial basis for the imputation working model.
//!
//! The basis over `T = (S, W_continuous...)` of order `alpha` is laid out as
//!
//! ```text
//! [ 1, T_1, .., T_{q+1}, T_1^2, .., T_{q+1}^2, ..., T^alpha, W_cat..., D ]
//! ```
//!
//! grouped by power, with no cross-product terms. Categorical covariates
//! enter once, untransformed, and are excluded from the powers; the binary
//! classification `D` is always the final column. An intercept, `S` and `D`
//! are therefore always present, which is what makes the semi-supervised
//! moment estimators consistent even under a misspecified working model.

use crate::error::{Error, Result};
use crate::metrics::AuditRecord;
use nalgebra::DMatrix;

/// Per-column location/scale for the continuous polynomial block, learned
/// from labeled group data. The intercept, categorical entries and `D` are
/// never standardized.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

/// Basis specification: polynomial order, covariate roles, and the optional
/// standardization of the continuous columns.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSpec {
    /// Polynomial order `alpha >= 1`.
    pub order: usize,
    /// Indices into `W` entering the polynomial expansion.
    pub continuous: Vec<usize>,
    /// Indices into `W` entered linearly, excluded from powers.
    pub categorical: Vec<usize>,
    pub standardization: Option<Standardization>,
}

impl BasisSpec {
    pub fn new(order: usize, continuous: Vec<usize>, categorical: Vec<usize>) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidInput("basis order must be >= 1".into()));
        }
        Ok(BasisSpec {
            order,
            continuous,
            categorical,
            standardization: None,
        })
    }

    /// Number of components of `T = (S, W_continuous...)`.
    pub fn t_dim(&self) -> usize {
        1 + self.continuous.len()
    }

    /// Number of polynomial columns, excluding the intercept.
    pub fn poly_dim(&self) -> usize {
        self.t_dim() * self.order
    }

    /// Total basis dimension `1 + (1 + q_cont) * alpha + q_cat + 1`.
    pub fn dim(&self) -> usize {
        1 + self.poly_dim() + self.categorical.len() + 1
    }

    fn expected_w_len(&self) -> usize {
        self.continuous
            .iter()
            .chain(self.categorical.iter())
            .copied()
            .max()
            .map_or(0, |m| m + 1)
    }

    /// Write the raw (unstandardized) basis row for `(s, w, d)` into `out`.
    fn fill_raw(&self, s: f64, w: &[f64], d: bool, out: &mut [f64]) -> Result<()> {
        if w.len() < self.expected_w_len() {
            return Err(Error::SchemaMismatch {
                expected: self.expected_w_len(),
                got: w.len(),
            });
        }
        out[0] = 1.0;
        let t_dim = self.t_dim();
        // Power-1 block holds T itself; higher blocks multiply elementwise.
        out[1] = s;
        for (j, &wi) in self.continuous.iter().enumerate() {
            out[2 + j] = w[wi];
        }
        for p in 1..self.order {
            for j in 0..t_dim {
                out[1 + p * t_dim + j] = out[1 + (p - 1) * t_dim + j] * out[1 + j];
            }
        }
        let cat_start = 1 + self.poly_dim();
        for (j, &wi) in self.categorical.iter().enumerate() {
            out[cat_start + j] = w[wi];
        }
        out[self.dim() - 1] = if d { 1.0 } else { 0.0 };
        Ok(())
    }

    fn apply_standardization(&self, out: &mut [f64]) {
        if let Some(std) = &self.standardization {
            for j in 0..self.poly_dim() {
                out[1 + j] = (out[1 + j] - std.means[j]) / std.sds[j];
            }
        }
    }

    /// Basis row for one record, applying the spec's standardization.
    pub fn build(&self, record: &AuditRecord, cutoff: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.fill_raw(record.s, &record.w, record.s >= cutoff, &mut out)?;
        self.apply_standardization(&mut out);
        Ok(out)
    }

    /// Basis matrix (one row per record), applying the spec's standardization.
    pub fn matrix<'a, I>(&self, records: I, cutoff: f64) -> Result<DMatrix<f64>>
    where
        I: IntoIterator<Item = &'a AuditRecord>,
    {
        let records: Vec<&AuditRecord> = records.into_iter().collect();
        let mut m = DMatrix::zeros(records.len(), self.dim());
        let mut row = vec![0.0; self.dim()];
        for (i, r) in records.iter().enumerate() {
            self.fill_raw(r.s, &r.w, r.s >= cutoff, &mut row)?;
            self.apply_standardization(&mut row);
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        Ok(m)
    }

    /// Learn per-column mean/SD of the continuous polynomial block from the
    /// given records (the labeled group data) and attach it to the spec.
    /// Constant columns keep scale 1 so standardization stays well-defined.
    pub fn learn_standardization<'a, I>(mut self, records: I, cutoff: f64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a AuditRecord>,
    {
        self.standardization = None;
        let raw = self.matrix(records, cutoff)?;
        let n = raw.nrows();
        if n == 0 {
            return Err(Error::InvalidInput(
                "cannot learn standardization from zero records".into(),
            ));
        }
        let mut means = Vec::with_capacity(self.poly_dim());
        let mut sds = Vec::with_capacity(self.poly_dim());
        for j in 0..self.poly_dim() {
            let col = raw.column(1 + j);
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            means.push(mean);
            sds.push(if sd > 0.0 { sd } else { 1.0 });
        }
        self.standardization = Some(Standardization { means, sds });
        Ok(self)
    }
}

/// Basis row for a record under a spec (free-function form of
/// [`BasisSpec::build`]).
pub fn build_basis(spec: &BasisSpec, record: &AuditRecord, cutoff: f64) -> Result<Vec<f64>> {
    spec.build(record, cutoff)
}
