use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by estimators and model fitting.
///
/// Degenerate denominators and empty groups are reported as structured
/// variants (rather than NaN results) so callers can name the group and
/// moment that failed.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),

    #[error("cutoff {0} outside (0, 1)")]
    CutoffOutOfRange(f64),

    #[error("group {group}: degenerate moment {moment} = {value} for {metric}")]
    DegenerateGroup {
        group: u8,
        metric: &'static str,
        moment: &'static str,
        value: f64,
    },

    #[error("group {group}: no {partition} records")]
    EmptyGroup { group: u8, partition: &'static str },

    #[error("group {group}: {context} needs at least {needed} records, found {got}")]
    InsufficientData {
        group: u8,
        context: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("solver did not converge after {iterations} iterations (max |Q| = {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular jacobian at lambda = 0; a penalty lambda > 0 may stabilize the fit")]
    SingularJacobian,

    #[error("covariate schema mismatch: expected {expected} covariates, record has {got}")]
    SchemaMismatch { expected: usize, got: usize },

    #[error("order selection found no feasible polynomial order")]
    NoFeasibleOrder,

    #[error("cross-validation failed: {0}")]
    CrossValidation(String),

    #[error("simulation study failed: {0}")]
    Study(String),
}
