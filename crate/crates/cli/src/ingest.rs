//! CSV dataset ingestion with per-row validation.
//!
//! The outcome column may be empty (or one of the missing-value aliases) to
//! mark a record unlabeled. Group values must be 0/1 unless a mapping is
//! declared. Scores outside [0, 1] and unparseable fields are reported with
//! their line number.

use crate::CliError;
use fairaudit_core::{AuditDataset, AuditRecord, CovariateKind, CovariateSchema};
use std::path::Path;

/// Outcome-column values treated as missing, besides the empty string.
pub const NA_ALIASES: [&str; 2] = ["NA", "null"];

#[derive(Debug, Clone)]
pub struct ColumnBinding {
    pub outcome: String,
    pub score: String,
    pub group: String,
    pub covariates: Vec<(String, CovariateKind)>,
    /// Mapping from raw group values to 0/1, e.g. `("control", "treated")`
    /// maps "control" to 0. Without it the group column must hold 0/1.
    pub group_map: Option<(String, String)>,
}

#[derive(Debug)]
pub struct Ingested {
    pub dataset: AuditDataset,
    pub warnings: Vec<String>,
}

fn data_err(msg: String) -> CliError {
    CliError::Data(msg)
}

/// Read and validate a CSV audit dataset.
pub fn ingest_csv(path: &Path, binding: &ColumnBinding, cutoff: f64) -> Result<Ingested, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| data_err(format!("cannot read {}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| data_err(format!("cannot read header: {e}")))?
        .clone();
    let col = |name: &str| -> Result<usize, CliError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| data_err(format!("column '{name}' not found in {}", path.display())))
    };
    let outcome_idx = col(&binding.outcome)?;
    let score_idx = col(&binding.score)?;
    let group_idx = col(&binding.group)?;
    let cov_idx: Vec<(usize, CovariateKind)> = binding
        .covariates
        .iter()
        .map(|(name, kind)| col(name).map(|i| (i, *kind)))
        .collect::<Result<_, _>>()?;

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| data_err(format!("malformed csv row: {e}")))?;
        let line = row
            .position()
            .map(|p| p.line().to_string())
            .unwrap_or_else(|| "?".into());

        let raw_outcome = row.get(outcome_idx).unwrap_or("");
        let y = if raw_outcome.is_empty() || NA_ALIASES.contains(&raw_outcome) {
            None
        } else {
            match raw_outcome {
                "0" => Some(false),
                "1" => Some(true),
                other => {
                    return Err(data_err(format!(
                        "line {line}: outcome '{other}' is not 0, 1 or a missing marker"
                    )))
                }
            }
        };

        let raw_score = row.get(score_idx).unwrap_or("");
        let s: f64 = raw_score
            .parse()
            .map_err(|_| data_err(format!("line {line}: score '{raw_score}' is not a number")))?;
        if !(0.0..=1.0).contains(&s) {
            return Err(data_err(format!("line {line}: score {s} outside [0, 1]")));
        }

        let raw_group = row.get(group_idx).unwrap_or("");
        let a = match &binding.group_map {
            Some((zero, one)) => {
                if raw_group == zero {
                    0
                } else if raw_group == one {
                    1
                } else {
                    return Err(data_err(format!(
                        "line {line}: group '{raw_group}' not covered by the declared mapping"
                    )));
                }
            }
            None => match raw_group {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(data_err(format!(
                        "line {line}: group '{other}' is not 0/1; declare a mapping with --group-map"
                    )))
                }
            },
        };

        let mut w = Vec::with_capacity(cov_idx.len());
        for (idx, _) in &cov_idx {
            let raw = row.get(*idx).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| {
                data_err(format!(
                    "line {line}: covariate '{}' value '{raw}' is not a number",
                    headers.get(*idx).unwrap_or("?")
                ))
            })?;
            w.push(v);
        }

        records.push(AuditRecord { y, s, a, w });
    }

    let schema = CovariateSchema {
        kinds: cov_idx.iter().map(|(_, k)| *k).collect(),
    };
    let mut warnings = Vec::new();
    let unlabeled_counts = [
        records.iter().filter(|r| !r.is_labeled() && r.a == 0).count(),
        records.iter().filter(|r| !r.is_labeled() && r.a == 1).count(),
    ];
    if unlabeled_counts[0] + unlabeled_counts[1] == 0 {
        warnings.push(
            "no unlabeled rows; Infairness reduces toward supervised and cannot be fitted".into(),
        );
    } else if let Some(a) = unlabeled_counts.iter().position(|c| *c == 0) {
        return Err(data_err(format!(
            "group {a} has no unlabeled rows while the other group does"
        )));
    }
    let dataset = AuditDataset::new(records, cutoff, schema)
        .map_err(|e| data_err(format!("{}: {e}", path.display())))?;
    Ok(Ingested { dataset, warnings })
}

/// Write a dataset back out in the same column layout `ingest_csv` reads
/// (outcome, score, group, then covariates).
pub fn write_dataset_csv(path: &Path, dataset: &AuditDataset) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| data_err(format!("cannot write {}: {e}", path.display())))?;
    let p = dataset.schema().len();
    let mut header = vec!["outcome".to_string(), "score".into(), "group".into()];
    for j in 0..p {
        header.push(format!("w{j}"));
    }
    w.write_record(&header)
        .map_err(|e| data_err(e.to_string()))?;
    for r in dataset.records() {
        let mut row = vec![
            match r.y {
                Some(true) => "1".to_string(),
                Some(false) => "0".to_string(),
                None => String::new(),
            },
            format!("{}", r.s),
            r.a.to_string(),
        ];
        for v in &r.w {
            row.push(format!("{v}"));
        }
        w.write_record(&row).map_err(|e| data_err(e.to_string()))?;
    }
    w.flush().map_err(|e| data_err(e.to_string()))?;
    Ok(())
}
