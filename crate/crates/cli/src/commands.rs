//! The `audit` and `simulate` subcommands.

use crate::ingest::{ingest_csv, ColumnBinding};
use crate::report::{
    AuditReport, GroupCounts, GroupDiagnostics, MethodReport, MetricReport, SCHEMA_VERSION,
};
use crate::{plots, CliError};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fairaudit_core::imputation::{ImputationConfig, OrderSelection, PenaltySelection};
use fairaudit_core::ji::JiFit;
use fairaudit_core::sim::{
    run_study, write_replications_csv, MethodSpec, Scenario, ScenarioConfig,
};
use fairaudit_core::ss::{relative_efficiency, InfairnessFit};
use fairaudit_core::supervised::estimate_supervised;
use fairaudit_core::{AuditDataset, CovariateKind, FairnessMetric};
use std::fs;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "fairaudit",
    version,
    about = "Group-fairness auditing for binary classifiers from labeled plus unlabeled data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Audit a CSV dataset: group metrics, disparities, and confidence
    /// intervals per requested method.
    Audit(AuditArgs),
    /// Run a replication study on synthetic data and summarize bias,
    /// relative efficiency and coverage.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditMethod {
    Supervised,
    Infairness,
    Ji,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// CSV file with one row per validation record.
    #[arg(long)]
    pub data: PathBuf,
    /// Outcome column (0/1; empty, NA or null marks a row unlabeled).
    #[arg(long)]
    pub outcome: String,
    /// Score column (values in [0, 1]).
    #[arg(long)]
    pub score: String,
    /// Group column (0/1, or declare --group-map).
    #[arg(long)]
    pub group: String,
    /// Auxiliary covariates as comma-separated NAME:KIND with KIND one of
    /// continuous|categorical (e.g. age:continuous,insured:categorical).
    #[arg(long)]
    pub covariates: Option<String>,
    /// Map two raw group values onto 0 and 1, e.g. --group-map white=0,nonwhite=1.
    #[arg(long)]
    pub group_map: Option<String>,
    /// Classification cutoff: D = 1 when score >= cutoff.
    #[arg(long, default_value_t = 0.5)]
    pub cutoff: f64,
    /// Comma-separated subset of supervised,infairness,ji.
    #[arg(long, default_value = "supervised,infairness")]
    pub methods: String,
    /// Polynomial basis order: "auto" (GBIC-selected) or a fixed integer.
    #[arg(long, default_value = "auto")]
    pub basis: String,
    /// Ridge penalty: "cv" (cross-validated) or a fixed value.
    #[arg(long, default_value = "cv")]
    pub lambda: String,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario: 1 (logistic outcome model with nonlinear inputs) or
    /// 2 (non-logistic squared-index outcome model).
    #[arg(long)]
    pub scenario: u8,
    /// Number of replications.
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    /// Labeled validation size per replication.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Unlabeled validation size per replication.
    #[arg(long, default_value_t = 20_000)]
    pub unlabeled: usize,
    /// Training size for the score model.
    #[arg(long, default_value_t = 3000)]
    pub train: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for replications.csv and summary.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Also write bias.svg and re.svg charts.
    #[arg(long, default_value_t = false)]
    pub plots: bool,
    /// Comma-separated subset of supervised,infairness-S,infairness-SW,ji.
    #[arg(long, default_value = "supervised,infairness-S,infairness-SW,ji")]
    pub methods: String,
    /// Monte Carlo draws behind the oracle truth.
    #[arg(long, default_value_t = 1_000_000)]
    pub oracle_draws: usize,
    /// Retrain the score model per replication instead of freezing one.
    #[arg(long, default_value_t = false)]
    pub retrain: bool,
}

fn parse_covariates(spec: &Option<String>) -> Result<Vec<(String, CovariateKind)>, CliError> {
    let Some(spec) = spec else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for part in spec.split(',').filter(|p| !p.is_empty()) {
        let (name, kind) = part.split_once(':').ok_or_else(|| {
            CliError::Usage(format!("covariate '{part}' is not NAME:KIND"))
        })?;
        let kind = match kind.to_ascii_lowercase().as_str() {
            "continuous" | "cont" => CovariateKind::Continuous,
            "categorical" | "cat" => CovariateKind::Categorical,
            other => {
                return Err(CliError::Usage(format!(
                    "covariate kind '{other}' is not continuous|categorical"
                )))
            }
        };
        out.push((name.to_string(), kind));
    }
    Ok(out)
}

fn parse_group_map(spec: &Option<String>) -> Result<Option<(String, String)>, CliError> {
    let Some(spec) = spec else { return Ok(None) };
    let mut zero = None;
    let mut one = None;
    for part in spec.split(',').filter(|p| !p.is_empty()) {
        let (value, code) = part
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("group mapping '{part}' is not VALUE=0|1")))?;
        match code {
            "0" => zero = Some(value.to_string()),
            "1" => one = Some(value.to_string()),
            other => {
                return Err(CliError::Usage(format!(
                    "group mapping code '{other}' must be 0 or 1"
                )))
            }
        }
    }
    match (zero, one) {
        (Some(z), Some(o)) => Ok(Some((z, o))),
        _ => Err(CliError::Usage(
            "group map must bind one value to 0 and one to 1".into(),
        )),
    }
}

fn parse_audit_methods(spec: &str) -> Result<Vec<AuditMethod>, CliError> {
    let mut out = Vec::new();
    for part in spec.split(',').filter(|p| !p.is_empty()) {
        let m = match part.to_ascii_lowercase().as_str() {
            "supervised" => AuditMethod::Supervised,
            "infairness" => AuditMethod::Infairness,
            "ji" => AuditMethod::Ji,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown method '{other}' (expected supervised|infairness|ji)"
                )))
            }
        };
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("no methods requested".into()));
    }
    Ok(out)
}

fn imputation_config(args: &AuditArgs, has_covariates: bool) -> Result<ImputationConfig, CliError> {
    let order = if args.basis.eq_ignore_ascii_case("auto") {
        OrderSelection::Auto
    } else {
        let k: usize = args
            .basis
            .parse()
            .map_err(|_| CliError::Usage(format!("--basis '{}' is not auto or an integer", args.basis)))?;
        if k == 0 {
            return Err(CliError::Usage("--basis must be >= 1".into()));
        }
        OrderSelection::Fixed(k)
    };
    let penalty = if args.lambda.eq_ignore_ascii_case("cv") {
        PenaltySelection::CrossValidated
    } else {
        let l: f64 = args
            .lambda
            .parse()
            .map_err(|_| CliError::Usage(format!("--lambda '{}' is not cv or a number", args.lambda)))?;
        if l < 0.0 {
            return Err(CliError::Usage("--lambda must be >= 0".into()));
        }
        PenaltySelection::Fixed(l)
    };
    if args.folds < 2 {
        return Err(CliError::Usage("--folds must be >= 2".into()));
    }
    Ok(ImputationConfig {
        order,
        penalty,
        folds: args.folds,
        use_covariates: has_covariates,
        gbic_unscaled_fit_term: false,
    })
}

/// Build the full audit report for an ingested dataset.
pub fn audit_report(
    data: &AuditDataset,
    methods: &[AuditMethod],
    config: &ImputationConfig,
    seed: u64,
) -> AuditReport {
    let mut method_reports = Vec::new();
    // Supervised results back the relative-efficiency column whatever the
    // requested method order.
    let supervised: Vec<_> = if methods.contains(&AuditMethod::Supervised) {
        FairnessMetric::ALL
            .into_iter()
            .map(|metric| estimate_supervised(data, metric))
            .collect()
    } else {
        Vec::new()
    };
    let supervised_ses: Vec<Option<f64>> = if supervised.is_empty() {
        vec![None; FairnessMetric::ALL.len()]
    } else {
        supervised
            .iter()
            .map(|r| r.as_ref().ok().and_then(|t| t.delta.se))
            .collect()
    };

    for &method in methods {
        let report = match method {
            AuditMethod::Supervised => {
                let mut metrics = Vec::new();
                for (i, metric) in FairnessMetric::ALL.into_iter().enumerate() {
                    match &supervised[i] {
                        Ok(triple) => metrics.push(MetricReport::from_triple(metric, triple)),
                        Err(e) => metrics.push(MetricReport::from_error(metric, e.to_string())),
                    }
                }
                MethodReport {
                    method: "supervised".into(),
                    diagnostics: None,
                    metrics,
                    error: None,
                }
            }
            AuditMethod::Infairness => match InfairnessFit::fit(data, config, seed) {
                Ok(fit) => {
                    let diagnostics = fit
                        .models
                        .iter()
                        .map(|m| GroupDiagnostics::from_model(m, data))
                        .collect();
                    let mut metrics = Vec::new();
                    for (i, metric) in FairnessMetric::ALL.into_iter().enumerate() {
                        match fit.estimate(data, metric) {
                            Ok(triple) => {
                                let mut r = MetricReport::from_triple(metric, &triple);
                                if let (Some(sup), Some(ss)) =
                                    (supervised_ses[i], triple.delta.se)
                                {
                                    r.re_vs_supervised = Some(relative_efficiency(sup, ss));
                                }
                                metrics.push(r);
                            }
                            Err(e) => {
                                metrics.push(MetricReport::from_error(metric, e.to_string()))
                            }
                        }
                    }
                    MethodReport {
                        method: "infairness".into(),
                        diagnostics: Some(diagnostics),
                        metrics,
                        error: None,
                    }
                }
                Err(e) => MethodReport {
                    method: "infairness".into(),
                    diagnostics: None,
                    metrics: Vec::new(),
                    error: Some(e.to_string()),
                },
            },
            AuditMethod::Ji => match JiFit::fit(data) {
                Ok(fit) => {
                    let mut metrics = Vec::new();
                    for metric in FairnessMetric::ALL {
                        match fit.estimate(data, metric) {
                            Ok(triple) => metrics.push(MetricReport::from_triple(metric, &triple)),
                            Err(e) => {
                                metrics.push(MetricReport::from_error(metric, e.to_string()))
                            }
                        }
                    }
                    MethodReport {
                        method: "ji".into(),
                        diagnostics: None,
                        metrics,
                        error: None,
                    }
                }
                Err(e) => MethodReport {
                    method: "ji".into(),
                    diagnostics: None,
                    metrics: Vec::new(),
                    error: Some(e.to_string()),
                },
            },
        };
        method_reports.push(report);
    }

    AuditReport {
        schema_version: SCHEMA_VERSION,
        cutoff: data.cutoff(),
        seed,
        counts: GroupCounts {
            n0: data.n_labeled(0),
            n1: data.n_labeled(1),
            big_n0: data.n_unlabeled(0),
            big_n1: data.n_unlabeled(1),
        },
        methods: method_reports,
    }
}

/// `audit` subcommand. Per-metric estimator errors are recorded in the
/// report and leave the exit code at 0; the run fails (exit 4) only when no
/// method produced any estimate.
pub fn cmd_audit(args: &AuditArgs) -> Result<(), CliError> {
    if !(args.cutoff > 0.0 && args.cutoff < 1.0) {
        return Err(CliError::Usage(format!(
            "--cutoff {} outside (0, 1)",
            args.cutoff
        )));
    }
    let methods = parse_audit_methods(&args.methods)?;
    let covariates = parse_covariates(&args.covariates)?;
    let binding = ColumnBinding {
        outcome: args.outcome.clone(),
        score: args.score.clone(),
        group: args.group.clone(),
        covariates,
        group_map: parse_group_map(&args.group_map)?,
    };
    let config = imputation_config(args, !binding.covariates.is_empty())?;
    let ingested = ingest_csv(&args.data, &binding, args.cutoff)?;
    for w in &ingested.warnings {
        log::warn!("{w}");
        eprintln!("warning: {w}");
    }

    let report = audit_report(&ingested.dataset, &methods, &config, args.seed);
    let produced_any = report
        .methods
        .iter()
        .any(|m| m.metrics.iter().any(|r| r.error.is_none() && r.delta.is_some()));
    let rendered = match args.format {
        OutputFormat::Json => report.to_json(),
        OutputFormat::Table => report.to_table(),
    };
    match &args.out {
        Some(path) => fs::write(path, rendered)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{rendered}"),
    }
    if !produced_any {
        return Err(CliError::Estimation(
            "no method produced any estimate; see the report for per-metric errors".into(),
        ));
    }
    Ok(())
}

/// `simulate` subcommand.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    if args.reps == 0 {
        return Err(CliError::Usage("--reps must be >= 1".into()));
    }
    let scenario = Scenario::from_number(args.scenario)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut methods = Vec::new();
    for part in args.methods.split(',').filter(|p| !p.is_empty()) {
        let m = MethodSpec::parse(part).map_err(|e| CliError::Usage(e.to_string()))?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    if methods.is_empty() {
        return Err(CliError::Usage("no methods requested".into()));
    }
    let cfg = ScenarioConfig {
        n: args.n,
        unlabeled: args.unlabeled,
        n_train: args.train,
        seed: args.seed,
        replications: args.reps,
        oracle_draws: args.oracle_draws,
        retrain_per_rep: args.retrain,
        methods,
        ..ScenarioConfig::new(scenario)
    };

    let result = run_study(&cfg).map_err(|e| CliError::Estimation(e.to_string()))?;

    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", args.out.display())))?;
    let csv_path = args.out.join("replications.csv");
    let file = fs::File::create(&csv_path)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", csv_path.display())))?;
    write_replications_csv(file, &result.replications)
        .map_err(|e| CliError::Data(e.to_string()))?;

    let summary_path = args.out.join("summary.json");
    let mut json = serde_json::to_string_pretty(&result.summary)
        .map_err(|e| CliError::Estimation(e.to_string()))?;
    json.push('\n');
    fs::write(&summary_path, json)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", summary_path.display())))?;

    if args.plots {
        fs::write(args.out.join("bias.svg"), plots::bias_svg(&result.summary))
            .map_err(|e| CliError::Data(e.to_string()))?;
        fs::write(args.out.join("re.svg"), plots::re_svg(&result.summary))
            .map_err(|e| CliError::Data(e.to_string()))?;
    }

    println!(
        "scenario {} study: {} replications ({} errant), outputs in {}",
        result.summary.scenario,
        result.summary.replications,
        result.summary.errant_replications,
        args.out.display()
    );
    for cell in &result.summary.cells {
        println!(
            "  {:<13} {:<4} bias {:+.4}  mse {:.6}  re {}  coverage {}",
            cell.method,
            cell.metric,
            cell.bias,
            cell.mse,
            cell.re_vs_supervised
                .map(|r| format!("{r:.2}"))
                .unwrap_or_else(|| "-".into()),
            cell.coverage
                .map(|c| format!("{c:.3}"))
                .unwrap_or_else(|| "-".into()),
        );
    }
    Ok(())
}
