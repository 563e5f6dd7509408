//! Audit report assembly and rendering. JSON is the canonical format; the
//! text table is a projection of the same numbers.

use fairaudit_core::imputation::ImputationModel;
use fairaudit_core::{AuditDataset, EstimateTriple, FairnessMetric, MetricEstimate};
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct EstimateOut {
    pub point: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_low: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_high: Option<f64>,
}

impl From<&MetricEstimate> for EstimateOut {
    fn from(e: &MetricEstimate) -> Self {
        EstimateOut {
            point: e.point,
            se: e.se,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub metric: String,
    pub criterion: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group0: Option<EstimateOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group1: Option<EstimateOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<EstimateOut>,
    /// Two-sided z-test p-value for zero disparity.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    /// Estimated-variance relative efficiency versus supervised.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub re_vs_supervised: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl MetricReport {
    pub fn from_triple(metric: FairnessMetric, t: &EstimateTriple) -> Self {
        MetricReport {
            metric: metric.name().into(),
            criterion: metric.criterion().into(),
            group0: Some((&t.group0).into()),
            group1: Some((&t.group1).into()),
            delta: Some((&t.delta).into()),
            p_value: t.delta.p_value(),
            re_vs_supervised: None,
            error: None,
        }
    }

    pub fn from_error(metric: FairnessMetric, error: String) -> Self {
        MetricReport {
            metric: metric.name().into(),
            criterion: metric.criterion().into(),
            group0: None,
            group1: None,
            delta: None,
            p_value: None,
            re_vs_supervised: None,
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupDiagnostics {
    pub group: u8,
    pub basis_order: usize,
    pub lambda: f64,
    pub solver_iterations: usize,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
}

impl GroupDiagnostics {
    pub fn from_model(model: &ImputationModel, data: &AuditDataset) -> Self {
        GroupDiagnostics {
            group: model.group,
            basis_order: model.basis.order,
            lambda: model.lambda,
            solver_iterations: model.iterations,
            n_labeled: data.n_labeled(model.group),
            n_unlabeled: data.n_unlabeled(model.group),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodReport {
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Vec<GroupDiagnostics>>,
    pub metrics: Vec<MetricReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupCounts {
    pub n0: usize,
    pub n1: usize,
    #[serde(rename = "N0")]
    pub big_n0: usize,
    #[serde(rename = "N1")]
    pub big_n1: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub schema_version: u32,
    pub cutoff: f64,
    pub seed: u64,
    pub counts: GroupCounts,
    pub methods: Vec<MethodReport>,
}

impl AuditReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Aligned text rendering of the same numbers (6 decimal places).
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let fmt = |v: Option<f64>| match v {
            Some(x) => format!("{x:.6}"),
            None => "-".into(),
        };
        out.push_str(&format!(
            "groups: n0={} n1={} N0={} N1={}  cutoff={}  seed={}\n",
            self.counts.n0,
            self.counts.n1,
            self.counts.big_n0,
            self.counts.big_n1,
            self.cutoff,
            self.seed
        ));
        for method in &self.methods {
            out.push_str(&format!("\n== method: {} ==\n", method.method));
            if let Some(err) = &method.error {
                out.push_str(&format!("  error: {err}\n"));
                continue;
            }
            if let Some(diags) = &method.diagnostics {
                for d in diags {
                    out.push_str(&format!(
                        "  group {}: basis order {}, lambda {:.6e}, {} newton iterations, n_a={}, N_a={}\n",
                        d.group, d.basis_order, d.lambda, d.solver_iterations, d.n_labeled, d.n_unlabeled
                    ));
                }
            }
            out.push_str(&format!(
                "  {:<6} {:>10} {:>10} {:>10} {:>10} {:>22} {:>8} {:>8}\n",
                "metric", "group0", "group1", "delta", "se", "95% CI", "p", "RE"
            ));
            for m in &method.metrics {
                if let Some(err) = &m.error {
                    out.push_str(&format!("  {:<6} error: {err}\n", m.metric));
                    continue;
                }
                let ci = match &m.delta {
                    Some(d) if d.ci_low.is_some() => format!(
                        "[{:.6}, {:.6}]",
                        d.ci_low.unwrap(),
                        d.ci_high.unwrap()
                    ),
                    _ => "-".into(),
                };
                out.push_str(&format!(
                    "  {:<6} {:>10} {:>10} {:>10} {:>10} {:>22} {:>8} {:>8}\n",
                    m.metric,
                    fmt(m.group0.as_ref().map(|e| e.point)),
                    fmt(m.group1.as_ref().map(|e| e.point)),
                    fmt(m.delta.as_ref().map(|e| e.point)),
                    fmt(m.delta.as_ref().and_then(|e| e.se)),
                    ci,
                    match m.p_value {
                        Some(p) => format!("{p:.4}"),
                        None => "-".into(),
                    },
                    match m.re_vs_supervised {
                        Some(r) => format!("{r:.3}"),
                        None => "-".into(),
                    },
                ));
            }
        }
        out
    }
}
