//! Static SVG charts for simulation summaries. Presentation only; nothing
//! parses these back.

use fairaudit_core::sim::SimulationSummary;
use std::fmt::Write;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 360.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_BOTTOM: f64 = 50.0;
const MARGIN_TOP: f64 = 30.0;
const COLORS: [&str; 4] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52"];

fn svg_header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <text x=\"{}\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">{title}</text>",
        WIDTH / 2.0
    )
}

fn methods_of(summary: &SimulationSummary) -> Vec<String> {
    let mut out = Vec::new();
    for c in &summary.cells {
        if !out.contains(&c.method) {
            out.push(c.method.clone());
        }
    }
    out
}

fn metrics_of(summary: &SimulationSummary) -> Vec<String> {
    let mut out = Vec::new();
    for c in &summary.cells {
        if !out.contains(&c.metric) {
            out.push(c.metric.clone());
        }
    }
    out
}

/// Mean point estimates per metric and method, with the oracle truth drawn
/// as a horizontal tick per metric group.
pub fn bias_svg(summary: &SimulationSummary) -> String {
    let methods = methods_of(summary);
    let metrics = metrics_of(summary);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in &summary.cells {
        lo = lo.min(c.mean_estimate.min(c.truth));
        hi = hi.max(c.mean_estimate.max(c.truth));
    }
    let pad = ((hi - lo) * 0.15).max(1e-6);
    lo -= pad;
    hi += pad;
    let plot_w = WIDTH - MARGIN_LEFT - 20.0;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let y_of = |v: f64| MARGIN_TOP + plot_h * (1.0 - (v - lo) / (hi - lo));
    let group_w = plot_w / metrics.len() as f64;

    let mut s = svg_header(&format!(
        "Mean disparity estimates, scenario {} (R = {})",
        summary.scenario, summary.replications
    ));
    // axis
    let _ = writeln!(
        s,
        "<line x1=\"{MARGIN_LEFT}\" y1=\"{MARGIN_TOP}\" x2=\"{MARGIN_LEFT}\" y2=\"{}\" stroke=\"black\"/>",
        MARGIN_TOP + plot_h
    );
    for t in 0..=4 {
        let v = lo + (hi - lo) * t as f64 / 4.0;
        let y = y_of(v);
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{v:.3}</text>",
            MARGIN_LEFT - 6.0,
            y + 4.0
        );
    }
    for (mi, metric) in metrics.iter().enumerate() {
        let x0 = MARGIN_LEFT + mi as f64 * group_w;
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{metric}</text>",
            x0 + group_w / 2.0,
            HEIGHT - MARGIN_BOTTOM + 18.0
        );
        if let Some(cell) = summary.cells.iter().find(|c| &c.metric == metric) {
            let y = y_of(cell.truth);
            let _ = writeln!(
                s,
                "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"black\" stroke-dasharray=\"3,2\"/>",
                x0 + 4.0,
                x0 + group_w - 4.0
            );
        }
        for (hi_m, method) in methods.iter().enumerate() {
            if let Some(cell) = summary
                .cells
                .iter()
                .find(|c| &c.metric == metric && &c.method == method)
            {
                let x = x0 + group_w * (hi_m as f64 + 1.0) / (methods.len() as f64 + 1.0);
                let y = y_of(cell.mean_estimate);
                let _ = writeln!(
                    s,
                    "<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"4\" fill=\"{}\"/>",
                    COLORS[hi_m % COLORS.len()]
                );
            }
        }
    }
    legend(&mut s, &methods);
    s.push_str("</svg>");
    s
}

/// Relative efficiency versus supervised as grouped bars per metric.
pub fn re_svg(summary: &SimulationSummary) -> String {
    let methods: Vec<String> = methods_of(summary)
        .into_iter()
        .filter(|m| m != "supervised")
        .collect();
    let metrics = metrics_of(summary);
    let max_re = summary
        .cells
        .iter()
        .filter_map(|c| c.re_vs_supervised)
        .fold(1.0f64, f64::max)
        * 1.15;
    let plot_w = WIDTH - MARGIN_LEFT - 20.0;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let y_of = |v: f64| MARGIN_TOP + plot_h * (1.0 - v / max_re);
    let group_w = plot_w / metrics.len() as f64;

    let mut s = svg_header(&format!(
        "Relative efficiency vs supervised, scenario {} (R = {})",
        summary.scenario, summary.replications
    ));
    for t in 0..=4 {
        let v = max_re * t as f64 / 4.0;
        let y = y_of(v);
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{v:.2}</text>",
            MARGIN_LEFT - 6.0,
            y + 4.0
        );
    }
    // unit line
    let y1 = y_of(1.0);
    let _ = writeln!(
        s,
        "<line x1=\"{MARGIN_LEFT}\" y1=\"{y1:.1}\" x2=\"{:.1}\" y2=\"{y1:.1}\" stroke=\"black\" stroke-dasharray=\"3,2\"/>",
        MARGIN_LEFT + plot_w
    );
    let bar_w = group_w / (methods.len() as f64 + 1.0);
    for (mi, metric) in metrics.iter().enumerate() {
        let x0 = MARGIN_LEFT + mi as f64 * group_w;
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{metric}</text>",
            x0 + group_w / 2.0,
            HEIGHT - MARGIN_BOTTOM + 18.0
        );
        for (hi_m, method) in methods.iter().enumerate() {
            if let Some(re) = summary
                .cells
                .iter()
                .find(|c| &c.metric == metric && &c.method == method)
                .and_then(|c| c.re_vs_supervised)
            {
                let x = x0 + bar_w * (hi_m as f64 + 0.5);
                let y = y_of(re);
                let h = MARGIN_TOP + plot_h - y;
                let _ = writeln!(
                    s,
                    "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{h:.1}\" fill=\"{}\"/>",
                    bar_w * 0.85,
                    COLORS[hi_m % COLORS.len()]
                );
            }
        }
    }
    legend(&mut s, &methods);
    s.push_str("</svg>");
    s
}

fn legend(s: &mut String, methods: &[String]) {
    for (i, m) in methods.iter().enumerate() {
        let x = MARGIN_LEFT + 10.0 + i as f64 * 150.0;
        let _ = writeln!(
            s,
            "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\">{m}</text>",
            MARGIN_TOP - 4.0,
            COLORS[i % COLORS.len()],
            x + 14.0,
            MARGIN_TOP + 5.0
        );
    }
}
