//! Small hand-written SVG charts.

use std::fmt::Write;

use vap_core::zeroshot::Confusion;
use vap_core::Metric;

use crate::pipeline::{RunReport, ScpResult};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;

/// Weighted F1 of always predicting the larger class, from the class
/// counts alone.
pub fn majority_baseline_f1(positives: usize, negatives: usize) -> f64 {
    let n = positives + negatives;
    if n == 0 {
        return 0.0;
    }
    let p = positives.max(negatives) as f64 / n as f64;
    p * 2.0 * p / (1.0 + p)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let y = y_of(v);
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{v:.2}</text>"##,
            WIDTH - MARGIN,
            MARGIN - 4.0,
            y + 4.0
        );
    }
}

fn y_of(v: f64) -> f64 {
    HEIGHT - MARGIN - v.clamp(0.0, 1.0) * (HEIGHT - 2.0 * MARGIN)
}

/// Weighted F1 per perturbation for one metric, with the majority baseline
/// of the unperturbed events as a dashed line.
pub fn metric_chart(report: &RunReport, metric: Metric) -> Option<String> {
    let bars: Vec<(String, f64, Confusion)> = report
        .results
        .iter()
        .filter_map(|r| {
            let e = r.reports.iter().find(|e| e.metric == metric)?;
            Some((r.perturbation.to_string(), e.weighted_f1, e.confusion))
        })
        .collect();
    let (_, _, first) = bars.first()?;
    let baseline = majority_baseline_f1(first.positives(), first.negatives());
    let mut out = String::new();
    header(&mut out, &format!("{} weighted F1", metric.name()));
    let slot = (WIDTH - 2.0 * MARGIN) / bars.len() as f64;
    for (i, (name, f1, _)) in bars.iter().enumerate() {
        let x = MARGIN + slot * i as f64 + slot * 0.15;
        let y = y_of(*f1);
        let _ = writeln!(
            out,
            r##"<rect class="bar" data-perturbation="{}" data-value="{f1:.6}" x="{x:.1}" y="{y:.1}" width="{:.1}" height="{:.1}" fill="#4a7ab5"/>"##,
            escape(name),
            slot * 0.7,
            HEIGHT - MARGIN - y
        );
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{f1:.3}</text>"#, x + slot * 0.35, y - 4.0);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x + slot * 0.35,
            HEIGHT - MARGIN + 14.0,
            escape(name)
        );
    }
    let y = y_of(baseline);
    let _ = writeln!(
        out,
        r##"<line class="baseline" data-baseline="{baseline:.6}" x1="{MARGIN}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#c33" stroke-dasharray="6 4"/>"##,
        WIDTH - MARGIN
    );
    let _ = writeln!(out, r##"<text x="{}" y="{:.1}" text-anchor="end" fill="#c33">majority {baseline:.3}</text>"##, WIDTH - MARGIN, y - 4.0);
    out.push_str("</svg>\n");
    Some(out)
}

/// Mean shift probability per completion-point region, grouped bars per
/// perturbation and variant.
pub fn scp_chart(results: &[ScpResult]) -> Option<String> {
    if results.is_empty() {
        return None;
    }
    let mut out = String::new();
    header(&mut out, "shift probability by region");
    let slot = (WIDTH - 2.0 * MARGIN) / results.len() as f64;
    let colors = ["#8fb3d9", "#4a7ab5", "#1d3f6e"];
    for (i, r) in results.iter().enumerate() {
        let values = [("hold", r.mean.hold), ("predictive", r.mean.predictive), ("reactive", r.mean.reactive)];
        let w = slot * 0.8 / 3.0;
        for (k, (region, v)) in values.iter().enumerate() {
            let x = MARGIN + slot * i as f64 + slot * 0.1 + w * k as f64;
            let y = y_of(*v);
            let _ = writeln!(
                out,
                r#"<rect class="bar" data-region="{region}" data-value="{v:.6}" x="{x:.1}" y="{y:.1}" width="{w:.1}" height="{:.1}" fill="{}"/>"#,
                HEIGHT - MARGIN - y,
                colors[k]
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{} {}</text>"#,
            MARGIN + slot * (i as f64 + 0.5),
            HEIGHT - MARGIN + 14.0,
            escape(&r.perturbation.to_string()),
            r.variant.name()
        );
    }
    let y = y_of(0.5);
    let _ = writeln!(
        out,
        r##"<line x1="{MARGIN}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#999" stroke-dasharray="2 3"/>"##,
        WIDTH - MARGIN
    );
    out.push_str("</svg>\n");
    Some(out)
}
