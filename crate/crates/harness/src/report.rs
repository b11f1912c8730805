//! Writing a run report to disk: JSON, CSV tables and SVG charts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use vap_core::zeroshot::write_scores_csv;
use vap_core::Metric;

use crate::pipeline::RunReport;
use crate::plot::{metric_chart, scp_chart};
use crate::HarnessError;

const METRICS: [Metric; 3] = [Metric::ShiftHold, Metric::ShiftPrediction, Metric::BcPrediction];

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path).map(BufWriter::new).map_err(|e| HarnessError::from(e).at("report", path))
}

/// Writes `report.json`, `results.csv`, `scores.csv`, one SVG per metric
/// and, when present, `scp_regions.csv`/`scp_regions.svg`.
pub fn write_report(report: &RunReport, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::from(e).at("report", dir))?;

    let path = dir.join("report.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, report)?;
    writeln!(w)?;
    w.flush()?;

    let mut w = create(&dir.join("results.csv"))?;
    writeln!(w, "perturbation,metric,weighted_f1,baseline_weighted_f1,positives,negatives,tp,fp,tn,fn")?;
    for r in &report.results {
        for e in &r.reports {
            let c = &e.confusion;
            writeln!(
                w,
                "{},{},{:.6},{:.6},{},{},{},{},{},{}",
                r.perturbation,
                e.metric.name(),
                e.weighted_f1,
                e.baseline_weighted_f1,
                c.positives(),
                c.negatives(),
                c.tp,
                c.fp,
                c.tn,
                c.fn_
            )?;
        }
    }
    w.flush()?;

    if report.results.iter().any(|r| !r.scores.is_empty()) {
        let mut w = create(&dir.join("scores.csv"))?;
        writeln!(w, "perturbation,dialog,event_id,kind,label,score,decision")?;
        for r in &report.results {
            for (dialog, scores) in &r.scores {
                let mut buf = Vec::new();
                write_scores_csv(scores, &mut buf)?;
                let text = String::from_utf8_lossy(&buf);
                for line in text.lines().skip(1) {
                    writeln!(w, "{},{},{line}", r.perturbation, csv_field(dialog))?;
                }
            }
        }
        w.flush()?;
    }

    for m in METRICS {
        if let Some(svg) = metric_chart(report, m) {
            fs::write(dir.join(format!("{}.svg", m.name())), svg)?;
        }
    }

    if !report.scp.is_empty() {
        let mut w = create(&dir.join("scp_regions.csv"))?;
        writeln!(w, "perturbation,variant,count,hold,predictive,reactive")?;
        for s in &report.scp {
            writeln!(
                w,
                "{},{},{},{:.6},{:.6},{:.6}",
                s.perturbation,
                s.variant.name(),
                s.count,
                s.mean.hold,
                s.mean.predictive,
                s.mean.reactive
            )?;
        }
        w.flush()?;
        if let Some(svg) = scp_chart(&report.scp) {
            fs::write(dir.join("scp_regions.svg"), svg)?;
        }
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Reads a `report.json` written by [`write_report`].
pub fn read_report(path: &Path) -> Result<RunReport, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::from(e).at("report", path))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| HarnessError::from(e).at("report", path))
}
