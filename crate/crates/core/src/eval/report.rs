use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{EvalReport, IntentionMetrics, Prf};
use crate::scene::Intention;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    TextTable,
    Csv,
    Json,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::TextTable, ReportFormat::Csv, ReportFormat::Json];

    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::TextTable => "report.txt",
            ReportFormat::Csv => "report.csv",
            ReportFormat::Json => "report.json",
        }
    }
}

pub fn emit_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::TextTable => text_table(report),
        ReportFormat::Csv => csv_rows(report),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
    }
}

const LABEL_W: usize = 12;
const CELL_W: usize = 19;

fn pct(v: f64) -> String {
    format!("{:.1}", v * 100.0)
}

fn cell(prf: Option<Prf>) -> String {
    match prf {
        Some(p) => format!(" {:>5} {:>5} {:>5} ", pct(p.precision), pct(p.recall), pct(p.f1)),
        None => format!(" {:>5} {:>5} {:>5} ", "-", "-", "-"),
    }
}

fn row_prf(m: Option<&IntentionMetrics>, class: Option<Intention>) -> Option<Prf> {
    m.map(|m| match class {
        Some(c) => m.class(c).prf,
        None => m.macro_avg,
    })
}

fn text_table(report: &EvalReport) -> String {
    let mut columns: Vec<(String, Option<&IntentionMetrics>)> = report
        .intention
        .iter()
        .map(|b| (b.bucket.interval().to_string(), b.metrics.as_ref()))
        .collect();
    columns.push(("Avg. (T in [0,4])".to_string(), report.intention_overall.as_ref()));

    let mut out = String::from("Intention prediction (%)\n");
    let mut header = format!("{:<LABEL_W$}", "Intention");
    let mut sub = " ".repeat(LABEL_W);
    let mut rule = "-".repeat(LABEL_W);
    for (title, _) in &columns {
        let _ = write!(header, "|{title:^CELL_W$}");
        let _ = write!(sub, "| {:>5} {:>5} {:>5} ", "P", "R", "F1");
        rule.push('+');
        rule.push_str(&"-".repeat(CELL_W));
    }
    for line in [&header, &sub, &rule] {
        out.push_str(line.trim_end());
        out.push('\n');
    }
    let rows = Intention::ALL
        .iter()
        .map(|&c| (c.label(), Some(c)))
        .chain(std::iter::once(("Macro avg.", None)));
    for (label, class) in rows {
        let mut line = format!("{label:<LABEL_W$}");
        for (_, m) in &columns {
            line.push('|');
            line.push_str(&cell(row_prf(*m, class)));
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    if let Some(m) = &report.intention_bucket_mean {
        let _ = writeln!(out, "Bucket-mean macro F1 (%): {}", pct(m.macro_avg.f1));
    }

    out.push_str("\nTrajectory RMSE (m)\n");
    if report.trajectory.is_empty() {
        out.push_str("no real-world samples\n");
    } else {
        let _ = writeln!(
            out,
            "{:<8}|{:>9} |{:>13} |{:>8}",
            "Horizon", "Lateral", "Longitudinal", "Samples"
        );
        for h in &report.trajectory {
            let _ = writeln!(
                out,
                "{:<8}|{:>9.3} |{:>13.3} |{:>8}",
                format!("{} s", h.horizon_s),
                h.lateral,
                h.longitudinal,
                h.samples
            );
        }
    }

    out.push_str("\nCoT score\n");
    match &report.cot {
        Some(c) => {
            let _ = writeln!(out, "mean {:.2} over {} samples", c.mean, c.samples);
            let dist: Vec<String> = c.distribution.iter().rev().map(|(s, n)| format!("{s}:{n}")).collect();
            let _ = writeln!(out, "distribution {}", dist.join(" "));
        }
        None => out.push_str("no annotated samples\n"),
    }

    let _ = writeln!(
        out,
        "\nFailed cases: intention {}, trajectory {} (of {} records)",
        report.failed_cases.intention, report.failed_cases.trajectory, report.total_records
    );
    let counts: Vec<String> = report.sample_counts.iter().map(|(s, n)| format!("{s} {n}")).collect();
    let counts = if counts.is_empty() {
        "none".to_string()
    } else {
        counts.join(", ")
    };
    let _ = writeln!(out, "Samples per stratum: {counts}");
    for note in &report.notes {
        let _ = writeln!(out, "Note: {note}");
    }
    out
}

/// Long format: `section,group,key,metric,value`. Floats use the shortest
/// representation that parses back to the same value.
fn csv_rows(report: &EvalReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut row = |section: &str, group: &str, key: &str, metric: &str, value: String| {
        w.write_record([section, group, key, metric, value.as_str()])
            .expect("in-memory csv write");
    };
    row("section", "group", "key", "metric", "value".into());

    let mut intention = |group: &str, m: &IntentionMetrics| {
        let classes = m.classes.iter().map(|c| (c.class.label(), c.prf, Some(c.support)));
        for (key, prf, support) in classes.chain(std::iter::once(("macro", m.macro_avg, None))) {
            row("intention", group, key, "precision", prf.precision.to_string());
            row("intention", group, key, "recall", prf.recall.to_string());
            row("intention", group, key, "f1", prf.f1.to_string());
            if let Some(s) = support {
                row("intention", group, key, "support", s.to_string());
            }
        }
        row("intention", group, "all", "samples", m.samples.to_string());
    };
    for b in &report.intention {
        if let Some(m) = &b.metrics {
            intention(b.bucket.as_str(), m);
        }
    }
    if let Some(m) = &report.intention_overall {
        intention("avg", m);
    }
    if let Some(m) = &report.intention_bucket_mean {
        intention("bucket_mean", m);
    }
    for h in &report.trajectory {
        let g = h.horizon_s.to_string();
        row("trajectory", &g, "rmse", "lateral", h.lateral.to_string());
        row("trajectory", &g, "rmse", "longitudinal", h.longitudinal.to_string());
        row("trajectory", &g, "rmse", "samples", h.samples.to_string());
    }
    if let Some(c) = &report.cot {
        row("cot", "all", "score", "mean", c.mean.to_string());
        row("cot", "all", "score", "samples", c.samples.to_string());
        for (score, n) in &c.distribution {
            row("cot", "distribution", &score.to_string(), "count", n.to_string());
        }
    }
    row(
        "failed_cases",
        "all",
        "intention",
        "count",
        report.failed_cases.intention.to_string(),
    );
    row(
        "failed_cases",
        "all",
        "trajectory",
        "count",
        report.failed_cases.trajectory.to_string(),
    );
    row("records", "all", "total", "count", report.total_records.to_string());
    for (stratum, n) in &report.sample_counts {
        row("sample_counts", "all", &stratum.to_string(), "count", n.to_string());
    }
    for (i, note) in report.notes.iter().enumerate() {
        row("notes", "all", &i.to_string(), "text", note.clone());
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8 csv")
}
