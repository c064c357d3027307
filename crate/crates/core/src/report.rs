//! Result-table rendering: four method rows plus the untrained-probe row,
//! in a structured line-delimited form and a human-readable table.
//!
//! Rendering is byte-deterministic given its inputs, and the structured
//! form parses back to exactly what was rendered. Fields that were not
//! measured render as "-".

use crate::error::RunError;
use crate::experiment::MethodId;
use serde::{Deserialize, Serialize};

/// One method row: accuracies per realization mode, the training-sample
/// count, and the forgetting delta when measured. Wall time is optional and
/// excluded from the structured output so report files stay byte-identical
/// across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: MethodId,
    pub accuracy_lexicalized: f64,
    pub accuracy_delexicalized: f64,
    pub training_samples_used: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub forgetting_delta: Option<f64>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time_secs: Option<f64>,
}

/// The untrained-encoder 1-NN probe row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub accuracy_lexicalized: f64,
    pub accuracy_delexicalized: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "row", rename_all = "kebab-case")]
enum ReportRow {
    Method(EvalReport),
    UntrainedProbe(ProbeReport),
}

/// Output forms of [`render_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Human-readable aligned table.
    Table,
    /// One JSON record per row; parseable by [`parse_report`].
    Jsonl,
}

impl std::str::FromStr for ReportFormat {
    type Err = RunError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "jsonl" => Ok(ReportFormat::Jsonl),
            other => Err(RunError::Config(format!(
                "unknown report format {other:?}; expected table or jsonl"
            ))),
        }
    }
}

fn fmt_accuracy(a: f64) -> String {
    format!("{:.1}%", a * 100.0)
}

fn fmt_delta(d: Option<f64>) -> String {
    match d {
        Some(d) => format!("{:+.1}%", d * 100.0),
        None => "-".to_string(),
    }
}

/// Renders the probe row and all method rows. Byte-deterministic.
pub fn render_report(
    reports: &[EvalReport],
    probe: Option<&ProbeReport>,
    format: ReportFormat,
) -> String {
    match format {
        ReportFormat::Jsonl => {
            let mut out = String::new();
            if let Some(probe) = probe {
                let row = ReportRow::UntrainedProbe(probe.clone());
                out.push_str(&serde_json::to_string(&row).expect("report rows serialize"));
                out.push('\n');
            }
            for report in reports {
                let row = ReportRow::Method(report.clone());
                out.push_str(&serde_json::to_string(&row).expect("report rows serialize"));
                out.push('\n');
            }
            out
        }
        ReportFormat::Table => {
            let mut rows: Vec<[String; 5]> = Vec::new();
            if let Some(probe) = probe {
                rows.push([
                    "Untrained Encoder (1-NN probe)".to_string(),
                    fmt_accuracy(probe.accuracy_lexicalized),
                    fmt_accuracy(probe.accuracy_delexicalized),
                    "-".to_string(),
                    "-".to_string(),
                ]);
            }
            for report in reports {
                rows.push([
                    report.method.display_name().to_string(),
                    fmt_accuracy(report.accuracy_lexicalized),
                    fmt_accuracy(report.accuracy_delexicalized),
                    report.training_samples_used.to_string(),
                    fmt_delta(report.forgetting_delta),
                ]);
            }
            let header = [
                "Model (Method)".to_string(),
                "Accuracy (Lexicalized)".to_string(),
                "Accuracy (Delexicalized)".to_string(),
                "Training Samples".to_string(),
                "Forgetting (Δ↓)".to_string(),
            ];
            let mut widths = [0usize; 5];
            for row in std::iter::once(&header).chain(rows.iter()) {
                for (w, cell) in widths.iter_mut().zip(row.iter()) {
                    *w = (*w).max(cell.chars().count());
                }
            }
            let render_row = |row: &[String; 5]| -> String {
                let cells: Vec<String> = row
                    .iter()
                    .zip(widths.iter())
                    .map(|(cell, w)| format!("{cell:<w$}", w = w))
                    .collect();
                format!("| {} |\n", cells.join(" | "))
            };
            let rule = format!(
                "|{}|\n",
                widths
                    .iter()
                    .map(|w| "-".repeat(w + 2))
                    .collect::<Vec<_>>()
                    .join("|")
            );
            let mut out = render_row(&header);
            out.push_str(&rule);
            for row in &rows {
                out.push_str(&render_row(row));
            }
            out
        }
    }
}

/// Parses a JSONL report back into its rows.
pub fn parse_report(text: &str) -> Result<(Vec<EvalReport>, Option<ProbeReport>), RunError> {
    let mut reports = Vec::new();
    let mut probe = None;
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let row: ReportRow = serde_json::from_str(line)
            .map_err(|e| RunError::Format(format!("report line {}: {e}", i + 1)))?;
        match row {
            ReportRow::Method(r) => reports.push(r),
            ReportRow::UntrainedProbe(p) => probe = Some(p),
        }
    }
    Ok((reports, probe))
}
