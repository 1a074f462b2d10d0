use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::aggregate::{CellReport, RunReport};
use super::config::SensHeadline;
use super::RunError;
use crate::data::DistributionKind;
use crate::metrics::MetricSummary;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
    Json,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Csv, ReportFormat::Markdown, ReportFormat::Json];

    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Csv => "report.csv",
            ReportFormat::Markdown => "report.md",
            ReportFormat::Json => "report.json",
        }
    }

    pub fn render(self, report: &RunReport) -> Result<String, RunError> {
        match self {
            ReportFormat::Csv => render_csv(report),
            ReportFormat::Markdown => Ok(render_markdown(report)),
            ReportFormat::Json => serde_json::to_string_pretty(report)
                .map(|s| s + "\n")
                .map_err(|e| RunError::Corrupt(e.to_string())),
        }
    }
}

/// Writes `report.{csv,md,json}` (as requested) into `dir`.
pub fn emit_report(report: &RunReport, dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>, RunError> {
    if report.cells.is_empty() {
        return Err(RunError::Config("report has no cells".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    let mut written = Vec::new();
    for f in formats {
        let path = dir.join(f.file_name());
        std::fs::write(&path, f.render(report)?).map_err(|e| RunError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

const METRICS: [&str; 6] = ["pc", "sim", "sens", "sens_abs", "recall5", "ndcg5"];

fn metrics(c: &CellReport) -> [Option<&MetricSummary>; 6] {
    [
        c.pc.as_ref(),
        c.sim.as_ref(),
        c.sens.as_ref(),
        c.sens_abs.as_ref(),
        c.recall_at_5.as_ref(),
        c.ndcg_at_5.as_ref(),
    ]
}

/// One row per cell; floats at full precision so they parse back exactly.
pub fn render_csv(report: &RunReport) -> Result<String, RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = [
        "dataset",
        "distribution",
        "k",
        "strategy",
        "samples",
        "trials",
        "failed_trials",
        "failed_outputs",
        "repaired_outputs",
        "backend_errors",
        "calls",
        "unshuffled",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for m in METRICS {
        header.extend([format!("{m}_mean"), format!("{m}_std"), format!("{m}_n")]);
    }
    let csv_err = |e: csv::Error| RunError::Corrupt(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for c in &report.cells {
        let mut row = vec![
            report.dataset.clone(),
            c.distribution.as_str().to_owned(),
            c.k.to_string(),
            c.strategy.clone(),
            c.samples.to_string(),
            c.trials.to_string(),
            c.failed_trials.to_string(),
            c.failed_outputs.to_string(),
            c.repaired_outputs.to_string(),
            c.backend_errors.to_string(),
            c.calls.to_string(),
            c.unshuffled.to_string(),
        ];
        for m in metrics(c) {
            match m {
                Some(s) => row.extend([s.mean.to_string(), s.std.to_string(), s.count.to_string()]),
                None => row.extend([String::new(), String::new(), "0".into()]),
            }
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| RunError::Corrupt(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| RunError::Corrupt(e.to_string()))
}

fn fmt(m: Option<&MetricSummary>) -> String {
    m.map_or_else(|| "n/a".to_owned(), MetricSummary::display)
}

fn sens_label(which: SensHeadline) -> &'static str {
    match which {
        SensHeadline::Signed => "Sens ↓",
        SensHeadline::Absolute => "\\|Sens\\| ↓",
    }
}

fn metric_cells(c: &CellReport, which: SensHeadline) -> String {
    format!(
        "{} | {} | {} | {} | {}",
        fmt(c.pc.as_ref()),
        fmt(c.sim.as_ref()),
        fmt(c.sens_headline(which)),
        fmt(c.recall_at_5.as_ref()),
        fmt(c.ndcg_at_5.as_ref())
    )
}

pub fn render_markdown(report: &RunReport) -> String {
    let mut out = String::new();
    let sens = sens_label(report.sens_headline);
    let metric_header = format!("PC ↑ | Sim ↑ | {sens} | Recall@5 ↑ | NDCG@5 ↑");
    let _ = writeln!(out, "# Position bias: {}\n", report.dataset);
    let _ = writeln!(
        out,
        "Mean ± population std over {} samples per cell, {} trials per sample. Config `{}`.\n",
        report.sample_count,
        report.trials_per_sample,
        &report.config_hash[..12.min(report.config_hash.len())]
    );

    let main = report.distributions.first().copied().unwrap_or(DistributionKind::Full);
    let _ = writeln!(out, "## Strategies ({} distribution)\n", main.as_str());
    let _ = writeln!(out, "| Strategy | K | {metric_header} |");
    let _ = writeln!(out, "|---|---:|---|---|---|---|---|");
    for s in &report.strategies {
        for &k in &report.k_values {
            if let Some(c) = report.cell(main, k, s) {
                let _ = writeln!(out, "| {s} | {k} | {} |", metric_cells(c, report.sens_headline));
            }
        }
    }

    if report.distributions.len() > 1 {
        let _ = writeln!(out, "\n## Candidate distributions\n");
        let _ = writeln!(out, "| Distribution | Strategy | K | {metric_header} |");
        let _ = writeln!(out, "|---|---|---:|---|---|---|---|---|");
        let mut flagged = false;
        for &d in &report.distributions {
            for s in &report.strategies {
                for &k in &report.k_values {
                    if let Some(c) = report.cell(d, k, s) {
                        let mark = if c.unshuffled { " †" } else { "" };
                        flagged |= c.unshuffled;
                        let _ = writeln!(
                            out,
                            "| {}{mark} | {s} | {k} | {} |",
                            d.as_str(),
                            metric_cells(c, report.sens_headline)
                        );
                    }
                }
            }
        }
        if flagged {
            let _ = writeln!(
                out,
                "\n† Inputs kept in built order (not shuffled); PC pairs each list with its reversal only and similarity is inflated."
            );
        }
    }

    if report.rise_sweep.len() > 1 {
        let _ = writeln!(out, "\n## Iterative selection depth ({} distribution)\n", main.as_str());
        let _ = writeln!(out, "| N | K | {metric_header} |");
        let _ = writeln!(out, "|---:|---:|---|---|---|---|---|");
        for &k in &report.k_values {
            for &n in &report.rise_sweep {
                if let Some(c) = report.cell(main, k, &format!("rise@{n}")) {
                    let _ = writeln!(out, "| {n} | {k} | {} |", metric_cells(c, report.sens_headline));
                }
            }
        }
    }

    let _ = writeln!(out, "\n## Calls and failures\n");
    let _ = writeln!(
        out,
        "| Distribution | Strategy | K | Samples | Trials | Failed trials | Failed outputs | Repaired outputs | Backend errors | Calls |"
    );
    let _ = writeln!(out, "|---|---|---:|---:|---:|---:|---:|---:|---:|---:|");
    for c in &report.cells {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            c.distribution.as_str(),
            c.strategy,
            c.k,
            c.samples,
            c.trials,
            c.failed_trials,
            c.failed_outputs,
            c.repaired_outputs,
            c.backend_errors,
            c.calls
        );
    }
    out
}
