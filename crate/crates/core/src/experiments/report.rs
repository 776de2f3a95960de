use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{BaselineReport, FewShotCurve, TransferReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "report", rename_all = "snake_case")]
pub enum Report {
    Baselines(BaselineReport),
    Curve(FewShotCurve),
    Transfer(TransferReport),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidValue(format!(
                "report format must be csv, markdown or json, got {other:?}"
            ))),
        }
    }
}

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn num(v: f64) -> String {
    format!("{v:.3}")
}

fn matrix_table(corner: &str, names: &[String], m: &[Vec<f64>]) -> Table {
    let mut headers = vec![corner.to_string()];
    headers.extend(names.iter().cloned());
    let rows = names
        .iter()
        .zip(m)
        .map(|(name, row)| {
            std::iter::once(name.clone())
                .chain(row.iter().map(|v| num(*v)))
                .collect()
        })
        .collect();
    Table { headers, rows }
}

impl Report {
    fn tables(&self) -> Vec<Table> {
        match self {
            Report::Baselines(r) => vec![Table {
                headers: ["dataset", "no-train", "linear", "nonlinear"]
                    .map(String::from)
                    .to_vec(),
                rows: r
                    .rows
                    .iter()
                    .map(|row| {
                        vec![
                            row.dataset.clone(),
                            num(row.rho_notrain),
                            num(row.rho_linear),
                            num(row.rho_nonlinear),
                        ]
                    })
                    .collect(),
            }],
            Report::Curve(c) => {
                let size_col = match c.mode {
                    super::CurveMode::LabeledFewShot => "n_train",
                    super::CurveMode::ExtremePairs => "k",
                };
                vec![Table {
                    headers: ["dataset", size_col, "mean_rho", "std_rho"]
                        .map(String::from)
                        .to_vec(),
                    rows: c
                        .points
                        .iter()
                        .map(|p| {
                            vec![
                                c.dataset.clone(),
                                p.size.to_string(),
                                num(p.mean_rho),
                                num(p.std_rho),
                            ]
                        })
                        .collect(),
                }]
            }
            Report::Transfer(t) => vec![
                matrix_table("srcc (axis \\ test)", &t.datasets, &t.srcc_matrix),
                matrix_table("cosine", &t.datasets, &t.cosine_matrix),
            ],
        }
    }
}

fn markdown(tables: &[Table]) -> String {
    let escape = |s: &str| s.replace('|', "\\|");
    let mut out = String::new();
    for (i, t) in tables.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let line = |cells: &[String]| {
            format!(
                "| {} |\n",
                cells.iter().map(|c| escape(c)).collect::<Vec<_>>().join(" | ")
            )
        };
        out.push_str(&line(&t.headers));
        let _ = writeln!(out, "|{}", "---|".repeat(t.headers.len()));
        for row in &t.rows {
            out.push_str(&line(row));
        }
    }
    out
}

fn csv_text(tables: &[Table]) -> Result<String> {
    let mut out = Vec::new();
    for (i, t) in tables.iter().enumerate() {
        if i > 0 {
            out.push(b'\n');
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&t.headers)
            .and_then(|_| t.rows.iter().try_for_each(|r| w.write_record(r)))
            .map_err(|e| Error::Format(e.to_string()))?;
        out.extend(w.into_inner().map_err(|e| Error::Format(e.to_string()))?);
    }
    Ok(String::from_utf8(out).expect("csv output is utf-8"))
}

/// Renders reports: human formats use 3 decimals, JSON keeps full precision.
pub fn render_report(reports: &[Report], format: ReportFormat) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("no reports to emit".into()));
    }
    let tables: Vec<Table> = reports.iter().flat_map(Report::tables).collect();
    match format {
        ReportFormat::Markdown => Ok(markdown(&tables)),
        ReportFormat::Csv => csv_text(&tables),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(reports).map_err(|e| Error::Format(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
    }
}

/// Renders and atomically writes reports to `path`.
pub fn emit_report(reports: &[Report], path: &Path, format: ReportFormat) -> Result<()> {
    let text = render_report(reports, format)?;
    crate::write_atomic(path, text.as_bytes())
}

pub fn parse_reports_json(text: &str) -> Result<Vec<Report>> {
    serde_json::from_str(text).map_err(|e| Error::Format(format!("report JSON: {e}")))
}
