use std::io::Write;
use std::path::Path;

use anyhow::Result;
use rankaxis_core::experiments::{emit_report, render_report, Report, ReportFormat};
use serde::Serialize;

use crate::{GlobalOpts, ReportOut};

/// Prints one value: JSON by default, `key: value` lines with `--pretty`.
pub fn print_value<T: Serialize>(g: &GlobalOpts, value: &T) -> Result<()> {
    let json = serde_json::to_value(value)?;
    let mut out = std::io::stdout().lock();
    match (&json, g.pretty) {
        (serde_json::Value::Object(map), true) => {
            let width = map.keys().map(String::len).max().unwrap_or(0);
            for (k, v) in map {
                let text = match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                writeln!(out, "{k:width$}  {text}")?;
            }
        }
        _ => writeln!(out, "{json}")?,
    }
    Ok(())
}

pub fn print_json_line<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn format_from_extension(path: &Path) -> ReportFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => ReportFormat::Csv,
        Some("md") | Some("markdown") => ReportFormat::Markdown,
        _ => ReportFormat::Json,
    }
}

pub fn write_reports(g: &GlobalOpts, dest: &ReportOut, reports: &[Report]) -> Result<()> {
    match &dest.out {
        Some(path) => {
            let format = dest.format.unwrap_or_else(|| format_from_extension(path));
            emit_report(reports, path, format)?;
            log::info!("wrote {}", path.display());
        }
        None => {
            let format = dest.format.unwrap_or(if g.pretty {
                ReportFormat::Markdown
            } else {
                ReportFormat::Json
            });
            let text = render_report(reports, format)?;
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                writeln!(out)?;
            }
        }
    }
    Ok(())
}
