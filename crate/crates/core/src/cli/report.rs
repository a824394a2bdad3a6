use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::datastore::Satellite;
use crate::error::{Error, Result};
use crate::models::ModelKind;

/// One (satellite, model, band combination) result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub satellite: Satellite,
    pub model: ModelKind,
    pub combination: String,
    /// `H×W×B` for single images, `T×H×W×B` for time series.
    pub dims: String,
    pub f1: Option<f64>,
    /// Signed deviation from the satellite's baseline row.
    pub gain: Option<f64>,
    pub baseline: bool,
    /// `ok`, or `skipped:<reason>`.
    pub status: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Markdown,
    Text,
}

impl Format {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "md" => Ok(Format::Markdown),
            "txt" => Ok(Format::Text),
            other => Err(Error::Usage(format!("unknown report format {other:?}; expected md or txt"))),
        }
    }
}

/// Satellite canonical order, then F1 descending; skipped rows last.
fn sorted(rows: &[&ReportRow]) -> Vec<ReportRow> {
    let mut v: Vec<ReportRow> = rows.iter().map(|r| (*r).clone()).collect();
    v.sort_by(|a, b| {
        a.satellite
            .cmp(&b.satellite)
            .then(b.f1.unwrap_or(f64::NEG_INFINITY).total_cmp(&a.f1.unwrap_or(f64::NEG_INFINITY)))
            .then(a.combination.cmp(&b.combination))
    });
    v
}

fn is_rgb(r: &ReportRow) -> bool {
    r.combination == "R+G+B"
}

fn fmt_f1(r: &ReportRow) -> String {
    match r.f1 {
        Some(f) => format!("{f:.4}"),
        None => r.status.clone(),
    }
}

fn fmt_gain(g: Option<f64>) -> String {
    g.map(|g| format!("{g:+.4}")).unwrap_or_default()
}

fn table(out: &mut String, format: Format, title: &str, header: &[&str], body: &[Vec<String>]) {
    match format {
        Format::Markdown => {
            let _ = writeln!(out, "## {title}\n");
            let _ = writeln!(out, "| {} |", header.join(" | "));
            let _ = writeln!(out, "|{}|", header.iter().map(|_| "---").collect::<Vec<_>>().join("|"));
            for row in body {
                let _ = writeln!(out, "| {} |", row.join(" | "));
            }
        }
        Format::Text => {
            let _ = writeln!(out, "{title}\n{}", "=".repeat(title.chars().count()));
            let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
            for row in body {
                for (w, c) in widths.iter_mut().zip(row) {
                    *w = (*w).max(c.chars().count());
                }
            }
            let line = |cells: Vec<String>| {
                let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, &w)| format!("{c:<w$}")).collect();
                padded.join("  ").trim_end().to_string()
            };
            let _ = writeln!(out, "{}", line(header.iter().map(|h| h.to_string()).collect()));
            let _ = writeln!(out, "{}", widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  "));
            for row in body {
                let _ = writeln!(out, "{}", line(row.clone()));
            }
        }
    }
    out.push('\n');
}

/// Spatial, spatio-spectral, spatio-temporal and spectro-temporal tables.
pub fn render_tables(rows: &[ReportRow], format: &str) -> Result<String> {
    let format = Format::parse(format)?;
    if rows.is_empty() {
        return Err(Error::Contract("no report rows to render".into()));
    }
    let pick = |model: ModelKind, rgb_only: bool| -> Vec<ReportRow> {
        let chosen: Vec<&ReportRow> = rows.iter().filter(|r| r.model == model && (!rgb_only || is_rgb(r))).collect();
        sorted(&chosen)
    };
    let mut out = String::new();
    let sections = [
        ("Spatial: single-image RGB", ModelKind::Cnn, true),
        ("Spatio-spectral: single-image band combinations", ModelKind::Cnn, false),
        ("Spatio-temporal: RGB time series", ModelKind::Psetae, true),
        ("Spectro-temporal: band combinations over time", ModelKind::Psetae, false),
    ];
    for (title, model, rgb_only) in sections {
        let selected = pick(model, rgb_only);
        if rgb_only {
            let body: Vec<Vec<String>> = selected.iter().map(|r| vec![r.satellite.to_string(), r.dims.clone(), fmt_f1(r)]).collect();
            table(&mut out, format, title, &["Satellite", "Input Dimension", "F1"], &body);
        } else {
            let body: Vec<Vec<String>> = selected
                .iter()
                .map(|r| vec![r.satellite.to_string(), r.combination.clone(), r.dims.clone(), fmt_f1(r), fmt_gain(r.gain)])
                .collect();
            table(&mut out, format, title, &["Satellite", "Bands", "Input Dimension", "F1", "Gain/Loss"], &body);
        }
    }
    Ok(out)
}
