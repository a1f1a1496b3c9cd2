use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::{RateFit, RateReport, RateRow};
use crate::{Error, Result};

pub const CSV_HEADER: &str = "delta,alpha,bregman_error,phi_delta,ratio,residual_norm,converged";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Text,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "text" | "txt" => Ok(Self::Text),
            other => Err(Error::Parse(format!("unknown report format '{other}'"))),
        }
    }
}

/// Header plus one line per row; floats in scientific notation with 17 significant digits.
pub fn render_csv(report: &RateReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.delta, r.alpha, r.bregman_error, r.phi_delta, r.ratio, r.residual_norm, r.converged
        )
        .expect("writing to a String");
    }
    out
}

fn fit_line(name: &str, fit: &Option<RateFit>) -> String {
    match fit {
        Some(f) => format!("{name}: exponent {:.6} (rms residual {:.3e})", f.exponent, f.residual),
        None => format!("{name}: n/a"),
    }
}

/// Aligned table followed by the summary block.
pub fn render_text(report: &RateReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>12} {:>12} {:>14} {:>12} {:>12} {:>12} {:>9}",
        "delta", "alpha", "bregman_error", "phi_delta", "ratio", "residual", "converged"
    );
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{:>12.4e} {:>12.4e} {:>14.6e} {:>12.4e} {:>12.4e} {:>12.4e} {:>9}",
            r.delta, r.alpha, r.bregman_error, r.phi_delta, r.ratio, r.residual_norm, r.converged
        );
    }
    let s = &report.summary;
    let _ = writeln!(out, "\nsummary");
    let _ = writeln!(out, "  certification: {}", s.certification);
    let _ = writeln!(out, "  max ratio: {:.6e}", s.max_ratio);
    let _ = writeln!(out, "  coarsest ratio: {:.6e}", s.coarsest_ratio);
    let _ = writeln!(out, "  lower-half max ratio: {:.6e} (bound {:.6e})", s.lower_half_max_ratio, s.ratio_bound);
    let _ = writeln!(out, "  {}", fit_line("power fit", &s.power_fit));
    let _ = writeln!(out, "  {}", fit_line("logarithmic fit", &s.log_fit));
    match s.delta_max {
        Some(d) => {
            let _ = writeln!(out, "  containment delta_max: {d:.4e}");
        }
        None => {
            let _ = writeln!(out, "  containment delta_max: none");
        }
    }
    let _ = writeln!(out, "  estimate-chain violations: {}", s.bound_violations);
    if let Some(m) = s.max_alpha_mismatch {
        let _ = writeln!(out, "  parameter-choice mismatch (G inverse vs f): {m:.3e}");
    }
    let _ = writeln!(out, "  result: {}", if s.pass { "PASS" } else { "FAIL" });
    out
}

/// Parses a CSV produced by [`render_csv`] back into rows.
pub fn parse_csv(text: &str) -> Result<Vec<RateRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => return Err(Error::Parse(format!("unexpected CSV header {other:?}"))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(Error::Parse(format!("row {}: expected 7 fields, got {}", i + 1, fields.len())));
            }
            let num = |k: usize| -> Result<f64> {
                fields[k].trim().parse().map_err(|e| Error::Parse(format!("row {}, field {}: {e}", i + 1, k + 1)))
            };
            let converged = fields[6]
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("row {}, converged flag: {e}", i + 1)))?;
            Ok(RateRow {
                delta: num(0)?,
                alpha: num(1)?,
                bregman_error: num(2)?,
                phi_delta: num(3)?,
                ratio: num(4)?,
                residual_norm: num(5)?,
                converged,
            })
        })
        .collect()
}

/// Writes the report in the given format, creating parent directories.
pub fn emit_report(report: &RateReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let body = match format {
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Text => render_text(report),
    };
    std::fs::write(path, body)?;
    Ok(())
}
