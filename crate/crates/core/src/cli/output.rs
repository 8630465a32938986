//! CSV series, JSON summaries and the optional plotting script.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::harness::{MonteCarloSummary, RunRecord};

pub const CSV_HEADER: &str = "t,e_A_norm,e_b_norm,e_R_norm,e_R_polar_norm,V,V_bound";
pub const MONTE_CARLO_HEADER: &str = "trial,seed,converged,final_error,a_fit,residual_rms,max_v_ratio,decay_passed";

/// One parsed CSV row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvRow {
    pub t: f64,
    pub e_a: f64,
    pub e_b: f64,
    pub e_r: f64,
    pub e_r_polar: f64,
    pub v: f64,
    pub v_bound: f64,
}

fn num(x: f64) -> String {
    format!("{x:.15e}")
}

/// The run as CSV: fixed header, 16 significant digits, LF line endings.
pub fn run_csv(record: &RunRecord) -> String {
    let mut out = String::with_capacity(128 * (record.samples.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for s in &record.samples {
        let fields = [s.t, s.e_a, s.e_b, s.e_r, s.e_r_polar, s.v, s.v_bound].map(num);
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_run_csv(text: &str) -> Result<Vec<CsvRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(CSV_HEADER) => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let values = line
                .split(',')
                .map(|f| f.parse::<f64>().map_err(|e| format!("row {}: {e}", i + 1)))
                .collect::<Result<Vec<f64>, String>>()?;
            match values[..] {
                [t, e_a, e_b, e_r, e_r_polar, v, v_bound] => Ok(CsvRow {
                    t,
                    e_a,
                    e_b,
                    e_r,
                    e_r_polar,
                    v,
                    v_bound,
                }),
                _ => Err(format!("row {}: expected 7 columns, got {}", i + 1, values.len())),
            }
        })
        .collect()
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NaN".to_string(), num)
}

pub fn monte_carlo_csv(summary: &MonteCarloSummary) -> String {
    let mut out = String::new();
    out.push_str(MONTE_CARLO_HEADER);
    out.push('\n');
    for t in &summary.trials {
        let decay = t.decay_passed.map_or("NA", |p| if p { "true" } else { "false" });
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            t.index,
            t.seed,
            t.converged,
            num(t.final_error),
            opt(t.a_fit),
            opt(t.residual_rms),
            opt(t.max_v_ratio),
            decay
        )
        .expect("writing to a String");
    }
    out
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("summaries serialize");
    text.push('\n');
    text
}

/// Python/matplotlib script plotting the listed CSV files.
pub fn plot_script(csv_files: &[&str]) -> String {
    let files = csv_files.iter().map(|f| format!("{f:?}")).collect::<Vec<_>>().join(", ");
    format!(
        r#"#!/usr/bin/env python3
# Plots error norms from gyrobs CSV output. Run from the output directory.
import csv
import sys

import matplotlib.pyplot as plt

FILES = [{files}]
COLUMNS = ["e_A_norm", "e_b_norm", "e_R_polar_norm", "V"]


def load(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return {{k: [float(r[k]) for r in rows] for k in rows[0]}}


fig, axes = plt.subplots(len(COLUMNS), 1, sharex=True, figsize=(8, 10))
for path in FILES:
    data = load(path)
    for ax, col in zip(axes, COLUMNS):
        ax.semilogy(data["t"], data[col], label=path)
        ax.set_ylabel(col)
axes[-1].set_xlabel("t [s]")
axes[0].legend()
fig.tight_layout()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else "errors.png", dpi=150)
"#
    )
}

/// Writes `contents` to `dir/name`, creating `dir` as needed.
pub fn write_file(dir: &Path, name: &str, contents: &str) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_rejects_wrong_shape() {
        assert!(parse_run_csv("t,x\n").is_err());
        let bad = format!("{CSV_HEADER}\n1,2,3\n");
        assert!(parse_run_csv(&bad).is_err());
        let nan = format!("{CSV_HEADER}\n0,1,2,3,NaN,NaN,NaN\n");
        assert!(parse_run_csv(&nan).unwrap()[0].v.is_nan());
    }

    #[test]
    fn number_format_keeps_sixteen_digits() {
        assert_eq!(num(0.1), "1.000000000000000e-1");
        assert_eq!(num(f64::NAN), "NaN");
        assert_eq!(num(1.0 / 3.0).parse::<f64>().unwrap(), 0.3333333333333333);
    }
}
