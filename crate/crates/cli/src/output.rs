// Copyright 2026 The qdswitch Authors
// SPDX-License-Identifier: Apache-2.0

//! Curve files, the machine-readable result and the text summary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::ValueEnum;
use qdswitch::protocol::Curve;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub units: String,
    pub command: String,
    pub config_hash: String,
}

#[derive(Serialize, Deserialize)]
struct JsonCurve {
    x: Vec<f64>,
    y: Vec<f64>,
    sigma: Option<Vec<f64>>,
    meta: Meta,
}

/// Seventeen significant digits: enough to read every value back exactly.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn emit_curve(curve: &Curve, format: Format, path: &Path, meta: &Meta) -> anyhow::Result<()> {
    let bytes = match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
            w.write_record(["x", "y", "sigma"])?;
            for i in 0..curve.len() {
                let s = curve.sigma.as_ref().map(|s| num(s[i])).unwrap_or_default();
                w.write_record([num(curve.x[i]), num(curve.y[i]), s])?;
            }
            w.into_inner().context("flushing csv")?
        }
        Format::Json => {
            let doc = JsonCurve { x: curve.x.clone(), y: curve.y.clone(), sigma: curve.sigma.clone(), meta: meta.clone() };
            let mut text = serde_json::to_string_pretty(&doc)?;
            text.push('\n');
            text.into_bytes()
        }
    };
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Reads a curve written by [`emit_curve`] (or any CSV with an `x,y[,sigma]`
/// header). The format follows the file extension.
pub fn read_curve(path: &Path) -> anyhow::Result<Curve> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let curve = if path.extension().is_some_and(|e| e == "json") {
        #[derive(Deserialize)]
        struct Bare {
            x: Vec<f64>,
            y: Vec<f64>,
            #[serde(default)]
            sigma: Option<Vec<f64>>,
        }
        let b: Bare = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Curve { x: b.x, y: b.y, sigma: b.sigma }
    } else {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.len() < 2 || header[0] != "x" || header[1] != "y" {
            bail!("{}: expected header x,y[,sigma], got {}", path.display(), header.join(","));
        }
        let (mut x, mut y, mut sigma, mut any_sigma) = (Vec::new(), Vec::new(), Vec::new(), false);
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |k: usize| -> anyhow::Result<Option<f64>> {
                match rec.get(k).filter(|s| !s.is_empty()) {
                    None => Ok(None),
                    Some(s) => s.parse().map(Some).with_context(|| format!("{}: row {} column {k}", path.display(), line + 2)),
                }
            };
            x.push(field(0)?.context("missing x")?);
            y.push(field(1)?.context("missing y")?);
            let s = field(2)?;
            any_sigma |= s.is_some();
            sigma.push(s);
        }
        let sigma = if any_sigma {
            Some(sigma.into_iter().map(|s| s.context("sigma given for some rows only")).collect::<anyhow::Result<_>>()?)
        } else {
            None
        };
        Curve { x, y, sigma }
    };
    curve.validate().with_context(|| format!("invalid curve in {}", path.display()))?;
    Ok(curve)
}

/// A named scalar with its unit, shown in the summary and the result file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scalar {
    pub name: String,
    pub value: f64,
    pub unit: String,
    /// One-standard-deviation uncertainty from a fit, when there is one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct NamedCurve {
    pub name: String,
    pub units: String,
    pub curve: Curve,
}

/// Everything a command produced.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub scalars: Vec<Scalar>,
    pub curves: Vec<NamedCurve>,
    /// Structured detail (fit diagnostics, numerical health, ...).
    pub details: serde_json::Map<String, Value>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn scalar(&mut self, name: &str, value: f64, unit: &str) {
        self.scalars.push(Scalar { name: name.into(), value, unit: unit.into(), std_error: None });
    }

    pub fn fitted(&mut self, name: &str, value: f64, std_error: f64, unit: &str) {
        self.scalars.push(Scalar { name: name.into(), value, unit: unit.into(), std_error: Some(std_error) });
    }

    pub fn curve(&mut self, name: &str, units: &str, curve: Curve) {
        self.curves.push(NamedCurve { name: name.into(), units: units.into(), curve });
    }

    pub fn detail(&mut self, key: &str, value: impl Serialize) {
        self.details.insert(key.into(), serde_json::to_value(value).expect("detail serializes"));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.scalars.iter().find(|s| s.name == name).map(|s| s.value)
    }
}

/// Writes curves, then `result.json`, then `summary.txt`. Returns the paths
/// in that order.
pub fn write_report(report: &Report, dir: &Path, format: Format, command: &str, config_hash: &str) -> anyhow::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    for c in &report.curves {
        let path = dir.join(format!("{}.{}", c.name, format.extension()));
        let meta = Meta { units: c.units.clone(), command: command.into(), config_hash: config_hash.into() };
        emit_curve(&c.curve, format, &path, &meta)?;
        written.push(path);
    }

    let result = serde_json::json!({
        "command": command,
        "config_hash": config_hash,
        "scalars": report.scalars,
        "curves": report.curves.iter().map(|c| serde_json::json!({
            "name": c.name,
            "file": format!("{}.{}", c.name, format.extension()),
            "units": c.units,
            "points": c.curve.len(),
        })).collect::<Vec<_>>(),
        "details": report.details,
        "notes": report.notes,
    });
    let path = dir.join("result.json");
    fs::write(&path, serde_json::to_string_pretty(&result)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    written.push(path);

    let path = dir.join("summary.txt");
    fs::write(&path, summary(report, command, config_hash)).with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    Ok(written)
}

pub fn summary(report: &Report, command: &str, config_hash: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "qdswitch {command}");
    let _ = writeln!(s, "config sha256 {config_hash}");
    let _ = writeln!(s);
    let width = report.scalars.iter().map(|x| x.name.len()).max().unwrap_or(0);
    for x in &report.scalars {
        let err = x.std_error.map(|e| format!(" ± {e:.3e}")).unwrap_or_default();
        let _ = writeln!(s, "{:<width$}  {:>14.6e}{err} {}", x.name, x.value, x.unit);
    }
    if !report.curves.is_empty() {
        let _ = writeln!(s);
        for c in &report.curves {
            let _ = writeln!(s, "curve {} ({} points): {}", c.name, c.curve.len(), c.units);
        }
    }
    for n in &report.notes {
        let _ = writeln!(s, "note: {n}");
    }
    s
}
