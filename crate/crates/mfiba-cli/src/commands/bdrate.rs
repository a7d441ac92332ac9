//! `bdrate`: average rate difference between two rate-accuracy curve files
//! (CSV with header `mode,bpp,accuracy`, as written by `evaluate`).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;

use mfiba_core::eval::bdrate::bd_rate_detailed;
use mfiba_core::eval::{RdCurve, RdPoint};

use crate::commands::{emit, write_json};
use crate::config::RunConfig;

#[derive(Debug, clap::Args)]
pub struct BdrateArgs {
    /// Curve under test.
    pub test: PathBuf,
    /// Anchor curve the test is compared against.
    pub anchor: PathBuf,
    /// Mode to pick from the test file when it holds several.
    #[arg(long)]
    pub mode: Option<String>,
    /// Mode to pick from the anchor file when it holds several.
    #[arg(long)]
    pub anchor_mode: Option<String>,
}

/// Parses a `mode,bpp,accuracy` CSV into one curve, filtered by mode.
fn read_curve(path: &Path, mode: Option<&str>) -> Result<RdCurve> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading curve file {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .with_context(|| format!("{} is empty", path.display()))?;
    if header.trim() != "mode,bpp,accuracy" {
        bail!(
            "{} header is {header:?}; expected \"mode,bpp,accuracy\"",
            path.display()
        );
    }
    let mut points = Vec::new();
    let mut modes_seen = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            bail!(
                "{} line {}: {} fields, expected 3",
                path.display(),
                lineno + 2,
                fields.len()
            );
        }
        let row_mode = fields[0].trim();
        if !modes_seen.iter().any(|m| m == row_mode) {
            modes_seen.push(row_mode.to_string());
        }
        if let Some(wanted) = mode {
            if row_mode != wanted {
                continue;
            }
        }
        let parse = |field: &str, name: &str| -> Result<f64> {
            field.trim().parse::<f64>().with_context(|| {
                format!(
                    "{} line {}: bad {name} {field:?}",
                    path.display(),
                    lineno + 2
                )
            })
        };
        points.push(RdPoint {
            bpp: parse(fields[1], "bpp")?,
            accuracy: parse(fields[2], "accuracy")?,
        });
    }
    if mode.is_none() && modes_seen.len() > 1 {
        bail!(
            "{} holds {} modes ({}); pick one with --mode / --anchor-mode",
            path.display(),
            modes_seen.len(),
            modes_seen.join(", ")
        );
    }
    if points.is_empty() {
        match mode {
            Some(wanted) => bail!(
                "{} has no rows for mode {wanted:?} (has: {})",
                path.display(),
                modes_seen.join(", ")
            ),
            None => bail!("{} has no data rows", path.display()),
        }
    }
    RdCurve::new(points).with_context(|| format!("curve from {}", path.display()))
}

pub fn run(cfg: &RunConfig, out: Option<&Path>, args: &BdrateArgs) -> Result<()> {
    let test = read_curve(&args.test, args.mode.as_deref())?;
    let anchor = read_curve(&args.anchor, args.anchor_mode.as_deref())?;
    let report = bd_rate_detailed(&test, &anchor).context("comparing the curves")?;

    if let Some(path) = out {
        write_json(
            path,
            &json!({
                "test": args.test.display().to_string(),
                "anchor": args.anchor.display().to_string(),
                "percent": report.percent,
                "accuracy_interval": [report.interval.0, report.interval.1],
                "test_fit": format!("{:?}", report.test_fit),
                "anchor_fit": format!("{:?}", report.anchor_fit),
                "config": cfg.snapshot(),
            }),
        )?;
    }
    emit(format!("{:.3}%", report.percent));
    Ok(())
}
