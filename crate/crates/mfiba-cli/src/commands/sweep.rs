//! `sweep`: diagnostic tables. Per-scale quality ladders (the raw material
//! behind importance weights) and weight-versus-object-size profiles.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;

use mfiba_core::eval::report::{sweep_csv, weight_size_csv};
use mfiba_core::eval::{importance_sweep, weight_vs_size};

use crate::commands::{emit, load_pyramid, pyramid_corpus, write_json, write_text};
use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepKind {
    /// Code one scale at a time over the probing ladder and score each
    /// substitution.
    Importance,
    /// Predicted weights as the synthetic object size moves fine to coarse.
    WeightSize,
}

#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    #[arg(long, value_enum, default_value = "importance")]
    pub kind: SweepKind,
    /// Pyramid to sweep (importance); defaults to the first corpus file.
    #[arg(long)]
    pub pyramid: Option<PathBuf>,
    /// Object-size parameter assumed for the loaded pyramid (importance).
    #[arg(long)]
    pub size_param: Option<f64>,
    /// Object-size grid, comma separated (weight-size).
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<f64>,
    /// Seeds to average over, comma separated (weight-size); defaults to
    /// the configured synthesis seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
}

pub fn run(cfg: &RunConfig, out: Option<&Path>, args: &SweepArgs) -> Result<()> {
    match args.kind {
        SweepKind::Importance => importance(cfg, out, args),
        SweepKind::WeightSize => weight_size(cfg, out, args),
    }
}

fn importance(cfg: &RunConfig, out: Option<&Path>, args: &SweepArgs) -> Result<()> {
    let path = match &args.pyramid {
        Some(path) => path.clone(),
        None => pyramid_corpus(&cfg.pyramid_dir)?
            .into_iter()
            .next()
            .expect("corpus listing is never empty"),
    };
    let size_param = args.size_param.unwrap_or(cfg.synth.object_size_param);
    let pyramid = load_pyramid(&path, size_param)?;
    let detector = cfg.evaluator.detector()?;
    let levels = cfg.probe_qualities()?;
    let rows = importance_sweep(&pyramid, &detector, &levels, &cfg.codec_config())
        .with_context(|| format!("sweeping {}", path.display()))?;

    let csv_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.report_dir.join("sweep.csv"));
    write_text(&csv_path, &sweep_csv(&rows))?;
    write_report(
        &csv_path,
        cfg,
        json!({"kind": "importance", "pyramid": path.display().to_string()}),
    )?;
    emit(csv_path.display().to_string());
    Ok(())
}

fn weight_size(cfg: &RunConfig, out: Option<&Path>, args: &SweepArgs) -> Result<()> {
    let sizes = if args.sizes.is_empty() {
        vec![0.0, 0.25, 0.5, 0.75, 1.0]
    } else {
        args.sizes.clone()
    };
    for &s in &sizes {
        if !(s.is_finite() && (0.0..=1.0).contains(&s)) {
            bail!("object size {s}; expected a value in [0, 1]");
        }
    }
    let seeds: Vec<u64> = if !args.seeds.is_empty() {
        args.seeds.clone()
    } else if let Some(seeds) = &cfg.synth.seeds {
        seeds.clone()
    } else {
        (cfg.seed..cfg.seed.saturating_add(cfg.synth.count as u64)).collect()
    };
    if seeds.is_empty() {
        bail!("no seeds to average over; give --seeds or synth.count > 0");
    }
    let rows = weight_vs_size(
        &seeds,
        &sizes,
        &cfg.synth.to_spec(),
        &cfg.codec_config(),
        cfg.probing.levels,
    )
    .context("building the weight-versus-size table")?;

    let csv_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.report_dir.join("weight_size.csv"));
    write_text(&csv_path, &weight_size_csv(&rows)?)?;
    write_report(
        &csv_path,
        cfg,
        json!({"kind": "weight_size", "sizes": sizes, "seeds": seeds}),
    )?;
    emit(csv_path.display().to_string());
    Ok(())
}

/// Sidecar report embedding the configuration snapshot, next to the CSV.
fn write_report(csv_path: &Path, cfg: &RunConfig, mut body: serde_json::Value) -> Result<()> {
    let mut name = csv_path.as_os_str().to_os_string();
    name.push(".report.json");
    let report_path = PathBuf::from(name);
    body["csv"] = json!(csv_path.display().to_string());
    body["config"] = cfg.snapshot();
    write_json(&report_path, &body)
}
