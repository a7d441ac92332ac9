//! `evaluate`: rate-accuracy measurement.
//!
//! Two forms:
//! - `--pyramid`: sweep the configured multiplier ladder per mode and write
//!   `runs.csv`, `curves.csv`, and `report.json` into the report directory;
//! - `--candidate`/`--reference`/`--meta`: score one decoded pyramid against
//!   its original and print a single `bpp,accuracy` row, which must agree
//!   with what the sweep reports for the same settings.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;

use mfiba_core::eval::bdrate::bd_rate;
use mfiba_core::eval::report::{curves_csv, runs_csv, RunRecord};
use mfiba_core::eval::{rd_curve, PipelineMode, RdCurve};

use crate::commands::{emit, file_stem_id, load_model, load_pyramid, write_json, write_text};
use crate::config::RunConfig;
use crate::meta::StreamMeta;

#[derive(Debug, clap::Args)]
pub struct EvaluateArgs {
    /// Pyramid to sweep the multiplier ladder on.
    #[arg(long, conflicts_with_all = ["candidate", "reference", "meta"])]
    pub pyramid: Option<PathBuf>,
    /// Pipeline modes to sweep, comma separated
    /// (mfiba, mfiba_finetuned, uniform).
    #[arg(long, value_delimiter = ',', default_value = "mfiba,uniform")]
    pub modes: Vec<String>,
    /// Model file override.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Object-size parameter assumed for the loaded pyramid.
    #[arg(long)]
    pub size_param: Option<f64>,
    /// Decoded pyramid to score (pair form).
    #[arg(long, requires = "reference", requires = "meta")]
    pub candidate: Option<PathBuf>,
    /// Original pyramid the candidate is scored against (pair form).
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Stream metadata sidecar supplying the rate (pair form).
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

fn parse_mode(name: &str) -> Result<PipelineMode> {
    match name {
        "mfiba" => Ok(PipelineMode::Mfiba),
        "mfiba_finetuned" | "finetuned" => Ok(PipelineMode::MfibaFinetuned),
        "uniform" => Ok(PipelineMode::Uniform),
        other => bail!("unknown mode {other:?}; expected mfiba, mfiba_finetuned, or uniform"),
    }
}

pub fn run(cfg: &RunConfig, out: Option<&Path>, args: &EvaluateArgs) -> Result<()> {
    match (&args.pyramid, &args.candidate) {
        (Some(pyramid), None) => sweep(cfg, out, args, pyramid),
        (None, Some(candidate)) => pair(cfg, args, candidate),
        (Some(_), Some(_)) => bail!("give either --pyramid or --candidate, not both"),
        (None, None) => bail!(
            "nothing to evaluate: give --pyramid for a ladder sweep, or \
             --candidate with --reference and --meta for a coded pair"
        ),
    }
}

/// Ladder sweep: one rate-accuracy curve per requested mode.
fn sweep(cfg: &RunConfig, out: Option<&Path>, args: &EvaluateArgs, path: &Path) -> Result<()> {
    if args.modes.is_empty() {
        bail!("no modes to evaluate");
    }
    let modes = args
        .modes
        .iter()
        .map(|m| parse_mode(m))
        .collect::<Result<Vec<_>>>()?;
    if cfg.lambda_set.len() < 2 {
        bail!(
            "lambda_set has {} entries; a curve needs at least 2",
            cfg.lambda_set.len()
        );
    }
    let size_param = args.size_param.unwrap_or(cfg.synth.object_size_param);
    let pyramid = load_pyramid(path, size_param)?;
    let detector = cfg.evaluator.detector()?;
    let model_path = args.model.as_deref().unwrap_or(&cfg.model_file);
    let models = load_model(model_path)?.to_models()?;
    let opts = cfg.pipeline_options();
    let stem = file_stem_id(path);

    let mut records = Vec::new();
    let mut curves: Vec<(PipelineMode, RdCurve)> = Vec::new();
    for &mode in &modes {
        let (curve, runs) = rd_curve(&pyramid, &detector, &models, mode, &cfg.lambda_set, &opts)
            .with_context(|| format!("evaluating mode {}", mode.label()))?;
        for (i, run) in runs.into_iter().enumerate() {
            records.push(RunRecord {
                run_id: format!("{stem}:{}:{i:02}", mode.label()),
                run,
            });
        }
        curves.push((mode, curve));
    }

    let dir = out.unwrap_or(&cfg.report_dir);
    let runs_path = dir.join("runs.csv");
    write_text(&runs_path, &runs_csv(&records)?)?;
    let labeled: Vec<(&str, &RdCurve)> = curves
        .iter()
        .map(|(mode, curve)| (mode.label(), curve))
        .collect();
    let curves_path = dir.join("curves.csv");
    write_text(&curves_path, &curves_csv(&labeled))?;

    // Rate saving of the allocation modes against the uniform baseline,
    // when both sides of that comparison were swept.
    let uniform = curves
        .iter()
        .find(|(mode, _)| *mode == PipelineMode::Uniform)
        .map(|(_, curve)| curve);
    let mut bd_entries = serde_json::Map::new();
    if let Some(anchor) = uniform {
        for (mode, curve) in &curves {
            if *mode == PipelineMode::Uniform {
                continue;
            }
            let percent = bd_rate(curve, anchor)
                .with_context(|| format!("rate difference for {}", mode.label()))?;
            eprintln!(
                "{} vs uniform: {percent:.3}% average rate difference",
                mode.label()
            );
            bd_entries.insert(mode.label().to_string(), json!(percent));
        }
    }

    let report_path = dir.join("report.json");
    write_json(
        &report_path,
        &json!({
            "pyramid": path.display().to_string(),
            "modes": modes.iter().map(|m| m.label()).collect::<Vec<_>>(),
            "lambda_set": cfg.lambda_set,
            "runs_csv": runs_path.display().to_string(),
            "curves_csv": curves_path.display().to_string(),
            "bd_rate_vs_uniform_percent": bd_entries,
            "config": cfg.snapshot(),
        }),
    )?;

    emit(runs_path.display().to_string());
    emit(curves_path.display().to_string());
    emit(report_path.display().to_string());
    Ok(())
}

/// Coded pair: rate from the sidecar, accuracy against the reference.
fn pair(cfg: &RunConfig, args: &EvaluateArgs, candidate_path: &Path) -> Result<()> {
    let reference_path = args
        .reference
        .as_deref()
        .context("pair evaluation needs --reference")?;
    let meta_path = args
        .meta
        .as_deref()
        .context("pair evaluation needs --meta")?;
    let meta = StreamMeta::load(meta_path)?;
    // The sidecar's object-size parameter overrides the configured one: the
    // score must reflect the task the stream was actually coded for.
    let size_param = args.size_param.unwrap_or(meta.object_size_param);
    let reference = load_pyramid(reference_path, size_param)?;
    let candidate = load_pyramid(candidate_path, size_param)?;
    let detector = cfg.evaluator.detector()?;
    let accuracy = detector
        .accuracy(&reference, &candidate)
        .context("scoring the candidate against the reference")?;
    emit("bpp,accuracy");
    emit(format!("{},{}", meta.bpp, accuracy));
    Ok(())
}
