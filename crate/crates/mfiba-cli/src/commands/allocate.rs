//! `allocate`: closed-form bit allocation for a rate target, reported as
//! per-scale rates and the quality assignment they invert to.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use serde_json::json;

use mfiba_core::allocator::{budget_to_phi, solve_for_target, AllocationProblem, RateTarget};
use mfiba_core::mfip::predict_weights;
use mfiba_core::task::BoundEvaluator;

use crate::commands::{emit, load_model, load_pyramid, write_json};
use crate::config::RunConfig;

#[derive(Debug, clap::Args)]
pub struct AllocateArgs {
    /// Rate-control multiplier (direct allocation).
    #[arg(long, conflicts_with_all = ["total_bits", "bpp"])]
    pub lambda: Option<f64>,
    /// Total-bits ceiling the allocation must land at or under.
    #[arg(long, conflicts_with = "bpp")]
    pub total_bits: Option<f64>,
    /// Bits-per-element ceiling (total bits over base-scale elements).
    #[arg(long)]
    pub bpp: Option<f64>,
    /// Predict weights from this pyramid instead of using the model's.
    #[arg(long)]
    pub pyramid: Option<PathBuf>,
    /// Model file override.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Object-size parameter assumed for the loaded pyramid.
    #[arg(long)]
    pub size_param: Option<f64>,
}

/// Picks the rate target from flags, falling back to the configured one.
pub(crate) fn resolve_target(
    cfg: &RunConfig,
    lambda: Option<f64>,
    total_bits: Option<f64>,
    bpp: Option<f64>,
) -> Result<RateTarget> {
    match (lambda, total_bits, bpp) {
        (Some(l), None, None) => Ok(RateTarget::LambdaPrime(l)),
        (None, Some(b), None) => Ok(RateTarget::TotalBits(b)),
        (None, None, Some(b)) => Ok(RateTarget::Bpp(b)),
        (None, None, None) => match cfg.rate_target {
            Some(spec) => Ok(spec.to_target()),
            None => bail!(
                "no rate target: give --lambda, --total-bits, or --bpp, \
                 or set rate_target in the config"
            ),
        },
        _ => bail!("give at most one of --lambda, --total-bits, --bpp"),
    }
}

pub fn run(cfg: &RunConfig, out: Option<&Path>, args: &AllocateArgs) -> Result<()> {
    let target = resolve_target(cfg, args.lambda, args.total_bits, args.bpp)?;
    let model_path = args.model.as_deref().unwrap_or(&cfg.model_file);
    let models = load_model(model_path)?.to_models()?;
    let codec = cfg.codec_config();

    let weights = match &args.pyramid {
        None => models.weights.clone(),
        Some(path) => {
            let size_param = args.size_param.unwrap_or(cfg.synth.object_size_param);
            let pyramid = load_pyramid(path, size_param)?;
            let detector = cfg.evaluator.detector()?;
            let evaluator = BoundEvaluator {
                detector: &detector,
                reference: &pyramid,
            };
            predict_weights(&pyramid, &cfg.probe_qualities()?, &codec, &evaluator)?.weights
        }
    };

    let problem = AllocationProblem::from_models(&models, &weights)?;
    let budget = solve_for_target(&problem, &target)?;
    let assignment = budget_to_phi(&budget, &models.rate_phi, (codec.phi_min, codec.phi_max))?;

    let report = json!({
        "lambda_prime": budget.lambda_prime,
        "rates": budget.rates,
        "total_bits": budget.total_bits(),
        "bpp": budget.bpp(),
        "phis": assignment.phis,
        "clamped": assignment.clamped,
        "weights": weights.values,
        "provenance": weights.provenance,
        "config": cfg.snapshot(),
    });
    if let Some(path) = out {
        write_json(path, &report)?;
    }
    emit(serde_json::to_string_pretty(&report)?);
    Ok(())
}
