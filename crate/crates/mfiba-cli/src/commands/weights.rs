//! `weights`: per-scale importance prediction for one pyramid, optionally
//! refined by coordinate descent against the end-to-end coding objective.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::json;

use mfiba_core::allocator::{budget_to_phi, solve_for_target, AllocationProblem, RateTarget};
use mfiba_core::codec::{CodecBackend, ReferenceCodec};
use mfiba_core::mfip::{finetune_weights, predict_weights, ImportanceWeights};
use mfiba_core::task::{BoundEvaluator, TaskEvaluator};

use crate::commands::{emit, load_model, load_pyramid, write_json};
use crate::config::RunConfig;

#[derive(Debug, clap::Args)]
pub struct WeightsArgs {
    /// Pyramid to probe.
    pub pyramid: PathBuf,
    /// Refine the prediction against the coding objective (needs the model
    /// file for allocation).
    #[arg(long)]
    pub finetune: bool,
    /// Rate-control multiplier the refinement scores at; defaults to the
    /// middle entry of lambda_set (or the configured rate target).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Model file override (refinement only).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Object-size parameter assumed for the loaded pyramid.
    #[arg(long)]
    pub size_param: Option<f64>,
}

pub fn run(cfg: &RunConfig, out: Option<&Path>, args: &WeightsArgs) -> Result<()> {
    let codec_config = cfg.codec_config();
    let levels = cfg.probe_qualities()?;
    let detector = cfg.evaluator.detector()?;
    let size_param = args.size_param.unwrap_or(cfg.synth.object_size_param);
    let pyramid = load_pyramid(&args.pyramid, size_param)?;
    let evaluator = BoundEvaluator {
        detector: &detector,
        reference: &pyramid,
    };

    let prediction = predict_weights(&pyramid, &levels, &codec_config, &evaluator)
        .with_context(|| format!("probing {}", args.pyramid.display()))?;

    let mut report = json!({
        "pyramid": args.pyramid.display().to_string(),
        "source_id": pyramid.source_id,
        "weights": prediction.weights.values,
        "provenance": prediction.weights.provenance,
        "skipped_levels": prediction.profile.skipped_levels,
        "config": cfg.snapshot(),
    });

    if args.finetune {
        let model_path = args.model.as_deref().unwrap_or(&cfg.model_file);
        let models = load_model(model_path)?.to_models()?;
        let target = match args.lambda {
            Some(lambda) => RateTarget::LambdaPrime(lambda),
            None => match cfg.rate_target {
                Some(spec) => spec.to_target(),
                None => RateTarget::LambdaPrime(cfg.lambda_set[cfg.lambda_set.len() / 2]),
            },
        };
        let codec = ReferenceCodec::new(codec_config.clone());
        let bounds = (codec_config.phi_min, codec_config.phi_max);
        let provenance = prediction.weights.provenance;
        let mut score = |w: &[f64]| -> mfiba_core::Result<f64> {
            let candidate = ImportanceWeights::normalized(w, provenance)?;
            let problem = AllocationProblem::from_models(&models, &candidate)?;
            let budget = solve_for_target(&problem, &target)?;
            let assignment = budget_to_phi(&budget, &models.rate_phi, bounds)?;
            let phis = assignment.to_phi_vector(&codec_config)?;
            let pass = codec.code_timed(&pyramid, &phis)?;
            let loss = evaluator.task_loss(&pass.reconstruction)?;
            Ok(match target {
                RateTarget::LambdaPrime(lambda) => loss + lambda * pass.report.bpp_equivalent,
                _ => loss,
            })
        };
        let outcome = finetune_weights(
            &prediction.weights,
            &mut score,
            &cfg.pipeline_options().finetune,
        )
        .context("refining weights against the coding objective")?;
        report["weights"] = json!(outcome.weights.values);
        report["provenance"] = json!(outcome.weights.provenance);
        report["initial_weights"] = json!(prediction.weights.values);
        report["finetune"] = json!({
            "initial_score": outcome.initial_score,
            "final_score": outcome.final_score,
            "passes": outcome.passes,
            "evaluations": outcome.evaluations,
        });
        eprintln!(
            "refined weights in {} passes ({} evaluations): score {:.6} -> {:.6}",
            outcome.passes, outcome.evaluations, outcome.initial_score, outcome.final_score
        );
    }

    if let Some(path) = out {
        write_json(path, &report)?;
    }
    emit(serde_json::to_string_pretty(&report)?);
    Ok(())
}
