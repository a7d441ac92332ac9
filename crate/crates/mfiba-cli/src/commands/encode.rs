//! `encode`: the online phase for one pyramid. Either a uniform quality or
//! the full predict-allocate-invert path, then entropy coding into a stream
//! file with a metadata sidecar.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use mfiba_core::allocator::{budget_to_phi, solve_for_target, AllocationProblem};
use mfiba_core::codec::{encode_pyramid, PhiVector};
use mfiba_core::fsutil::atomic_write;
use mfiba_core::mfip::predict_weights;
use mfiba_core::task::BoundEvaluator;

use crate::commands::{emit, load_model, load_pyramid};
use crate::config::RunConfig;
use crate::meta::{meta_path, StreamMeta};

#[derive(Debug, clap::Args)]
pub struct EncodeArgs {
    /// Pyramid to encode.
    pub pyramid: PathBuf,
    /// Encode every scale at this quality instead of allocating.
    #[arg(long, conflicts_with_all = ["lambda", "total_bits", "bpp"])]
    pub phi: Option<f64>,
    /// Rate-control multiplier for the allocation.
    #[arg(long, conflicts_with_all = ["total_bits", "bpp"])]
    pub lambda: Option<f64>,
    /// Total-bits ceiling for the allocation.
    #[arg(long, conflicts_with = "bpp")]
    pub total_bits: Option<f64>,
    /// Bits-per-element ceiling for the allocation.
    #[arg(long)]
    pub bpp: Option<f64>,
    /// Model file override (allocation path).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Object-size parameter assumed for the loaded pyramid.
    #[arg(long)]
    pub size_param: Option<f64>,
}

pub fn run(cfg: &RunConfig, out: Option<&Path>, args: &EncodeArgs) -> Result<()> {
    let codec = cfg.codec_config();
    let size_param = args.size_param.unwrap_or(cfg.synth.object_size_param);
    let pyramid = load_pyramid(&args.pyramid, size_param)?;

    let phis = match args.phi {
        Some(phi) => PhiVector::uniform(phi, pyramid.num_scales(), &codec)
            .context("uniform quality out of the codec's range")?,
        None => {
            let target =
                super::allocate::resolve_target(cfg, args.lambda, args.total_bits, args.bpp)?;
            let model_path = args.model.as_deref().unwrap_or(&cfg.model_file);
            let models = load_model(model_path)?.to_models()?;
            let detector = cfg.evaluator.detector()?;
            let evaluator = BoundEvaluator {
                detector: &detector,
                reference: &pyramid,
            };
            let prediction = predict_weights(&pyramid, &cfg.probe_qualities()?, &codec, &evaluator)
                .with_context(|| format!("probing {}", args.pyramid.display()))?;
            let problem = AllocationProblem::from_models(&models, &prediction.weights)?;
            let budget = solve_for_target(&problem, &target)?;
            let assignment =
                budget_to_phi(&budget, &models.rate_phi, (codec.phi_min, codec.phi_max))?;
            assignment.to_phi_vector(&codec)?
        }
    };

    let (streams, report) = encode_pyramid(&pyramid, &phis, &codec)
        .with_context(|| format!("encoding {}", args.pyramid.display()))?;

    let stream_path = match out {
        Some(path) => path.to_path_buf(),
        None => args.pyramid.with_extension("fcmb"),
    };
    let mut bytes = Vec::new();
    for stream in &streams {
        bytes.extend_from_slice(&stream.to_bytes());
    }
    atomic_write(&stream_path, &bytes)
        .with_context(|| format!("writing stream {}", stream_path.display()))?;
    let meta = StreamMeta::new(&pyramid, &streams, &report, phis.values(), cfg.snapshot());
    meta.save(&meta_path(&stream_path))?;

    eprintln!(
        "encoded {} scales at phi [{}]: {} bits ({:.4} bits/element)",
        streams.len(),
        phis.values()
            .iter()
            .map(|p| format!("{p:.3}"))
            .collect::<Vec<_>>()
            .join(", "),
        report.total_bits,
        report.bpp_equivalent
    );
    emit(stream_path.display().to_string());
    Ok(())
}
