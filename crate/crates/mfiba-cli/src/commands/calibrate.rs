//! `calibrate`: the offline phase. Probes every corpus pyramid, pools the
//! loss/rate samples, fits the loss-rate and rate-quality models, and writes
//! the model file with fit diagnostics and the configuration snapshot.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use mfiba_core::mfip::{predict_weights, ImportanceWeights, LossMatrix};
use mfiba_core::rdmodel::{calibrate_corpus, ModelFile};
use mfiba_core::task::BoundEvaluator;

use crate::commands::{emit, load_pyramid, pyramid_corpus};
use crate::config::RunConfig;

#[derive(Debug, clap::Args)]
pub struct CalibrateArgs {
    /// Pyramid directory override.
    #[arg(long)]
    pub pyramids: Option<PathBuf>,
    /// Object-size parameter assumed for loaded pyramids.
    #[arg(long)]
    pub size_param: Option<f64>,
}

pub fn run(cfg: &RunConfig, out: Option<&Path>, args: &CalibrateArgs) -> Result<()> {
    let dir = args.pyramids.as_deref().unwrap_or(&cfg.pyramid_dir);
    let paths = pyramid_corpus(dir)?;
    let codec = cfg.codec_config();
    let levels = cfg.probe_qualities()?;
    let detector = cfg.evaluator.detector()?;
    let size_param = args.size_param.unwrap_or(cfg.synth.object_size_param);

    let probed: Vec<(LossMatrix, ImportanceWeights, u64)> = paths
        .par_iter()
        .map(|path| {
            let pyramid = load_pyramid(path, size_param)?;
            let evaluator = BoundEvaluator {
                detector: &detector,
                reference: &pyramid,
            };
            let prediction = predict_weights(&pyramid, &levels, &codec, &evaluator)
                .with_context(|| format!("probing {}", path.display()))?;
            let s0 = pyramid.scales[0].element_count() as u64;
            Ok((prediction.build.matrix, prediction.weights, s0))
        })
        .collect::<Result<Vec<_>>>()?;

    let s0 = probed[0].2;
    for ((_, _, item_s0), path) in probed.iter().zip(&paths) {
        if *item_s0 != s0 {
            bail!(
                "pyramid {} has {} base-scale elements; the corpus mixes sizes ({} expected)",
                path.display(),
                item_s0,
                s0
            );
        }
    }
    let items: Vec<(LossMatrix, ImportanceWeights)> = probed
        .into_iter()
        .map(|(matrix, weights, _)| (matrix, weights))
        .collect();

    let calibration = calibrate_corpus(&items, s0, &codec, &cfg.calibration_options())
        .context("fitting models from the probed corpus")?;
    let d = &calibration.diagnostics;
    let min_scale_cc = d
        .rate_phi
        .iter()
        .map(|g| g.pearson)
        .fold(f64::INFINITY, f64::min);
    eprintln!(
        "calibrated on {} pyramids: loss-rate cc {:.6} (rmse {:.3e}, {} excluded{}), \
         rate-quality cc >= {:.6}",
        items.len(),
        d.cauchy.pearson,
        d.cauchy.rmse,
        d.cauchy_excluded,
        if d.beta_clamped { ", beta clamped" } else { "" },
        min_scale_cc
    );

    let mut file = ModelFile::from_calibration(&calibration);
    file.config = Some(cfg.snapshot());
    let model_path = out.unwrap_or(&cfg.model_file);
    file.save(model_path)
        .with_context(|| format!("writing model file {}", model_path.display()))?;
    emit(model_path.display().to_string());
    Ok(())
}
