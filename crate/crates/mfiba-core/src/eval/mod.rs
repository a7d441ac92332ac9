//! End-to-end pipeline runs and evaluation harnesses.
//!
//! A run takes one pyramid through probing, weight prediction, allocation,
//! phi inversion, and actual coding, and reports the rate-accuracy point it
//! landed on plus a wall-time decomposition. Three modes share that skeleton:
//!
//! - `Mfiba`: predicted importance weights drive the allocation.
//! - `MfibaFinetuned`: the predicted weights are refined by coordinate
//!   descent against the realized efficiency metric before allocating.
//! - `Uniform`: every scale gets the same phi, bisected until the coded
//!   size matches what the weighted allocation spent — the
//!   equal-treatment baseline at matched total bits.
//!
//! `rd_curve` sweeps a multiplier ladder into a rate-accuracy curve;
//! `importance_sweep` and `weight_vs_size` produce the per-scale
//! sensitivity and object-size diagnostics used in reports.

pub mod bdrate;
pub mod report;

use std::time::Instant;

use crate::allocator::{budget_to_phi, solve_for_target, AllocationProblem, RateTarget};
use crate::codec::{CodecBackend, CodecConfig, PhiVector, RateReport, ReferenceCodec};
use crate::error::{Error, Result};
use crate::mfip::{
    finetune_weights, predict_weights, probe_levels, FinetuneOptions, FinetuneOutcome,
    ImportanceWeights, LossMatrixBuild, WeightPrediction,
};
use crate::pyramid::FeaturePyramid;
use crate::rdmodel::CalibratedModels;
use crate::synth::{synth_pyramid, SynthSpec};
use crate::task::{BoundEvaluator, SyntheticDetector, TaskEvaluator};

/// How a pipeline run chooses per-scale quality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineMode {
    Mfiba,
    MfibaFinetuned,
    Uniform,
}

impl PipelineMode {
    pub fn label(&self) -> &'static str {
        match self {
            PipelineMode::Mfiba => "mfiba",
            PipelineMode::MfibaFinetuned => "mfiba_finetuned",
            PipelineMode::Uniform => "uniform",
        }
    }
}

/// Wall-time decomposition of one run.
///
/// `t_enc`, `t_dec`, and `t_task` are representative single-pass times
/// measured during probing (totals divided by pass count), so the probing
/// total decomposes exactly: `t_pre = m*(t_enc + t_dec) + m * evals_per_level
/// * t_task` up to float rounding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingReport {
    /// Total probing seconds (encode + decode + proxy).
    pub t_pre: f64,
    /// Seconds spent turning weights into phis (allocation, inversion, and
    /// for the uniform mode its bit-matching search).
    pub t_assign: f64,
    /// One full-pyramid encode pass.
    pub t_enc: f64,
    /// One full-pyramid decode pass.
    pub t_dec: f64,
    /// One task-proxy evaluation.
    pub t_task: f64,
    /// Probing quality levels (m).
    pub levels: usize,
    /// Proxy evaluations per level (scales + 1).
    pub evals_per_level: usize,
}

impl TimingReport {
    pub fn from_probe(build: &LossMatrixBuild, t_assign: f64) -> Self {
        let m = build.matrix.num_levels();
        let evals_per_level = build.matrix.num_scales() + 1;
        TimingReport {
            t_pre: build.enc_seconds + build.dec_seconds + build.task_seconds,
            t_assign,
            t_enc: build.enc_seconds / m as f64,
            t_dec: build.dec_seconds / m as f64,
            t_task: build.task_seconds / (m * evals_per_level) as f64,
            levels: m,
            evals_per_level,
        }
    }

    /// `t_pre - [m(t_enc+t_dec) + m*evals_per_level*t_task]`; zero up to
    /// float rounding.
    pub fn identity_residual(&self) -> f64 {
        let m = self.levels as f64;
        self.t_pre - (m * (self.t_enc + self.t_dec) + m * self.evals_per_level as f64 * self.t_task)
    }
}

/// One point of a rate-accuracy curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    /// Total coded bits per scale-0 element.
    pub bpp: f64,
    /// Task-proxy accuracy in [0, 1].
    pub accuracy: f64,
}

/// A rate-accuracy curve, sorted by rate with duplicate rates collapsed to
/// their best accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct RdCurve {
    points: Vec<RdPoint>,
}

impl RdCurve {
    pub fn new(mut points: Vec<RdPoint>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidCurve(format!(
                "{} points; need at least 2",
                points.len()
            )));
        }
        for p in &points {
            if !(p.bpp.is_finite() && p.bpp > 0.0 && p.accuracy.is_finite()) {
                return Err(Error::InvalidCurve(format!(
                    "point ({}, {})",
                    p.bpp, p.accuracy
                )));
            }
        }
        points.sort_by(|a, b| a.bpp.partial_cmp(&b.bpp).unwrap());
        let mut deduped: Vec<RdPoint> = Vec::with_capacity(points.len());
        for p in points {
            match deduped.last_mut() {
                Some(last) if last.bpp == p.bpp => {
                    last.accuracy = last.accuracy.max(p.accuracy);
                }
                _ => deduped.push(p),
            }
        }
        if deduped.len() < 2 {
            return Err(Error::InvalidCurve("fewer than 2 distinct rates".into()));
        }
        Ok(RdCurve { points: deduped })
    }

    pub fn points(&self) -> &[RdPoint] {
        &self.points
    }

    pub fn accuracy_range(&self) -> (f64, f64) {
        let lo = self
            .points
            .iter()
            .map(|p| p.accuracy)
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .points
            .iter()
            .map(|p| p.accuracy)
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub codec: CodecConfig,
    /// Probing quality levels (m).
    pub probe_levels: usize,
    pub finetune: FinetuneOptions,
    /// Relative total-bits gap the uniform baseline must close.
    pub uniform_bits_tolerance: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            codec: CodecConfig::default(),
            probe_levels: 8,
            finetune: FinetuneOptions::default(),
            uniform_bits_tolerance: 0.02,
        }
    }
}

/// Everything one pipeline run produced.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub mode: PipelineMode,
    /// Multiplier the allocation actually used.
    pub lambda_prime: f64,
    pub point: RdPoint,
    pub timing: TimingReport,
    /// Weights behind the allocation (predicted, finetuned, or — for the
    /// uniform baseline — the prediction its bit target came from).
    pub weights: ImportanceWeights,
    /// Per-scale quality actually encoded with.
    pub phis: Vec<f64>,
    /// Scales whose allocated rate fell outside the phi bounds.
    pub clamped: Vec<bool>,
    /// Rate report of the final encode.
    pub rate: RateReport,
    /// Seconds of the final encode / decode passes.
    pub enc_seconds: f64,
    pub dec_seconds: f64,
    /// Uniform mode: the single phi and its relative bit-target gap.
    pub uniform_phi: Option<f64>,
    pub uniform_bits_gap: Option<f64>,
    pub finetune: Option<FinetuneOutcome>,
}

/// Runs the full pipeline, probing included, on one pyramid.
pub fn run_pipeline(
    p: &FeaturePyramid,
    detector: &SyntheticDetector,
    models: &CalibratedModels,
    mode: PipelineMode,
    target: &RateTarget,
    opts: &PipelineOptions,
) -> Result<PipelineRun> {
    let evaluator = BoundEvaluator {
        detector,
        reference: p,
    };
    let levels = probe_levels(&opts.codec, opts.probe_levels)?;
    let prediction = predict_weights(p, &levels, &opts.codec, &evaluator)?;
    run_with_prediction(p, detector, models, mode, target, opts, &prediction)
}

/// Pipeline run with probing already done — lets curve sweeps share one
/// prediction across many targets.
pub fn run_with_prediction(
    p: &FeaturePyramid,
    detector: &SyntheticDetector,
    models: &CalibratedModels,
    mode: PipelineMode,
    target: &RateTarget,
    opts: &PipelineOptions,
    prediction: &WeightPrediction,
) -> Result<PipelineRun> {
    models.validate()?;
    let evaluator = BoundEvaluator {
        detector,
        reference: p,
    };
    let codec = ReferenceCodec::new(opts.codec.clone());
    let bounds = (opts.codec.phi_min, opts.codec.phi_max);

    let mut finetune_outcome = None;
    let weights = match mode {
        PipelineMode::Mfiba | PipelineMode::Uniform => prediction.weights.clone(),
        PipelineMode::MfibaFinetuned => {
            let mut score = |w: &[f64]| -> Result<f64> {
                let candidate = ImportanceWeights::normalized(w, prediction.weights.provenance)?;
                let problem = AllocationProblem::from_models(models, &candidate)?;
                let budget = solve_for_target(&problem, target)?;
                let assignment = budget_to_phi(&budget, &models.rate_phi, bounds)?;
                let phis = assignment.to_phi_vector(&opts.codec)?;
                let pass = codec.code_timed(p, &phis)?;
                let loss = evaluator.task_loss(&pass.reconstruction)?;
                // At a fixed multiplier the honest metric is the Lagrangian;
                // under a bit target the bits are pinned, so loss alone.
                Ok(match *target {
                    RateTarget::LambdaPrime(lambda) => loss + lambda * pass.report.bpp_equivalent,
                    _ => loss,
                })
            };
            let outcome = finetune_weights(&prediction.weights, &mut score, &opts.finetune)?;
            let weights = outcome.weights.clone();
            finetune_outcome = Some(outcome);
            weights
        }
    };

    let assign_start = Instant::now();
    let problem = AllocationProblem::from_models(models, &weights)?;
    let budget = solve_for_target(&problem, target)?;
    let assignment = budget_to_phi(&budget, &models.rate_phi, bounds)?;
    let mut t_assign = assign_start.elapsed().as_secs_f64();

    let phis = assignment.to_phi_vector(&opts.codec)?;
    let weighted_pass = codec.code_timed(p, &phis)?;

    let run = match mode {
        PipelineMode::Mfiba | PipelineMode::MfibaFinetuned => {
            let accuracy = evaluator.evaluate(&weighted_pass.reconstruction)?;
            PipelineRun {
                mode,
                lambda_prime: budget.lambda_prime,
                point: RdPoint {
                    bpp: weighted_pass.report.bpp_equivalent,
                    accuracy,
                },
                timing: TimingReport::from_probe(&prediction.build, t_assign),
                weights,
                phis: assignment.phis.clone(),
                clamped: assignment.clamped.clone(),
                rate: weighted_pass.report,
                enc_seconds: weighted_pass.enc_seconds,
                dec_seconds: weighted_pass.dec_seconds,
                uniform_phi: None,
                uniform_bits_gap: None,
                finetune: finetune_outcome,
            }
        }
        PipelineMode::Uniform => {
            let search_start = Instant::now();
            let target_bits = weighted_pass.report.total_bits;
            let (phi, pass, gap) =
                match_uniform_bits(p, &codec, target_bits, opts.uniform_bits_tolerance)?;
            t_assign += search_start.elapsed().as_secs_f64();
            let accuracy = evaluator.evaluate(&pass.reconstruction)?;
            let scales = p.num_scales();
            PipelineRun {
                mode,
                lambda_prime: budget.lambda_prime,
                point: RdPoint {
                    bpp: pass.report.bpp_equivalent,
                    accuracy,
                },
                timing: TimingReport::from_probe(&prediction.build, t_assign),
                weights,
                phis: vec![phi; scales],
                clamped: vec![false; scales],
                rate: pass.report,
                enc_seconds: pass.enc_seconds,
                dec_seconds: pass.dec_seconds,
                uniform_phi: Some(phi),
                uniform_bits_gap: Some(gap),
                finetune: None,
            }
        }
    };
    Ok(run)
}

/// Bisects a single phi until the whole-pyramid coded size is as close to
/// `target_bits` as the tolerance asks (or as close as the codec's bit
/// granularity allows). Coded size is nondecreasing in phi.
fn match_uniform_bits(
    p: &FeaturePyramid,
    codec: &ReferenceCodec,
    target_bits: f64,
    tolerance: f64,
) -> Result<(f64, crate::codec::CodedPass, f64)> {
    if !(target_bits > 0.0 && target_bits.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "target bits {target_bits}"
        )));
    }
    let scales = p.num_scales();
    let config = &codec.config;
    let try_phi = |phi: f64| -> Result<(crate::codec::CodedPass, f64)> {
        let phis = PhiVector::uniform(phi, scales, config)?;
        let pass = codec.code_timed(p, &phis)?;
        let gap = (pass.report.total_bits - target_bits) / target_bits;
        Ok((pass, gap))
    };

    let mut lo = config.phi_min;
    let mut hi = config.phi_max;
    let (mut best_pass, mut best_gap) = try_phi(lo)?;
    let mut best_phi = lo;
    let (hi_pass, hi_gap) = try_phi(hi)?;
    if hi_gap.abs() < best_gap.abs() {
        best_phi = hi;
        best_gap = hi_gap;
        best_pass = hi_pass;
    }
    // Drive the gap well under the contract tolerance: a slack of even 1%
    // of the bits is worth more accuracy than typical mode differences.
    let close_enough = tolerance * 0.1;
    for _ in 0..60 {
        if best_gap.abs() <= close_enough {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (pass, gap) = try_phi(mid)?;
        if gap.abs() < best_gap.abs() {
            best_phi = mid;
            best_gap = gap;
            best_pass = pass;
        }
        if gap > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    Ok((best_phi, best_pass, best_gap))
}

/// Sweeps a multiplier ladder into a rate-accuracy curve, sharing one
/// probing pass across the ladder.
pub fn rd_curve(
    p: &FeaturePyramid,
    detector: &SyntheticDetector,
    models: &CalibratedModels,
    mode: PipelineMode,
    lambdas: &[f64],
    opts: &PipelineOptions,
) -> Result<(RdCurve, Vec<PipelineRun>)> {
    if lambdas.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "{} multipliers; a curve needs at least 2",
            lambdas.len()
        )));
    }
    let evaluator = BoundEvaluator {
        detector,
        reference: p,
    };
    let levels = probe_levels(&opts.codec, opts.probe_levels)?;
    let prediction = predict_weights(p, &levels, &opts.codec, &evaluator)?;
    let mut runs = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        runs.push(run_with_prediction(
            p,
            detector,
            models,
            mode,
            &RateTarget::LambdaPrime(lambda),
            opts,
            &prediction,
        )?);
    }
    let curve = RdCurve::new(runs.iter().map(|r| r.point).collect())?;
    Ok((curve, runs))
}

/// One row of a per-scale quality sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub scale: usize,
    pub phi: f64,
    /// Bits per element of the swept scale.
    pub bpp: f64,
    /// Accuracy with only that scale degraded.
    pub accuracy: f64,
}

/// Codes one scale at a time over a quality ladder and scores each
/// substitution — the raw material behind importance weights, flattened for
/// plotting.
pub fn importance_sweep(
    p: &FeaturePyramid,
    detector: &SyntheticDetector,
    levels: &[f64],
    config: &CodecConfig,
) -> Result<Vec<SweepRow>> {
    let evaluator = BoundEvaluator {
        detector,
        reference: p,
    };
    let build = crate::mfip::build_loss_matrix(p, levels, config, &evaluator)?;
    let mut rows = Vec::with_capacity(build.matrix.num_scales() * build.matrix.num_levels());
    for i in 0..build.matrix.num_scales() {
        for (q, &phi) in build.matrix.levels.iter().enumerate() {
            rows.push(SweepRow {
                scale: i,
                phi,
                bpp: build.matrix.rate[i][q],
                accuracy: 1.0 - build.matrix.loss[i][q],
            });
        }
    }
    Ok(rows)
}

/// Predicted weights for one object-size setting, averaged over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSizeRow {
    pub size_param: f64,
    pub weights: Vec<f64>,
}

/// Shows how predicted importance shifts across scales as the synthetic
/// object-size parameter moves from fine (0) to coarse (1).
pub fn weight_vs_size(
    seeds: &[u64],
    size_params: &[f64],
    spec: &SynthSpec,
    config: &CodecConfig,
    levels_count: usize,
) -> Result<Vec<WeightSizeRow>> {
    if seeds.is_empty() || size_params.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one seed and one size parameter".into(),
        ));
    }
    let detector = SyntheticDetector::size_coupled();
    let levels = probe_levels(config, levels_count)?;
    let mut rows = Vec::with_capacity(size_params.len());
    for &size_param in size_params {
        let mut acc = vec![0.0f64; spec.num_scales()];
        for &seed in seeds {
            let mut sized = spec.clone();
            sized.object_size_param = size_param;
            let p = synth_pyramid(seed, &sized)?;
            let evaluator = BoundEvaluator {
                detector: &detector,
                reference: &p,
            };
            let prediction = predict_weights(&p, &levels, config, &evaluator)?;
            for (a, &w) in acc.iter_mut().zip(&prediction.weights.values) {
                *a += w;
            }
        }
        rows.push(WeightSizeRow {
            size_param,
            weights: acc.iter().map(|&a| a / seeds.len() as f64).collect(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mfip::{normalize_and_average, Provenance};
    use crate::rdmodel::{calibrate, CalibrationOptions};
    use approx::assert_abs_diff_eq;

    fn eval_spec() -> SynthSpec {
        SynthSpec {
            n: 2,
            channels: 4,
            height0: 32,
            width0: 32,
            object_size_param: 0.5,
            include_pool: true,
        }
    }

    fn fixture(
        seed: u64,
        detector: &SyntheticDetector,
    ) -> (FeaturePyramid, CalibratedModels, PipelineOptions) {
        let opts = PipelineOptions {
            probe_levels: 4,
            ..PipelineOptions::default()
        };
        let p = synth_pyramid(seed, &eval_spec()).unwrap();
        let evaluator = BoundEvaluator {
            detector,
            reference: &p,
        };
        let levels = probe_levels(&opts.codec, opts.probe_levels).unwrap();
        let build = crate::mfip::build_loss_matrix(&p, &levels, &opts.codec, &evaluator).unwrap();
        let profile = normalize_and_average(&build.matrix).unwrap();
        let weights = ImportanceWeights::new(profile.importance, Provenance::Predicted).unwrap();
        let s0 = p.scales[0].element_count() as u64;
        let cal = calibrate(
            &build.matrix,
            &weights,
            s0,
            &opts.codec,
            &CalibrationOptions::default(),
        )
        .unwrap();
        (p, cal.models, opts)
    }

    #[test]
    fn timing_identity_holds_by_construction() {
        let det = SyntheticDetector::size_coupled();
        let (p, models, opts) = fixture(61, &det);
        let run = run_pipeline(
            &p,
            &det,
            &models,
            PipelineMode::Mfiba,
            &RateTarget::LambdaPrime(0.5),
            &opts,
        )
        .unwrap();
        let t = &run.timing;
        assert!(t.t_pre > 0.0);
        assert!(
            t.identity_residual().abs() <= 1e-12 * t.t_pre.max(1e-9),
            "residual {}",
            t.identity_residual()
        );
        assert_eq!(t.levels, 4);
        assert_eq!(t.evals_per_level, 5);
    }

    #[test]
    fn weighted_run_is_internally_consistent() {
        let det = SyntheticDetector::size_coupled();
        let (p, models, opts) = fixture(62, &det);
        let run = run_pipeline(
            &p,
            &det,
            &models,
            PipelineMode::Mfiba,
            &RateTarget::LambdaPrime(0.5),
            &opts,
        )
        .unwrap();
        assert_eq!(run.mode, PipelineMode::Mfiba);
        assert_eq!(run.lambda_prime, 0.5);
        assert!((0.0..=1.0).contains(&run.point.accuracy));
        assert!(run.point.bpp > 0.0);
        assert_abs_diff_eq!(run.point.bpp, run.rate.bpp_equivalent, epsilon = 1e-12);
        assert_eq!(run.phis.len(), p.num_scales());
        for &phi in &run.phis {
            assert!((opts.codec.phi_min..=opts.codec.phi_max).contains(&phi));
        }
        run.rate.validate().unwrap();
        assert!(run.uniform_phi.is_none() && run.finetune.is_none());
    }

    #[test]
    fn uniform_baseline_matches_weighted_bits() {
        let det = SyntheticDetector::size_coupled();
        let (p, models, opts) = fixture(63, &det);
        let weighted = run_pipeline(
            &p,
            &det,
            &models,
            PipelineMode::Mfiba,
            &RateTarget::LambdaPrime(1.0),
            &opts,
        )
        .unwrap();
        let uniform = run_pipeline(
            &p,
            &det,
            &models,
            PipelineMode::Uniform,
            &RateTarget::LambdaPrime(1.0),
            &opts,
        )
        .unwrap();
        let gap =
            (uniform.rate.total_bits - weighted.rate.total_bits).abs() / weighted.rate.total_bits;
        assert!(gap <= 0.02, "bit gap {gap}");
        let phi = uniform.uniform_phi.unwrap();
        assert!(uniform.phis.iter().all(|&v| v == phi));
        assert!(uniform.uniform_bits_gap.unwrap().abs() <= 0.02);
    }

    #[test]
    fn skewed_importance_beats_uniform_at_matched_bits() {
        let det = SyntheticDetector::with_sensitivities(vec![0.65, 0.2, 0.1, 0.05]).unwrap();
        let (p, models, opts) = fixture(64, &det);
        let weighted = run_pipeline(
            &p,
            &det,
            &models,
            PipelineMode::Mfiba,
            &RateTarget::LambdaPrime(1.0),
            &opts,
        )
        .unwrap();
        let uniform = run_pipeline(
            &p,
            &det,
            &models,
            PipelineMode::Uniform,
            &RateTarget::LambdaPrime(1.0),
            &opts,
        )
        .unwrap();
        assert!(
            weighted.point.accuracy > uniform.point.accuracy,
            "weighted {} vs uniform {}",
            weighted.point.accuracy,
            uniform.point.accuracy
        );
    }

    #[test]
    fn finetuned_run_never_scores_worse() {
        let det = SyntheticDetector::with_sensitivities(vec![0.5, 0.3, 0.15, 0.05]).unwrap();
        let (p, models, mut opts) = fixture(65, &det);
        opts.finetune.max_passes = 3;
        let run = run_pipeline(
            &p,
            &det,
            &models,
            PipelineMode::MfibaFinetuned,
            &RateTarget::LambdaPrime(1.0),
            &opts,
        )
        .unwrap();
        let outcome = run.finetune.as_ref().unwrap();
        assert!(outcome.final_score <= outcome.initial_score);
        assert!(outcome.passes <= 3);
        assert_eq!(run.weights.provenance, Provenance::Finetuned);
    }

    #[test]
    fn curve_points_rise_with_cheaper_bits() {
        let det = SyntheticDetector::size_coupled();
        let (p, models, opts) = fixture(66, &det);
        let (curve, runs) = rd_curve(
            &p,
            &det,
            &models,
            PipelineMode::Mfiba,
            &[4.0, 1.0, 0.25, 0.05],
            &opts,
        )
        .unwrap();
        assert_eq!(runs.len(), 4);
        let pts = curve.points();
        for w in pts.windows(2) {
            assert!(w[0].bpp < w[1].bpp);
            assert!(
                w[0].accuracy <= w[1].accuracy + 1e-9,
                "accuracy fell: {w:?}"
            );
        }
    }

    #[test]
    fn curve_constructor_sorts_and_dedups() {
        let curve = RdCurve::new(vec![
            RdPoint {
                bpp: 2.0,
                accuracy: 0.9,
            },
            RdPoint {
                bpp: 1.0,
                accuracy: 0.8,
            },
            RdPoint {
                bpp: 2.0,
                accuracy: 0.95,
            },
        ])
        .unwrap();
        assert_eq!(curve.points().len(), 2);
        assert_eq!(curve.points()[0].bpp, 1.0);
        assert_eq!(curve.points()[1].accuracy, 0.95);
        assert!(RdCurve::new(vec![]).is_err());
        assert!(RdCurve::new(vec![
            RdPoint {
                bpp: -1.0,
                accuracy: 0.5
            },
            RdPoint {
                bpp: 1.0,
                accuracy: 0.5
            }
        ])
        .is_err());
    }

    #[test]
    fn sweep_rows_cover_the_grid_and_behave() {
        let det = SyntheticDetector::size_coupled();
        let p = synth_pyramid(67, &eval_spec()).unwrap();
        let cfg = CodecConfig::default();
        let levels = probe_levels(&cfg, 3).unwrap();
        let rows = importance_sweep(&p, &det, &levels, &cfg).unwrap();
        assert_eq!(rows.len(), p.num_scales() * 3);
        for rows_per_scale in rows.chunks(3) {
            for w in rows_per_scale.windows(2) {
                assert_eq!(w[0].scale, w[1].scale);
                assert!(w[1].phi > w[0].phi);
                assert!(w[1].bpp >= w[0].bpp - 1e-9);
                assert!(w[1].accuracy >= w[0].accuracy - 1e-9);
            }
        }
    }

    #[test]
    fn weight_profile_follows_object_size() {
        let spec = SynthSpec {
            n: 2,
            channels: 4,
            height0: 16,
            width0: 16,
            object_size_param: 0.5,
            include_pool: true,
        };
        let cfg = CodecConfig::default();
        let rows = weight_vs_size(&[1, 2], &[0.0, 1.0], &spec, &cfg, 3).unwrap();
        assert_eq!(rows.len(), 2);
        let fine = &rows[0];
        let coarse = &rows[1];
        assert!(fine.weights[0] > coarse.weights[0]);
        let last = spec.num_scales() - 1;
        assert!(coarse.weights[last] > fine.weights[last]);
        for row in &rows {
            assert_abs_diff_eq!(row.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        }
    }
}
