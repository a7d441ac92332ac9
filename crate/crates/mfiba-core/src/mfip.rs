//! Multiscale feature importance prediction.
//!
//! Importance weights say how much each pyramid scale matters to the
//! downstream task. They are measured, not assumed: every scale is coded at
//! a ladder of quality levels, each degraded scale is substituted into the
//! otherwise pristine pyramid, and the task proxy is asked how much the
//! substitution hurt. Per level the resulting losses are L1-normalized
//! across scales, and the normalized columns are averaged into a single
//! importance profile that sums to one.
//!
//! The probing pass also yields, per scale and level, the coded rate and the
//! substituted task loss — the raw samples the rate-distortion models are
//! fitted on — so one pass feeds both weight prediction and calibration.
//!
//! An optional coordinate-descent refinement nudges the predicted weights on
//! a 0.01 grid against a caller-supplied score (lower is better), for setups
//! where spending extra offline passes is worth a sliver of accuracy.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::codec::{decode_scale, encode_scale, CodecConfig};
use crate::error::{Error, Result};
use crate::pyramid::FeaturePyramid;
use crate::task::TaskEvaluator;

/// How a weight vector came to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Predicted,
    Finetuned,
    Manual,
}

/// Per-scale importance, nonnegative and summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceWeights {
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl ImportanceWeights {
    pub fn new(values: Vec<f64>, provenance: Provenance) -> Result<Self> {
        let w = ImportanceWeights { values, provenance };
        w.validate()?;
        Ok(w)
    }

    /// Builds from any nonnegative vector by rescaling it to sum one.
    pub fn normalized(raw: &[f64], provenance: Provenance) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::InvalidParameter("empty weight vector".into()));
        }
        for (i, &v) in raw.iter().enumerate() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("weight[{i}] = {v}")));
            }
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidParameter("weights sum to zero".into()));
        }
        ImportanceWeights::new(raw.iter().map(|&v| v / sum).collect(), provenance)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidParameter("empty weight vector".into()));
        }
        for (i, &v) in self.values.iter().enumerate() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("weight[{i}] = {v}")));
            }
        }
        let sum: f64 = self.values.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!("weights sum to {sum}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Width of the default probing window above `phi_min`. Substituted task
/// losses are only informative at coarse-to-moderate quality; a handful of
/// phi steps above the floor covers that range, while higher levels produce
/// losses at the numerical noise floor that would poison log-domain fits.
pub const PROBE_WINDOW: f64 = 5.0;

/// Quality levels used for probing: `m` uniform points from `phi_min` up
/// through the informative low-quality window (narrowed to the codec's
/// range when that is smaller).
pub fn probe_levels(config: &CodecConfig, m: usize) -> Result<Vec<f64>> {
    config.validate()?;
    if m < 2 {
        return Err(Error::InvalidParameter(format!(
            "need >= 2 levels, got {m}"
        )));
    }
    let lo = config.phi_min;
    let hi = config.phi_max.min(config.phi_min + PROBE_WINDOW);
    if lo >= hi {
        return Err(Error::InvalidParameter(format!(
            "phi range [{}, {}] too narrow for probing",
            config.phi_min, config.phi_max
        )));
    }
    Ok((0..m)
        .map(|q| lo + (hi - lo) * q as f64 / (m - 1) as f64)
        .collect())
}

/// Probing results: per scale and quality level, the substituted task loss
/// and the coded rate in bits per element, plus the loss of coding every
/// scale at once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossMatrix {
    /// Quality level (phi) per column.
    pub levels: Vec<f64>,
    /// `loss[i][q]`: task loss with only scale `i` coded at level `q`.
    pub loss: Vec<Vec<f64>>,
    /// `rate[i][q]`: bits per element of scale `i` coded at level `q`.
    pub rate: Vec<Vec<f64>>,
    /// `full_loss[q]`: task loss with every scale coded at level `q`.
    pub full_loss: Vec<f64>,
}

impl LossMatrix {
    pub fn num_scales(&self) -> usize {
        self.loss.len()
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.levels.len();
        if m == 0 || self.loss.is_empty() {
            return Err(Error::InvalidParameter("empty loss matrix".into()));
        }
        if self.rate.len() != self.loss.len() || self.full_loss.len() != m {
            return Err(Error::ShapeMismatch(format!(
                "loss {}x?, rate {}x?, full {}",
                self.loss.len(),
                self.rate.len(),
                self.full_loss.len()
            )));
        }
        for (i, (lr, rr)) in self.loss.iter().zip(&self.rate).enumerate() {
            if lr.len() != m || rr.len() != m {
                return Err(Error::ShapeMismatch(format!(
                    "scale {i}: {} losses, {} rates, {m} levels",
                    lr.len(),
                    rr.len()
                )));
            }
            for (q, (&l, &r)) in lr.iter().zip(rr).enumerate() {
                if !(l.is_finite() && l >= 0.0 && r.is_finite() && r >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "scale {i} level {q}: loss {l}, rate {r}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A built matrix plus where the wall time went while building it.
#[derive(Debug, Clone)]
pub struct LossMatrixBuild {
    pub matrix: LossMatrix,
    pub enc_seconds: f64,
    pub dec_seconds: f64,
    pub task_seconds: f64,
    /// Number of proxy invocations: levels x (scales + 1).
    pub task_evals: usize,
}

/// Codes every scale at every probe level and measures the task impact of
/// each single-scale substitution. The evaluator must score candidates
/// against `p` itself (a pristine `p` must evaluate to accuracy 1).
pub fn build_loss_matrix(
    p: &FeaturePyramid,
    levels: &[f64],
    config: &CodecConfig,
    evaluator: &dyn TaskEvaluator,
) -> Result<LossMatrixBuild> {
    p.validate()?;
    config.validate()?;
    if levels.is_empty() {
        return Err(Error::InvalidParameter("no probe levels".into()));
    }
    for &phi in levels {
        config.check_phi(phi)?;
    }
    let n = p.num_scales();
    let m = levels.len();
    let mut loss = vec![vec![0.0; m]; n];
    let mut rate = vec![vec![0.0; m]; n];
    let mut full_loss = vec![0.0; m];
    let mut enc_seconds = 0.0;
    let mut dec_seconds = 0.0;
    let mut task_seconds = 0.0;
    let mut task_evals = 0usize;

    for (q, &phi) in levels.iter().enumerate() {
        let t_enc = Instant::now();
        let streams = p
            .scales
            .iter()
            .map(|s| encode_scale(s, phi, config))
            .collect::<Result<Vec<_>>>()?;
        enc_seconds += t_enc.elapsed().as_secs_f64();

        let t_dec = Instant::now();
        let recons = streams
            .iter()
            .map(decode_scale)
            .collect::<Result<Vec<_>>>()?;
        dec_seconds += t_dec.elapsed().as_secs_f64();

        for (i, stream) in streams.iter().enumerate() {
            rate[i][q] = stream.total_bits() as f64 / p.scales[i].element_count() as f64;
        }

        let t_task = Instant::now();
        for i in 0..n {
            let mut substituted = p.clone();
            substituted.scales[i] = recons[i].clone();
            loss[i][q] = evaluator.task_loss(&substituted)?;
        }
        let mut all = p.clone();
        all.scales = recons;
        full_loss[q] = evaluator.task_loss(&all)?;
        task_seconds += t_task.elapsed().as_secs_f64();
        task_evals += n + 1;
    }

    let matrix = LossMatrix {
        levels: levels.to_vec(),
        loss,
        rate,
        full_loss,
    };
    matrix.validate()?;
    Ok(LossMatrixBuild {
        matrix,
        enc_seconds,
        dec_seconds,
        task_seconds,
        task_evals,
    })
}

/// The averaged importance profile and which probe levels contributed
/// nothing (every scale lossless there).
#[derive(Debug, Clone, PartialEq)]
pub struct TaskLossProfile {
    pub importance: Vec<f64>,
    pub skipped_levels: Vec<usize>,
}

/// L1-normalizes each level's loss column across scales and averages the
/// columns. Columns that sum to zero carry no signal and are skipped; if
/// every column is zero the profile falls back to uniform.
pub fn normalize_and_average(matrix: &LossMatrix) -> Result<TaskLossProfile> {
    matrix.validate()?;
    let n = matrix.num_scales();
    let m = matrix.num_levels();
    let mut acc = vec![0.0f64; n];
    let mut used = 0usize;
    let mut skipped = Vec::new();
    for q in 0..m {
        let col_sum: f64 = (0..n).map(|i| matrix.loss[i][q]).sum();
        if col_sum <= 0.0 {
            skipped.push(q);
            continue;
        }
        for (a, row) in acc.iter_mut().zip(&matrix.loss) {
            *a += row[q] / col_sum;
        }
        used += 1;
    }
    let importance = if used == 0 {
        vec![1.0 / n as f64; n]
    } else {
        acc.iter().map(|&v| v / used as f64).collect()
    };
    Ok(TaskLossProfile {
        importance,
        skipped_levels: skipped,
    })
}

/// Weight prediction output: the weights, the profile behind them, and the
/// probing pass they came from (reusable for model calibration).
#[derive(Debug, Clone)]
pub struct WeightPrediction {
    pub weights: ImportanceWeights,
    pub profile: TaskLossProfile,
    pub build: LossMatrixBuild,
}

/// One-call weight prediction: probe, normalize, average.
pub fn predict_weights(
    p: &FeaturePyramid,
    levels: &[f64],
    config: &CodecConfig,
    evaluator: &dyn TaskEvaluator,
) -> Result<WeightPrediction> {
    let build = build_loss_matrix(p, levels, config, evaluator)?;
    let profile = normalize_and_average(&build.matrix)?;
    let weights = ImportanceWeights::new(profile.importance.clone(), Provenance::Predicted)?;
    Ok(WeightPrediction {
        weights,
        profile,
        build,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneOptions {
    /// Smallest move, and the grid the search lives on.
    pub base_stride: f64,
    /// How many stride multiples to try per coordinate (0.01, 0.02, ...).
    pub stride_steps: usize,
    /// Hard cap on full coordinate sweeps.
    pub max_passes: usize,
}

impl Default for FinetuneOptions {
    fn default() -> Self {
        FinetuneOptions {
            base_stride: 0.01,
            stride_steps: 4,
            max_passes: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub weights: ImportanceWeights,
    pub initial_score: f64,
    pub final_score: f64,
    pub passes: usize,
    pub evaluations: usize,
}

/// Coordinate-descent refinement of a weight vector against an arbitrary
/// score (lower is better).
///
/// The start point is snapped to a 0.01 grid. Each sweep perturbs one
/// coordinate at a time by growing strides in both directions; candidates
/// are clamped at zero and renormalized to sum one before scoring, and the
/// first strict improvement is taken. The search stops after a sweep with
/// no improvement or after `max_passes` sweeps.
pub fn finetune_weights(
    initial: &ImportanceWeights,
    score: &mut dyn FnMut(&[f64]) -> Result<f64>,
    opts: &FinetuneOptions,
) -> Result<FinetuneOutcome> {
    initial.validate()?;
    if !(opts.base_stride.is_finite() && opts.base_stride > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "base stride {}",
            opts.base_stride
        )));
    }
    if opts.stride_steps == 0 || opts.max_passes == 0 {
        return Err(Error::InvalidParameter(
            "stride_steps and max_passes must be positive".into(),
        ));
    }

    let mut current = snap_to_grid(&initial.values, opts.base_stride);
    let mut evaluations = 0usize;
    let mut best = {
        evaluations += 1;
        score(&current)?
    };
    let initial_score = best;

    let mut passes = 0usize;
    while passes < opts.max_passes {
        passes += 1;
        let mut improved = false;
        for i in 0..current.len() {
            'coordinate: for step in 1..=opts.stride_steps {
                let stride = opts.base_stride * step as f64;
                for sign in [1.0, -1.0] {
                    let mut candidate = current.clone();
                    candidate[i] = (candidate[i] + sign * stride).max(0.0);
                    let sum: f64 = candidate.iter().sum();
                    if sum <= 0.0 {
                        continue;
                    }
                    for v in &mut candidate {
                        *v /= sum;
                    }
                    if candidate == current {
                        continue;
                    }
                    evaluations += 1;
                    let s = score(&candidate)?;
                    if s + 1e-12 < best {
                        current = candidate;
                        best = s;
                        improved = true;
                        break 'coordinate;
                    }
                }
            }
        }
        if !improved {
            break;
        }
    }

    Ok(FinetuneOutcome {
        weights: ImportanceWeights::normalized(&current, Provenance::Finetuned)?,
        initial_score,
        final_score: best,
        passes,
        evaluations,
    })
}

/// Rounds each entry to the nearest grid multiple, then renormalizes. Falls
/// back to the input if rounding flattens everything to zero.
fn snap_to_grid(values: &[f64], grid: f64) -> Vec<f64> {
    let snapped: Vec<f64> = values.iter().map(|&v| (v / grid).round() * grid).collect();
    let sum: f64 = snapped.iter().sum();
    if sum <= 0.0 {
        return values.to_vec();
    }
    snapped.iter().map(|&v| v / sum).collect()
}
