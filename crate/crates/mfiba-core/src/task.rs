//! Synthetic downstream-task proxy.
//!
//! Stands in for a detection network during calibration and evaluation. The
//! proxy scores a reconstructed pyramid against its pristine reference with a
//! saturating per-scale penalty: loss = sum_i s_i * (1 - exp(-mse_i / c)),
//! accuracy = 1 - loss. Sensitivities s_i are a convex combination over
//! scales, so accuracy always lands in [0, 1] and is exactly 1 for a perfect
//! reconstruction. The saturation constant c keeps the proxy responsive at
//! coding-grade distortion without going linear at extreme damage.
//!
//! Sensitivities are either fixed, or derived per input from the pyramid's
//! object-size parameter so smaller objects lean on the finer scales —
//! mirroring how detection heads consume an FPN.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pyramid::{pyramid_distortion, FeaturePyramid};

/// Saturation constant used when none is given.
pub const DEFAULT_SOFTNESS: f64 = 0.25;

/// Decay ratio of scale emphasis in the size-coupled profile.
const SIZE_DECAY: f64 = 1.0 / 3.0;

/// Scores reconstructions; implementations own their reference.
pub trait TaskEvaluator {
    /// Accuracy of the candidate in [0, 1].
    fn evaluate(&self, candidate: &FeaturePyramid) -> Result<f64>;

    /// Convenience: 1 - accuracy.
    fn task_loss(&self, candidate: &FeaturePyramid) -> Result<f64> {
        Ok(1.0 - self.evaluate(candidate)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum SensitivityMode {
    Fixed(Vec<f64>),
    SizeCoupled,
}

/// The synthetic detector: per-scale sensitivities plus a saturation knob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDetector {
    mode: SensitivityMode,
    pub softness: f64,
}

impl SyntheticDetector {
    /// Detector with explicit per-scale sensitivities (normalized to sum 1).
    pub fn with_sensitivities(sensitivities: Vec<f64>) -> Result<Self> {
        let normalized = normalize_sensitivities(&sensitivities)?;
        Ok(SyntheticDetector {
            mode: SensitivityMode::Fixed(normalized),
            softness: DEFAULT_SOFTNESS,
        })
    }

    /// Detector that derives sensitivities from each reference pyramid's
    /// object-size parameter.
    pub fn size_coupled() -> Self {
        SyntheticDetector {
            mode: SensitivityMode::SizeCoupled,
            softness: DEFAULT_SOFTNESS,
        }
    }

    pub fn with_softness(mut self, softness: f64) -> Result<Self> {
        if !(softness.is_finite() && softness > 0.0) {
            return Err(Error::InvalidParameter(format!("softness {softness}")));
        }
        self.softness = softness;
        Ok(self)
    }

    /// Sensitivities this detector applies to the given reference.
    pub fn effective_sensitivities(&self, reference: &FeaturePyramid) -> Result<Vec<f64>> {
        match &self.mode {
            SensitivityMode::Fixed(s) => {
                if s.len() != reference.num_scales() {
                    return Err(Error::ShapeMismatch(format!(
                        "{} sensitivities for {} scales",
                        s.len(),
                        reference.num_scales()
                    )));
                }
                Ok(s.clone())
            }
            SensitivityMode::SizeCoupled => {
                size_coupled_sensitivities(reference.object_size_param, reference.num_scales())
            }
        }
    }

    /// Task loss of a candidate against its reference, in [0, 1).
    pub fn loss(&self, reference: &FeaturePyramid, candidate: &FeaturePyramid) -> Result<f64> {
        let sensitivities = self.effective_sensitivities(reference)?;
        let report = pyramid_distortion(reference, candidate)?;
        Ok(sensitivities
            .iter()
            .zip(&report.per_scale_mse)
            .map(|(&s, &mse)| s * (1.0 - (-mse / self.softness).exp()))
            .sum())
    }

    /// Accuracy of a candidate against its reference, in (0, 1].
    pub fn accuracy(&self, reference: &FeaturePyramid, candidate: &FeaturePyramid) -> Result<f64> {
        Ok(1.0 - self.loss(reference, candidate)?)
    }
}

/// A detector paired with a fixed reference pyramid.
pub struct BoundEvaluator<'a> {
    pub detector: &'a SyntheticDetector,
    pub reference: &'a FeaturePyramid,
}

impl TaskEvaluator for BoundEvaluator<'_> {
    fn evaluate(&self, candidate: &FeaturePyramid) -> Result<f64> {
        self.detector.accuracy(self.reference, candidate)
    }
}

/// Sensitivity profile from an object-size parameter in [0, 1].
///
/// The exponent of the decay ratio interpolates linearly between emphasizing
/// the finest scale (param 0) and the coarsest (param 1); param 0.5 gives an
/// exactly uniform profile. The result is normalized to sum 1.
pub fn size_coupled_sensitivities(param: f64, num_scales: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&param) || !param.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "object size param {param} outside [0, 1]"
        )));
    }
    if num_scales == 0 {
        return Err(Error::InvalidParameter("zero scales".into()));
    }
    let last = (num_scales - 1) as f64;
    let raw: Vec<f64> = (0..num_scales)
        .map(|i| {
            let i = i as f64;
            let exponent = (1.0 - param) * i + param * (last - i);
            SIZE_DECAY.powf(exponent)
        })
        .collect();
    normalize_sensitivities(&raw)
}

fn normalize_sensitivities(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::InvalidParameter("empty sensitivity vector".into()));
    }
    for (i, &s) in raw.iter().enumerate() {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::InvalidParameter(format!("sensitivity[{i}] = {s}")));
        }
    }
    let sum: f64 = raw.iter().sum();
    if sum <= 0.0 {
        return Err(Error::InvalidParameter("sensitivities sum to zero".into()));
    }
    Ok(raw.iter().map(|&s| s / sum).collect())
}
