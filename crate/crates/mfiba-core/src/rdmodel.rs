//! Rate-distortion model calibration.
//!
//! Two families of fits tie the pipeline together. The task loss-rate model
//! `loss = w * alpha * rate^-beta` (one power law shared by all scales,
//! scaled per scale by its importance weight) drives the closed-form bit
//! allocation; it is fitted in the log domain where it is an ordinary
//! linear regression, with an optional Gauss-Newton polish in the linear
//! domain. A quadratic alternative `loss = w * (c0 + c1 R + c2 R^2)` is
//! fitted by 3x3 normal equations for comparison runs.
//!
//! Per scale, the linear rate model `R_i = a_i * phi_i + b_i` maps the codec
//! quality knob to an achieved rate and — inverted — turns allocated rates
//! back into encoder settings.
//!
//! `calibrate` packages both fits plus the constants the online side needs
//! into [`CalibratedModels`]; [`ModelFile`] is its JSON wire form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::CodecConfig;
use crate::error::{Error, Result};
use crate::fsutil::atomic_write;
use crate::linalg;
use crate::mfip::{ImportanceWeights, LossMatrix, Provenance};

/// Smallest admissible decay exponent; keeps the allocation formula defined.
pub const BETA_FLOOR: f64 = 1e-6;
/// Smallest admissible rate-model slope; keeps phi inversion defined.
pub const SLOPE_FLOOR: f64 = 1e-6;
/// Default bits-per-element floor handed to the allocator.
pub const DEFAULT_RATE_FLOOR: f64 = 0.01;
/// Default per-scale element-count ratio between neighboring scales.
pub const DEFAULT_SIZE_RATIO: f64 = 4.0;

/// Task loss-rate power law: `loss = w * alpha * rate^-beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauchyModel {
    pub alpha: f64,
    pub beta: f64,
}

impl CauchyModel {
    pub fn predict_loss(&self, weight: f64, rate: f64) -> f64 {
        weight * self.alpha * rate.powf(-self.beta)
    }
}

/// Quadratic task loss-rate alternative: `loss = w * (c0 + c1 R + c2 R^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticModel {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl QuadraticModel {
    pub fn predict_loss(&self, weight: f64, rate: f64) -> f64 {
        weight * (self.c0 + self.c1 * rate + self.c2 * rate * rate)
    }
}

/// Per-scale linear rate model: `rate = a * phi + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePhiModel {
    pub a: f64,
    pub b: f64,
}

impl RatePhiModel {
    pub fn rate_at(&self, phi: f64) -> f64 {
        self.a * phi + self.b
    }

    pub fn phi_for_rate(&self, rate: f64) -> f64 {
        (rate - self.b) / self.a
    }
}

/// One probing observation: a scale's weight, its coded rate in bits per
/// element, and the task loss its substitution caused.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauchySample {
    pub weight: f64,
    pub rate: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CauchyFit {
    pub model: CauchyModel,
    /// Samples dropped because a log was undefined (zero loss, weight, rate).
    pub excluded: usize,
    pub beta_clamped: bool,
}

/// Fits the power law by linear regression of `ln(loss/w)` on `ln(rate)`.
pub fn fit_cauchy(samples: &[CauchySample]) -> Result<CauchyFit> {
    let usable: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| {
            s.loss > 0.0
                && s.weight > 0.0
                && s.rate > 0.0
                && s.loss.is_finite()
                && s.weight.is_finite()
                && s.rate.is_finite()
        })
        .map(|s| (s.rate.ln(), (s.loss / s.weight).ln()))
        .collect();
    let excluded = samples.len() - usable.len();
    if usable.len() < 2 {
        return Err(Error::InsufficientSamples {
            have: usable.len(),
            need: 2,
        });
    }
    let (slope, intercept) = linear_regression(&usable)?;
    let mut beta = -slope;
    let mut beta_clamped = false;
    if beta < BETA_FLOOR {
        beta = BETA_FLOOR;
        beta_clamped = true;
    }
    // With beta pinned, the least-squares intercept is the mean of y + beta*x.
    let alpha = if beta_clamped {
        let n = usable.len() as f64;
        (usable.iter().map(|&(x, y)| y + beta * x).sum::<f64>() / n).exp()
    } else {
        intercept.exp()
    };
    Ok(CauchyFit {
        model: CauchyModel { alpha, beta },
        excluded,
        beta_clamped,
    })
}

/// Linear-domain Gauss-Newton polish of a power-law fit. Each step solves
/// the 2x2 normal equations of the linearized residuals, backtracking by
/// halves when the full step overshoots, and is kept only if it lowers the
/// squared error while leaving both parameters positive.
pub fn refine_cauchy(model: CauchyModel, samples: &[CauchySample], steps: usize) -> CauchyModel {
    let usable: Vec<&CauchySample> = samples
        .iter()
        .filter(|s| s.weight > 0.0 && s.rate > 0.0 && s.loss.is_finite())
        .collect();
    if usable.len() < 2 {
        return model;
    }
    let sse = |m: &CauchyModel| -> f64 {
        usable
            .iter()
            .map(|s| {
                let r = m.predict_loss(s.weight, s.rate) - s.loss;
                r * r
            })
            .sum()
    };
    let mut best = model;
    let mut best_sse = sse(&best);
    for _ in 0..steps {
        let mut jtj = [[0.0f64; 2]; 2];
        let mut jtr = [0.0f64; 2];
        for s in &usable {
            let pred = best.predict_loss(s.weight, s.rate);
            let residual = pred - s.loss;
            let d_alpha = pred / best.alpha;
            let d_beta = -pred * s.rate.ln();
            jtj[0][0] += d_alpha * d_alpha;
            jtj[0][1] += d_alpha * d_beta;
            jtj[1][0] += d_alpha * d_beta;
            jtj[1][1] += d_beta * d_beta;
            jtr[0] += d_alpha * residual;
            jtr[1] += d_beta * residual;
        }
        let Some(delta) = linalg::solve(jtj, jtr) else {
            break;
        };
        let mut improved = false;
        let mut step = 1.0f64;
        for _ in 0..12 {
            let candidate = CauchyModel {
                alpha: best.alpha - step * delta[0],
                beta: best.beta - step * delta[1],
            };
            if candidate.alpha > 0.0 && candidate.beta > 0.0 {
                let candidate_sse = sse(&candidate);
                if candidate_sse < best_sse {
                    best = candidate;
                    best_sse = candidate_sse;
                    improved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    best
}

/// Fits the quadratic alternative by 3x3 normal equations on `loss/w`.
pub fn fit_quadratic(samples: &[CauchySample]) -> Result<QuadraticModel> {
    let usable: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.weight > 0.0 && s.rate.is_finite() && s.loss.is_finite())
        .map(|s| (s.rate, s.loss / s.weight))
        .collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientSamples {
            have: usable.len(),
            need: 3,
        });
    }
    let mut a = [[0.0f64; 3]; 3];
    let mut b = [0.0f64; 3];
    for &(r, y) in &usable {
        let row = [1.0, r, r * r];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += row[i] * row[j];
            }
            b[i] += row[i] * y;
        }
    }
    let c = linalg::solve(a, b).ok_or_else(|| {
        Error::DegenerateDesign("quadratic fit needs three distinct rates".into())
    })?;
    Ok(QuadraticModel {
        c0: c[0],
        c1: c[1],
        c2: c[2],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatePhiFit {
    pub model: RatePhiModel,
    pub slope_clamped: bool,
}

/// Fits `rate = a * phi + b` by least squares over `(phi, rate)` pairs.
pub fn fit_rate_phi(samples: &[(f64, f64)]) -> Result<RatePhiFit> {
    for &(phi, rate) in samples {
        if !(phi.is_finite() && rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "rate sample ({phi}, {rate})"
            )));
        }
    }
    let (slope, _) = linear_regression(samples)?;
    let n = samples.len() as f64;
    let mean_phi = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let mean_rate = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let mut a = slope;
    let mut slope_clamped = false;
    if a < SLOPE_FLOOR {
        a = SLOPE_FLOOR;
        slope_clamped = true;
    }
    // Keep the line through the sample centroid even when the slope is pinned.
    let b = mean_rate - a * mean_phi;
    Ok(RatePhiFit {
        model: RatePhiModel { a, b },
        slope_clamped,
    })
}

/// Closed-form simple linear regression; errors match the fit entry points.
fn linear_regression(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::InsufficientSamples {
            have: points.len(),
            need: 2,
        });
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    if sxx <= 0.0 || !sxx.is_finite() {
        return Err(Error::DegenerateDesign(
            "regression needs two distinct abscissae".into(),
        ));
    }
    let slope = sxy / sxx;
    Ok((slope, mean_y - slope * mean_x))
}

/// Pearson correlation plus RMSE between predictions and observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodnessOfFit {
    pub pearson: f64,
    pub rmse: f64,
}

pub fn goodness(predicted: &[f64], actual: &[f64]) -> Result<GoodnessOfFit> {
    if predicted.len() != actual.len() || predicted.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} observations",
            predicted.len(),
            actual.len()
        )));
    }
    let n = predicted.len() as f64;
    let mean_p = predicted.iter().sum::<f64>() / n;
    let mean_a = actual.iter().sum::<f64>() / n;
    let mut spp = 0.0;
    let mut saa = 0.0;
    let mut spa = 0.0;
    let mut sq_err = 0.0;
    for (&p, &a) in predicted.iter().zip(actual) {
        spp += (p - mean_p) * (p - mean_p);
        saa += (a - mean_a) * (a - mean_a);
        spa += (p - mean_p) * (a - mean_a);
        sq_err += (p - a) * (p - a);
    }
    if spp <= 0.0 || saa <= 0.0 {
        return Err(Error::CorrelationUndefined(
            "constant vector has no correlation".into(),
        ));
    }
    Ok(GoodnessOfFit {
        pearson: spa / (spp * saa).sqrt(),
        rmse: (sq_err / n).sqrt(),
    })
}

/// Pools a probing matrix into power-law samples, attaching each scale's
/// importance weight to its row.
pub fn cauchy_samples(
    matrix: &LossMatrix,
    weights: &ImportanceWeights,
) -> Result<Vec<CauchySample>> {
    matrix.validate()?;
    weights.validate()?;
    if weights.len() != matrix.num_scales() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {} scales",
            weights.len(),
            matrix.num_scales()
        )));
    }
    let mut out = Vec::with_capacity(matrix.num_scales() * matrix.num_levels());
    for i in 0..matrix.num_scales() {
        for q in 0..matrix.num_levels() {
            out.push(CauchySample {
                weight: weights.values[i],
                rate: matrix.rate[i][q],
                loss: matrix.loss[i][q],
            });
        }
    }
    Ok(out)
}

/// `(phi, rate)` pairs for one scale of a probing matrix.
pub fn rate_phi_samples(matrix: &LossMatrix, scale: usize) -> Result<Vec<(f64, f64)>> {
    matrix.validate()?;
    if scale >= matrix.num_scales() {
        return Err(Error::InvalidParameter(format!(
            "scale {scale} of {}",
            matrix.num_scales()
        )));
    }
    Ok(matrix
        .levels
        .iter()
        .zip(&matrix.rate[scale])
        .map(|(&phi, &rate)| (phi, rate))
        .collect())
}

/// Everything the online allocation path needs, fitted offline once.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedModels {
    pub loss_rate: CauchyModel,
    pub quadratic: Option<QuadraticModel>,
    pub rate_phi: Vec<RatePhiModel>,
    pub weights: ImportanceWeights,
    /// Element-count ratio between neighboring scales.
    pub k: f64,
    /// Scale-0 element count; normalizes total bits to bpp.
    pub s0: u64,
    pub phi_bounds: (f64, f64),
    pub rate_floor: f64,
}

impl CalibratedModels {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.rate_phi.len() != self.weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} rate models for {} weights",
                self.rate_phi.len(),
                self.weights.len()
            )));
        }
        if !(self.loss_rate.alpha > 0.0 && self.loss_rate.beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "power law alpha {} beta {}",
                self.loss_rate.alpha, self.loss_rate.beta
            )));
        }
        for (i, m) in self.rate_phi.iter().enumerate() {
            if !(m.a > 0.0 && m.a.is_finite() && m.b.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "rate model {i}: a {} b {}",
                    m.a, m.b
                )));
            }
        }
        if !(self.k > 1.0 && self.k.is_finite()) {
            return Err(Error::InvalidParameter(format!("size ratio {}", self.k)));
        }
        if self.s0 == 0 {
            return Err(Error::InvalidParameter("zero scale-0 size".into()));
        }
        if !(self.rate_floor > 0.0 && self.rate_floor.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "rate floor {}",
                self.rate_floor
            )));
        }
        if self.phi_bounds.0 >= self.phi_bounds.1 {
            return Err(Error::InvalidParameter(format!(
                "phi bounds [{}, {}]",
                self.phi_bounds.0, self.phi_bounds.1
            )));
        }
        Ok(())
    }
}

/// Fit quality bookkeeping stored alongside the models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationDiagnostics {
    pub cauchy: GoodnessOfFit,
    pub cauchy_excluded: usize,
    pub beta_clamped: bool,
    pub rate_phi: Vec<GoodnessOfFit>,
    pub rate_phi_clamped: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOptions {
    pub k: f64,
    pub rate_floor: f64,
    /// Also fit the quadratic alternative.
    pub include_quadratic: bool,
    /// Linear-domain Gauss-Newton steps applied after the log-domain fit.
    pub gauss_newton_steps: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            k: DEFAULT_SIZE_RATIO,
            rate_floor: DEFAULT_RATE_FLOOR,
            include_quadratic: false,
            gauss_newton_steps: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub models: CalibratedModels,
    pub diagnostics: CalibrationDiagnostics,
}

/// Fits every model off one probing matrix.
pub fn calibrate(
    matrix: &LossMatrix,
    weights: &ImportanceWeights,
    s0: u64,
    config: &CodecConfig,
    opts: &CalibrationOptions,
) -> Result<Calibration> {
    calibrate_corpus(
        std::slice::from_ref(&(matrix.clone(), weights.clone())),
        s0,
        config,
        opts,
    )
}

/// Fits every model off a corpus of probing matrices, one per input, each
/// paired with the weights predicted for that input. Power-law samples and
/// per-scale rate samples are pooled across the corpus; the stored weight
/// vector is the per-scale mean of the inputs' (still summing to one).
pub fn calibrate_corpus(
    items: &[(LossMatrix, ImportanceWeights)],
    s0: u64,
    config: &CodecConfig,
    opts: &CalibrationOptions,
) -> Result<Calibration> {
    config.validate()?;
    let Some((first_matrix, first_weights)) = items.first() else {
        return Err(Error::InsufficientSamples { have: 0, need: 1 });
    };
    let scales = first_matrix.num_scales();
    let mut samples = Vec::new();
    for (matrix, weights) in items {
        if matrix.num_scales() != scales {
            return Err(Error::ShapeMismatch(format!(
                "{} scales in one probing matrix vs {scales} in another",
                matrix.num_scales()
            )));
        }
        samples.extend(cauchy_samples(matrix, weights)?);
    }
    let mut mean_weights = vec![0.0f64; scales];
    for (_, weights) in items {
        for (acc, &w) in mean_weights.iter_mut().zip(&weights.values) {
            *acc += w;
        }
    }
    let inv = 1.0 / items.len() as f64;
    mean_weights.iter_mut().for_each(|w| *w *= inv);
    let weights = ImportanceWeights::new(mean_weights, first_weights.provenance)?;
    let fit = fit_cauchy(&samples)?;
    let loss_rate = if opts.gauss_newton_steps > 0 {
        refine_cauchy(fit.model, &samples, opts.gauss_newton_steps)
    } else {
        fit.model
    };
    let kept: Vec<&CauchySample> = samples.iter().filter(|s| s.loss > 0.0).collect();
    let cauchy_goodness = goodness(
        &kept
            .iter()
            .map(|s| loss_rate.predict_loss(s.weight, s.rate))
            .collect::<Vec<_>>(),
        &kept.iter().map(|s| s.loss).collect::<Vec<_>>(),
    )?;

    let quadratic = if opts.include_quadratic {
        Some(fit_quadratic(&samples)?)
    } else {
        None
    };

    let mut rate_phi = Vec::with_capacity(scales);
    let mut rate_goodness = Vec::with_capacity(scales);
    let mut rate_clamped = Vec::with_capacity(scales);
    for i in 0..scales {
        let mut pairs = Vec::new();
        for (matrix, _) in items {
            pairs.extend(rate_phi_samples(matrix, i)?);
        }
        let fit = fit_rate_phi(&pairs)?;
        let predicted: Vec<f64> = pairs
            .iter()
            .map(|&(phi, _)| fit.model.rate_at(phi))
            .collect();
        let actual: Vec<f64> = pairs.iter().map(|&(_, rate)| rate).collect();
        rate_goodness.push(goodness(&predicted, &actual)?);
        rate_clamped.push(fit.slope_clamped);
        rate_phi.push(fit.model);
    }

    let models = CalibratedModels {
        loss_rate,
        quadratic,
        rate_phi,
        weights: weights.clone(),
        k: opts.k,
        s0,
        phi_bounds: (config.phi_min, config.phi_max),
        rate_floor: opts.rate_floor,
    };
    models.validate()?;
    Ok(Calibration {
        models,
        diagnostics: CalibrationDiagnostics {
            cauchy: cauchy_goodness,
            cauchy_excluded: fit.excluded,
            beta_clamped: fit.beta_clamped,
            rate_phi: rate_goodness,
            rate_phi_clamped: rate_clamped,
        },
    })
}

/// JSON wire form of a calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadratic: Option<QuadraticModel>,
    pub rate_phi: Vec<RatePhiModel>,
    pub weights: Vec<f64>,
    pub provenance: Provenance,
    pub k: f64,
    #[serde(rename = "S0")]
    pub s0: u64,
    pub phi_bounds: (f64, f64),
    pub rate_floor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<CalibrationDiagnostics>,
    /// Free-form snapshot of the configuration that produced the fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl ModelFile {
    pub fn from_calibration(calibration: &Calibration) -> Self {
        let m = &calibration.models;
        ModelFile {
            alpha: m.loss_rate.alpha,
            beta: m.loss_rate.beta,
            quadratic: m.quadratic,
            rate_phi: m.rate_phi.clone(),
            weights: m.weights.values.clone(),
            provenance: m.weights.provenance,
            k: m.k,
            s0: m.s0,
            phi_bounds: m.phi_bounds,
            rate_floor: m.rate_floor,
            diagnostics: Some(calibration.diagnostics.clone()),
            config: None,
        }
    }

    pub fn to_models(&self) -> Result<CalibratedModels> {
        let models = CalibratedModels {
            loss_rate: CauchyModel {
                alpha: self.alpha,
                beta: self.beta,
            },
            quadratic: self.quadratic,
            rate_phi: self.rate_phi.clone(),
            weights: ImportanceWeights::new(self.weights.clone(), self.provenance)?,
            k: self.k,
            s0: self.s0,
            phi_bounds: self.phi_bounds,
            rate_floor: self.rate_floor,
        };
        models.validate()?;
        Ok(models)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        text.push('\n');
        atomic_write(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::CodecConfig;
    use crate::mfip::{build_loss_matrix, normalize_and_average, probe_levels};
    use crate::synth::{synth_pyramid, SynthSpec};
    use crate::task::{BoundEvaluator, SyntheticDetector};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn power_law_samples(alpha: f64, beta: f64, noise: f64, seed: u64) -> Vec<CauchySample> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let weights = [0.1, 0.35, 1.0];
        let mut out = Vec::new();
        for (j, &w) in weights.iter().enumerate() {
            for q in 0..8 {
                let rate = 0.5 * 1.6f64.powi(q) * (1.0 + 0.07 * j as f64);
                let jitter = if noise > 0.0 {
                    rng.random_range(-noise..noise).exp()
                } else {
                    1.0
                };
                out.push(CauchySample {
                    weight: w,
                    rate,
                    loss: w * alpha * rate.powf(-beta) * jitter,
                });
            }
        }
        out
    }

    #[test]
    fn cauchy_fit_matches_hand_regression() {
        // In log space the points are (0, 2), (1, 2), (2, 1); least squares
        // by hand gives slope -1/2 and intercept 13/6.
        let samples: Vec<CauchySample> = [(0.0f64, 2.0f64), (1.0, 2.0), (2.0, 1.0)]
            .iter()
            .map(|&(x, y)| CauchySample {
                weight: 1.0,
                rate: x.exp(),
                loss: y.exp(),
            })
            .collect();
        let fit = fit_cauchy(&samples).unwrap();
        assert_abs_diff_eq!(fit.model.beta, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.model.alpha, (13.0f64 / 6.0).exp(), epsilon = 1e-9);
        assert!(!fit.beta_clamped);
        assert_eq!(fit.excluded, 0);
    }

    #[test]
    fn cauchy_fit_recovers_exact_parameters() {
        let samples = power_law_samples(2.3, 1.2, 0.0, 0);
        let fit = fit_cauchy(&samples).unwrap();
        assert_abs_diff_eq!(fit.model.alpha, 2.3, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.model.beta, 1.2, epsilon = 1e-9);
    }

    #[test]
    fn cauchy_fit_survives_one_percent_noise() {
        let samples = power_law_samples(1.8, 0.9, 0.01, 7);
        let fit = fit_cauchy(&samples).unwrap();
        assert!(
            (fit.model.alpha - 1.8).abs() / 1.8 < 0.05,
            "{:?}",
            fit.model
        );
        assert!((fit.model.beta - 0.9).abs() / 0.9 < 0.05, "{:?}", fit.model);
        let predicted: Vec<f64> = samples
            .iter()
            .map(|s| fit.model.predict_loss(s.weight, s.rate))
            .collect();
        let actual: Vec<f64> = samples.iter().map(|s| s.loss).collect();
        let g = goodness(&predicted, &actual).unwrap();
        assert!(g.pearson >= 0.999, "CC {}", g.pearson);
    }

    #[test]
    fn zero_loss_samples_are_excluded_not_fatal() {
        let mut samples = power_law_samples(2.0, 1.0, 0.0, 0);
        samples.push(CauchySample {
            weight: 1.0,
            rate: 50.0,
            loss: 0.0,
        });
        samples.push(CauchySample {
            weight: 0.0,
            rate: 1.0,
            loss: 0.1,
        });
        let fit = fit_cauchy(&samples).unwrap();
        assert_eq!(fit.excluded, 2);
        assert_abs_diff_eq!(fit.model.beta, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn too_few_usable_samples_error() {
        let samples = vec![
            CauchySample {
                weight: 1.0,
                rate: 1.0,
                loss: 0.0,
            };
            5
        ];
        assert!(matches!(
            fit_cauchy(&samples),
            Err(Error::InsufficientSamples { have: 0, need: 2 })
        ));
    }

    #[test]
    fn constant_rate_is_degenerate() {
        let samples = vec![
            CauchySample {
                weight: 1.0,
                rate: 2.0,
                loss: 0.5,
            },
            CauchySample {
                weight: 1.0,
                rate: 2.0,
                loss: 0.25,
            },
        ];
        assert!(matches!(
            fit_cauchy(&samples),
            Err(Error::DegenerateDesign(_))
        ));
    }

    #[test]
    fn anti_physical_data_clamps_beta() {
        // Loss rising with rate would need beta < 0.
        let samples: Vec<CauchySample> = (1..=5)
            .map(|q| CauchySample {
                weight: 1.0,
                rate: q as f64,
                loss: 0.1 * q as f64,
            })
            .collect();
        let fit = fit_cauchy(&samples).unwrap();
        assert!(fit.beta_clamped);
        assert_eq!(fit.model.beta, BETA_FLOOR);
        assert!(fit.model.alpha > 0.0);
    }

    #[test]
    fn gauss_newton_never_worsens_linear_domain_error() {
        let samples = power_law_samples(2.0, 1.1, 0.05, 3);
        let fit = fit_cauchy(&samples).unwrap();
        let refined = refine_cauchy(fit.model, &samples, 3);
        let sse = |m: &CauchyModel| -> f64 {
            samples
                .iter()
                .map(|s| {
                    let r = m.predict_loss(s.weight, s.rate) - s.loss;
                    r * r
                })
                .sum()
        };
        assert!(sse(&refined) <= sse(&fit.model) + 1e-15);
        assert!(refined.alpha > 0.0 && refined.beta > 0.0);
    }

    #[test]
    fn quadratic_fit_recovers_exact_coefficients() {
        let truth = QuadraticModel {
            c0: 0.5,
            c1: -0.2,
            c2: 0.03,
        };
        let samples: Vec<CauchySample> = (1..=6)
            .map(|q| {
                let rate = q as f64;
                CauchySample {
                    weight: 0.5,
                    rate,
                    loss: truth.predict_loss(0.5, rate),
                }
            })
            .collect();
        let fit = fit_quadratic(&samples).unwrap();
        assert_abs_diff_eq!(fit.c0, truth.c0, epsilon = 1e-8);
        assert_abs_diff_eq!(fit.c1, truth.c1, epsilon = 1e-8);
        assert_abs_diff_eq!(fit.c2, truth.c2, epsilon = 1e-8);
    }

    #[test]
    fn quadratic_fit_needs_three_distinct_rates() {
        let samples = vec![
            CauchySample {
                weight: 1.0,
                rate: 1.0,
                loss: 0.5,
            },
            CauchySample {
                weight: 1.0,
                rate: 1.0,
                loss: 0.4,
            },
            CauchySample {
                weight: 1.0,
                rate: 2.0,
                loss: 0.3,
            },
        ];
        assert!(matches!(
            fit_quadratic(&samples),
            Err(Error::DegenerateDesign(_))
        ));
    }

    #[test]
    fn rate_phi_fit_recovers_exact_line() {
        let samples: Vec<(f64, f64)> = (0..6)
            .map(|q| {
                let phi = 1.0 + 2.0 * q as f64;
                (phi, 1.3 * phi + 0.7)
            })
            .collect();
        let fit = fit_rate_phi(&samples).unwrap();
        assert_abs_diff_eq!(fit.model.a, 1.3, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.model.b, 0.7, epsilon = 1e-12);
        assert!(!fit.slope_clamped);
        assert_abs_diff_eq!(
            fit.model.phi_for_rate(fit.model.rate_at(5.5)),
            5.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn flat_rate_clamps_slope_through_centroid() {
        let samples = vec![(1.0, 2.0), (3.0, 2.0), (5.0, 2.0)];
        let fit = fit_rate_phi(&samples).unwrap();
        assert!(fit.slope_clamped);
        assert_eq!(fit.model.a, SLOPE_FLOOR);
        assert_abs_diff_eq!(fit.model.rate_at(3.0), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn goodness_on_perfect_and_inverted_fits() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let g = goodness(&a, &a).unwrap();
        assert_abs_diff_eq!(g.pearson, 1.0, epsilon = 1e-12);
        assert_eq!(g.rmse, 0.0);
        let inverted = [4.0, 3.0, 2.0, 1.0];
        let g = goodness(&inverted, &a).unwrap();
        assert_abs_diff_eq!(g.pearson, -1.0, epsilon = 1e-12);
        assert!(matches!(
            goodness(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::CorrelationUndefined(_))
        ));
    }

    fn probing_fixture() -> (LossMatrix, ImportanceWeights, u64, CodecConfig) {
        let spec = SynthSpec {
            n: 2,
            channels: 4,
            height0: 16,
            width0: 16,
            object_size_param: 0.5,
            include_pool: true,
        };
        let p = synth_pyramid(51, &spec).unwrap();
        let det = SyntheticDetector::size_coupled();
        let eval = BoundEvaluator {
            detector: &det,
            reference: &p,
        };
        let cfg = CodecConfig::default();
        let levels = probe_levels(&cfg, 6).unwrap();
        let build = build_loss_matrix(&p, &levels, &cfg, &eval).unwrap();
        let profile = normalize_and_average(&build.matrix).unwrap();
        let weights = ImportanceWeights::new(profile.importance, Provenance::Predicted).unwrap();
        let s0 = p.scales[0].element_count() as u64;
        (build.matrix, weights, s0, cfg)
    }

    #[test]
    fn sample_builders_pool_the_matrix() {
        let (matrix, weights, _, _) = probing_fixture();
        let samples = cauchy_samples(&matrix, &weights).unwrap();
        assert_eq!(samples.len(), matrix.num_scales() * matrix.num_levels());
        assert_eq!(samples[0].weight, weights.values[0]);
        assert_eq!(samples[matrix.num_levels()].weight, weights.values[1]);
        let pairs = rate_phi_samples(&matrix, 1).unwrap();
        assert_eq!(pairs.len(), matrix.num_levels());
        assert_eq!(pairs[2].0, matrix.levels[2]);
        assert_eq!(pairs[2].1, matrix.rate[1][2]);
        assert!(rate_phi_samples(&matrix, 99).is_err());
    }

    #[test]
    fn calibrate_produces_consistent_models() {
        let (matrix, weights, s0, cfg) = probing_fixture();
        let cal = calibrate(&matrix, &weights, s0, &cfg, &CalibrationOptions::default()).unwrap();
        cal.models.validate().unwrap();
        assert_eq!(cal.models.rate_phi.len(), 4);
        assert_eq!(cal.models.s0, s0);
        assert_eq!(cal.models.k, 4.0);
        assert!(cal.models.loss_rate.beta > 0.0);
        for (i, g) in cal.diagnostics.rate_phi.iter().enumerate() {
            assert!(g.pearson > 0.9, "scale {i} rate fit CC {}", g.pearson);
        }
        assert!(cal.diagnostics.cauchy.pearson > 0.5);
    }

    #[test]
    fn model_file_round_trips_through_json() {
        let (matrix, weights, s0, cfg) = probing_fixture();
        let opts = CalibrationOptions {
            include_quadratic: true,
            ..CalibrationOptions::default()
        };
        let cal = calibrate(&matrix, &weights, s0, &cfg, &opts).unwrap();
        let file = ModelFile::from_calibration(&cal);
        let text = serde_json::to_string_pretty(&file).unwrap();
        assert!(text.contains("\"S0\""), "missing S0 key in {text}");
        let back: ModelFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_models().unwrap(), cal.models);
    }

    #[test]
    fn model_file_save_load_round_trip() {
        let (matrix, weights, s0, cfg) = probing_fixture();
        let cal = calibrate(&matrix, &weights, s0, &cfg, &CalibrationOptions::default()).unwrap();
        let file = ModelFile::from_calibration(&cal);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("models").join("fit.json");
        file.save(&path).unwrap();
        let back = ModelFile::load(&path).unwrap();
        assert_eq!(back, file);
        std::fs::write(&path, b"{ not json").unwrap();
        assert!(matches!(ModelFile::load(&path), Err(Error::Json { .. })));
        assert!(ModelFile::load(&dir.path().join("absent.json")).is_err());
    }

    #[test]
    fn model_file_rejects_inconsistent_payload() {
        let (matrix, weights, s0, cfg) = probing_fixture();
        let cal = calibrate(&matrix, &weights, s0, &cfg, &CalibrationOptions::default()).unwrap();
        let mut file = ModelFile::from_calibration(&cal);
        file.weights = vec![0.5, 0.5]; // two weights for three rate models
        assert!(file.to_models().is_err());
        let mut file2 = ModelFile::from_calibration(&cal);
        file2.alpha = -1.0;
        assert!(file2.to_models().is_err());
    }
}
