//! Deterministic synthetic pyramid generator for experiments and tests.
//!
//! Each scale is white Gaussian noise passed through a 3x3 box blur (so
//! values have the short-range correlation of pooled network features),
//! re-standardized to zero mean and unit sample variance, then scaled by a
//! gently decaying per-scale amplitude. The decay keeps every scale's
//! rate-versus-quality line at a similar intercept (smaller scales would
//! otherwise cost disproportionately many bits per element), which is the
//! regime where a single loss-rate model family covers all scales. Every
//! scale keeps nontrivial entropy. Generation is a pure function of
//! (seed, spec).

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::pyramid::{FeaturePyramid, FeatureScale};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    /// Top base-scale index; base scales run 0..=n.
    pub n: usize,
    pub channels: u32,
    pub height0: u32,
    pub width0: u32,
    pub object_size_param: f64,
    pub include_pool: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n: 3,
            channels: 256,
            height0: 64,
            width0: 64,
            object_size_param: 0.5,
            include_pool: true,
        }
    }
}

impl SynthSpec {
    pub fn num_scales(&self) -> usize {
        self.n + 1 + usize::from(self.include_pool)
    }

    fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.height0 == 0 || self.width0 == 0 {
            return Err(Error::InvalidParameter(format!(
                "empty synth dims {}x{}x{}",
                self.channels, self.height0, self.width0
            )));
        }
        if !(self.object_size_param.is_finite() && (0.0..=1.0).contains(&self.object_size_param)) {
            return Err(Error::InvalidParameter(format!(
                "object_size_param {} outside [0, 1]",
                self.object_size_param
            )));
        }
        if self.n + 1 + usize::from(self.include_pool) > u8::MAX as usize {
            return Err(Error::InvalidParameter(format!("n {} too large", self.n)));
        }
        Ok(())
    }
}

/// Per-scale amplitude ratio: scale `i` is standardized noise times
/// `SCALE_AMPLITUDE_DECAY^i`.
pub const SCALE_AMPLITUDE_DECAY: f64 = 0.85;

pub fn synth_pyramid(seed: u64, spec: &SynthSpec) -> Result<FeaturePyramid> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut scales = Vec::with_capacity(spec.num_scales());
    let (mut h, mut w) = (spec.height0, spec.width0);
    for i in 0..spec.num_scales() {
        if i > 0 {
            h = h.div_ceil(2);
            w = w.div_ceil(2);
        }
        let mut data = smoothed_unit_noise(&mut rng, spec.channels, h, w);
        let amplitude = SCALE_AMPLITUDE_DECAY.powi(i as i32) as f32;
        data.iter_mut().for_each(|v| *v *= amplitude);
        scales.push(FeatureScale::new(i, spec.channels, h, w, data)?);
    }
    let mut pyramid = FeaturePyramid::new(scales, spec.include_pool)?;
    pyramid.source_id = format!("synth:{seed}");
    pyramid.object_size_param = spec.object_size_param;
    Ok(pyramid)
}

fn smoothed_unit_noise(rng: &mut ChaCha12Rng, c: u32, h: u32, w: u32) -> Vec<f32> {
    let (c, h, w) = (c as usize, h as usize, w as usize);
    let mut data: Vec<f32> = (0..c * h * w)
        .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng) as f32)
        .collect();
    box_blur_3x3(&mut data, c, h, w);
    standardize(&mut data);
    data
}

/// In-place 3x3 box blur per channel with clamp-to-edge padding.
fn box_blur_3x3(data: &mut [f32], c: usize, h: usize, w: usize) {
    let mut blurred = vec![0.0f32; h * w];
    for ch in 0..c {
        let plane = &data[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0f32;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                        let xx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                        acc += plane[yy * w + xx];
                    }
                }
                blurred[y * w + x] = acc / 9.0;
            }
        }
        data[ch * h * w..(ch + 1) * h * w].copy_from_slice(&blurred);
    }
}

fn standardize(data: &mut [f32]) {
    let n = data.len() as f64;
    let mean = data.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = data
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let std = var.sqrt().max(1e-12);
    for v in data.iter_mut() {
        *v = ((*v as f64 - mean) / std) as f32;
    }
}
