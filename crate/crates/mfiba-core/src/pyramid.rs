//! Multiscale feature pyramids.
//!
//! A pyramid holds scales 0..=n plus an optional pooled scale derived from
//! scale n. Scale indices are contiguous and the pooled scale, when present,
//! sits at index n+1 so every piece of size or weight arithmetic can treat it
//! as one more level. Channel count is identical across scales and spatial
//! dims halve (with ceiling) from one scale to the next, pooled scale
//! included, so consecutive element counts shrink by roughly 4x.

use crate::error::{Error, Result};

/// One scale: a channels x height x width tensor of f32 values stored row
/// major with channel outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScale {
    pub index: usize,
    pub channels: u32,
    pub height: u32,
    pub width: u32,
    pub data: Vec<f32>,
}

impl FeatureScale {
    pub fn new(
        index: usize,
        channels: u32,
        height: u32,
        width: u32,
        data: Vec<f32>,
    ) -> Result<Self> {
        let scale = FeatureScale {
            index,
            channels,
            height,
            width,
            data,
        };
        scale.validate()?;
        Ok(scale)
    }

    pub fn element_count(&self) -> usize {
        self.channels as usize * self.height as usize * self.width as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::InvalidPyramid(format!(
                "scale {} has empty dims {}x{}x{}",
                self.index, self.channels, self.height, self.width
            )));
        }
        if self.data.len() != self.element_count() {
            return Err(Error::ShapeMismatch(format!(
                "scale {} holds {} values, dims {}x{}x{} need {}",
                self.index,
                self.data.len(),
                self.channels,
                self.height,
                self.width,
                self.element_count()
            )));
        }
        if let Some(at) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput {
                scale: self.index,
                index: at,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    pub scales: Vec<FeatureScale>,
    /// Last scale is a pooled continuation of scale n.
    pub has_pool: bool,
    /// Opaque provenance tag; not persisted in the container.
    pub source_id: String,
    /// Dominant-object-size knob in [0, 1] read by size-coupled evaluators.
    pub object_size_param: f64,
}

impl FeaturePyramid {
    pub fn new(scales: Vec<FeatureScale>, has_pool: bool) -> Result<Self> {
        let pyramid = FeaturePyramid {
            scales,
            has_pool,
            source_id: String::new(),
            object_size_param: 0.5,
        };
        pyramid.validate()?;
        Ok(pyramid)
    }

    /// Number of scales including the pooled one.
    pub fn num_scales(&self) -> usize {
        self.scales.len()
    }

    /// Count of base scales, i.e. excluding the pooled scale.
    pub fn num_base_scales(&self) -> usize {
        self.scales.len() - usize::from(self.has_pool)
    }

    pub fn scale_sizes(&self) -> Vec<usize> {
        self.scales.iter().map(|s| s.element_count()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::InvalidPyramid("no scales".into()));
        }
        if self.has_pool && self.scales.len() < 2 {
            return Err(Error::InvalidPyramid(
                "pooled scale requires at least one base scale".into(),
            ));
        }
        if self.num_base_scales() > u8::MAX as usize {
            return Err(Error::InvalidPyramid(format!(
                "{} base scales exceed the container limit of {}",
                self.num_base_scales(),
                u8::MAX
            )));
        }
        if !(self.object_size_param.is_finite() && (0.0..=1.0).contains(&self.object_size_param)) {
            return Err(Error::InvalidPyramid(format!(
                "object_size_param {} outside [0, 1]",
                self.object_size_param
            )));
        }
        let channels = self.scales[0].channels;
        for (i, scale) in self.scales.iter().enumerate() {
            scale.validate()?;
            if scale.index != i {
                return Err(Error::InvalidPyramid(format!(
                    "scale at position {i} carries index {}",
                    scale.index
                )));
            }
            if scale.channels != channels {
                return Err(Error::InvalidPyramid(format!(
                    "scale {i} has {} channels, scale 0 has {channels}",
                    scale.channels
                )));
            }
            if i > 0 {
                let prev = &self.scales[i - 1];
                let want_h = prev.height.div_ceil(2);
                let want_w = prev.width.div_ceil(2);
                if scale.height != want_h || scale.width != want_w {
                    return Err(Error::InvalidPyramid(format!(
                        "scale {i} is {}x{}, expected {want_h}x{want_w} halved from scale {}",
                        scale.height,
                        scale.width,
                        i - 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-scale mean squared error between two pyramids of identical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionReport {
    pub per_scale_mse: Vec<f64>,
}

impl DistortionReport {
    pub fn mean(&self) -> f64 {
        if self.per_scale_mse.is_empty() {
            return 0.0;
        }
        self.per_scale_mse.iter().sum::<f64>() / self.per_scale_mse.len() as f64
    }
}

pub fn pyramid_distortion(a: &FeaturePyramid, b: &FeaturePyramid) -> Result<DistortionReport> {
    if a.scales.len() != b.scales.len() || a.has_pool != b.has_pool {
        return Err(Error::ShapeMismatch(format!(
            "{} scales (pool: {}) vs {} scales (pool: {})",
            a.scales.len(),
            a.has_pool,
            b.scales.len(),
            b.has_pool
        )));
    }
    let mut per_scale_mse = Vec::with_capacity(a.scales.len());
    for (sa, sb) in a.scales.iter().zip(&b.scales) {
        per_scale_mse.push(scale_mse(sa, sb)?);
    }
    Ok(DistortionReport { per_scale_mse })
}

pub fn scale_mse(a: &FeatureScale, b: &FeatureScale) -> Result<f64> {
    if (a.channels, a.height, a.width) != (b.channels, b.height, b.width) {
        return Err(Error::ShapeMismatch(format!(
            "scale {}: {}x{}x{} vs {}x{}x{}",
            a.index, a.channels, a.height, a.width, b.channels, b.height, b.width
        )));
    }
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data.len() as f64)
}
