//! Stream metadata sidecar.
//!
//! The coded-stream wire format carries element counts but not tensor dims,
//! and the pyramid container carries no task metadata at all, so `encode`
//! writes a JSON sidecar next to every `.fcmb` file with everything `decode`
//! and `evaluate` need: per-scale shapes, the quality assignment, rate
//! figures, task metadata, and the configuration snapshot.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use mfiba_core::codec::{RateReport, ScaleBitstream};
use mfiba_core::fsutil::atomic_write;
use mfiba_core::pyramid::FeaturePyramid;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleMeta {
    pub index: usize,
    pub channels: u32,
    pub height: u32,
    pub width: u32,
    pub element_count: u64,
    /// Full container size of this scale's record, in bits.
    pub bits: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamMeta {
    pub source_id: String,
    pub object_size_param: f64,
    pub has_pool: bool,
    /// Per-scale quality the stream was coded at.
    pub phis: Vec<f64>,
    pub scales: Vec<ScaleMeta>,
    pub total_bits: f64,
    /// Total bits per scale-0 element.
    pub bpp: f64,
    /// Configuration snapshot of the encoding run.
    pub config: serde_json::Value,
}

impl StreamMeta {
    pub fn new(
        pyramid: &FeaturePyramid,
        streams: &[ScaleBitstream],
        report: &RateReport,
        phis: &[f64],
        config: serde_json::Value,
    ) -> Self {
        let scales = pyramid
            .scales
            .iter()
            .zip(streams)
            .map(|(scale, stream)| ScaleMeta {
                index: scale.index,
                channels: scale.channels,
                height: scale.height,
                width: scale.width,
                element_count: stream.element_count,
                bits: stream.total_bits() as f64,
            })
            .collect();
        StreamMeta {
            source_id: pyramid.source_id.clone(),
            object_size_param: pyramid.object_size_param,
            has_pool: pyramid.has_pool,
            phis: phis.to_vec(),
            scales,
            total_bits: report.total_bits,
            bpp: report.bpp_equivalent,
            config,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        atomic_write(path, text.as_bytes())
            .with_context(|| format!("writing stream metadata {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<StreamMeta> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading stream metadata {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("parsing stream metadata {}", path.display()))
    }

    pub fn shapes(&self) -> Vec<(u32, u32, u32)> {
        self.scales
            .iter()
            .map(|s| (s.channels, s.height, s.width))
            .collect()
    }
}

/// Sidecar path: the stream filename plus `.meta.json`.
pub fn meta_path(stream_path: &Path) -> PathBuf {
    let mut name = stream_path.as_os_str().to_os_string();
    name.push(".meta.json");
    PathBuf::from(name)
}
