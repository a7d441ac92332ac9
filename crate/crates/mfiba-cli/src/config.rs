//! Run configuration: a single JSON document that pins every knob a command
//! reads, so a run can be reproduced from its embedded snapshot alone.
//!
//! Field defaults apply both when the file omits a field and when no file is
//! given at all; command-line flags override the loaded values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use mfiba_core::allocator::RateTarget;
use mfiba_core::codec::CodecConfig;
use mfiba_core::eval::PipelineOptions;
use mfiba_core::mfip::probe_levels;
use mfiba_core::rdmodel::CalibrationOptions;
use mfiba_core::synth::SynthSpec;
use mfiba_core::task::SyntheticDetector;

/// Complete configuration for one invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Directory the synthesizer writes to and the calibrator reads from.
    pub pyramid_dir: PathBuf,
    /// Calibrated model parameters (JSON).
    pub model_file: PathBuf,
    /// Directory evaluation reports land in.
    pub report_dir: PathBuf,
    pub codec: CodecSection,
    pub probing: ProbingSection,
    pub evaluator: EvaluatorSpec,
    pub synth: SynthSection,
    /// Rate-control multipliers swept by `evaluate`, largest first.
    pub lambda_set: Vec<f64>,
    /// Default rate target for `allocate`/`encode` when no flag is given.
    pub rate_target: Option<RateTargetSpec>,
    /// Base RNG seed; `--seed` overrides.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pyramid_dir: PathBuf::from("pyramids"),
            model_file: PathBuf::from("model.json"),
            report_dir: PathBuf::from("reports"),
            codec: CodecSection::default(),
            probing: ProbingSection::default(),
            evaluator: EvaluatorSpec::default(),
            synth: SynthSection::default(),
            lambda_set: vec![0.4, 0.2, 0.1, 0.05, 0.025, 0.012],
            rate_target: None,
            seed: 0,
        }
    }
}

/// Quantizer geometry.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodecSection {
    /// Quantizer step at quality 0.
    pub delta0: f64,
    pub phi_min: f64,
    pub phi_max: f64,
}

impl Default for CodecSection {
    fn default() -> Self {
        let c = CodecConfig::default();
        CodecSection {
            delta0: c.delta0,
            phi_min: c.phi_min,
            phi_max: c.phi_max,
        }
    }
}

/// Importance-probing controls.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbingSection {
    /// Number of probing quality levels (m) when `phi_levels` is not given.
    pub levels: usize,
    /// Explicit probing qualities; overrides `levels`.
    pub phi_levels: Option<Vec<f64>>,
    /// Linear-domain refinement steps after the log-domain loss-rate fit.
    pub gauss_newton_steps: usize,
    /// Also record the quadratic loss-rate alternative in the model file.
    pub include_quadratic: bool,
}

impl Default for ProbingSection {
    fn default() -> Self {
        ProbingSection {
            levels: 8,
            phi_levels: None,
            gauss_newton_steps: 3,
            include_quadratic: false,
        }
    }
}

/// Task-evaluator selection: a name plus its parameter block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EvaluatorSpec {
    /// Sensitivities derived from each pyramid's object-size parameter.
    SizeCoupled {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        softness: Option<f64>,
    },
    /// Fixed per-scale sensitivities (normalized to sum 1).
    Fixed {
        sensitivities: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        softness: Option<f64>,
    },
}

impl Default for EvaluatorSpec {
    fn default() -> Self {
        EvaluatorSpec::SizeCoupled { softness: None }
    }
}

impl EvaluatorSpec {
    pub fn detector(&self) -> Result<SyntheticDetector> {
        let (detector, softness) = match self {
            EvaluatorSpec::SizeCoupled { softness } => {
                (SyntheticDetector::size_coupled(), *softness)
            }
            EvaluatorSpec::Fixed {
                sensitivities,
                softness,
            } => (
                SyntheticDetector::with_sensitivities(sensitivities.clone())
                    .context("evaluator sensitivities")?,
                *softness,
            ),
        };
        match softness {
            Some(s) => detector.with_softness(s).context("evaluator softness"),
            None => Ok(detector),
        }
    }
}

/// Pyramid synthesis parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    /// Top base-scale index; base scales run 0..=n.
    pub n: usize,
    pub channels: u32,
    pub height0: u32,
    pub width0: u32,
    /// Dominant-object-size knob in [0, 1]; also assumed for loaded pyramids.
    pub object_size_param: f64,
    pub include_pool: bool,
    /// Corpus size when `seeds` is not given (seeds run seed..seed+count).
    pub count: usize,
    /// Explicit seed list; overrides `count`.
    pub seeds: Option<Vec<u64>>,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            n: 3,
            channels: 8,
            height0: 32,
            width0: 32,
            object_size_param: 0.5,
            include_pool: true,
            count: 6,
            seeds: None,
        }
    }
}

impl SynthSection {
    pub fn to_spec(&self) -> SynthSpec {
        SynthSpec {
            n: self.n,
            channels: self.channels,
            height0: self.height0,
            width0: self.width0,
            object_size_param: self.object_size_param,
            include_pool: self.include_pool,
        }
    }
}

/// Serializable rate target for allocation-driven commands.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateTargetSpec {
    /// Use the multiplier directly.
    LambdaPrime { value: f64 },
    /// Largest multiplier whose model total lands at or under this.
    TotalBits { value: f64 },
    /// Same, in bits per scale-0 element.
    Bpp { value: f64 },
}

impl RateTargetSpec {
    pub fn to_target(self) -> RateTarget {
        match self {
            RateTargetSpec::LambdaPrime { value } => RateTarget::LambdaPrime(value),
            RateTargetSpec::TotalBits { value } => RateTarget::TotalBits(value),
            RateTargetSpec::Bpp { value } => RateTarget::Bpp(value),
        }
    }
}

impl RunConfig {
    /// Loads the file, or the built-in defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let config = match path {
            None => RunConfig::default(),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config file {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config file {}", path.display()))?
            }
        };
        config.validate()?;
        Ok(config)
    }

    /// Applies command-line overrides; flags win over file values.
    pub fn apply_flags(&mut self, seed: Option<u64>) {
        if let Some(seed) = seed {
            self.seed = seed;
        }
    }

    fn validate(&self) -> Result<()> {
        self.codec_config().validate().context("codec section")?;
        if self.lambda_set.is_empty() {
            bail!("lambda_set is empty");
        }
        for &l in &self.lambda_set {
            if !(l.is_finite() && l > 0.0) {
                bail!("lambda_set entry {l}; multipliers must be positive");
            }
        }
        if !(self.synth.object_size_param.is_finite()
            && (0.0..=1.0).contains(&self.synth.object_size_param))
        {
            bail!(
                "synth.object_size_param {}; expected a value in [0, 1]",
                self.synth.object_size_param
            );
        }
        Ok(())
    }

    pub fn codec_config(&self) -> CodecConfig {
        CodecConfig {
            delta0: self.codec.delta0,
            phi_min: self.codec.phi_min,
            phi_max: self.codec.phi_max,
        }
    }

    /// Probing qualities: the explicit list if configured, else a uniform
    /// ladder over the informative window.
    pub fn probe_qualities(&self) -> Result<Vec<f64>> {
        let codec = self.codec_config();
        match &self.probing.phi_levels {
            Some(levels) => {
                if levels.len() < 2 {
                    bail!("probing.phi_levels has {} entries; need >= 2", levels.len());
                }
                for &phi in levels {
                    codec
                        .check_phi(phi)
                        .with_context(|| format!("probing level {phi}"))?;
                }
                if levels.windows(2).any(|pair| pair[0] >= pair[1]) {
                    bail!("probing.phi_levels must be strictly increasing");
                }
                Ok(levels.clone())
            }
            None => probe_levels(&codec, self.probing.levels).context("deriving probing levels"),
        }
    }

    pub fn pipeline_options(&self) -> PipelineOptions {
        PipelineOptions {
            codec: self.codec_config(),
            probe_levels: self.probing.levels,
            ..PipelineOptions::default()
        }
    }

    pub fn calibration_options(&self) -> CalibrationOptions {
        CalibrationOptions {
            include_quadratic: self.probing.include_quadratic,
            gauss_newton_steps: self.probing.gauss_newton_steps,
            ..CalibrationOptions::default()
        }
    }

    /// The full configuration as a JSON value, embedded in every report so
    /// the run can be reproduced from the artifact alone.
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("configuration always serializes")
    }
}
