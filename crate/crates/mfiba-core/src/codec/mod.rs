//! Per-scale feature codec: dead-zone scalar quantizer over an adaptive
//! range coder.
//!
//! The quality knob phi halves the quantizer step per unit: step(phi) =
//! delta0 * 2^-phi. Symbols are coded magnitude-first from a 65-token
//! adaptive alphabet (magnitudes 0..=63 direct, token 64 escapes to a
//! gamma-coded excess), followed by a raw sign bit for nonzero symbols.
//! Magnitudes outside the direct alphabet therefore cost more but never
//! fail. Encoding is deterministic: the payload is a pure function of the
//! input tensor, phi, and delta0.

mod bitstream;
mod rangecoder;

pub use bitstream::{ScaleBitstream, HEADER_LEN, TRAILER_LEN};
pub use rangecoder::{AdaptiveModel, RangeDecoder, RangeEncoder};

use std::time::Instant;

use crate::error::{Error, Result};
use crate::pyramid::{FeaturePyramid, FeatureScale};

/// Direct magnitude alphabet; token `MAG_DIRECT` escapes to gamma coding.
const MAG_DIRECT: i64 = 64;
const ALPHABET: usize = MAG_DIRECT as usize + 1;
/// Longest accepted gamma prefix when decoding an escape; anything longer
/// can only come from a damaged payload.
const MAX_GAMMA_BITS: u32 = 48;

#[derive(Debug, Clone, PartialEq)]
pub struct CodecConfig {
    /// Quantizer step at phi = 0.
    pub delta0: f64,
    pub phi_min: f64,
    pub phi_max: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            delta0: 1.0,
            phi_min: 0.0,
            phi_max: 12.0,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta0.is_finite() && self.delta0 > 0.0) {
            return Err(Error::InvalidParameter(format!("delta0 {}", self.delta0)));
        }
        if !(self.phi_min.is_finite() && self.phi_max.is_finite() && self.phi_min <= self.phi_max) {
            return Err(Error::InvalidParameter(format!(
                "phi bounds [{}, {}]",
                self.phi_min, self.phi_max
            )));
        }
        let step = self.step(self.phi_max);
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "step underflows at phi_max: {step}"
            )));
        }
        Ok(())
    }

    /// Quantizer step for a given phi, rounded through f32 so the encoder and
    /// the wire header agree exactly.
    pub fn step(&self, phi: f64) -> f64 {
        (self.delta0 * (-phi).exp2()) as f32 as f64
    }

    pub fn check_phi(&self, phi: f64) -> Result<()> {
        if !phi.is_finite() || phi < self.phi_min || phi > self.phi_max {
            return Err(Error::PhiOutOfRange {
                phi,
                min: self.phi_min,
                max: self.phi_max,
            });
        }
        Ok(())
    }
}

/// Per-scale quality assignment, validated against the codec bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiVector(Vec<f64>);

impl PhiVector {
    pub fn new(values: Vec<f64>, config: &CodecConfig) -> Result<Self> {
        for &phi in &values {
            config.check_phi(phi)?;
        }
        Ok(PhiVector(values))
    }

    pub fn uniform(phi: f64, scales: usize, config: &CodecConfig) -> Result<Self> {
        config.check_phi(phi)?;
        Ok(PhiVector(vec![phi; scales]))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Dead-zone quantizer: round toward zero, so the zero bin spans (-step, step).
pub fn quantize(x: f32, step: f64) -> i64 {
    (x as f64 / step).trunc() as i64
}

/// Midpoint reconstruction for nonzero symbols; symbol 0 maps back to 0.
pub fn dequantize(s: i64, step: f64) -> f32 {
    if s == 0 {
        0.0
    } else {
        let magnitude = (s.unsigned_abs() as f64 + 0.5) * step;
        (if s < 0 { -magnitude } else { magnitude }) as f32
    }
}

pub fn encode_scale(
    scale: &FeatureScale,
    phi: f64,
    config: &CodecConfig,
) -> Result<ScaleBitstream> {
    config.validate()?;
    config.check_phi(phi)?;
    if let Some(at) = scale.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput {
            scale: scale.index,
            index: at,
        });
    }
    if scale.index > u8::MAX as usize {
        return Err(Error::InvalidParameter(format!(
            "scale index {} exceeds the container limit",
            scale.index
        )));
    }
    let step = config.step(phi);
    let mut enc = RangeEncoder::new();
    let mut model = AdaptiveModel::with_geometric_prior(ALPHABET);
    for &x in &scale.data {
        let s = quantize(x, step);
        let mag = s.unsigned_abs();
        if mag < MAG_DIRECT as u64 {
            model.encode(&mut enc, mag as usize);
        } else {
            model.encode(&mut enc, MAG_DIRECT as usize);
            encode_gamma(&mut enc, mag - MAG_DIRECT as u64);
        }
        if s != 0 {
            enc.encode_raw_bit(s < 0);
        }
    }
    Ok(ScaleBitstream {
        scale: scale.index as u8,
        phi: phi as f32,
        step: step as f32,
        element_count: scale.data.len() as u64,
        payload: enc.finish(),
        shape: (scale.channels, scale.height, scale.width),
    })
}

pub fn decode_scale(stream: &ScaleBitstream) -> Result<FeatureScale> {
    let (c, h, w) = stream.shape;
    let expected = c as u64 * h as u64 * w as u64;
    if stream.element_count != expected {
        return Err(Error::SymbolCountMismatch {
            expected,
            actual: stream.element_count,
        });
    }
    let step = stream.step as f64;
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::CorruptBitstream(format!("invalid step {step}")));
    }
    let mut dec = RangeDecoder::new(&stream.payload);
    let mut model = AdaptiveModel::with_geometric_prior(ALPHABET);
    let mut data = Vec::with_capacity(stream.element_count as usize);
    for _ in 0..stream.element_count {
        let token = model.decode(&mut dec)?;
        let mag = if token < MAG_DIRECT as usize {
            token as u64
        } else {
            MAG_DIRECT as u64 + decode_gamma(&mut dec)?
        };
        let s = if mag == 0 {
            0i64
        } else {
            let negative = dec.decode_raw_bit()?;
            let mag = i64::try_from(mag)
                .map_err(|_| Error::CorruptBitstream(format!("magnitude {mag} overflows")))?;
            if negative {
                -mag
            } else {
                mag
            }
        };
        data.push(dequantize(s, step));
    }
    FeatureScale::new(stream.scale as usize, c, h, w, data)
}

/// Exp-Golomb style: unary length prefix, then the value's low bits.
fn encode_gamma(enc: &mut RangeEncoder, excess: u64) {
    let v = excess + 1;
    let bits = 63 - v.leading_zeros();
    for _ in 0..bits {
        enc.encode_raw_bit(true);
    }
    enc.encode_raw_bit(false);
    for i in (0..bits).rev() {
        enc.encode_raw_bit(v & (1 << i) != 0);
    }
}

fn decode_gamma(dec: &mut RangeDecoder) -> Result<u64> {
    let mut bits = 0u32;
    while dec.decode_raw_bit()? {
        bits += 1;
        if bits > MAX_GAMMA_BITS {
            return Err(Error::CorruptBitstream(
                "escape magnitude prefix too long".into(),
            ));
        }
    }
    let mut v = 1u64;
    for _ in 0..bits {
        v = (v << 1) | u64::from(dec.decode_raw_bit()?);
    }
    Ok(v - 1)
}

/// Bits spent per scale plus the derived per-element and per-pixel rates.
/// Rates are bits per element; `bpp_equivalent` normalizes total bits by the
/// scale-0 element count.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub bits: Vec<f64>,
    pub rates: Vec<f64>,
    pub total_bits: f64,
    pub bpp_equivalent: f64,
}

impl RateReport {
    pub fn new(bits: Vec<f64>, scale_sizes: &[usize]) -> Result<Self> {
        if bits.len() != scale_sizes.len() || scale_sizes.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "{} bit entries vs {} scales",
                bits.len(),
                scale_sizes.len()
            )));
        }
        let rates = bits
            .iter()
            .zip(scale_sizes)
            .map(|(&b, &s)| b / s as f64)
            .collect();
        let total_bits = bits.iter().sum();
        let report = RateReport {
            bits,
            rates,
            total_bits,
            bpp_equivalent: total_bits / scale_sizes[0] as f64,
        };
        report.validate()?;
        Ok(report)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits.len() != self.rates.len() || self.bits.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "{} bit entries vs {} rates",
                self.bits.len(),
                self.rates.len()
            )));
        }
        for (i, (&b, &r)) in self.bits.iter().zip(&self.rates).enumerate() {
            if !(b.is_finite() && b >= 0.0 && r.is_finite() && r >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "scale {i} reports bits {b}, rate {r}"
                )));
            }
        }
        let sum: f64 = self.bits.iter().sum();
        if (sum - self.total_bits).abs() > 1e-6 * sum.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "total_bits {} disagrees with per-scale sum {sum}",
                self.total_bits
            )));
        }
        if !(self.bpp_equivalent.is_finite() && self.bpp_equivalent >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bpp {}",
                self.bpp_equivalent
            )));
        }
        Ok(())
    }
}

pub fn encode_pyramid(
    p: &FeaturePyramid,
    phis: &PhiVector,
    config: &CodecConfig,
) -> Result<(Vec<ScaleBitstream>, RateReport)> {
    if phis.len() != p.scales.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} phi entries for {} scales",
            phis.len(),
            p.scales.len()
        )));
    }
    let mut streams = Vec::with_capacity(p.scales.len());
    let mut bits = Vec::with_capacity(p.scales.len());
    for (scale, &phi) in p.scales.iter().zip(phis.values()) {
        let stream = encode_scale(scale, phi, config)?;
        bits.push(stream.total_bits() as f64);
        streams.push(stream);
    }
    let report = RateReport::new(bits, &p.scale_sizes())?;
    Ok((streams, report))
}

pub fn decode_pyramid(streams: &[ScaleBitstream], has_pool: bool) -> Result<FeaturePyramid> {
    let mut scales = Vec::with_capacity(streams.len());
    for stream in streams {
        scales.push(decode_scale(stream)?);
    }
    FeaturePyramid::new(scales, has_pool)
}

/// One full coding pass: rate, reconstruction, and where the wall time went.
#[derive(Debug, Clone)]
pub struct CodedPass {
    pub report: RateReport,
    pub reconstruction: FeaturePyramid,
    pub enc_seconds: f64,
    pub dec_seconds: f64,
}

/// Anything that can stand in for the feature codec: the reference
/// implementation below, or a rate-table stub in tests.
pub trait CodecBackend {
    fn measure_rate(&self, p: &FeaturePyramid, phis: &PhiVector) -> Result<RateReport>;

    fn reconstruct(&self, p: &FeaturePyramid, phis: &PhiVector) -> Result<FeaturePyramid>;

    /// Rate and reconstruction in one pass with split timings. The default
    /// runs the two required methods back to back; implementations that can
    /// share work should override it.
    fn code_timed(&self, p: &FeaturePyramid, phis: &PhiVector) -> Result<CodedPass> {
        let enc_start = Instant::now();
        let report = self.measure_rate(p, phis)?;
        let enc_seconds = enc_start.elapsed().as_secs_f64();
        let dec_start = Instant::now();
        let reconstruction = self.reconstruct(p, phis)?;
        let dec_seconds = dec_start.elapsed().as_secs_f64();
        report.validate()?;
        Ok(CodedPass {
            report,
            reconstruction,
            enc_seconds,
            dec_seconds,
        })
    }
}

/// The reference dead-zone + range-coder codec.
#[derive(Debug, Clone, Default)]
pub struct ReferenceCodec {
    pub config: CodecConfig,
}

impl ReferenceCodec {
    pub fn new(config: CodecConfig) -> Self {
        ReferenceCodec { config }
    }
}

impl CodecBackend for ReferenceCodec {
    fn measure_rate(&self, p: &FeaturePyramid, phis: &PhiVector) -> Result<RateReport> {
        Ok(encode_pyramid(p, phis, &self.config)?.1)
    }

    fn reconstruct(&self, p: &FeaturePyramid, phis: &PhiVector) -> Result<FeaturePyramid> {
        let (streams, _) = encode_pyramid(p, phis, &self.config)?;
        let mut recon = decode_pyramid(&streams, p.has_pool)?;
        recon.source_id = p.source_id.clone();
        recon.object_size_param = p.object_size_param;
        Ok(recon)
    }

    fn code_timed(&self, p: &FeaturePyramid, phis: &PhiVector) -> Result<CodedPass> {
        let enc_start = Instant::now();
        let (streams, report) = encode_pyramid(p, phis, &self.config)?;
        let enc_seconds = enc_start.elapsed().as_secs_f64();
        let dec_start = Instant::now();
        let mut reconstruction = decode_pyramid(&streams, p.has_pool)?;
        let dec_seconds = dec_start.elapsed().as_secs_f64();
        reconstruction.source_id = p.source_id.clone();
        reconstruction.object_size_param = p.object_size_param;
        Ok(CodedPass {
            report,
            reconstruction,
            enc_seconds,
            dec_seconds,
        })
    }
}

/// Stub backend with a linear per-scale rate table and lossless
/// reconstruction; lets allocator and model tests run without entropy coding.
#[derive(Debug, Clone)]
pub struct LinearRateBackend {
    /// Per-scale slope of bits-per-element in phi.
    pub a: Vec<f64>,
    /// Per-scale intercept.
    pub b: Vec<f64>,
}

impl CodecBackend for LinearRateBackend {
    fn measure_rate(&self, p: &FeaturePyramid, phis: &PhiVector) -> Result<RateReport> {
        if self.a.len() != p.scales.len() || phis.len() != p.scales.len() {
            return Err(Error::ShapeMismatch(format!(
                "rate table covers {} scales, pyramid has {}",
                self.a.len(),
                p.scales.len()
            )));
        }
        let sizes = p.scale_sizes();
        let bits = phis
            .values()
            .iter()
            .enumerate()
            .map(|(i, &phi)| (self.a[i] * phi + self.b[i]) * sizes[i] as f64)
            .collect();
        RateReport::new(bits, &sizes)
    }

    fn reconstruct(&self, p: &FeaturePyramid, _phis: &PhiVector) -> Result<FeaturePyramid> {
        Ok(p.clone())
    }
}
