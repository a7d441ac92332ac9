//! Byte-oriented range coder with adaptive frequency models.
//!
//! Classic carry-counting construction: 32-bit range, 33-bit low (bit 32 is
//! the carry), pending 0xFF bytes held back until the carry resolves. The
//! range is renormalized whenever it drops below 2^24, and totals are capped
//! at 2^16, so `range / total` always keeps at least 8 bits of precision.
//!
//! The magnitude model is adaptive: every token starts with frequency one and
//! is bumped on use, halving all counts when the total would pass the cap.
//! Encoder and decoder update in lockstep, so the bitstream needs no side
//! tables. Tokens outside the direct alphabet are escape-coded by the caller.

use crate::error::{Error, Result};

const TOP: u32 = 1 << 24;
pub const MAX_TOTAL: u32 = 1 << 16;
const HALF: u32 = 1 << 15;

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    /// Narrows the interval to the slice `[cum_lo, cum_lo + freq)` of `total`.
    pub fn encode(&mut self, cum_lo: u32, freq: u32, total: u32) {
        debug_assert!(freq > 0 && cum_lo.checked_add(freq).is_some_and(|hi| hi <= total));
        debug_assert!(total <= MAX_TOTAL);
        let r = self.range / total;
        self.low += r as u64 * cum_lo as u64;
        self.range = r * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    pub fn encode_raw_bit(&mut self, bit: bool) {
        self.encode(if bit { HALF } else { 0 }, HALF, MAX_TOTAL);
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || self.low > u32::MAX as u64 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.cache_size += 1;
        // 32-bit shift: bits 24..31 left through the cache, the carry bit is
        // consumed above, so only bits 0..23 survive into the next window.
        self.low = ((self.low as u32) << 8) as u64;
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

pub struct RangeDecoder<'a> {
    code: u32,
    range: u32,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        let mut dec = RangeDecoder {
            code: 0,
            range: u32::MAX,
            bytes,
            pos: 0,
        };
        for _ in 0..5 {
            dec.code = (dec.code << 8) | dec.next_byte() as u32;
        }
        dec
    }

    fn next_byte(&mut self) -> u8 {
        // Reads past the payload decode as zeros; a corrupt length surfaces
        // through the symbol-level checks instead of a panic here.
        let b = self.bytes.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    /// Where the current code sits inside `total`; strictly less than `total`
    /// for any stream the encoder produced.
    pub fn threshold(&mut self, total: u32) -> Result<u32> {
        debug_assert!(total <= MAX_TOTAL);
        self.range /= total;
        let t = self.code / self.range;
        if t >= total {
            return Err(Error::CorruptBitstream(format!(
                "threshold {t} outside alphabet total {total}"
            )));
        }
        Ok(t)
    }

    /// Consumes the slice chosen after a `threshold` call; `threshold` has
    /// already divided the range by the total.
    pub fn consume(&mut self, cum_lo: u32, freq: u32) {
        self.code -= cum_lo * self.range;
        self.range *= freq;
        while self.range < TOP {
            self.code = (self.code << 8) | self.next_byte() as u32;
            self.range <<= 8;
        }
    }

    pub fn decode_raw_bit(&mut self) -> Result<bool> {
        let t = self.threshold(MAX_TOTAL)?;
        let bit = t >= HALF;
        self.consume(if bit { HALF } else { 0 }, HALF);
        Ok(bit)
    }
}

/// Adaptive order-0 frequency table over a fixed token alphabet.
#[derive(Debug, Clone)]
pub struct AdaptiveModel {
    freq: Vec<u32>,
    total: u32,
}

const INCREMENT: u32 = 32;

impl AdaptiveModel {
    pub fn new(tokens: usize) -> Self {
        assert!(tokens >= 1 && tokens as u32 <= MAX_TOTAL / 2);
        AdaptiveModel {
            freq: vec![1; tokens],
            total: tokens as u32,
        }
    }

    /// Model whose initial counts halve from token 0 downward (floored at 1):
    /// a cheap prior for near-Laplacian magnitude streams, so short streams
    /// don't pay the uniform model's full learning cost. Adaptation washes
    /// the prior out after a few hundred symbols either way.
    pub fn with_geometric_prior(tokens: usize) -> Self {
        assert!(tokens >= 1 && tokens as u32 <= MAX_TOTAL / 2);
        let freq: Vec<u32> = (0..tokens)
            .map(|t| if t < 8 { 128u32 >> t } else { 1 })
            .collect();
        let total = freq.iter().sum();
        AdaptiveModel { freq, total }
    }

    pub fn encode(&mut self, enc: &mut RangeEncoder, token: usize) {
        let cum_lo: u32 = self.freq[..token].iter().sum();
        enc.encode(cum_lo, self.freq[token], self.total);
        self.bump(token);
    }

    pub fn decode(&mut self, dec: &mut RangeDecoder) -> Result<usize> {
        let t = dec.threshold(self.total)?;
        let mut cum_lo = 0u32;
        let mut token = 0usize;
        loop {
            let f = self.freq[token];
            if t < cum_lo + f {
                break;
            }
            cum_lo += f;
            token += 1;
        }
        dec.consume(cum_lo, self.freq[token]);
        self.bump(token);
        Ok(token)
    }

    fn bump(&mut self, token: usize) {
        self.freq[token] += INCREMENT;
        self.total += INCREMENT;
        if self.total > MAX_TOTAL {
            self.total = 0;
            for f in &mut self.freq {
                *f = (*f >> 1).max(1);
                self.total += *f;
            }
        }
    }
}
