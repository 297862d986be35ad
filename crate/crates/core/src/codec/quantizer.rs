//! Stochastic fixed-interval quantizer and rate-budgeted interval selection.
//!
//! Element `e_i` maps to level `q_i + xi_i` where `q_i = floor(e_i / delta)` and
//! `xi_i ~ Bernoulli(e_i / delta - q_i)`, so `E[delta * level_i] = e_i`.

use rand::Rng;

use super::huffman;
use crate::error::{Error, Result};
use crate::rng::{Purpose, StreamKey};
use crate::vector::check_finite;
use crate::wire::Precision;

/// Finest interval tried is `max|e| * 2^-MAX_REFINEMENT`.
pub const MAX_REFINEMENT: u32 = 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerConfig {
    /// Average bits per residual element (the payload cap is `rate * d`).
    pub rate: f64,
    /// Precision of the transmitted interval (and predictor coefficients).
    pub precision: Precision,
}

impl QuantizerConfig {
    pub fn new(rate: f64, precision: Precision) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::InvalidArgument(format!("rate budget must be > 0, got {rate}")));
        }
        Ok(Self { rate, precision })
    }

    pub fn budget_bits(&self, dim: usize) -> u64 {
        (self.rate * dim as f64).floor() as u64
    }

    pub fn interval_bits(&self) -> u64 {
        self.precision.bits()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedResidual {
    pub levels: Vec<i32>,
    pub delta: f64,
    pub payload_bits: u64,
}

impl QuantizedResidual {
    pub fn dim(&self) -> usize {
        self.levels.len()
    }
}

pub fn quantize(e: &[f64], delta: f64, rng: &mut impl Rng) -> Result<QuantizedResidual> {
    let levels = quantize_levels(e, delta, rng)?;
    let payload_bits = huffman::payload_bits(&levels)?;
    Ok(QuantizedResidual {
        levels,
        delta,
        payload_bits,
    })
}

/// Levels only, without sizing the payload.
pub fn quantize_levels(e: &[f64], delta: f64, rng: &mut impl Rng) -> Result<Vec<i32>> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("quantization interval must be > 0, got {delta}")));
    }
    check_finite(e, "residual")?;
    e.iter()
        .map(|&v| {
            let x = v / delta;
            let q = x.floor();
            let frac = x - q;
            let up = frac > 0.0 && rng.gen::<f64>() < frac;
            let level = q + if up { 1.0 } else { 0.0 };
            if level < i16::MIN as f64 || level > i16::MAX as f64 {
                return Err(Error::LevelOverflow { level: level as i64 });
            }
            Ok(level as i32)
        })
        .collect()
}

pub fn dequantize(qr: &QuantizedResidual) -> Vec<f64> {
    qr.levels.iter().map(|&l| qr.delta * l as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalChoice {
    /// Wire-rounded interval.
    pub delta: f64,
    /// Refinement step: `delta ~ max|e| * 2^-refinement`.
    pub refinement: u32,
    /// Payload of the measurement draw at this interval.
    pub measured_bits: u64,
    /// Even the coarsest interval overshoots the budget.
    pub saturated: bool,
}

/// Picks the finest interval on the grid `max|e| * 2^-j` whose measured
/// payload fits in `rate * d` bits.
///
/// Candidates are tried coarse to fine and the search stops at the first one
/// that overshoots the budget or overflows the 16-bit level range. Each
/// candidate is measured by quantizing with the same fixed stream, so the
/// choice depends only on `(e, rate)`.
pub fn select_interval(e: &[f64], cfg: &QuantizerConfig) -> Result<IntervalChoice> {
    check_finite(e, "residual")?;
    let max_abs = e.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let budget = cfg.budget_bits(e.len());
    if max_abs == 0.0 {
        let delta = cfg.precision.round_scale(1.0);
        let measured_bits = huffman::payload_bits(&vec![0; e.len()])?;
        return Ok(IntervalChoice {
            delta,
            refinement: 0,
            measured_bits,
            saturated: measured_bits > budget,
        });
    }

    let measure = |j: u32| -> Result<Option<(f64, u64)>> {
        let delta = cfg.precision.round_scale(max_abs * 0.5f64.powi(j as i32));
        let mut rng = StreamKey::new(0, Purpose::IntervalSearch, 0, 0).stream();
        match quantize_levels(e, delta, &mut rng) {
            Ok(levels) => Ok(Some((delta, huffman::payload_bits(&levels)?))),
            Err(Error::LevelOverflow { .. }) => Ok(None),
            Err(other) => Err(other),
        }
    };

    let (coarsest, coarse_bits) = measure(0)?.expect("levels at delta = max|e| are within +/-1");
    let mut choice = IntervalChoice {
        delta: coarsest,
        refinement: 0,
        measured_bits: coarse_bits,
        saturated: coarse_bits > budget,
    };
    if choice.saturated {
        return Ok(choice);
    }
    for j in 1..=MAX_REFINEMENT {
        match measure(j)? {
            Some((delta, bits)) if bits <= budget => {
                choice = IntervalChoice {
                    delta,
                    refinement: j,
                    measured_bits: bits,
                    saturated: false,
                };
            }
            _ => break,
        }
    }
    Ok(choice)
}
