//! Precision of scalars sent "with high resolution" next to a residual.
//!
//! Predictor coefficients travel as IEEE binary16 or binary32. The quantization
//! interval is a scale that can span many decades, so its 16-bit form is
//! bfloat16 (binary32 exponent range, 8-bit significand). Both sides of the
//! link use the rounded value, never the original.

use half::{bf16, f16};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Precision {
    Bits16,
    Bits32,
}

impl Precision {
    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            16 => Ok(Precision::Bits16),
            32 => Ok(Precision::Bits32),
            other => Err(Error::InvalidArgument(format!(
                "coefficient precision must be 16 or 32 bits, got {other}"
            ))),
        }
    }

    pub fn bits(self) -> u64 {
        match self {
            Precision::Bits16 => 16,
            Precision::Bits32 => 32,
        }
    }

    /// Round-trip through binary16/binary32, saturating at the largest finite
    /// value instead of overflowing to infinity.
    pub fn round_coefficient(self, v: f64) -> f64 {
        match self {
            Precision::Bits16 => {
                let max = f16::MAX.to_f64();
                f16::from_f64(v.clamp(-max, max)).to_f64()
            }
            Precision::Bits32 => {
                let max = f32::MAX as f64;
                v.clamp(-max, max) as f32 as f64
            }
        }
    }

    /// Round a positive scale. Never returns zero for a positive input.
    pub fn round_scale(self, v: f64) -> f64 {
        debug_assert!(v > 0.0);
        let r = match self {
            Precision::Bits16 => bf16::from_f64(v).to_f64(),
            Precision::Bits32 => v as f32 as f64,
        };
        if r > 0.0 && r.is_finite() {
            r
        } else if r == 0.0 {
            match self {
                Precision::Bits16 => bf16::from_bits(1).to_f64(),
                Precision::Bits32 => f32::from_bits(1) as f64,
            }
        } else {
            match self {
                Precision::Bits16 => bf16::MAX.to_f64(),
                Precision::Bits32 => f32::MAX as f64,
            }
        }
    }
}
