use serde::{Deserialize, Serialize};

use super::ModelError;

/// Thresholds at `+-THRESHOLD_INF` classify every score as negative or
/// positive respectively; they sit far outside any representable score.
pub const THRESHOLD_INF: i64 = 1 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedPointConfig {
    pub frac_bits: u32,
    pub int_bits: u32,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig {
            frac_bits: 16,
            int_bits: 8,
        }
    }
}

impl FixedPointConfig {
    /// Signed width of every quantized parameter and activation.
    pub fn total_bits(&self) -> u32 {
        self.frac_bits + self.int_bits
    }

    pub fn scale(&self) -> f64 {
        (1u64 << self.frac_bits) as f64
    }

    pub fn fits(&self, v: i128) -> bool {
        let half = 1i128 << (self.total_bits() - 1);
        (-half..half).contains(&v)
    }

    pub fn quantize(&self, v: f64) -> Result<i64, ModelError> {
        let q = (v * self.scale()).round();
        if !q.is_finite() || !self.fits(q as i128) {
            return Err(ModelError::OutOfRange(format!("{v}")));
        }
        Ok(q as i64)
    }

    pub fn dequantize(&self, q: i64) -> f64 {
        q as f64 / self.scale()
    }

    pub fn quantize_features(&self, x: &[f64]) -> Result<Vec<i64>, ModelError> {
        x.iter().map(|&v| self.quantize(v)).collect()
    }

    /// Bit width for comparing scores against thresholds: differences of
    /// two in-range activations plus the sentinel stay below this.
    pub fn compare_bits(&self) -> u32 {
        31
    }

    /// Scores must stay well inside the threshold sentinels.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.frac_bits == 0 || self.int_bits == 0 || self.total_bits() > 26 {
            return Err(ModelError::Malformed(format!(
                "unsupported fixed-point format {}.{}",
                self.int_bits, self.frac_bits
            )));
        }
        Ok(())
    }

    /// Largest layer fan-in whose worst-case accumulator still has a
    /// unique signed lift in the field.
    pub fn max_fan_in(&self) -> usize {
        1usize << (58 - 2 * (self.total_bits() - 1))
    }
}
