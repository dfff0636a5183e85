//! `OATHMDL1` model files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "OATHMDL1" | version u32 = 1 | kind u8 | n_layers u32
//! per layer: inputs u32 | outputs u32 | weights f64[outputs * inputs] | bias f64[outputs]
//! frac_bits u32 | int_bits u32
//! has_thresholds u8 | threshold_a i64 | threshold_b i64   (thresholds only if flag = 1)
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FixedPointConfig, Layer, ModelError, ModelKind, ScoreModel, ThresholdedModel, Thresholds};

pub const MODEL_MAGIC: &[u8; 8] = b"OATHMDL1";
const VERSION: u32 = 1;

/// A trained model, its fixed-point format and (after post-processing) its
/// group thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub model: ScoreModel,
    pub fpc: FixedPointConfig,
    pub thresholds: Option<Thresholds>,
}

#[derive(Debug, Error)]
pub enum SerialError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model file version {0}")]
    Version(u32),
    #[error("model file truncated")]
    Truncated,
    #[error("trailing bytes after model")]
    Trailing,
    #[error("unknown model kind {0}")]
    Kind(u8),
    #[error("model has no thresholds")]
    NoThresholds,
    #[error(transparent)]
    Model(#[from] ModelError),
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SerialError> {
        if self.buf.len() < n {
            return Err(SerialError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, SerialError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, SerialError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64, SerialError> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, SerialError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl ModelBundle {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.model.kind as u8);
        out.extend_from_slice(&(self.model.layers.len() as u32).to_le_bytes());
        for l in &self.model.layers {
            out.extend_from_slice(&(l.inputs() as u32).to_le_bytes());
            out.extend_from_slice(&(l.outputs() as u32).to_le_bytes());
            for v in l.weights.iter().flatten().chain(&l.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.fpc.frac_bits.to_le_bytes());
        out.extend_from_slice(&self.fpc.int_bits.to_le_bytes());
        match self.thresholds {
            Some(t) => {
                out.push(1);
                out.extend_from_slice(&t.a.to_le_bytes());
                out.extend_from_slice(&t.b.to_le_bytes());
            }
            None => out.push(0),
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, SerialError> {
        let mut r = Reader { buf };
        if r.take(8)? != MODEL_MAGIC {
            return Err(SerialError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(SerialError::Version(version));
        }
        let kind = match r.u8()? {
            0 => ModelKind::LogReg,
            1 => ModelKind::Ffnn,
            k => return Err(SerialError::Kind(k)),
        };
        let n_layers = r.u32()? as usize;
        let mut layers = Vec::with_capacity(n_layers.min(64));
        for _ in 0..n_layers {
            let inputs = r.u32()? as usize;
            let outputs = r.u32()? as usize;
            if inputs.saturating_mul(outputs) > r.buf.len() / 8 {
                return Err(SerialError::Truncated);
            }
            let weights = (0..outputs)
                .map(|_| (0..inputs).map(|_| r.f64()).collect::<Result<Vec<_>, _>>())
                .collect::<Result<Vec<_>, _>>()?;
            let bias = (0..outputs).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
            layers.push(Layer { weights, bias });
        }
        let fpc = FixedPointConfig {
            frac_bits: r.u32()?,
            int_bits: r.u32()?,
        };
        let thresholds = match r.u8()? {
            0 => None,
            _ => Some(Thresholds { a: r.i64()?, b: r.i64()? }),
        };
        if !r.buf.is_empty() {
            return Err(SerialError::Trailing);
        }
        let model = ScoreModel { kind, layers };
        model.validate()?;
        fpc.validate()?;
        Ok(ModelBundle { model, fpc, thresholds })
    }

    /// Human-readable export.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// The quantized thresholded model used by every protocol phase.
    pub fn thresholded(&self) -> Result<ThresholdedModel, SerialError> {
        let t = self.thresholds.ok_or(SerialError::NoThresholds)?;
        Ok(ThresholdedModel::new(self.model.quantize(self.fpc)?, t))
    }
}
