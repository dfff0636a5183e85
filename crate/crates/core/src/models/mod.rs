//! Score-based classifiers, their fixed-point form, and per-group
//! thresholds.
//!
//! A model is trained in floating point, then quantized once. Every protocol
//! step (post-processing, answering, certification, audit) works on the
//! quantized integers so that the clear and circuit evaluations agree
//! exactly. Scores are pre-sigmoid margins; thresholds live on the same
//! scale.

mod circuit;
mod fixed;
mod serial;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::authvalue::Fp;
use crate::fairness::Group;

pub use circuit::{circuit_score, CommittedParams};
pub use fixed::{FixedPointConfig, THRESHOLD_INF};
pub use serial::{ModelBundle, SerialError, MODEL_MAGIC};
pub use train::{train, train_ffnn, train_logreg, TrainConfig, TrainError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `weights[out][in]`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn inputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn outputs(&self) -> usize {
        self.bias.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    LogReg,
    Ffnn,
}

/// A floating-point scoring model. Logistic regression is a single layer
/// with one output. A network applies ReLU between layers; with two
/// outputs the score is `z1 - z0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    pub kind: ModelKind,
    pub layers: Vec<Layer>,
}

/// Public shape of a model: everything except parameter values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub kind: ModelKind,
    /// Input width followed by every layer's output width.
    pub widths: Vec<usize>,
}

impl ModelShape {
    pub fn n_features(&self) -> usize {
        self.widths[0]
    }

    pub fn n_params(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn to_field(&self) -> Vec<Fp> {
        let mut v = vec![Fp::new(self.kind as u64), Fp::new(self.widths.len() as u64)];
        v.extend(self.widths.iter().map(|&w| Fp::new(w as u64)));
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("expected {expected} features, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("value {0} does not fit the fixed-point range")]
    OutOfRange(String),
    #[error("fixed-point overflow in layer {layer}")]
    Overflow { layer: usize },
    #[error("malformed model: {0}")]
    Malformed(String),
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl ScoreModel {
    pub fn logreg(weights: Vec<f64>, bias: f64) -> Self {
        ScoreModel {
            kind: ModelKind::LogReg,
            layers: vec![Layer {
                weights: vec![weights],
                bias: vec![bias],
            }],
        }
    }

    pub fn shape(&self) -> ModelShape {
        let mut widths = vec![self.layers.first().map_or(0, Layer::inputs)];
        widths.extend(self.layers.iter().map(Layer::outputs));
        ModelShape { kind: self.kind, widths }
    }

    pub fn n_features(&self) -> usize {
        self.shape().n_features()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layers.is_empty() {
            return Err(ModelError::Malformed("no layers".into()));
        }
        let out = self.layers.last().unwrap().outputs();
        if out != 1 && out != 2 {
            return Err(ModelError::Malformed(format!("{out} outputs")));
        }
        if self.kind == ModelKind::LogReg && (self.layers.len() != 1 || out != 1) {
            return Err(ModelError::Malformed("logistic regression must be one layer, one output".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.bias.len() || l.weights.iter().any(|r| r.len() != l.inputs()) {
                return Err(ModelError::Malformed(format!("layer {i} is ragged")));
            }
            if i > 0 && l.inputs() != self.layers[i - 1].outputs() {
                return Err(ModelError::Malformed(format!("layer {i} input width")));
            }
        }
        Ok(())
    }

    /// Pre-sigmoid margin in floating point.
    pub fn margin(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.check_dim(x.len())?;
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let z: Vec<f64> = l
                .weights
                .iter()
                .zip(&l.bias)
                .map(|(row, b)| row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>() + b)
                .collect();
            h = if i == last { z } else { z.into_iter().map(relu).collect() };
        }
        Ok(if h.len() == 2 { h[1] - h[0] } else { h[0] })
    }

    pub fn probability(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.margin(x).map(sigmoid)
    }

    fn check_dim(&self, found: usize) -> Result<(), ModelError> {
        let expected = self.n_features();
        if found == expected {
            Ok(())
        } else {
            Err(ModelError::Dimension { expected, found })
        }
    }

    pub fn quantize(&self, fpc: FixedPointConfig) -> Result<QuantizedModel, ModelError> {
        self.validate()?;
        fpc.validate()?;
        if let Some(l) = self.layers.iter().find(|l| l.inputs() > fpc.max_fan_in()) {
            return Err(ModelError::Malformed(format!("fan-in {} too wide for {fpc:?}", l.inputs())));
        }
        let layers = self
            .layers
            .iter()
            .map(|l| {
                Ok(QLayer {
                    weights: l
                        .weights
                        .iter()
                        .map(|r| r.iter().map(|&w| fpc.quantize(w)).collect::<Result<Vec<_>, _>>())
                        .collect::<Result<Vec<_>, _>>()?,
                    bias: l.bias.iter().map(|&b| fpc.quantize(b)).collect::<Result<Vec<_>, _>>()?,
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(QuantizedModel {
            shape: self.shape(),
            fpc,
            layers,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QLayer {
    pub weights: Vec<Vec<i64>>,
    pub bias: Vec<i64>,
}

/// A model with integer parameters scaled by `2^frac_bits`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedModel {
    pub shape: ModelShape,
    pub fpc: FixedPointConfig,
    pub layers: Vec<QLayer>,
}

impl QuantizedModel {
    pub fn n_features(&self) -> usize {
        self.shape.n_features()
    }

    /// Fixed-point score. Each neuron computes `floor((sum w x + b 2^f) / 2^f)`
    /// and must stay within the configured width; hidden neurons then apply
    /// ReLU. Circuits compute exactly the same integers.
    pub fn score(&self, x: &[i64]) -> Result<i64, ModelError> {
        if x.len() != self.n_features() {
            return Err(ModelError::Dimension {
                expected: self.n_features(),
                found: x.len(),
            });
        }
        let f = self.fpc.frac_bits;
        let last = self.layers.len() - 1;
        let mut h = x.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(l.bias.len());
            for (row, &b) in l.weights.iter().zip(&l.bias) {
                let acc: i128 = row.iter().zip(&h).map(|(&w, &v)| w as i128 * v as i128).sum::<i128>() + ((b as i128) << f);
                let t = acc.div_euclid(1i128 << f);
                if !self.fpc.fits(t) {
                    return Err(ModelError::Overflow { layer: i });
                }
                let t = t as i64;
                z.push(if i == last { t } else { t.max(0) });
            }
            h = z;
        }
        Ok(if h.len() == 2 { h[1] - h[0] } else { h[0] })
    }

    /// Quantizes features and scores them.
    pub fn score_features(&self, x: &[f64]) -> Result<i64, ModelError> {
        self.score(&self.fpc.quantize_features(x)?)
    }

    /// Canonical field encoding of the parameters: per layer, weights in
    /// row-major order followed by biases.
    pub fn params_field(&self) -> Vec<Fp> {
        let mut out = Vec::with_capacity(self.shape.n_params());
        for l in &self.layers {
            for row in &l.weights {
                out.extend(row.iter().map(|&w| Fp::from_i64(w)));
            }
            out.extend(l.bias.iter().map(|&b| Fp::from_i64(b)));
        }
        out
    }
}

/// Per-group decision thresholds on the quantized score scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Thresholds {
    pub a: i64,
    pub b: i64,
}

impl Thresholds {
    pub fn uniform(t: i64) -> Self {
        Thresholds { a: t, b: t }
    }

    pub fn get(&self, g: Group) -> i64 {
        match g {
            Group::A => self.a,
            Group::B => self.b,
        }
    }
}

/// A quantized model with per-group thresholds. Positive iff
/// `score >= threshold[group]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdedModel {
    pub model: QuantizedModel,
    pub thresholds: Thresholds,
}

impl ThresholdedModel {
    pub fn new(model: QuantizedModel, thresholds: Thresholds) -> Self {
        ThresholdedModel { model, thresholds }
    }

    pub fn decide(&self, score: i64, group: Group) -> bool {
        score >= self.thresholds.get(group)
    }

    /// Prediction on quantized features. `r` is the public randomness of the
    /// query; deterministic models ignore it.
    pub fn predict(&self, xq: &[i64], group: Group, _r: &[Fp]) -> Result<bool, ModelError> {
        Ok(self.decide(self.model.score(xq)?, group))
    }

    pub fn predict_features(&self, x: &[f64], group: Group) -> Result<bool, ModelError> {
        Ok(self.decide(self.model.score_features(x)?, group))
    }

    pub fn params_field(&self) -> Vec<Fp> {
        let mut v = self.model.params_field();
        v.push(Fp::from_i64(self.thresholds.a));
        v.push(Fp::from_i64(self.thresholds.b));
        v
    }

    /// Public digest binding shape, parameters and thresholds.
    pub fn digest(&self) -> Fp {
        let mut v = self.model.shape.to_field();
        v.extend(self.params_field());
        crate::zkcircuit::mimc_hash(&v)
    }
}
