use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fairness::LabeledDataset;

use super::{sigmoid, Layer, ModelKind, ScoreModel};

/// Weights are clipped to this magnitude after every step so the
/// fixed-point form never overflows its integer part.
const WEIGHT_CLIP: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: ModelKind,
    /// Hidden layer widths; the network adds a two-unit output layer.
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            kind: ModelKind::LogReg,
            hidden: vec![8],
            learning_rate: 0.5,
            epochs: 200,
            batch_size: 64,
            l2: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("training set is empty")]
    Empty,
    #[error("record {0} has a different feature count")]
    Ragged(usize),
    #[error("training diverged")]
    Diverged,
}

fn check(ds: &LabeledDataset) -> Result<usize, TrainError> {
    if ds.is_empty() {
        return Err(TrainError::Empty);
    }
    let d = ds.records[0].features.len();
    if let Some(i) = ds.records.iter().position(|r| r.features.len() != d) {
        return Err(TrainError::Ragged(i));
    }
    Ok(d)
}

pub fn train(ds: &LabeledDataset, cfg: &TrainConfig) -> Result<ScoreModel, TrainError> {
    match cfg.kind {
        ModelKind::LogReg => train_logreg(ds, cfg),
        ModelKind::Ffnn => train_ffnn(ds, cfg),
    }
}

/// Full-batch gradient descent on the logistic loss.
pub fn train_logreg(ds: &LabeledDataset, cfg: &TrainConfig) -> Result<ScoreModel, TrainError> {
    let d = check(ds)?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let init = Normal::new(0.0, 0.01).unwrap();
    let mut w: Vec<f64> = (0..d).map(|_| init.sample(&mut rng)).collect();
    let mut b = 0.0;
    let n = ds.len() as f64;
    for _ in 0..cfg.epochs {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for r in &ds.records {
            let z: f64 = w.iter().zip(&r.features).map(|(a, x)| a * x).sum::<f64>() + b;
            let err = sigmoid(z) - f64::from(u8::from(r.label));
            for (g, x) in gw.iter_mut().zip(&r.features) {
                *g += err * x;
            }
            gb += err;
        }
        for (wk, g) in w.iter_mut().zip(&gw) {
            *wk = (*wk - cfg.learning_rate * (g / n + cfg.l2 * *wk)).clamp(-WEIGHT_CLIP, WEIGHT_CLIP);
        }
        b = (b - cfg.learning_rate * gb / n).clamp(-WEIGHT_CLIP, WEIGHT_CLIP);
    }
    if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(TrainError::Diverged);
    }
    Ok(ScoreModel::logreg(w, b))
}

/// Mini-batch SGD for a ReLU network with a two-unit output; the logistic
/// loss is taken on `z1 - z0`.
pub fn train_ffnn(ds: &LabeledDataset, cfg: &TrainConfig) -> Result<ScoreModel, TrainError> {
    let d = check(ds)?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut widths = vec![d];
    widths.extend(&cfg.hidden);
    widths.push(2);
    let mut layers: Vec<Layer> = widths
        .windows(2)
        .map(|w| {
            let he = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).unwrap();
            Layer {
                weights: (0..w[1]).map(|_| (0..w[0]).map(|_| he.sample(&mut rng)).collect()).collect(),
                bias: vec![0.0; w[1]],
            }
        })
        .collect();
    let last = layers.len() - 1;
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let batch = cfg.batch_size.max(1);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let mut grads: Vec<Layer> = layers
                .iter()
                .map(|l| Layer {
                    weights: vec![vec![0.0; l.inputs()]; l.outputs()],
                    bias: vec![0.0; l.outputs()],
                })
                .collect();
            for &i in chunk {
                let r = &ds.records[i];
                // Forward, keeping every layer's input and pre-activation.
                let mut acts = vec![r.features.clone()];
                let mut pre = Vec::with_capacity(layers.len());
                for (li, l) in layers.iter().enumerate() {
                    let h = acts.last().unwrap();
                    let z: Vec<f64> = l
                        .weights
                        .iter()
                        .zip(&l.bias)
                        .map(|(row, b)| row.iter().zip(h).map(|(w, v)| w * v).sum::<f64>() + b)
                        .collect();
                    let a = if li == last { z.clone() } else { z.iter().map(|v| v.max(0.0)).collect() };
                    pre.push(z);
                    acts.push(a);
                }
                let out = acts.last().unwrap();
                let err = sigmoid(out[1] - out[0]) - f64::from(u8::from(r.label));
                let mut delta = vec![-err, err];
                for li in (0..layers.len()).rev() {
                    let input = &acts[li];
                    for (o, &dl) in delta.iter().enumerate() {
                        grads[li].bias[o] += dl;
                        for (k, &x) in input.iter().enumerate() {
                            grads[li].weights[o][k] += dl * x;
                        }
                    }
                    if li > 0 {
                        let mut prev = vec![0.0; layers[li].inputs()];
                        for (o, &dl) in delta.iter().enumerate() {
                            for (k, p) in prev.iter_mut().enumerate() {
                                *p += dl * layers[li].weights[o][k];
                            }
                        }
                        for (p, z) in prev.iter_mut().zip(&pre[li - 1]) {
                            if *z <= 0.0 {
                                *p = 0.0;
                            }
                        }
                        delta = prev;
                    }
                }
            }
            let scale = cfg.learning_rate / chunk.len() as f64;
            for (l, g) in layers.iter_mut().zip(&grads) {
                for (row, grow) in l.weights.iter_mut().zip(&g.weights) {
                    for (w, gw) in row.iter_mut().zip(grow) {
                        *w = (*w - scale * gw - cfg.learning_rate * cfg.l2 * *w).clamp(-WEIGHT_CLIP, WEIGHT_CLIP);
                    }
                }
                for (b, gb) in l.bias.iter_mut().zip(&g.bias) {
                    *b = (*b - scale * gb).clamp(-WEIGHT_CLIP, WEIGHT_CLIP);
                }
            }
        }
    }
    let model = ScoreModel {
        kind: ModelKind::Ffnn,
        layers,
    };
    if model
        .layers
        .iter()
        .flat_map(|l| l.weights.iter().flatten().chain(&l.bias))
        .any(|v| !v.is_finite())
    {
        return Err(TrainError::Diverged);
    }
    Ok(model)
}
