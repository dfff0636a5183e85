use crate::authvalue::{AuthValue, Fp, ProofError, Session, WitnessKind};
use crate::zkcircuit::{leq, mimc_hash_circuit, truncate};

use super::{ModelShape, QuantizedModel, ThresholdedModel};

/// Authenticated parameters of a thresholded model. The shape is public.
#[derive(Clone, Debug)]
pub struct CommittedParams {
    pub shape: ModelShape,
    pub frac_bits: u32,
    pub total_bits: u32,
    /// Per layer, `(weights[out][in], bias[out])`.
    pub layers: Vec<(Vec<Vec<AuthValue>>, Vec<AuthValue>)>,
    /// Thresholds for groups a and b.
    pub thresholds: [AuthValue; 2],
}

impl CommittedParams {
    /// Prover commits every parameter of `m`.
    pub fn commit(s: &mut Session, m: &ThresholdedModel) -> Self {
        let q: &QuantizedModel = &m.model;
        let mut commit = |v: i64| s.input(WitnessKind::Value, Fp::from_i64(v));
        let layers = q
            .layers
            .iter()
            .map(|l| {
                let w = l.weights.iter().map(|r| r.iter().map(|&v| commit(v)).collect()).collect();
                let b = l.bias.iter().map(|&v| commit(v)).collect();
                (w, b)
            })
            .collect();
        let thresholds = [commit(m.thresholds.a), commit(m.thresholds.b)];
        CommittedParams {
            shape: q.shape.clone(),
            frac_bits: q.fpc.frac_bits,
            total_bits: q.fpc.total_bits(),
            layers,
            thresholds,
        }
    }

    /// Parameters in canonical order, matching [`ThresholdedModel::params_field`].
    pub fn flat(&self) -> Vec<AuthValue> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            for row in w {
                out.extend(row.iter().copied());
            }
            out.extend(b.iter().copied());
        }
        out.extend(self.thresholds);
        out
    }

    /// In-circuit digest; opens to [`ThresholdedModel::digest`] for an
    /// honest commitment.
    pub fn digest(&self, s: &mut Session) -> AuthValue {
        let mut inputs: Vec<AuthValue> = self.shape.to_field().into_iter().map(|c| s.constant(c)).collect();
        inputs.extend(self.flat());
        mimc_hash_circuit(s, &inputs)
    }
}

/// The fixed-point score of committed features under committed parameters.
/// Opens to [`QuantizedModel::score`] exactly, and is rejected whenever the
/// clear evaluation reports an overflow.
pub fn circuit_score(s: &mut Session, m: &CommittedParams, x: &[AuthValue]) -> Result<AuthValue, ProofError> {
    if x.len() != m.shape.n_features() {
        return Err(ProofError::Constraint("feature count does not match model shape"));
    }
    let shift = Fp::new(1 << m.frac_bits);
    let last = m.layers.len() - 1;
    let mut h = x.to_vec();
    for (i, (w, b)) in m.layers.iter().enumerate() {
        let mut z = Vec::with_capacity(b.len());
        for (row, &bias) in w.iter().zip(b) {
            let mut acc = bias.scale(shift);
            for (&wk, &hk) in row.iter().zip(&h) {
                acc = acc + s.mul(wk, hk);
            }
            let t = truncate(s, acc, m.frac_bits, m.total_bits)?;
            if i == last {
                z.push(t);
            } else {
                let zero = s.constant(Fp::ZERO);
                let positive = leq(s, zero, t, m.total_bits)?;
                z.push(s.mul(positive.value(), t));
            }
        }
        h = z;
    }
    Ok(if h.len() == 2 { h[1] - h[0] } else { h[0] })
}
