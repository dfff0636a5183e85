//! Phase 1: zero-knowledge certification that a committed thresholded
//! model meets a fairness threshold on a committed calibration set.
//!
//! The prover commits the model (its digest is opened and becomes the
//! public handle for later phases) and every calibration record. Both
//! parties flip coins for a PRG seed giving each record its public
//! randomness. Every record then runs through thresholded inference in the
//! circuit, the per-group counters are accumulated as authenticated values,
//! and the gap inequality is proven in cross-multiplied integer form. The
//! verifier learns the verdict and nothing about the model or data beyond
//! the public shape, `N`, and whether each group is non-empty.
//!
//! What is certified is the gap inequality on `D_val`. Nothing here proves
//! that the thresholds came out of the post-processing search; an honest
//! search is simply one way to get a model that passes.

mod counters;
mod inference;

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

pub use counters::{FairnessOutcome, MAX_RECORDS};
pub use inference::{zk_pp_inference, CommittedModel, CommittedQuery};
pub(crate) use counters::{Counters, RecordBits};
pub(crate) use inference::pp_inference_with_groups;

use crate::authvalue::{seed_bytes, Fp, ProverStrategy, Session, SessionStats, TranscriptSummary};
use crate::fairness::{count, counts_within, LabeledDataset, Metric, Theta};
use crate::models::ThresholdedModel;
use crate::queryauth::{coins_from_seeds, fp_hex, CoinParty, Query, R_LEN};
use crate::zkcircuit::bit;

/// Who chose the calibration set. The protocol is the same either way; a
/// prover-chosen set is the weaker guarantee.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetSource {
    #[default]
    Prover,
    Verifier,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    /// The proven gap exceeds theta.
    Unfair,
    /// A group (or a label-conditioned subgroup) has no records.
    EmptyGroup,
    /// A constraint or MAC check failed.
    Proof(String),
    /// The inputs could not be encoded (feature overflow, too many records).
    Input(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Certified,
    Rejected(RejectReason),
}

impl Verdict {
    pub fn is_certified(&self) -> bool {
        *self == Verdict::Certified
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificationResult {
    pub verdict: Verdict,
    pub theta: Theta,
    pub metric: Metric,
    pub dataset_size: u64,
    pub dataset_source: DatasetSource,
    #[serde(with = "fp_hex")]
    pub model_digest: Fp,
    pub transcript: TranscriptSummary,
    pub stats: SessionStats,
}

/// One protocol step as seen by the verifier.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: String,
    pub messages: u64,
    pub content_digest: String,
}

pub struct CertifyOptions {
    pub dealer_seed: [u8; 32],
    /// Seeds both parties' coin-flip contributions.
    pub coin_seed: u64,
    pub dataset_source: DatasetSource,
    pub strategy: Option<Box<dyn ProverStrategy>>,
}

impl CertifyOptions {
    pub fn seeded(seed: u64) -> Self {
        CertifyOptions {
            dealer_seed: seed_bytes(seed),
            coin_seed: seed ^ 0x5eed_c017,
            dataset_source: DatasetSource::Prover,
            strategy: None,
        }
    }
}

/// A finished certification with its step log.
#[derive(Clone, Debug)]
pub struct Certification {
    pub result: CertificationResult,
    pub steps: Vec<StepRecord>,
}

impl Certification {
    /// One JSON object per step, then the result.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for s in &self.steps {
            writeln!(w, "{}", serde_json::json!({ "type": "step", "step": s }))?;
        }
        writeln!(w, "{}", serde_json::json!({ "type": "result", "result": self.result }))
    }

    /// The result record of a log written by [`Certification::write_jsonl`].
    pub fn read_result(text: &str) -> Result<CertificationResult, String> {
        for line in text.lines().rev() {
            let v: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
            if v["type"] == "result" {
                return serde_json::from_value(v["result"].clone()).map_err(|e| e.to_string());
            }
        }
        Err("certification log has no result record".into())
    }
}

struct StepLog(Vec<StepRecord>);

impl StepLog {
    fn note(&mut self, s: &Session, step: &str) {
        let t = s.summary();
        self.0.push(StepRecord {
            step: step.into(),
            messages: t.messages,
            content_digest: t.content_digest,
        });
    }
}

/// Per-record public randomness from a coin-flipped PRG seed.
pub fn record_randomness(coin_seed: u64, n: usize) -> Vec<Vec<Fp>> {
    let mut rng_p = ChaCha20Rng::seed_from_u64(coin_seed);
    let mut rng_v = ChaCha20Rng::seed_from_u64(coin_seed.rotate_left(17) ^ 0x7665_7269);
    let prover = CoinParty::random(&mut rng_p);
    let mut seed_v = [0u8; 32];
    rand::RngCore::fill_bytes(&mut rng_v, &mut seed_v);
    let (seed_p, _) = prover.opening();
    let flat = coins_from_seeds(&seed_p, &seed_v, n * R_LEN);
    flat.chunks(R_LEN).map(|c| c.to_vec()).collect()
}

pub fn certify(
    model: &ThresholdedModel,
    d_val: &LabeledDataset,
    theta: Theta,
    metric: Metric,
    opts: CertifyOptions,
) -> Certification {
    let mut s = Session::from_seed(opts.dealer_seed);
    if let Some(st) = opts.strategy {
        s = s.with_strategy(st);
    }
    let mut log = StepLog(Vec::new());
    let finish = |s: &mut Session, log: StepLog, digest: Fp, verdict: Verdict| {
        let verdict = match (s.flush(), verdict) {
            (Err(e), _) => Verdict::Rejected(RejectReason::Proof(e.to_string())),
            (Ok(()), v) => v,
        };
        let mut steps = log.0;
        let t = s.summary();
        steps.push(StepRecord {
            step: "mac-check".into(),
            messages: t.messages,
            content_digest: t.content_digest.clone(),
        });
        Certification {
            result: CertificationResult {
                verdict,
                theta,
                metric,
                dataset_size: d_val.len() as u64,
                dataset_source: opts.dataset_source,
                model_digest: digest,
                transcript: t,
                stats: s.stats(),
            },
            steps,
        }
    };
    let reject = |r: RejectReason| Verdict::Rejected(r);
    let proof = |e: crate::authvalue::ProofError| Verdict::Rejected(RejectReason::Proof(e.to_string()));

    let committed = CommittedModel::commit(&mut s, model);
    log.note(&s, "commit-model");
    if d_val.len() > MAX_RECORDS {
        return finish(&mut s, log, committed.digest, reject(RejectReason::Input("too many records".into())));
    }

    let r = record_randomness(opts.coin_seed, d_val.len());
    log.note(&s, "coin-flip");

    let fpc = model.model.fpc;
    let mut queries = Vec::with_capacity(d_val.len());
    for rec in &d_val.records {
        match fpc.quantize_features(&rec.features) {
            Ok(features) => queries.push(Query {
                features,
                group: rec.group,
            }),
            Err(e) => return finish(&mut s, log, committed.digest, reject(RejectReason::Input(e.to_string()))),
        }
    }
    let mut committed_q = Vec::with_capacity(queries.len());
    for (q, rec) in queries.iter().zip(&d_val.records) {
        let cq = CommittedQuery::commit(&mut s, q);
        let y = if metric.needs_labels() {
            match bit(&mut s, crate::authvalue::WitnessKind::Value, rec.label) {
                Ok(b) => Some(b),
                Err(e) => return finish(&mut s, log, committed.digest, proof(e)),
            }
        } else {
            None
        };
        committed_q.push((cq, y));
    }
    log.note(&s, "commit-dataset");

    let mut counters = Counters::new(&s, metric);
    for ((cq, y), ri) in committed_q.iter().zip(&r) {
        match pp_inference_with_groups(&mut s, &committed.params, cq, ri) {
            Ok((o, [in_a, _])) => counters.add(&mut s, RecordBits { in_a, o, y: *y }),
            Err(e) => return finish(&mut s, log, committed.digest, proof(e)),
        }
    }
    log.note(&s, "inference-and-counters");

    let verdict = match counters.prove(&mut s, theta) {
        Ok(FairnessOutcome::Fair) => Verdict::Certified,
        Ok(FairnessOutcome::Unfair) => reject(RejectReason::Unfair),
        Ok(FairnessOutcome::EmptyGroup) => reject(RejectReason::EmptyGroup),
        Err(e) => proof(e),
    };
    log.note(&s, "fairness-inequality");
    finish(&mut s, log, committed.digest, verdict)
}

pub fn certify_dp(model: &ThresholdedModel, d_val: &LabeledDataset, theta: Theta, opts: CertifyOptions) -> Certification {
    certify(model, d_val, theta, Metric::DemographicParity, opts)
}

pub fn certify_eo(model: &ThresholdedModel, d_val: &LabeledDataset, theta: Theta, opts: CertifyOptions) -> Certification {
    certify(model, d_val, theta, Metric::EqualizedOdds, opts)
}

/// The verdict certification reaches for an honest prover, computed in the
/// clear with exact rationals.
pub fn certify_clear(model: &ThresholdedModel, d_val: &LabeledDataset, theta: Theta, metric: Metric) -> Verdict {
    let mut rows = Vec::with_capacity(d_val.len());
    for rec in &d_val.records {
        match model.predict_features(&rec.features, rec.group) {
            Ok(p) => rows.push((rec.group, rec.label, p)),
            Err(e) => return Verdict::Rejected(RejectReason::Input(e.to_string())),
        }
    }
    match counts_within(metric, &count(rows), theta) {
        Ok(true) => Verdict::Certified,
        Ok(false) => Verdict::Rejected(RejectReason::Unfair),
        Err(_) => Verdict::Rejected(RejectReason::EmptyGroup),
    }
}

#[cfg(test)]
mod tests;
