//! Phase 3: the fairness audit over every answered query.
//!
//! The prover commits each logged `(q_i, r_i, o_i)`, proves the fairness
//! inequality over all of them exactly as in certification, reveals the
//! group sizes, and runs the balanced sampler against the verifier's
//! permutations. For each of the `2 nu` opened sample positions it then
//! proves correctness (`o_j` is what the certified model outputs on `q_j`)
//! and consistency (the MiMC hash of the committed tuple equals the
//! client-submitted commitment `C_j`).
//!
//! The sample array is opened to the verifier. That leaks which positions
//! were sampled, and with them a little about group membership; the
//! leak-free variant is not implemented.
//!
//! [`AuditMode::ClearMirror`] evaluates the same decision procedure on
//! plaintext without a session. It reaches the same verdict as the circuit
//! for an honest MAC layer and exists for Monte-Carlo runs.

mod sampler;

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use sampler::{balanced_sample, balanced_sample_clear, Permutations, SampleArray, SampleError, SENTINEL};

use crate::authvalue::{seed_bytes, Fp, ProofError, ProverStrategy, Session, SessionStats, TranscriptSummary, WitnessKind};
use crate::certify::{
    pp_inference_with_groups, CertificationResult, CommittedModel, CommittedQuery, Counters, FairnessOutcome,
    RecordBits, MAX_RECORDS,
};
use crate::fairness::{count, counts_within, Group, Metric, Theta};
use crate::models::ThresholdedModel;
use crate::queryauth::{commitment, CommitmentStore, QueryRecord};
use crate::zkcircuit::{bit, eq_indicators, mimc_hash_circuit, RamMode};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuditMode {
    #[default]
    Circuit,
    ClearMirror,
}

pub struct AuditConfig {
    pub metric: Metric,
    pub theta: Theta,
    pub nu: u64,
    pub mode: AuditMode,
    pub ram_mode: RamMode,
    pub dealer_seed: [u8; 32],
    /// Verifier randomness for the sampling permutations.
    pub sample_seed: u64,
    pub strategy: Option<Box<dyn ProverStrategy>>,
}

impl AuditConfig {
    pub fn new(metric: Metric, theta: Theta, nu: u64, seed: u64) -> Self {
        AuditConfig {
            metric,
            theta,
            nu,
            mode: AuditMode::Circuit,
            ram_mode: RamMode::Batched,
            dealer_seed: seed_bytes(seed ^ 0xa0d1_7000),
            sample_seed: seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x5a3b,
            strategy: None,
        }
    }

    pub fn mode(mut self, mode: AuditMode) -> Self {
        self.mode = mode;
        self
    }
}

/// Conditions under which no audit can be run at all.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuditError {
    #[error("no certification for this model: the Phase 1 verdict was {0:?}")]
    NotCertified(crate::certify::Verdict),
    #[error("metric {0} needs true labels for the audited queries; supply a labels file")]
    MissingLabels(Metric),
    #[error("labels file has {0} entries for {1} queries")]
    LabelCount(usize, usize),
    #[error("{0} queries exceed the per-audit limit")]
    TooMany(usize),
    #[error(transparent)]
    Sample(#[from] SampleError),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailReason {
    /// The committed model is not the certified one.
    DigestMismatch,
    /// The provider log and the verifier store disagree in length.
    LogLength { log: u64, store: u64 },
    Unfair,
    EmptyGroup,
    Correctness,
    Consistency,
    /// A MAC or structural check failed.
    Soundness(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuditVerdict {
    Pass,
    Fail { reasons: Vec<FailReason>, blamed: Vec<u64> },
}

impl AuditVerdict {
    pub fn is_pass(&self) -> bool {
        *self == AuditVerdict::Pass
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCheck {
    pub index: u64,
    pub correct: bool,
    pub consistent: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub commit_ms: f64,
    pub fairness_ms: f64,
    pub sample_ms: f64,
    pub checks_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditTranscript {
    pub n: u64,
    pub n_a: u64,
    pub n_b: u64,
    pub metric: Metric,
    pub theta: Theta,
    pub nu: u64,
    pub mode: AuditMode,
    pub fairness: Option<FairnessOutcome>,
    pub checks: Vec<SampleCheck>,
    pub correctness_proofs: u64,
    pub consistency_proofs: u64,
    pub verdict: AuditVerdict,
    pub timings: StageTimings,
    pub transcript: Option<TranscriptSummary>,
    pub stats: Option<SessionStats>,
}

impl AuditTranscript {
    pub fn sampled(&self) -> Vec<u64> {
        self.checks.iter().map(|c| c.index).collect()
    }

    /// A summary record, then one record per sampled check.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let summary = serde_json::json!({
            "type": "summary",
            "format": "oath-audit",
            "version": 1,
            "N": self.n,
            "N_a": self.n_a,
            "N_b": self.n_b,
            "metric": self.metric,
            "theta": self.theta.to_string(),
            "nu": self.nu,
            "mode": self.mode,
            "fairness": self.fairness,
            "correctness_proofs": self.correctness_proofs,
            "consistency_proofs": self.consistency_proofs,
            "verdict": self.verdict,
            "transcript": self.transcript,
            "stats": self.stats,
            "timings": self.timings,
        });
        writeln!(w, "{summary}")?;
        for c in &self.checks {
            writeln!(w, "{}", serde_json::json!({ "type": "sample", "check": c }))?;
        }
        Ok(())
    }
}

/// What the prover brings to the audit.
pub struct AuditInput<'a> {
    pub model: &'a ThresholdedModel,
    pub certification: &'a CertificationResult,
    pub log: &'a [QueryRecord],
    /// The verifier's store.
    pub store: &'a CommitmentStore,
    /// True labels per query index, for label-dependent metrics.
    pub labels: Option<&'a [bool]>,
}

struct Outcome {
    n_a: u64,
    fairness: Option<FairnessOutcome>,
    checks: Vec<SampleCheck>,
    reasons: Vec<FailReason>,
    transcript: Option<TranscriptSummary>,
    stats: Option<SessionStats>,
    timings: StageTimings,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

pub fn run_audit(input: &AuditInput<'_>, cfg: AuditConfig) -> Result<AuditTranscript, AuditError> {
    if !input.certification.verdict.is_certified() {
        return Err(AuditError::NotCertified(input.certification.verdict.clone()));
    }
    let n = input.store.len();
    if n > MAX_RECORDS {
        return Err(AuditError::TooMany(n));
    }
    if cfg.metric.needs_labels() {
        match input.labels {
            None => return Err(AuditError::MissingLabels(cfg.metric)),
            Some(l) if l.len() != n => return Err(AuditError::LabelCount(l.len(), n)),
            _ => {}
        }
    }
    let (metric, theta, nu, mode) = (cfg.metric, cfg.theta, cfg.nu, cfg.mode);

    let out = if input.log.len() != n {
        Outcome {
            n_a: 0,
            fairness: None,
            checks: Vec::new(),
            reasons: vec![FailReason::LogLength {
                log: input.log.len() as u64,
                store: n as u64,
            }],
            transcript: None,
            stats: None,
            timings: StageTimings::default(),
        }
    } else {
        match mode {
            AuditMode::Circuit => audit_circuit(input, cfg)?,
            AuditMode::ClearMirror => audit_clear(input, &cfg)?,
        }
    };

    let correctness_proofs = out.checks.len() as u64;
    let mut blamed: Vec<u64> = out
        .checks
        .iter()
        .filter(|c| !c.correct || !c.consistent)
        .map(|c| c.index)
        .collect();
    blamed.dedup();
    let verdict = if out.reasons.is_empty() {
        AuditVerdict::Pass
    } else {
        AuditVerdict::Fail {
            reasons: out.reasons,
            blamed,
        }
    };
    Ok(AuditTranscript {
        n: n as u64,
        n_a: out.n_a,
        n_b: n as u64 - out.n_a,
        metric,
        theta,
        nu,
        mode,
        fairness: out.fairness,
        correctness_proofs,
        consistency_proofs: correctness_proofs,
        checks: out.checks,
        verdict,
        timings: out.timings,
        transcript: out.transcript,
        stats: out.stats,
    })
}

pub fn run_audit_dp(input: &AuditInput<'_>, theta: Theta, nu: u64, seed: u64) -> Result<AuditTranscript, AuditError> {
    run_audit(input, AuditConfig::new(Metric::DemographicParity, theta, nu, seed))
}

pub fn run_audit_eo(input: &AuditInput<'_>, theta: Theta, nu: u64, seed: u64) -> Result<AuditTranscript, AuditError> {
    run_audit(input, AuditConfig::new(Metric::EqualizedOdds, theta, nu, seed))
}

fn push_fairness(reasons: &mut Vec<FailReason>, f: FairnessOutcome) {
    match f {
        FairnessOutcome::Fair => {}
        FairnessOutcome::Unfair => reasons.push(FailReason::Unfair),
        FairnessOutcome::EmptyGroup => reasons.push(FailReason::EmptyGroup),
    }
}

fn push_checks(reasons: &mut Vec<FailReason>, checks: &[SampleCheck]) {
    if checks.iter().any(|c| !c.correct) {
        reasons.push(FailReason::Correctness);
    }
    if checks.iter().any(|c| !c.consistent) {
        reasons.push(FailReason::Consistency);
    }
}

fn audit_circuit(input: &AuditInput<'_>, cfg: AuditConfig) -> Result<Outcome, AuditError> {
    let mut s = Session::from_seed(cfg.dealer_seed);
    if let Some(st) = cfg.strategy {
        s = s.with_strategy(st);
    }
    let mut reasons = Vec::new();
    let mut timings = StageTimings::default();
    let soundness = |e: ProofError| FailReason::Soundness(e.to_string());
    let finish = |mut s: Session, mut reasons: Vec<FailReason>, n_a, fairness, checks, timings| {
        if let Err(e) = s.flush() {
            reasons.push(FailReason::Soundness(e.to_string()));
        }
        Ok(Outcome {
            n_a,
            fairness,
            checks,
            reasons,
            transcript: Some(s.summary()),
            stats: Some(s.stats()),
            timings,
        })
    };

    // Commit model and records.
    let t = Instant::now();
    let model = CommittedModel::commit(&mut s, input.model);
    if model.digest != input.certification.model_digest {
        reasons.push(FailReason::DigestMismatch);
    }
    let mut records = Vec::with_capacity(input.log.len());
    for (i, rec) in input.log.iter().enumerate() {
        let q = CommittedQuery::commit(&mut s, &rec.query);
        let o = bit(&mut s, WitnessKind::Output, rec.o);
        let y = input.labels.map(|l| bit(&mut s, WitnessKind::Value, l[i]));
        let ind = eq_indicators(&mut s, q.group, &Group::codes());
        match (o, y.transpose(), ind) {
            (Ok(o), Ok(y), Ok(ind)) => records.push((q, RecordBits { in_a: ind[0], o, y })),
            (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => {
                reasons.push(soundness(e));
                return finish(s, reasons, 0, None, Vec::new(), timings);
            }
        }
    }
    timings.commit_ms = ms(t);

    // Fairness over every record.
    let t = Instant::now();
    let mut counters = Counters::new(&s, cfg.metric);
    for (_, rb) in &records {
        let rb = if cfg.metric.needs_labels() { *rb } else { RecordBits { y: None, ..*rb } };
        counters.add(&mut s, rb);
    }
    let fairness = match counters.prove(&mut s, cfg.theta) {
        Ok(f) => f,
        Err(e) => {
            reasons.push(soundness(e));
            return finish(s, reasons, 0, None, Vec::new(), timings);
        }
    };
    push_fairness(&mut reasons, fairness);
    timings.fairness_ms = ms(t);

    // Reveal group sizes and sample.
    let t = Instant::now();
    let n_a = s.open(counters.n_a()).value();
    let n = records.len() as u64;
    if n_a > n {
        reasons.push(FailReason::Soundness("revealed group size exceeds N".into()));
        return finish(s, reasons, 0, Some(fairness), Vec::new(), timings);
    }
    let perms = Permutations::draw(cfg.sample_seed, n_a, n - n_a);
    let in_a: Vec<_> = records.iter().map(|(_, rb)| rb.in_a).collect();
    let sample = match balanced_sample(&mut s, &in_a, n_a, cfg.nu, &perms, cfg.ram_mode) {
        Ok(x) => x,
        Err(SampleError::Proof(e)) => {
            reasons.push(soundness(e));
            return finish(s, reasons, n_a, Some(fairness), Vec::new(), timings);
        }
        Err(e) => return Err(e.into()),
    };
    timings.sample_ms = ms(t);

    // Correctness and consistency on each sampled record.
    let t = Instant::now();
    let mut checks = Vec::with_capacity(sample.selected.len());
    for &j in &sample.selected {
        let (q, rb) = &records[j];
        let rec = &input.log[j];
        let correct = match pp_inference_with_groups(&mut s, &model.params, q, &rec.r) {
            Ok((o, _)) => s.assert_zero(o.value() - rb.o.value(), "recorded output differs").is_ok(),
            Err(_) => false,
        };
        let mut elems = vec![s.constant(Fp::new(q.features.len() as u64 + 1))];
        elems.extend(q.to_field());
        elems.push(s.constant(Fp::new(rec.r.len() as u64)));
        elems.extend(rec.r.iter().map(|&v| s.constant(v)));
        elems.push(rb.o.value());
        let h = mimc_hash_circuit(&mut s, &elems);
        let stored = input.store.get(j).expect("store length checked").commitment;
        let consistent = s.assert_public(h, stored, "commitment").is_ok();
        checks.push(SampleCheck {
            index: j as u64,
            correct,
            consistent,
        });
    }
    push_checks(&mut reasons, &checks);
    timings.checks_ms = ms(t);
    finish(s, reasons, n_a, Some(fairness), checks, timings)
}

fn audit_clear(input: &AuditInput<'_>, cfg: &AuditConfig) -> Result<Outcome, AuditError> {
    let mut reasons = Vec::new();
    let mut timings = StageTimings::default();
    let t = Instant::now();
    if input.model.digest() != input.certification.model_digest {
        reasons.push(FailReason::DigestMismatch);
    }
    let labels = |i: usize| input.labels.map(|l| l[i]).unwrap_or(false);
    let counts = count(input.log.iter().enumerate().map(|(i, r)| (r.query.group, labels(i), r.o)));
    let fairness = match counts_within(cfg.metric, &counts, cfg.theta) {
        Ok(true) => FairnessOutcome::Fair,
        Ok(false) => FairnessOutcome::Unfair,
        Err(_) => FairnessOutcome::EmptyGroup,
    };
    push_fairness(&mut reasons, fairness);
    timings.fairness_ms = ms(t);

    let t = Instant::now();
    let groups: Vec<Group> = input.log.iter().map(|r| r.query.group).collect();
    let n_a = counts[0].n;
    let perms = Permutations::draw(cfg.sample_seed, n_a, counts[1].n);
    let selected = balanced_sample_clear(&groups, cfg.nu, &perms)?;
    timings.sample_ms = ms(t);

    let t = Instant::now();
    let checks: Vec<SampleCheck> = selected
        .iter()
        .map(|&j| {
            let rec = &input.log[j];
            let correct = input.model.predict(&rec.query.features, rec.query.group, &rec.r).ok() == Some(rec.o);
            let stored = input.store.get(j).expect("store length checked").commitment;
            SampleCheck {
                index: j as u64,
                correct,
                consistent: commitment(&rec.query, &rec.r, rec.o) == stored,
            }
        })
        .collect();
    push_checks(&mut reasons, &checks);
    timings.checks_ms = ms(t);
    Ok(Outcome {
        n_a,
        fairness: Some(fairness),
        checks,
        reasons,
        transcript: None,
        stats: None,
        timings,
    })
}

#[cfg(test)]
mod tests;
