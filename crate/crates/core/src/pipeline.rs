//! End-to-end runs: data, training, post-processing, certification,
//! query answering, an optional attack, audit and blame.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{
    apply_data_forge, apply_model_switch, apply_record_tamper_spec, cover_up_tamper, AttackError, AttackKind, AttackSpec,
    MacForge,
};
use crate::audit::{run_audit, AuditConfig, AuditError, AuditInput, AuditMode, AuditTranscript};
use crate::authvalue::seed_bytes;
use crate::certify::{certify, Certification, CertificationResult, CertifyOptions};
use crate::fairness::{
    gap, postprocess_thresholds, synthetic, LabeledDataset, Metric, PostprocessError, PostprocessReport, SyntheticConfig,
    Theta,
};
use crate::models::{train, FixedPointConfig, ModelError, QuantizedModel, ThresholdedModel, TrainConfig, TrainError};
use crate::queryauth::{
    answer_query, blame_attestation, AnswerStrategy, BlameError, Client, ClientReceipt, CommitmentStore, Ed25519Signer,
    Party, Provider, PublicKey, Query, QueryAbort, QueryRecord,
};

/// Everything Phase 2 leaves behind.
pub struct Phase2 {
    /// The provider's log.
    pub log: Vec<QueryRecord>,
    /// What each client kept.
    pub receipts: Vec<ClientReceipt>,
    /// The verifier's store.
    pub store: CommitmentStore,
    /// Public keys by client id.
    pub client_keys: Vec<PublicKey>,
    pub provider_key: PublicKey,
}

fn provider_key_seed(seed: u64) -> [u8; 32] {
    seed_bytes(seed ^ 0x7072_6f76_6964_6572)
}

fn client_key_seed(seed: u64, id: u64) -> [u8; 32] {
    seed_bytes(seed.wrapping_add((id + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

/// Quantizes each record's features into a query.
pub fn queries_from(ds: &LabeledDataset, fpc: FixedPointConfig) -> Result<Vec<Query>, ModelError> {
    ds.records
        .iter()
        .map(|r| {
            Ok(Query {
                features: fpc.quantize_features(&r.features)?,
                group: r.group,
            })
        })
        .collect()
}

/// Answers `queries` in order, query `i` coming from client `i mod
/// n_clients`. Coin flips depend only on `seed` and the query order, never
/// on the answers, so two runs with the same seed line up record by record
/// whatever strategy the provider uses.
pub fn run_phase2(
    model: &ThresholdedModel,
    queries: &[Query],
    n_clients: u64,
    seed: u64,
    strategy: Option<Box<dyn AnswerStrategy>>,
) -> Result<Phase2, QueryAbort> {
    let n_clients = n_clients.max(1);
    let mut provider = Provider::new(model.clone(), Box::new(Ed25519Signer::from_seed(provider_key_seed(seed))), seed);
    if let Some(s) = strategy {
        provider = provider.with_strategy(s);
    }
    let mut clients: Vec<Client> = (0..n_clients).map(|id| Client::from_seed(id, client_key_seed(seed, id))).collect();
    let mut store = CommitmentStore::new();
    let mut receipts = Vec::with_capacity(queries.len());
    for (i, q) in queries.iter().enumerate() {
        let c = &mut clients[i % n_clients as usize];
        receipts.push(answer_query(c, &mut provider, &mut store, q.clone())?);
    }
    Ok(Phase2 {
        client_keys: clients.iter().map(Client::public_key).collect(),
        provider_key: provider.public_key(),
        log: provider.into_log(),
        receipts,
        store,
    })
}

impl Phase2 {
    /// Settles index `j` using `log` as the provider's version.
    pub fn blame(&self, log: &[QueryRecord], j: usize) -> Result<Party, BlameError> {
        let rec = &log[j];
        let stored = self.store.get(j).expect("index within the store").commitment;
        // No registered client could have signed this record.
        let Some(client_pk) = self.client_keys.get(rec.client_id as usize) else {
            return Ok(Party::Provider);
        };
        blame_attestation(rec, &self.receipts[j], stored, client_pk, &self.provider_key)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Postprocess(#[from] PostprocessError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Query(#[from] QueryAbort),
    #[error(transparent)]
    Audit(#[from] AuditError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Population the provider trains and calibrates on.
    pub data: SyntheticConfig,
    /// Share of `data` used for training; the rest is `D_val`.
    pub train_fraction: f64,
    pub n_queries: usize,
    pub n_clients: u64,
    /// Seeds the client population.
    pub client_seed: u64,
    pub client_source: ClientSource,
    /// Headroom the honest provider leaves below `theta` when calibrating,
    /// so that sampling noise in the client stream does not push the
    /// audited gap over. Certification is still against `theta`.
    pub calibration_margin: Theta,
    pub train: TrainConfig,
    pub fpc: FixedPointConfig,
    pub metric: Metric,
    pub theta: Theta,
    pub nu: u64,
    pub dealer_seed: u64,
    pub audit_seed: u64,
    pub audit_mode: AuditMode,
    pub attack: AttackSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            data: SyntheticConfig {
                n: 2000,
                ..Default::default()
            },
            train_fraction: 0.5,
            n_queries: 2000,
            n_clients: 20,
            client_seed: 1,
            client_source: ClientSource::Fresh,
            calibration_margin: Theta::new(0, 1).unwrap(),
            train: TrainConfig::default(),
            fpc: FixedPointConfig::default(),
            metric: Metric::DemographicParity,
            theta: Theta::new(1, 10).unwrap(),
            nu: 100,
            dealer_seed: 2,
            audit_seed: 3,
            audit_mode: AuditMode::Circuit,
            attack: AttackSpec::none(),
        }
    }
}

/// Where client queries come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClientSource {
    /// New draws from the generator behind `data`.
    Fresh,
    /// The honest calibration set, cycled without replacement. Clients then
    /// follow exactly the distribution the provider calibrated on.
    Resample,
}

/// Who a failed sample is attributed to, and on what grounds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlameEntry {
    pub index: u64,
    pub party: Option<Party>,
    pub basis: String,
}

pub struct PipelineOutcome {
    pub model: ThresholdedModel,
    pub postprocess: PostprocessReport,
    pub d_val: LabeledDataset,
    pub certification: Certification,
    pub clients: LabeledDataset,
    pub phase2: Option<Phase2>,
    /// The log the provider brought to the audit.
    pub audited_log: Vec<QueryRecord>,
    pub audit: Option<AuditTranscript>,
    pub blame: Vec<BlameEntry>,
    /// Gap of the answers clients received.
    pub honest_gap: Option<f64>,
    /// Gap of the audited log.
    pub measured_gap: Option<f64>,
}

fn log_gap(metric: Metric, log: &[QueryRecord], clients: &LabeledDataset) -> Option<f64> {
    let preds: Vec<bool> = log.iter().map(|r| r.o).collect();
    gap(metric, &preds, clients).ok().map(|g| g.max_f64())
}

/// Blames every sampled index that failed a check. A consistency failure
/// is settled by the signatures; a correctness failure on a consistent
/// record is the provider's, since the client holds its signed answer.
pub fn blame_failures(p2: &Phase2, log: &[QueryRecord], audit: &AuditTranscript) -> Vec<BlameEntry> {
    audit
        .checks
        .iter()
        .filter(|c| !c.correct || !c.consistent)
        .map(|c| {
            let j = c.index as usize;
            match p2.blame(log, j) {
                Ok(p) => BlameEntry {
                    index: c.index,
                    party: Some(p),
                    basis: "signatures".into(),
                },
                Err(BlameError::NoContradiction) if !c.correct => BlameEntry {
                    index: c.index,
                    party: Some(Party::Provider),
                    basis: "signed incorrect answer".into(),
                },
                Err(e) => BlameEntry {
                    index: c.index,
                    party: None,
                    basis: e.to_string(),
                },
            }
        })
        .collect()
}

/// The calibrated model, its post-processing report and the calibration
/// set the provider commits to.
pub struct Calibrated {
    pub model: ThresholdedModel,
    pub report: PostprocessReport,
    pub d_val: LabeledDataset,
}

/// Post-processes `q` on `d_val`. An honest provider aims `margin` below
/// `theta`; a data forger deploys the accuracy-optimal model and finds a
/// calibration set it looks fair on.
pub fn calibrate(
    q: &QuantizedModel,
    d_val: &LabeledDataset,
    theta: Theta,
    margin: Theta,
    metric: Metric,
    attack: &AttackSpec,
) -> Result<Calibrated, PipelineError> {
    if let AttackKind::DataForge { .. } = attack.kind {
        let (model, report) = postprocess_thresholds(q, d_val, Theta::new(1, 1).unwrap(), metric)?;
        let d_val = apply_data_forge(&model, d_val, theta, metric)?;
        return Ok(Calibrated { model, report, d_val });
    }
    let (model, report) = postprocess_thresholds(q, d_val, theta.saturating_sub(margin), metric)?;
    Ok(Calibrated {
        model,
        report,
        d_val: d_val.clone(),
    })
}

/// How the provider answers queries under `attack`.
pub fn answer_strategy(model: &ThresholdedModel, attack: &AttackSpec) -> Result<Option<Box<dyn AnswerStrategy>>, AttackError> {
    Ok(match attack.kind {
        AttackKind::ModelSwitch { rate } => Some(Box::new(apply_model_switch(model, None, rate, attack.seed)?)),
        _ => None,
    })
}

/// Audit parameters the verifier fixes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AuditParams {
    pub metric: Metric,
    pub theta: Theta,
    pub nu: u64,
    pub seed: u64,
    pub mode: AuditMode,
}

pub struct AuditPhase {
    /// The log the provider brought to the audit.
    pub audited_log: Vec<QueryRecord>,
    pub audit: AuditTranscript,
    pub blame: Vec<BlameEntry>,
}

/// Phase 3 with the provider acting out `attack`: the log is altered as
/// the attack dictates, audited, and failed samples are blamed.
pub fn audit_phase(
    model: &ThresholdedModel,
    certification: &CertificationResult,
    p2: &Phase2,
    labels: Option<&[bool]>,
    params: AuditParams,
    attack: &AttackSpec,
) -> Result<AuditPhase, PipelineError> {
    let audited = match attack.kind {
        AttackKind::RecordTamper { .. } => apply_record_tamper_spec(&p2.log, attack)?.log,
        AttackKind::DataForge { cover_up: true } => match params.metric {
            Metric::DemographicParity => cover_up_tamper(&p2.log, params.theta, attack.seed)?.log,
            m => return Err(AttackError::ForgeInfeasible(format!("cover-up is implemented for dp only, not {m}")).into()),
        },
        _ => p2.log.clone(),
    };
    let mut acfg = AuditConfig::new(params.metric, params.theta, params.nu, params.seed).mode(params.mode);
    if let AttackKind::MacForge { site } = attack.kind {
        acfg.strategy = Some(Box::new(MacForge::new(site, attack.seed)));
    }
    let input = AuditInput {
        model,
        certification,
        log: &audited,
        store: &p2.store,
        labels,
    };
    let audit = run_audit(&input, acfg)?;
    let blame = blame_failures(p2, &audited, &audit);
    Ok(AuditPhase {
        audited_log: audited,
        audit,
        blame,
    })
}

/// Client queries for a run.
pub fn client_queries(
    source: ClientSource,
    data: &SyntheticConfig,
    honest_val: &LabeledDataset,
    n: usize,
    seed: u64,
) -> LabeledDataset {
    match source {
        ClientSource::Fresh => synthetic(&SyntheticConfig {
            n,
            seed,
            ..data.clone()
        }),
        ClientSource::Resample => honest_val.resample_cycled(n, seed),
    }
}

/// Seed the calibration split is drawn with.
pub fn split_seed(data_seed: u64) -> u64 {
    data_seed ^ 0x5b1f
}

/// Seed Phase 2 keys and coins are drawn with.
pub fn phase2_seed(client_seed: u64) -> u64 {
    client_seed ^ 0xc11e
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    cfg.attack.validate()?;
    let population = synthetic(&cfg.data);
    let (train_set, honest_val) = population.split(cfg.train_fraction, split_seed(cfg.data.seed));
    let score = train(&train_set, &cfg.train)?;
    let q = score.quantize(cfg.fpc)?;
    let cal = calibrate(&q, &honest_val, cfg.theta, cfg.calibration_margin, cfg.metric, &cfg.attack)?;

    // A MAC forgery, if any, targets the audit; certification stays honest.
    let certification = certify(&cal.model, &cal.d_val, cfg.theta, cfg.metric, CertifyOptions::seeded(cfg.dealer_seed));
    let clients = client_queries(cfg.client_source, &cfg.data, &honest_val, cfg.n_queries, cfg.client_seed);
    let mut out = PipelineOutcome {
        model: cal.model,
        postprocess: cal.report,
        d_val: cal.d_val,
        certification,
        clients,
        phase2: None,
        audited_log: Vec::new(),
        audit: None,
        blame: Vec::new(),
        honest_gap: None,
        measured_gap: None,
    };
    if !out.certification.result.verdict.is_certified() {
        return Ok(out);
    }

    let queries = queries_from(&out.clients, cfg.fpc)?;
    let strategy = answer_strategy(&out.model, &cfg.attack)?;
    let p2 = run_phase2(&out.model, &queries, cfg.n_clients, phase2_seed(cfg.client_seed), strategy)?;

    let labels = out.clients.labels();
    let params = AuditParams {
        metric: cfg.metric,
        theta: cfg.theta,
        nu: cfg.nu,
        seed: cfg.audit_seed,
        mode: cfg.audit_mode,
    };
    let phase = audit_phase(&out.model, &out.certification.result, &p2, Some(&labels), params, &cfg.attack)?;
    out.honest_gap = log_gap(cfg.metric, &p2.log, &out.clients);
    out.measured_gap = log_gap(cfg.metric, &phase.audited_log, &out.clients);
    out.blame = phase.blame;
    out.audit = Some(phase.audit);
    out.audited_log = phase.audited_log;
    out.phase2 = Some(p2);
    Ok(out)
}
