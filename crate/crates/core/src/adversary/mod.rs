//! Cheating provers. Every attack is a strategy object plugged into an
//! honest party (an [`AnswerStrategy`] for Phase 2, a [`ProverStrategy`]
//! for the proof sessions) or a transformation of the prover's own inputs
//! (its query log, its calibration set). Rates of zero leave the honest
//! path untouched.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::authvalue::{seed_bytes, Fp, ProverShare, ProverStrategy, Session, WitnessKind};
use crate::fairness::{count, counts_within, Group, LabeledDataset, Metric, Theta};
use crate::models::{ModelError, ModelKind, ThresholdedModel, Thresholds};
use crate::queryauth::{commitment, AnswerStrategy, Query, QueryRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttackError {
    #[error("alternative model shape {alt} differs from the certified shape {honest}")]
    ShapeMismatch { honest: String, alt: String },
    #[error("cannot derive a divergent model: {0}")]
    NoComplement(String),
    #[error("fraction {0} is outside [0, 1]")]
    Fraction(f64),
    #[error("no forged calibration set makes the model look fair: {0}")]
    ForgeInfeasible(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("bad attack spec {0:?}: {1}")]
    Parse(String, String),
}

/// Which outcomes a record tamper may flip.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlipDirection {
    #[default]
    Any,
    /// Only negative outcomes, which become positive.
    ToPositive,
    /// Only positive outcomes, which become negative.
    ToNegative,
}

impl FlipDirection {
    fn admits(self, o: bool) -> bool {
        match self {
            FlipDirection::Any => true,
            FlipDirection::ToPositive => !o,
            FlipDirection::ToNegative => o,
        }
    }
}

/// Where a MAC forgery is attempted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForgeSite {
    /// The `nth` opened share (1-based) carries a shifted value.
    Open { nth: u64 },
    /// The `nth` witness of `kind` is replaced.
    Witness { kind: WitnessKind, nth: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum AttackKind {
    None,
    /// Answer a fraction `rate` of Phase 2 queries with another model. The
    /// model itself is supplied when the attack is applied; without one a
    /// complement of the certified model is used.
    ModelSwitch { rate: f64 },
    RecordTamper {
        p_a: f64,
        p_b: f64,
        dir_a: FlipDirection,
        dir_b: FlipDirection,
    },
    /// Certify on a forged calibration set. With `cover_up` the provider
    /// also rewrites enough logged outcomes to pass the audit's fairness
    /// inequality.
    DataForge { cover_up: bool },
    MacForge { site: ForgeSite },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub seed: u64,
}

impl AttackSpec {
    pub fn none() -> Self {
        AttackSpec {
            kind: AttackKind::None,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        let frac = |p: f64| if (0.0..=1.0).contains(&p) { Ok(()) } else { Err(AttackError::Fraction(p)) };
        match self.kind {
            AttackKind::ModelSwitch { rate } => frac(rate),
            AttackKind::RecordTamper { p_a, p_b, .. } => frac(p_a).and(frac(p_b)),
            _ => Ok(()),
        }
    }
}

fn parse_dir(v: &str) -> Option<FlipDirection> {
    match v {
        "any" => Some(FlipDirection::Any),
        "up" | "to-positive" => Some(FlipDirection::ToPositive),
        "down" | "to-negative" => Some(FlipDirection::ToNegative),
        _ => None,
    }
}

fn dir_name(d: FlipDirection) -> &'static str {
    match d {
        FlipDirection::Any => "any",
        FlipDirection::ToPositive => "up",
        FlipDirection::ToNegative => "down",
    }
}

fn parse_kind(kind: &str) -> Option<WitnessKind> {
    serde_json::from_value(serde_json::Value::String(kind.into())).ok()
}

/// Grammar: `name[:key=value,...][@seed]`, e.g. `record-tamper:p_a=0.5,p_b=0@7`.
/// Names are `none`, `model-switch` (`rate`), `record-tamper` (`p_a`,
/// `p_b`, `dir_a`, `dir_b` in `any|up|down`), `data-forge` (`cover_up`)
/// and `mac-forge` (`nth`, optional `kind` naming a witness kind).
impl FromStr for AttackSpec {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |m: &str| AttackError::Parse(s.into(), m.into());
        let (body, seed) = match s.trim().split_once('@') {
            Some((b, sd)) => (b, sd.trim().parse::<u64>().map_err(|_| err("seed is not an integer"))?),
            None => (s.trim(), 0),
        };
        let (name, args) = body.split_once(':').unwrap_or((body, ""));
        let mut kv = std::collections::BTreeMap::new();
        for part in args.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| err("expected key=value"))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let num = |k: &str, default: f64| -> Result<f64, AttackError> {
            kv.get(k).map_or(Ok(default), |v| v.parse().map_err(|_| err(&format!("{k} is not a number"))))
        };
        let dir = |k: &str| -> Result<FlipDirection, AttackError> {
            kv.get(k).map_or(Ok(FlipDirection::Any), |v| parse_dir(v).ok_or_else(|| err(&format!("bad {k}"))))
        };
        let known: &[&str] = match name {
            "none" => &[],
            "model-switch" => &["rate"],
            "record-tamper" => &["p_a", "p_b", "dir_a", "dir_b"],
            "data-forge" => &["cover_up"],
            "mac-forge" => &["nth", "kind"],
            _ => return Err(err("unknown attack")),
        };
        if let Some(k) = kv.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(err(&format!("unknown key {k}")));
        }
        let kind = match name {
            "none" => AttackKind::None,
            "model-switch" => AttackKind::ModelSwitch { rate: num("rate", 1.0)? },
            "record-tamper" => AttackKind::RecordTamper {
                p_a: num("p_a", 0.0)?,
                p_b: num("p_b", 0.0)?,
                dir_a: dir("dir_a")?,
                dir_b: dir("dir_b")?,
            },
            "data-forge" => AttackKind::DataForge {
                cover_up: kv
                    .get("cover_up")
                    .map_or(Ok(false), |v| v.parse().map_err(|_| err("cover_up is not a bool")))?,
            },
            _ => {
                let nth = kv.get("nth").map_or(Ok(1), |v| v.parse().map_err(|_| err("nth is not an integer")))?;
                let site = match kv.get("kind") {
                    None => ForgeSite::Open { nth },
                    Some(k) => ForgeSite::Witness {
                        kind: parse_kind(k).ok_or_else(|| err("unknown witness kind"))?,
                        nth,
                    },
                };
                AttackKind::MacForge { site }
            }
        };
        let spec = AttackSpec { kind, seed };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for AttackSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            AttackKind::None => write!(f, "none")?,
            AttackKind::ModelSwitch { rate } => write!(f, "model-switch:rate={rate}")?,
            AttackKind::RecordTamper { p_a, p_b, dir_a, dir_b } => write!(
                f,
                "record-tamper:p_a={p_a},p_b={p_b},dir_a={},dir_b={}",
                dir_name(*dir_a),
                dir_name(*dir_b)
            )?,
            AttackKind::DataForge { cover_up } => write!(f, "data-forge:cover_up={cover_up}")?,
            AttackKind::MacForge { site: ForgeSite::Open { nth } } => write!(f, "mac-forge:nth={nth}")?,
            AttackKind::MacForge {
                site: ForgeSite::Witness { kind, nth },
            } => write!(f, "mac-forge:nth={nth},kind={}", serde_json::to_value(kind).unwrap().as_str().unwrap())?,
        }
        write!(f, "@{}", self.seed)
    }
}

// ---------------------------------------------------------------- switching

/// A model that disagrees with `m` on (almost) every input. For a
/// two-output network the output rows are swapped, which negates the score
/// exactly, and thresholds become `1 - t`: every decision flips. For
/// logistic regression the weights and bias are negated; floor rounding
/// makes that agree with `m` only when the score sits one below threshold.
pub fn complement_model(m: &ThresholdedModel) -> Result<ThresholdedModel, AttackError> {
    let mut alt = m.clone();
    let last = alt.model.layers.last_mut().ok_or_else(|| AttackError::NoComplement("model has no layers".into()))?;
    match (m.model.shape.kind, last.bias.len()) {
        (ModelKind::Ffnn, 2) => {
            last.weights.swap(0, 1);
            last.bias.swap(0, 1);
        }
        (_, 1) => {
            last.weights.iter_mut().flatten().for_each(|w| *w = -*w);
            last.bias.iter_mut().for_each(|b| *b = -*b);
        }
        (_, k) => return Err(AttackError::NoComplement(format!("{k} output units"))),
    }
    alt.thresholds = Thresholds {
        a: 1 - m.thresholds.a,
        b: 1 - m.thresholds.b,
    };
    Ok(alt)
}

/// Answers with `alt` on each query independently with probability `rate`.
/// The coin for query `i` depends only on the seed and `i`.
pub struct ModelSwitch {
    alt: ThresholdedModel,
    rate: f64,
    seed: u64,
}

impl ModelSwitch {
    pub fn switches(&self, index: u64) -> bool {
        switch_coin(self.seed, index, self.rate)
    }
}

pub(crate) fn switch_coin(seed: u64, index: u64, rate: f64) -> bool {
    rate > 0.0 && ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15)).gen_bool(rate.min(1.0))
}

impl AnswerStrategy for ModelSwitch {
    fn answer(&mut self, index: u64, model: &ThresholdedModel, q: &Query, r: &[Fp]) -> Result<bool, ModelError> {
        let m = if self.switches(index) { &self.alt } else { model };
        m.predict(&q.features, q.group, r)
    }
}

pub fn apply_model_switch(
    honest: &ThresholdedModel,
    alt: Option<ThresholdedModel>,
    rate: f64,
    seed: u64,
) -> Result<ModelSwitch, AttackError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(AttackError::Fraction(rate));
    }
    let alt = match alt {
        Some(a) => a,
        None => complement_model(honest)?,
    };
    if alt.model.shape != honest.model.shape || alt.model.fpc != honest.model.fpc {
        return Err(AttackError::ShapeMismatch {
            honest: format!("{:?}", honest.model.shape.widths),
            alt: format!("{:?}", alt.model.shape.widths),
        });
    }
    Ok(ModelSwitch { alt, rate, seed })
}

// ------------------------------------------------------------ record tamper

/// A rewritten log and the indices whose outcome changed.
#[derive(Clone, Debug)]
pub struct Tampered {
    pub log: Vec<QueryRecord>,
    pub flipped: Vec<u64>,
}

/// Rewrites one logged outcome the way a cheating provider would: the
/// record's commitment is recomputed to match, the client's signatures stay
/// as they were.
pub fn flip_record(rec: &mut QueryRecord) {
    rec.o = !rec.o;
    rec.commitment = commitment(&rec.query, &rec.r, rec.o);
}

/// Flips `round(p_g * N_g)` outcomes in each group `g`, chosen uniformly
/// among the records the direction admits (all of them if fewer).
pub fn apply_record_tamper(
    log: &[QueryRecord],
    p: [f64; 2],
    dir: [FlipDirection; 2],
    seed: u64,
) -> Result<Tampered, AttackError> {
    for &x in &p {
        if !(0.0..=1.0).contains(&x) {
            return Err(AttackError::Fraction(x));
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = log.to_vec();
    let mut flipped = Vec::new();
    for g in Group::ALL {
        let members: Vec<usize> = (0..log.len()).filter(|&i| log[i].query.group == g).collect();
        let k = (p[g.index()] * members.len() as f64).round() as usize;
        if k == 0 {
            continue;
        }
        let mut eligible: Vec<usize> = members.into_iter().filter(|&i| dir[g.index()].admits(log[i].o)).collect();
        eligible.shuffle(&mut rng);
        for &i in eligible.iter().take(k) {
            flip_record(&mut out[i]);
            flipped.push(i as u64);
        }
    }
    flipped.sort_unstable();
    Ok(Tampered { log: out, flipped })
}

/// Applies an [`AttackKind::RecordTamper`] spec.
pub fn apply_record_tamper_spec(log: &[QueryRecord], spec: &AttackSpec) -> Result<Tampered, AttackError> {
    match spec.kind {
        AttackKind::RecordTamper { p_a, p_b, dir_a, dir_b } => apply_record_tamper(log, [p_a, p_b], [dir_a, dir_b], spec.seed),
        _ => Ok(Tampered {
            log: log.to_vec(),
            flipped: Vec::new(),
        }),
    }
}

/// The fewest demographic-parity flips bringing the logged positive rates
/// within `theta`: positives become negatives in the higher-rate group,
/// negatives become positives in the lower one, whichever moves the gap
/// more per flip first.
pub fn cover_up_tamper(log: &[QueryRecord], theta: Theta, seed: u64) -> Result<Tampered, AttackError> {
    let mut n = [0u64; 2];
    let mut pos = [0u64; 2];
    for r in log {
        n[r.query.group.index()] += 1;
        pos[r.query.group.index()] += r.o as u64;
    }
    if n.contains(&0) {
        return Err(AttackError::ForgeInfeasible("a group has no logged queries".into()));
    }
    let hi = if pos[0] * n[1] >= pos[1] * n[0] { 0 } else { 1 };
    let lo = 1 - hi;
    let within = |pos: &[u64; 2]| {
        let cross = (pos[hi] * n[lo]).abs_diff(pos[lo] * n[hi]);
        cross * theta.den <= theta.num * n[0] * n[1]
    };
    let mut k = [0usize; 2];
    while !within(&pos) {
        if pos[hi] * n[lo] < pos[lo] * n[hi] {
            return Err(AttackError::ForgeInfeasible("no flip count lands within theta".into()));
        }
        // One flip moves group g's rate by 1 / N_g; prefer the smaller group.
        let g = if (n[hi] <= n[lo] && pos[hi] > 0) || pos[lo] == n[lo] { hi } else { lo };
        if g == hi {
            pos[hi] -= 1;
        } else {
            pos[lo] += 1;
        }
        k[g] += 1;
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = log.to_vec();
    let mut flipped = Vec::new();
    for (g, want) in [(hi, true), (lo, false)] {
        let mut eligible: Vec<usize> = (0..log.len())
            .filter(|&i| log[i].query.group.index() == g && log[i].o == want)
            .collect();
        eligible.shuffle(&mut rng);
        for &i in eligible.iter().take(k[g]) {
            flip_record(&mut out[i]);
            flipped.push(i as u64);
        }
    }
    flipped.sort_unstable();
    Ok(Tampered { log: out, flipped })
}

// --------------------------------------------------------------- data forge

/// A calibration subset on which `model` meets `theta`. Each group keeps
/// the same number of records from every (label, prediction) cell, which
/// equalizes every rate the metrics compare; if some cell is empty in a
/// group, the label is ignored and only prediction cells are balanced
/// (enough for demographic parity).
pub fn apply_data_forge(
    model: &ThresholdedModel,
    d_val: &LabeledDataset,
    theta: Theta,
    metric: Metric,
) -> Result<LabeledDataset, AttackError> {
    let mut preds = Vec::with_capacity(d_val.len());
    for r in &d_val.records {
        preds.push(model.predict_features(&r.features, r.group)?);
    }
    let cells = |with_label: bool| {
        let mut c: Vec<Vec<usize>> = vec![Vec::new(); 8];
        for (i, r) in d_val.records.iter().enumerate() {
            let y = with_label && r.label;
            c[r.group.index() * 4 + (y as usize) * 2 + preds[i] as usize].push(i);
        }
        c
    };
    for with_label in [true, false] {
        let c = cells(with_label);
        let used: Vec<&Vec<usize>> = c.iter().filter(|v| !v.is_empty()).collect();
        if used.len() != if with_label { 8 } else { 4 } {
            continue;
        }
        let m = used.iter().map(|v| v.len()).min().unwrap();
        let mut idx: Vec<usize> = used.iter().flat_map(|v| v[..m].iter().copied()).collect();
        idx.sort_unstable();
        let forged = d_val.subset(&idx);
        let rows = idx.iter().map(|&i| (d_val.records[i].group, d_val.records[i].label, preds[i]));
        if counts_within(metric, &count(rows), theta).unwrap_or(false) {
            return Ok(forged);
        }
    }
    Err(AttackError::ForgeInfeasible(format!(
        "no balanced subset meets {metric} <= {theta}"
    )))
}

// ---------------------------------------------------------------- MAC forge

/// Tampers with one opening or witness and is otherwise honest.
pub struct MacForge {
    site: ForgeSite,
    seen: u64,
    delta: Fp,
}

impl MacForge {
    pub fn new(site: ForgeSite, seed: u64) -> Self {
        let delta = Fp::random_nonzero(&mut ChaCha20Rng::seed_from_u64(seed));
        MacForge { site, seen: 0, delta }
    }
}

impl ProverStrategy for MacForge {
    fn witness(&mut self, kind: WitnessKind, honest: Fp) -> Fp {
        if let ForgeSite::Witness { kind: k, nth } = self.site {
            if k == kind {
                self.seen += 1;
                if self.seen == nth {
                    return honest + self.delta;
                }
            }
        }
        honest
    }

    fn open(&mut self, share: ProverShare) -> ProverShare {
        if let ForgeSite::Open { nth } = self.site {
            self.seen += 1;
            if self.seen == nth {
                return ProverShare {
                    value: share.value + self.delta,
                    ..share
                };
            }
        }
        share
    }
}

/// Counts accepted forgeries among `trials` attempts to open a random
/// authenticated value as a different one with a guessed MAC.
pub fn mac_forge_trials(trials: u64, seed: u64) -> u64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut s = Session::from_seed(seed_bytes(seed));
    let mut accepted = 0;
    for _ in 0..trials {
        let x = s.authenticate(Fp::random(&mut rng));
        let honest = x.prover_share();
        let forged = ProverShare {
            value: honest.value + Fp::random_nonzero(&mut rng),
            mac: if rng.gen_bool(0.5) { honest.mac } else { Fp::random(&mut rng) },
        };
        if s.verify_share(x.verifier_key(), forged).is_ok() {
            accepted += 1;
        }
    }
    accepted
}
