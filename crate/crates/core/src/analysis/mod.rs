//! The audit's catch bound `1 - (1 - eps/2)^nu`, the largest deviation
//! that escapes a given catch probability, and Monte-Carlo estimates of
//! the actual catch rate under attack.
//!
//! Evasion probabilities reach 1e-85 and below, so they are computed as
//! `exp(nu * ln_1p(-eps/2))` and the bound as `-expm1` of the same
//! exponent; neither loses relative precision near 0 or 1.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{
    apply_record_tamper_spec, complement_model, cover_up_tamper, switch_coin, AttackError, AttackKind, AttackSpec,
};
use crate::audit::{run_audit, AuditConfig, AuditError, AuditInput, AuditMode};
use crate::certify::{certify, CertificationResult, CertifyOptions};
use crate::fairness::{count_dataset, rate_terms, synthetic, LabeledDataset, Metric, SyntheticConfig, Theta};
use crate::models::ThresholdedModel;
use crate::pipeline::{queries_from, run_phase2, Phase2, PipelineError};
use crate::queryauth::{blame_attestation, CommitmentStore, Party, QueryRecord};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("epsilon {0} is outside (0, 2]")]
    Epsilon(f64),
    #[error("nu must be positive")]
    Nu,
    #[error("catch probability {0} is outside (0, 1)")]
    Probability(f64),
    #[error("at least 100 trials are needed, got {0}")]
    Trials(u64),
    #[error("the scenario's model was not certified: {0:?}")]
    NotCertified(crate::certify::Verdict),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn check(eps: f64, nu: u64) -> Result<(), AnalysisError> {
    if !(eps > 0.0 && eps <= 2.0) {
        return Err(AnalysisError::Epsilon(eps));
    }
    if nu == 0 {
        return Err(AnalysisError::Nu);
    }
    Ok(())
}

/// `ln((1 - eps/2)^nu)`; `-inf` at `eps = 2`.
pub fn ln_evasion(eps: f64, nu: u64) -> Result<f64, AnalysisError> {
    check(eps, nu)?;
    Ok(nu as f64 * (-eps / 2.0).ln_1p())
}

/// Probability that `nu` uniform samples per group all miss a tampering
/// that shifts the gap by `eps`, at most `(1 - eps/2)^nu`.
pub fn evasion(eps: f64, nu: u64) -> Result<f64, AnalysisError> {
    Ok(ln_evasion(eps, nu)?.exp())
}

/// `1 - (1 - eps/2)^nu`.
pub fn catch_bound(eps: f64, nu: u64) -> Result<f64, AnalysisError> {
    Ok(-ln_evasion(eps, nu)?.exp_m1())
}

/// Deviations tabulated for the evasion table.
pub const TABLE_EPSILONS: [f64; 7] = [0.0025, 0.005, 0.00625, 0.0125, 0.025, 0.05, 0.1];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub epsilon: f64,
    pub nu: u64,
    pub bound: f64,
    pub evasion: f64,
    pub empirical_catch: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub trials: u64,
}

impl ProfileRow {
    pub fn analytic(epsilon: f64, nu: u64) -> Result<Self, AnalysisError> {
        Ok(ProfileRow {
            epsilon,
            nu,
            bound: catch_bound(epsilon, nu)?,
            evasion: evasion(epsilon, nu)?,
            empirical_catch: None,
            ci_low: None,
            ci_high: None,
            trials: 0,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SoundnessProfile {
    pub rows: Vec<ProfileRow>,
}

impl SoundnessProfile {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), AnalysisError> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub fn evasion_table(nu: u64) -> Result<SoundnessProfile, AnalysisError> {
    Ok(SoundnessProfile {
        rows: TABLE_EPSILONS.iter().map(|&e| ProfileRow::analytic(e, nu)).collect::<Result<_, _>>()?,
    })
}

/// The largest deviation caught with probability at most `p_catch`:
/// `2 (1 - (1 - p)^(1/nu))`.
pub fn epsilon_star(p_catch: f64, nu: u64) -> Result<f64, AnalysisError> {
    if !(p_catch > 0.0 && p_catch < 1.0) {
        return Err(AnalysisError::Probability(p_catch));
    }
    if nu == 0 {
        return Err(AnalysisError::Nu);
    }
    Ok(-2.0 * ((-p_catch).ln_1p() / nu as f64).exp_m1())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    pub nu: u64,
    pub verified_queries: u64,
    pub epsilon_star: f64,
    pub theta: f64,
    /// `theta - eps*`, floored at zero.
    pub lower: f64,
    pub upper: f64,
}

/// The band of gaps a prover could pass off as `theta` while staying
/// below catch probability `p_catch`, per `nu`.
pub fn epsilon_region(theta: f64, p_catch: f64, nus: impl IntoIterator<Item = u64>) -> Result<Vec<RegionPoint>, AnalysisError> {
    nus.into_iter()
        .map(|nu| {
            let e = epsilon_star(p_catch, nu)?;
            Ok(RegionPoint {
                nu,
                verified_queries: 2 * nu,
                epsilon_star: e,
                theta,
                lower: (theta - e).max(0.0),
                upper: theta + e,
            })
        })
        .collect()
}

pub fn write_region_csv<W: Write>(points: &[RegionPoint], w: W) -> Result<(), AnalysisError> {
    let mut out = csv::Writer::from_writer(w);
    for p in points {
        out.serialize(p)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Evasion probability against the number of verified queries `2 nu`,
/// one column per deviation.
pub fn write_evasion_curves_csv<W: Write>(epsilons: &[f64], verified: &[u64], w: W) -> Result<(), AnalysisError> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["verified_queries".to_string(), "nu".to_string()];
    header.extend(epsilons.iter().map(|e| format!("eps_{e}")));
    out.write_record(&header)?;
    for &v in verified {
        let nu = (v / 2).max(1);
        let mut row = vec![v.to_string(), nu.to_string()];
        for &e in epsilons {
            row.push(format!("{:e}", evasion(e, nu)?));
        }
        out.write_record(&row)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Wilson score interval for `successes` out of `trials` at normal
/// quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

pub const Z95: f64 = 1.959_963_984_540_054;

// -------------------------------------------------------------- Monte Carlo

/// A certified model and its Phase 2 transcripts, computed once and reused
/// by every trial. Coin flips do not depend on answers, so the honest and
/// the complement-model runs line up record by record and any mix of the
/// two is a valid Phase 2 run.
pub struct McScenario {
    pub model: ThresholdedModel,
    pub certification: CertificationResult,
    pub clients: LabeledDataset,
    pub metric: Metric,
    pub theta: Theta,
    pub honest: Phase2,
    pub switched: Phase2,
}

impl McScenario {
    /// Certifies `model` on `d_val` and runs Phase 2 on `clients`.
    pub fn build(
        model: &ThresholdedModel,
        d_val: &LabeledDataset,
        clients: LabeledDataset,
        metric: Metric,
        theta: Theta,
        seed: u64,
    ) -> Result<Self, AnalysisError> {
        let certification = certify(model, d_val, theta, metric, CertifyOptions::seeded(seed)).result;
        if !certification.verdict.is_certified() {
            return Err(AnalysisError::NotCertified(certification.verdict));
        }
        let queries = queries_from(&clients, model.model.fpc).map_err(PipelineError::from)?;
        let alt = complement_model(model)?;
        let honest = run_phase2(model, &queries, 8, seed, None).map_err(PipelineError::from)?;
        let switched = run_phase2(&alt, &queries, 8, seed, None).map_err(PipelineError::from)?;
        Ok(McScenario {
            model: model.clone(),
            certification,
            clients,
            metric,
            theta,
            honest,
            switched,
        })
    }

    /// Signed per-term rate differences `rate_a - rate_b` of a log.
    fn signed_gaps(&self, log: &[QueryRecord]) -> Vec<f64> {
        let preds: Vec<bool> = log.iter().map(|r| r.o).collect();
        let c = count_dataset(&preds, &self.clients).expect("log matches clients");
        let ta = rate_terms(self.metric, &c[0]);
        let tb = rate_terms(self.metric, &c[1]);
        let rate = |(n, d): (u64, u64)| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        ta.into_iter().zip(tb).map(|(a, b)| rate(a) - rate(b)).collect()
    }

    /// Largest per-term shift between the honest gap and that of `log`.
    pub fn realized_epsilon(&self, log: &[QueryRecord]) -> f64 {
        let h = self.signed_gaps(&self.honest.log);
        let m = self.signed_gaps(log);
        h.iter().zip(&m).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// What one Monte-Carlo trial saw.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub caught: bool,
    pub epsilon_realized: f64,
    /// Sampled failures, and how many of them blame attributed to the
    /// provider.
    pub failures: u64,
    pub provider_blamed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub row: ProfileRow,
    pub caught: u64,
    pub epsilon_realized_min: f64,
    pub epsilon_realized_mean: f64,
    pub failures: u64,
    pub provider_blamed: u64,
}

/// Runs one trial: attack, audit in clear-mirror mode, blame.
pub fn mc_trial(sc: &McScenario, attack: &AttackSpec, nu: u64, trial_seed: u64) -> Result<TrialOutcome, AnalysisError> {
    let spec = attack.clone().with_seed(attack.seed ^ trial_seed.wrapping_mul(0x2545_f491_4f6c_dd1d));
    let h = &sc.honest;
    // Which Phase 2 transcript each index comes from, then the provider's
    // rewrite of its log.
    let (mut log, receipts_from_switch): (Vec<QueryRecord>, Vec<bool>) = match spec.kind {
        AttackKind::ModelSwitch { rate } => {
            let pick: Vec<bool> = (0..h.log.len() as u64).map(|i| switch_coin(spec.seed, i, rate)).collect();
            let log = pick
                .iter()
                .enumerate()
                .map(|(i, &s)| if s { sc.switched.log[i].clone() } else { h.log[i].clone() })
                .collect();
            (log, pick)
        }
        _ => (h.log.clone(), vec![false; h.log.len()]),
    };
    let store = if receipts_from_switch.iter().any(|&s| s) {
        let mut st = CommitmentStore::new();
        for r in &log {
            st.append(r.commitment, r.client_id);
        }
        st
    } else {
        h.store.clone()
    };
    match spec.kind {
        AttackKind::RecordTamper { .. } => log = apply_record_tamper_spec(&log, &spec)?.log,
        AttackKind::DataForge { cover_up: true } => log = cover_up_tamper(&log, sc.theta, spec.seed)?.log,
        _ => {}
    }
    let epsilon_realized = sc.realized_epsilon(&log);
    let labels = sc.clients.labels();
    let input = AuditInput {
        model: &sc.model,
        certification: &sc.certification,
        log: &log,
        store: &store,
        labels: Some(&labels),
    };
    let t = run_audit(&input, AuditConfig::new(sc.metric, sc.theta, nu, trial_seed).mode(AuditMode::ClearMirror))?;
    let mut failures = 0;
    let mut provider_blamed = 0;
    for c in t.checks.iter().filter(|c| !c.correct || !c.consistent) {
        failures += 1;
        let j = c.index as usize;
        let receipt = if receipts_from_switch[j] { &sc.switched.receipts[j] } else { &h.receipts[j] };
        let blamed = blame_attestation(
            &log[j],
            receipt,
            store.get(j).expect("sampled index in store").commitment,
            &h.client_keys[log[j].client_id as usize],
            &h.provider_key,
        );
        // A consistent but incorrect record carries the provider's own
        // signature on a wrong answer.
        let provider = match blamed {
            Ok(p) => p == Party::Provider,
            Err(_) => c.consistent && !c.correct,
        };
        provider_blamed += provider as u64;
    }
    Ok(TrialOutcome {
        caught: !t.verdict.is_pass(),
        epsilon_realized,
        failures,
        provider_blamed,
    })
}

/// Empirical catch rate over `trials` independent audits (fresh verifier
/// permutations and fresh attack randomness each time). Trials run on all
/// cores and are reduced in trial order.
pub fn monte_carlo_catch(sc: &McScenario, attack: &AttackSpec, nu: u64, trials: u64, seed: u64) -> Result<McResult, AnalysisError> {
    if trials < 100 {
        return Err(AnalysisError::Trials(trials));
    }
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(trials as usize);
    let chunk = (trials as usize).div_ceil(workers);
    let outcomes: Vec<Result<TrialOutcome, AnalysisError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    let lo = (w * chunk) as u64;
                    let hi = ((w + 1) * chunk).min(trials as usize) as u64;
                    (lo..hi)
                        .map(|t| mc_trial(sc, attack, nu, seed.wrapping_add(t).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ t))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("trial worker panicked")).collect()
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
    let caught = outcomes.iter().filter(|o| o.caught).count() as u64;
    let eps_min = outcomes.iter().map(|o| o.epsilon_realized).fold(f64::INFINITY, f64::min);
    let eps_mean = outcomes.iter().map(|o| o.epsilon_realized).sum::<f64>() / trials as f64;
    let (lo, hi) = wilson_interval(caught, trials, Z95);
    let (bound, ev) = if eps_min > 0.0 {
        (catch_bound(eps_min.min(2.0), nu)?, evasion(eps_min.min(2.0), nu)?)
    } else {
        (0.0, 1.0)
    };
    Ok(McResult {
        row: ProfileRow {
            epsilon: eps_min,
            nu,
            bound,
            evasion: ev,
            empirical_catch: Some(caught as f64 / trials as f64),
            ci_low: Some(lo),
            ci_high: Some(hi),
            trials,
        },
        caught,
        epsilon_realized_min: eps_min,
        epsilon_realized_mean: eps_mean,
        failures: outcomes.iter().map(|o| o.failures).sum(),
        provider_blamed: outcomes.iter().map(|o| o.provider_blamed).sum(),
    })
}

/// Exactly `per_group` records of each group drawn from the synthetic
/// generator, in generation order.
pub fn balanced_clients(cfg: &SyntheticConfig, per_group: usize) -> LabeledDataset {
    let mut n = 4 * per_group + 64;
    loop {
        let ds = synthetic(&SyntheticConfig { n, ..cfg.clone() });
        let mut taken = [0usize; 2];
        let mut idx = Vec::with_capacity(2 * per_group);
        for (i, r) in ds.records.iter().enumerate() {
            let g = r.group.index();
            if taken[g] < per_group {
                taken[g] += 1;
                idx.push(i);
            }
        }
        if taken == [per_group; 2] {
            return ds.subset(&idx);
        }
        n *= 2;
    }
}

#[cfg(test)]
mod tests;
