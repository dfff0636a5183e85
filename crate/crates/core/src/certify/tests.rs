use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::authvalue::{ProverShare, WitnessKind};
use crate::fairness::{dp_gap, postprocess_thresholds, synthetic, Group, Record, SyntheticConfig};
use crate::models::{FixedPointConfig, ScoreModel, Thresholds};

fn fpc() -> FixedPointConfig {
    FixedPointConfig::default()
}

fn logreg(w: Vec<f64>, b: f64, t: Thresholds) -> ThresholdedModel {
    ThresholdedModel::new(ScoreModel::logreg(w, b).quantize(fpc()).unwrap(), t)
}

fn rec(x: f64, label: bool, group: Group) -> Record {
    Record {
        features: vec![x],
        label,
        group,
    }
}

fn ds(records: Vec<Record>) -> LabeledDataset {
    LabeledDataset::new(vec!["x".into()], records)
}

fn theta(n: u64, d: u64) -> Theta {
    Theta::new(n, d).unwrap()
}

#[test]
fn pp_inference_matches_clear_and_ties_are_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut s = Session::from_seed(seed_bytes(1));
    let m = logreg(vec![1.5, -2.0, 0.5], 0.25, Thresholds { a: 1000, b: -3000 });
    let cm = CommittedModel::commit(&mut s, &m);
    assert_eq!(cm.digest, m.digest());
    for _ in 0..200 {
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let q = Query {
            features: fpc().quantize_features(&x).unwrap(),
            group: if rng.gen() { Group::A } else { Group::B },
        };
        let cq = CommittedQuery::commit(&mut s, &q);
        let o = zk_pp_inference(&mut s, &cm, &cq, &[]).unwrap();
        assert_eq!(s.open(o.value()) == Fp::ONE, m.predict(&q.features, q.group, &[]).unwrap());
    }
    // Score exactly at t_a.
    let tie = logreg(vec![1.0], 0.0, Thresholds { a: 1 << 16, b: THRESHOLD_MAX });
    let cm = CommittedModel::commit(&mut s, &tie);
    let cq = CommittedQuery::commit(
        &mut s,
        &Query {
            features: vec![1 << 16],
            group: Group::A,
        },
    );
    let o = zk_pp_inference(&mut s, &cm, &cq, &[]).unwrap();
    assert_eq!(s.open(o.value()), Fp::ONE);
    s.finish().unwrap();
}

const THRESHOLD_MAX: i64 = crate::models::THRESHOLD_INF;

#[test]
fn constant_predictor_is_certified_at_zero() {
    let data = ds((0..10).map(|i| rec(i as f64 / 10.0, i % 3 == 0, Group::ALL[i % 2])).collect());
    let m = logreg(vec![0.0], 0.0, Thresholds::uniform(-THRESHOLD_MAX));
    for metric in Metric::ALL {
        let c = certify(&m, &data, theta(0, 1), metric, CertifyOptions::seeded(2));
        assert_eq!(c.result.verdict, Verdict::Certified, "{metric}");
    }
}

#[test]
fn four_record_gap_half_is_rejected_at_quarter() {
    // Group a: both positive. Group b: one of two positive. DP gap 1/2.
    let data = ds(vec![
        rec(1.0, true, Group::A),
        rec(1.0, true, Group::A),
        rec(1.0, true, Group::B),
        rec(-1.0, false, Group::B),
    ]);
    let m = logreg(vec![1.0], 0.0, Thresholds::uniform(0));
    assert_eq!(dp_gap(&[true, true, true, false], &data).unwrap().max_f64(), 0.5);
    let c = certify_dp(&m, &data, theta(1, 4), CertifyOptions::seeded(3));
    assert_eq!(c.result.verdict, Verdict::Rejected(RejectReason::Unfair));
    assert!(certify_dp(&m, &data, theta(1, 2), CertifyOptions::seeded(3)).result.verdict.is_certified());
}

#[test]
fn eo_perfect_predictor_and_fp_gap() {
    let data = ds(vec![
        rec(1.0, true, Group::A),
        rec(-1.0, false, Group::A),
        rec(1.0, true, Group::B),
        rec(-1.0, false, Group::B),
    ]);
    let m = logreg(vec![1.0], 0.0, Thresholds::uniform(0));
    assert!(certify_eo(&m, &data, theta(0, 1), CertifyOptions::seeded(4)).result.verdict.is_certified());

    // Group a's negative is predicted positive: FP_a/N_a = 1/2, FP_b/N_b = 0.
    let fp = ds(vec![
        rec(1.0, true, Group::A),
        rec(1.0, false, Group::A),
        rec(1.0, true, Group::B),
        rec(-1.0, false, Group::B),
    ]);
    let c = certify_eo(&m, &fp, theta(1, 4), CertifyOptions::seeded(4));
    assert_eq!(c.result.verdict, Verdict::Rejected(RejectReason::Unfair));
}

#[test]
fn empty_group_is_rejected() {
    let data = ds(vec![rec(1.0, true, Group::A), rec(0.0, false, Group::A)]);
    let m = logreg(vec![1.0], 0.0, Thresholds::uniform(0));
    let c = certify_dp(&m, &data, theta(1, 1), CertifyOptions::seeded(5));
    assert_eq!(c.result.verdict, Verdict::Rejected(RejectReason::EmptyGroup));
    // No positives in group b for equal opportunity.
    let data = ds(vec![rec(1.0, true, Group::A), rec(0.0, false, Group::B)]);
    let c = certify(&m, &data, theta(1, 1), Metric::EqualOpportunity, CertifyOptions::seeded(5));
    assert_eq!(c.result.verdict, Verdict::Rejected(RejectReason::EmptyGroup));
}

fn random_instance(rng: &mut ChaCha8Rng) -> (ThresholdedModel, LabeledDataset, Theta) {
    let data = synthetic(&SyntheticConfig {
        n: rng.gen_range(20..120),
        n_features: 3,
        seed: rng.gen(),
        ..Default::default()
    });
    let w = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let t = Thresholds {
        a: rng.gen_range(-40_000..40_000),
        b: rng.gen_range(-40_000..40_000),
    };
    let den = rng.gen_range(2..64);
    (logreg(w, rng.gen_range(-1.0..1.0), t), data, theta(rng.gen_range(0..den), den))
}

#[test]
fn verdicts_match_clear_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut seen = std::collections::HashSet::new();
    for i in 0..60 {
        let (m, data, th) = random_instance(&mut rng);
        let metric = Metric::ALL[i % 4];
        let got = certify(&m, &data, th, metric, CertifyOptions::seeded(i as u64)).result.verdict;
        assert_eq!(got, certify_clear(&m, &data, th, metric), "instance {i}");
        seen.insert(got.is_certified());
    }
    assert_eq!(seen.len(), 2, "oracle test never exercised both verdicts");
}

#[test]
fn postprocessed_models_are_certified() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..10 {
        let data = synthetic(&SyntheticConfig {
            n: 150,
            n_features: 4,
            seed: i,
            ..Default::default()
        });
        let w = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let q = ScoreModel::logreg(w, 0.0).quantize(fpc()).unwrap();
        let th = theta(rng.gen_range(1..6), 20);
        let metric = Metric::ALL[i as usize % 4];
        let Ok((m, _)) = postprocess_thresholds(&q, &data, th, metric) else {
            continue;
        };
        let c = certify(&m, &data, th, metric, CertifyOptions::seeded(i));
        assert!(c.result.verdict.is_certified(), "{:?}", c.result.verdict);
    }
}

struct FlipKind(WitnessKind, usize, usize);

impl ProverStrategy for FlipKind {
    fn witness(&mut self, kind: WitnessKind, honest: Fp) -> Fp {
        if kind == self.0 {
            self.1 += 1;
            if self.1 == self.2 {
                return Fp::ONE - honest;
            }
        }
        honest
    }
}

struct ForgeOpen(usize, usize);

impl ProverStrategy for ForgeOpen {
    fn open(&mut self, share: ProverShare) -> ProverShare {
        self.0 += 1;
        if self.0 == self.1 {
            ProverShare {
                value: share.value + Fp::ONE,
                ..share
            }
        } else {
            share
        }
    }
}

#[test]
fn cheating_provers_are_rejected() {
    let data = synthetic(&SyntheticConfig {
        n: 40,
        n_features: 2,
        seed: 8,
        ..Default::default()
    });
    let m = logreg(vec![1.0, -1.0], 0.0, Thresholds { a: 0, b: 100 });
    let honest = certify(&m, &data, theta(1, 1), Metric::EqualizedOdds, CertifyOptions::seeded(9));
    assert!(honest.result.verdict.is_certified());

    let cheat = |st: Box<dyn ProverStrategy>| {
        let opts = CertifyOptions {
            strategy: Some(st),
            ..CertifyOptions::seeded(9)
        };
        certify(&m, &data, theta(1, 1), Metric::EqualizedOdds, opts).result.verdict
    };
    for kind in [
        WitnessKind::Indicator,
        WitnessKind::SignBit,
        WitnessKind::DecompositionBit,
        WitnessKind::Quotient,
        WitnessKind::Remainder,
    ] {
        // Two terms under EO, so only two sign bits exist.
        let sites: &[usize] = if kind == WitnessKind::SignBit { &[1, 2] } else { &[1, 7, 30] };
        for &nth in sites {
            let v = cheat(Box::new(FlipKind(kind, 0, nth)));
            assert!(matches!(v, Verdict::Rejected(RejectReason::Proof(_))), "{kind:?} #{nth}: {v:?}");
        }
    }
    // Misreport the final fairness bit, or any opened counter-related value.
    let opens = honest.result.stats.openings as usize;
    for nth in [1, opens / 2, opens - 1, opens] {
        let v = cheat(Box::new(ForgeOpen(0, nth)));
        assert!(matches!(v, Verdict::Rejected(RejectReason::Proof(_))), "open #{nth}: {v:?}");
    }
}

#[test]
fn transcript_schedule_depends_only_on_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut schedules = std::collections::HashSet::new();
    for i in 0..6 {
        let data = ds((0..12)
            .map(|k| rec(rng.gen_range(-1.0..1.0), rng.gen(), Group::ALL[k % 2]))
            .collect());
        let m = logreg(vec![rng.gen_range(-3.0..3.0)], rng.gen_range(-1.0..1.0), Thresholds::uniform(rng.gen_range(-9000..9000)));
        let c = certify(&m, &data, theta(1, 1), Metric::DemographicParity, CertifyOptions::seeded(i));
        assert!(c.result.verdict.is_certified());
        schedules.insert((c.result.transcript.schedule_digest.clone(), c.result.transcript.messages));
    }
    assert_eq!(schedules.len(), 1);
}

#[test]
fn log_roundtrips_result() {
    let data = synthetic(&SyntheticConfig {
        n: 30,
        n_features: 2,
        seed: 11,
        ..Default::default()
    });
    let m = logreg(vec![0.5, 0.5], 0.0, Thresholds::uniform(0));
    let c = certify_dp(&m, &data, theta(1, 2), CertifyOptions::seeded(12));
    let mut buf = Vec::new();
    c.write_jsonl(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), c.steps.len() + 1);
    assert_eq!(Certification::read_result(&text).unwrap(), c.result);
    assert_eq!(c.result.model_digest, m.digest());
    // Same inputs, same transcript.
    assert_eq!(certify_dp(&m, &data, theta(1, 2), CertifyOptions::seeded(12)).result, c.result);
}

#[test]
fn record_randomness_is_reproducible() {
    let a = record_randomness(5, 10);
    assert_eq!(a, record_randomness(5, 10));
    assert_eq!(a.len(), 10);
    assert!(a.iter().all(|r| r.len() == R_LEN));
    assert_ne!(a, record_randomness(6, 10));
}
