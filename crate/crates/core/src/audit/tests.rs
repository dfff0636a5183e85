use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::authvalue::ProverShare;
use crate::certify::{certify, CertifyOptions};
use crate::fairness::{synthetic, LabeledDataset, SyntheticConfig};
use crate::models::{FixedPointConfig, ScoreModel, Thresholds};
use crate::queryauth::{answer_query, Client, ClientReceipt, Ed25519Signer, Provider, Query, Signer};

struct World {
    model: ThresholdedModel,
    cert: CertificationResult,
    log: Vec<QueryRecord>,
    receipts: Vec<ClientReceipt>,
    store: CommitmentStore,
    labels: Vec<bool>,
    clients: LabeledDataset,
}

fn world(n: usize, seed: u64, t: Thresholds) -> World {
    let fpc = FixedPointConfig::default();
    let model = ThresholdedModel::new(ScoreModel::logreg(vec![1.0, -1.0, 0.5], 0.0).quantize(fpc).unwrap(), t);
    let d_val = synthetic(&SyntheticConfig {
        n: 200,
        n_features: 3,
        seed,
        ..Default::default()
    });
    let cert = certify(&model, &d_val, Theta::new(1, 1).unwrap(), Metric::DemographicParity, CertifyOptions::seeded(seed))
        .result;
    assert!(cert.verdict.is_certified());
    let clients = synthetic(&SyntheticConfig {
        n,
        n_features: 3,
        seed: seed + 1000,
        ..Default::default()
    });
    let mut provider = Provider::new(model.clone(), Box::new(Ed25519Signer::from_seed([7; 32])), seed);
    let mut client = Client::from_seed(1, [8; 32]);
    let mut store = CommitmentStore::new();
    let receipts = clients
        .records
        .iter()
        .map(|r| {
            let q = Query {
                features: fpc.quantize_features(&r.features).unwrap(),
                group: r.group,
            };
            answer_query(&mut client, &mut provider, &mut store, q).unwrap()
        })
        .collect();
    World {
        model,
        cert,
        log: provider.into_log(),
        receipts,
        store,
        labels: clients.labels(),
        clients,
    }
}

impl World {
    fn input(&self) -> AuditInput<'_> {
        AuditInput {
            model: &self.model,
            certification: &self.cert,
            log: &self.log,
            store: &self.store,
            labels: Some(&self.labels),
        }
    }
}

fn theta(n: u64, d: u64) -> Theta {
    Theta::new(n, d).unwrap()
}

#[test]
fn honest_audit_passes_in_both_modes() {
    let w = world(300, 1, Thresholds::uniform(0));
    for metric in Metric::ALL {
        let cfg = AuditConfig::new(metric, theta(1, 1), 20, 2);
        let circuit = run_audit(&w.input(), cfg).unwrap();
        assert_eq!(circuit.verdict, AuditVerdict::Pass, "{metric}");
        assert_eq!(circuit.correctness_proofs, 40);
        assert_eq!(circuit.consistency_proofs, 40);
        assert_eq!(circuit.n_a + circuit.n_b, 300);
        assert_eq!([circuit.n_a, circuit.n_b], w.clients.group_sizes().map(|v| v as u64));
        let clear = run_audit(&w.input(), AuditConfig::new(metric, theta(1, 1), 20, 2).mode(AuditMode::ClearMirror)).unwrap();
        assert_eq!(clear.verdict, circuit.verdict);
        assert_eq!(clear.checks, circuit.checks);
        assert_eq!(clear.fairness, circuit.fairness);
    }
}

#[test]
fn fairness_verdict_matches_clear_gap() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = world(150, 3, Thresholds { a: -20_000, b: 20_000 });
    for i in 0..12 {
        let den = rng.gen_range(2..40);
        let th = theta(rng.gen_range(0..den), den);
        let metric = Metric::ALL[i % 4];
        let preds: Vec<bool> = w.log.iter().map(|r| r.o).collect();
        let expected = crate::fairness::gap(metric, &preds, &w.clients).unwrap().within(th);
        let t = run_audit(&w.input(), AuditConfig::new(metric, th, 5, i as u64)).unwrap();
        assert_eq!(t.fairness == Some(FairnessOutcome::Fair), expected, "{metric} {th}");
        assert_eq!(t.verdict.is_pass(), expected);
    }
}

#[test]
fn flipped_sampled_output_fails_consistency_and_is_blamed() {
    let mut w = world(200, 4, Thresholds::uniform(0));
    let honest = run_audit(&w.input(), AuditConfig::new(Metric::DemographicParity, theta(1, 1), 10, 5)).unwrap();
    let j = honest.sampled()[3] as usize;
    w.log[j].o = !w.log[j].o;
    for mode in [AuditMode::Circuit, AuditMode::ClearMirror] {
        let t = run_audit(&w.input(), AuditConfig::new(Metric::DemographicParity, theta(1, 1), 10, 5).mode(mode)).unwrap();
        match &t.verdict {
            AuditVerdict::Fail { reasons, blamed } => {
                assert!(reasons.contains(&FailReason::Consistency));
                assert!(reasons.contains(&FailReason::Correctness));
                assert_eq!(blamed, &vec![j as u64]);
            }
            v => panic!("{v:?}"),
        }
    }
    let rec = &w.log[j];
    let blamed = crate::queryauth::blame_attestation(
        rec,
        &w.receipts[j],
        w.store.get(j).unwrap().commitment,
        &Client::from_seed(1, [8; 32]).public_key(),
        &Ed25519Signer::from_seed([7; 32]).public_key(),
    );
    assert_eq!(blamed, Ok(crate::queryauth::Party::Provider));
}

#[test]
fn digest_mismatch_and_missing_labels() {
    let w = world(100, 6, Thresholds::uniform(0));
    let mut other = w.model.clone();
    other.thresholds.a += 1;
    let input = AuditInput {
        model: &other,
        ..w.input()
    };
    let t = run_audit(&input, AuditConfig::new(Metric::DemographicParity, theta(1, 1), 5, 1)).unwrap();
    assert!(matches!(t.verdict, AuditVerdict::Fail { ref reasons, .. } if reasons.contains(&FailReason::DigestMismatch)));

    let input = AuditInput { labels: None, ..w.input() };
    assert_eq!(
        run_audit(&input, AuditConfig::new(Metric::EqualizedOdds, theta(1, 1), 5, 1)).unwrap_err(),
        AuditError::MissingLabels(Metric::EqualizedOdds)
    );
    assert!(matches!(
        run_audit(&w.input(), AuditConfig::new(Metric::DemographicParity, theta(1, 1), 1000, 1)),
        Err(AuditError::Sample(SampleError::Infeasible { .. }))
    ));
}

#[test]
fn forged_opening_is_caught_by_mac_check() {
    struct Forge(u64);
    impl ProverStrategy for Forge {
        fn open(&mut self, share: ProverShare) -> ProverShare {
            self.0 += 1;
            if self.0 == 5000 {
                ProverShare {
                    value: share.value + Fp::ONE,
                    ..share
                }
            } else {
                share
            }
        }
    }
    let w = world(100, 7, Thresholds::uniform(0));
    let cfg = AuditConfig {
        strategy: Some(Box::new(Forge(0))),
        ..AuditConfig::new(Metric::DemographicParity, theta(1, 1), 5, 1)
    };
    let t = run_audit(&w.input(), cfg).unwrap();
    assert!(!t.verdict.is_pass());
}

#[test]
fn sampler_edge_cases_and_uniformity() {
    let groups: Vec<Group> = (0..40).map(|i| if i % 3 == 0 { Group::A } else { Group::B }).collect();
    let n_a = groups.iter().filter(|&&g| g == Group::A).count() as u64;
    let n_b = 40 - n_a;
    let perms = Permutations::draw(1, n_a, n_b);
    assert!(balanced_sample_clear(&groups, 0, &perms).unwrap().is_empty());

    let small = vec![Group::A, Group::B, Group::B, Group::A];
    let all = balanced_sample_clear(&small, 2, &Permutations::draw(2, 2, 2)).unwrap();
    assert_eq!(all, vec![0, 1, 2, 3]);

    let mut s = Session::from_seed(seed_bytes(3));
    let bits: Vec<_> = groups
        .iter()
        .map(|&g| bit(&mut s, WitnessKind::Indicator, g == Group::A).unwrap())
        .collect();
    let mut hits = [0u32; 40];
    for seed in 0..300 {
        let perms = Permutations::draw(seed, n_a, n_b);
        for mode in [RamMode::Batched, RamMode::LinearScan] {
            if mode == RamMode::LinearScan && seed % 50 != 0 {
                continue;
            }
            let got = balanced_sample(&mut s, &bits, n_a, 5, &perms, mode).unwrap();
            assert_eq!(got.selected, balanced_sample_clear(&groups, 5, &perms).unwrap());
            assert_eq!(got.selected.iter().filter(|&&i| groups[i] == Group::A).count(), 5);
            if mode == RamMode::Batched {
                for &i in &got.selected {
                    hits[i] += 1;
                }
            }
        }
    }
    s.finish().unwrap();
    // Each group-a index is picked with probability 5/n_a.
    for (i, g) in groups.iter().enumerate() {
        let n_g = if *g == Group::A { n_a } else { n_b } as f64;
        let p = 5.0 / n_g;
        let sd = (300.0 * p * (1.0 - p)).sqrt();
        assert!((hits[i] as f64 - 300.0 * p).abs() < 4.0 * sd, "index {i}: {}", hits[i]);
    }
}

#[test]
fn transcript_jsonl_has_summary_and_samples() {
    let w = world(120, 8, Thresholds::uniform(0));
    let t = run_audit(&w.input(), AuditConfig::new(Metric::DemographicParity, theta(1, 1), 4, 1)).unwrap();
    let mut buf = Vec::new();
    t.write_jsonl(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 1 + 8);
    let summary: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(summary["N"], 120);
    assert_eq!(summary["verdict"], "Pass");
}
