use proptest::prelude::*;

use super::*;
use crate::fairness::Group;
use crate::models::{ScoreModel, Thresholds};

fn model() -> ThresholdedModel {
    let m = ScoreModel::logreg(vec![1.0, -0.5, 0.25], 0.1).quantize(Default::default()).unwrap();
    ThresholdedModel::new(m, Thresholds { a: 0, b: 1000 })
}

fn query(i: i64) -> Query {
    Query {
        features: vec![i * 1000, -i * 700, 5000],
        group: if i % 2 == 0 { Group::A } else { Group::B },
    }
}

struct Setup {
    client: Client,
    provider: Provider,
    store: CommitmentStore,
}

fn setup() -> Setup {
    Setup {
        client: Client::from_seed(7, [1; 32]),
        provider: Provider::new(model(), Box::new(Ed25519Signer::from_seed([2; 32])), 3),
        store: CommitmentStore::new(),
    }
}

fn run(s: &mut Setup, n: i64) -> Vec<ClientReceipt> {
    (0..n)
        .map(|i| answer_query(&mut s.client, &mut s.provider, &mut s.store, query(i)).unwrap())
        .collect()
}

#[test]
fn honest_queries_are_consistent() {
    let mut s = setup();
    let receipts = run(&mut s, 20);
    assert_eq!(s.store.len(), 20);
    for (rec, rc) in s.provider.log().iter().zip(&receipts) {
        assert_eq!(rec.o, model().predict(&rec.query.features, rec.query.group, &rec.r).unwrap());
        assert_eq!(rec.r.len(), R_LEN);
        assert_eq!(s.store.get(rec.index as usize).unwrap().commitment, rec.commitment);
        let stored = s.store.get(rc.index as usize).unwrap().commitment;
        assert_eq!(
            blame_attestation(rec, rc, stored, &s.client.public_key(), &s.provider.public_key()),
            Err(BlameError::NoContradiction)
        );
    }
    // Fresh randomness each query.
    assert_ne!(receipts[0].r, receipts[1].r);
}

#[test]
fn provider_refuses_unregistered_signature() {
    let mut s = setup();
    let other = Client::from_seed(99, [9; 32]).public_key();
    let err = answer_query_with(&mut s.client, &mut s.provider, &mut s.store, query(1), &other).unwrap_err();
    assert!(matches!(err, QueryAbort::BadClientSignature));
    assert!(s.store.is_empty());
    assert!(s.provider.log().is_empty());
}

#[test]
fn coin_flip_rejects_bad_opening() {
    let x = CoinParty::new([3; 32], [4; 32]);
    let c = x.commit();
    assert!(finish_flip(&c, &[3; 32], &[4; 32], &[5; 32], 2).is_ok());
    assert_eq!(finish_flip(&c, &[3; 32], &[5; 32], &[5; 32], 2), Err(CoinError::BadOpening));
    assert_eq!(coin_flip(&x, &[5; 32], 4).unwrap()[..2], coin_flip(&x, &[5; 32], 2).unwrap()[..]);
    assert_ne!(coin_flip(&x, &[5; 32], 2).unwrap(), coin_flip(&x, &[6; 32], 2).unwrap());
}

#[test]
fn log_and_store_roundtrip() {
    let mut s = setup();
    run(&mut s, 5);
    let bytes = encode_log(s.provider.log());
    assert_eq!(&bytes[..8], LOG_MAGIC);
    assert_eq!(decode_log(&bytes).unwrap(), s.provider.log());
    assert!(decode_log(&bytes[..bytes.len() - 1]).is_err());

    let mut buf = Vec::new();
    s.store.write_jsonl(&mut buf).unwrap();
    assert_eq!(CommitmentStore::read_jsonl(&buf[..]).unwrap(), s.store);
    let text = String::from_utf8(buf).unwrap();
    let swapped: Vec<&str> = text.lines().collect();
    let bad = format!("{}\n{}\n", swapped[0], swapped[2]);
    assert!(matches!(CommitmentStore::read_jsonl(bad.as_bytes()), Err(StoreError::NotDense { .. })));
}

#[test]
fn signatures_are_domain_separated() {
    let q = query(3);
    let r = vec![Fp::new(1), Fp::new(2)];
    assert_ne!(query_message(&q, &r), answer_message(&q, &r, false));
    assert_eq!(&query_message(&q, &r)[..8], RECORD_TAG);
    assert_ne!(commitment(&q, &r, true), commitment(&q, &r, false));
}

#[derive(Clone, Copy, Debug)]
enum Tamper {
    LogQuery,
    LogAnswer,
    LogSigP,
    ReceiptAnswer,
    ReceiptSigC,
    Store,
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn blame_lands_on_the_tamperer(idx in 0usize..6, which in 0usize..6, delta in 1u64..1000) {
        let mut s = setup();
        let receipts = run(&mut s, 6);
        let mut rec = s.provider.log()[idx].clone();
        let mut rc = receipts[idx].clone();
        let mut stored = s.store.get(idx).unwrap().commitment;
        let t = [Tamper::LogQuery, Tamper::LogAnswer, Tamper::LogSigP, Tamper::ReceiptAnswer, Tamper::ReceiptSigC, Tamper::Store][which];
        let expected = match t {
            Tamper::LogQuery => { rec.query.features[0] += delta as i64; Party::Provider }
            Tamper::LogAnswer => { rec.o = !rec.o; Party::Provider }
            Tamper::LogSigP => { rec.sig_p.0[(delta % 64) as usize] ^= 1; Party::Provider }
            Tamper::ReceiptAnswer => { rc.o = !rc.o; Party::Client }
            Tamper::ReceiptSigC => { rc.sig_c.0[(delta % 64) as usize] ^= 1; Party::Client }
            Tamper::Store => { stored += Fp::new(delta); Party::Client }
        };
        let blamed = blame_attestation(&rec, &rc, stored, &s.client.public_key(), &s.provider.public_key());
        prop_assert_eq!(blamed, Ok(expected), "{:?}", t);
    }
}

#[test]
fn verify_log_flags_edits() {
    let mut s = setup();
    run(&mut s, 6);
    // The test client has id 7.
    let mut keys = vec![Client::from_seed(1, [5; 32]).public_key(); 8];
    keys[7] = s.client.public_key();
    let ppk = s.provider.public_key();
    let mut log = s.provider.into_log();
    assert!(verify_log(&log, &keys, &ppk).is_empty());
    log[1].o = !log[1].o;
    log[2].index = 9;
    log[3].commitment += Fp::new(1);
    log[4].query.features[0] += 1;
    log[5].client_id = 40;
    assert_eq!(
        verify_log(&log, &keys, &ppk),
        vec![
            (1, LogDefect::ProviderSignature),
            (2, LogDefect::Index),
            (3, LogDefect::Commitment),
            (4, LogDefect::ClientSignature),
            (5, LogDefect::UnknownClient),
        ]
    );
}

#[test]
fn any_byte_edit_of_an_encoded_log_is_detected() {
    let mut s = setup();
    run(&mut s, 3);
    let mut keys: Vec<PublicKey> = (0..256).map(|i| Client::from_seed(i, [i as u8; 32]).public_key()).collect();
    keys[7] = s.client.public_key();
    let ppk = s.provider.public_key();
    let bytes = encode_log(s.provider.log());
    for i in 0..bytes.len() {
        for mask in [0x01u8, 0x80] {
            let mut b = bytes.clone();
            b[i] ^= mask;
            if let Ok(log) = decode_log(&b) {
                assert!(!verify_log(&log, &keys, &ppk).is_empty(), "byte {i} mask {mask:#x} undetected");
            }
        }
    }
}
