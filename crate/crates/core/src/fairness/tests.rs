use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::models::THRESHOLD_INF;

fn rec(group: Group, label: bool) -> Record {
    Record {
        features: vec![0.0],
        label,
        group,
    }
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> (LabeledDataset, Vec<bool>) {
    let records: Vec<Record> = (0..n)
        .map(|i| {
            let g = if i < 2 { Group::ALL[i] } else if rng.gen_bool(0.5) { Group::A } else { Group::B };
            rec(g, rng.gen_bool(0.5))
        })
        .collect();
    let pred = (0..n).map(|_| rng.gen_bool(0.4)).collect();
    (LabeledDataset::new(vec!["x".into()], records), pred)
}

/// Independent recount of a rate for one group.
fn brute_rate(ds: &LabeledDataset, pred: &[bool], g: Group, cond: impl Fn(bool) -> bool, hit: impl Fn(bool, bool) -> bool) -> Ratio<u64> {
    let rows: Vec<_> = ds.records.iter().zip(pred).filter(|(r, _)| r.group == g && cond(r.label)).collect();
    let num = rows.iter().filter(|(r, &p)| hit(r.label, p)).count() as u64;
    Ratio::new(num, rows.len() as u64)
}

fn diff(a: Ratio<u64>, b: Ratio<u64>) -> Ratio<u64> {
    if a > b {
        a - b
    } else {
        b - a
    }
}

#[test]
fn dp_small_cases() {
    let ds = LabeledDataset::new(
        vec!["x".into()],
        vec![rec(Group::A, true), rec(Group::A, false), rec(Group::B, true), rec(Group::B, false)],
    );
    assert_eq!(dp_gap(&[true; 4], &ds).unwrap().values, vec![Ratio::from_integer(0)]);
    assert_eq!(dp_gap(&[true, false, false, false], &ds).unwrap().values, vec![Ratio::new(1, 2)]);
    let only_a = LabeledDataset::new(vec!["x".into()], vec![rec(Group::A, true)]);
    assert_eq!(dp_gap(&[true], &only_a), Err(MetricError::EmptyGroup(Group::B)));
    assert_eq!(dp_gap(&[true], &ds), Err(MetricError::Length(1, 4)));
}

#[test]
fn perfect_and_constant_predictors() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (ds, _) = random_instance(&mut rng, 200);
    let perfect = ds.labels();
    assert_eq!(eo_gaps(&perfect, &ds).unwrap().max(), Ratio::from_integer(0));
    assert_eq!(eopp_gap(&perfect, &ds).unwrap().max(), Ratio::from_integer(0));
    assert_eq!(pe_gap(&perfect, &ds).unwrap().max(), Ratio::from_integer(0));
    assert_eq!(eopp_gap(&[true; 200], &ds).unwrap().max(), Ratio::from_integer(0));
}

#[test]
fn identical_confusion_matrices_give_zero_gaps() {
    let mut records = Vec::new();
    let mut pred = Vec::new();
    for g in Group::ALL {
        for (l, p) in [(true, true), (true, false), (false, true), (false, false), (false, false)] {
            records.push(rec(g, l));
            pred.push(p);
        }
    }
    let ds = LabeledDataset::new(vec!["x".into()], records);
    for m in Metric::ALL {
        assert_eq!(gap(m, &pred, &ds).unwrap().max(), Ratio::from_integer(0), "{m}");
    }
}

#[test]
fn gaps_match_brute_force_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let (ds, pred) = random_instance(&mut rng, 200);
        let all = |_| true;
        let rate = |g, c: &dyn Fn(bool) -> bool, h: &dyn Fn(bool, bool) -> bool| brute_rate(&ds, &pred, g, c, h);
        let dp = diff(rate(Group::A, &all, &|_, p| p), rate(Group::B, &all, &|_, p| p));
        assert_eq!(dp_gap(&pred, &ds).unwrap().values, vec![dp]);

        let fp = |l: bool, p: bool| !l && p;
        let fn_ = |l: bool, p: bool| l && !p;
        let eo = eo_gaps(&pred, &ds).unwrap().values;
        assert_eq!(eo[0], diff(rate(Group::A, &all, &fp), rate(Group::B, &all, &fp)));
        assert_eq!(eo[1], diff(rate(Group::A, &all, &fn_), rate(Group::B, &all, &fn_)));

        let pos = |l: bool| l;
        let neg = |l: bool| !l;
        let tpr = diff(rate(Group::A, &pos, &|_, p| p), rate(Group::B, &pos, &|_, p| p));
        let fpr = diff(rate(Group::A, &neg, &|_, p| p), rate(Group::B, &neg, &|_, p| p));
        assert_eq!(eopp_gap(&pred, &ds).unwrap().values, vec![tpr]);
        assert_eq!(pe_gap(&pred, &ds).unwrap().values, vec![fpr]);
        assert_eq!(eo_gaps_conditional(&pred, &ds).unwrap().values, vec![fpr, tpr]);
    }
}

#[test]
fn gaps_symmetric_under_group_swap() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let (ds, pred) = random_instance(&mut rng, 60);
        let swapped = ds.relabel_groups();
        for m in Metric::ALL {
            match (gap(m, &pred, &ds), gap(m, &pred, &swapped)) {
                (Ok(a), Ok(b)) => assert_eq!(a, b),
                (Err(_), Err(_)) => {}
                other => panic!("{other:?}"),
            }
        }
    }
}

#[test]
fn cross_multiplied_check_agrees_with_rationals() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10_000 {
        let da = rng.gen_range(1..500u64);
        let db = rng.gen_range(1..500u64);
        let a = (rng.gen_range(0..=da), da);
        let b = (rng.gen_range(0..=db), db);
        let den = rng.gen_range(1..=THETA_MAX_DEN);
        let theta = Theta::new(rng.gen_range(0..=den), den).unwrap();
        let g = diff(Ratio::new(a.0, a.1), Ratio::new(b.0, b.1));
        assert_eq!(inequality_holds(theta, a, b), g <= theta.as_ratio());
    }
}

#[test]
fn theta_saturating_sub() {
    let t = |n, d| Theta::new(n, d).unwrap();
    assert_eq!(t(1, 10).saturating_sub(t(1, 40)), t(3, 40));
    assert_eq!(t(1, 20).saturating_sub(t(1, 10)), t(0, 1));
    let r = t(1, 65521).saturating_sub(t(1, 65519));
    assert_eq!(r.num, 0);
    let r = t(1, 3).saturating_sub(t(1, 65519));
    assert!(r.den <= THETA_MAX_DEN && r.as_ratio() <= t(1, 3).as_ratio() - t(1, 65519).as_ratio());
}

#[test]
fn theta_parsing() {
    assert_eq!("1/20".parse::<Theta>().unwrap(), Theta { num: 1, den: 20 });
    assert!("3/2".parse::<Theta>().is_err());
    assert!("1/0".parse::<Theta>().is_err());
    assert!("1/100000".parse::<Theta>().is_err());
    assert!("0.1".parse::<Theta>().is_err());
    assert_eq!("eopp".parse::<Metric>().unwrap(), Metric::EqualOpportunity);
}

#[test]
fn grid_is_midpoints_with_sentinels() {
    assert_eq!(threshold_grid(&[5, 1, 3, 3]), vec![-THRESHOLD_INF, 2, 4, THRESHOLD_INF]);
    assert_eq!(threshold_grid(&[-4, -3]), vec![-THRESHOLD_INF, -3, THRESHOLD_INF]);
    assert_eq!(threshold_grid(&[7]), vec![-THRESHOLD_INF, THRESHOLD_INF]);
}

fn scored_instance(rng: &mut ChaCha8Rng, n: usize) -> (LabeledDataset, Vec<i64>) {
    let (ds, _) = random_instance(rng, n);
    let scores = ds
        .records
        .iter()
        .map(|r| rng.gen_range(-20..20) + if r.label { 8 } else { 0 } + if r.group == Group::A { 5 } else { 0 })
        .collect();
    (ds, scores)
}

#[test]
fn fair_uniform_threshold_is_kept() {
    // Identical score distributions in both groups: a uniform threshold is fair and optimal.
    let mut records = Vec::new();
    let mut scores = Vec::new();
    for g in Group::ALL {
        for (s, l) in [(1, false), (2, false), (3, true), (4, true)] {
            records.push(rec(g, l));
            scores.push(s);
        }
    }
    let ds = LabeledDataset::new(vec!["x".into()], records);
    let r = postprocess_scores(&scores, &ds, Theta::new(0, 1).unwrap(), Metric::DemographicParity).unwrap();
    assert_eq!(r.thresholds.a, r.thresholds.b);
    assert_eq!(r.accuracy, Ratio::from_integer(1));
}

#[test]
fn theta_one_is_unconstrained_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let (ds, scores) = scored_instance(&mut rng, 80);
        let r = postprocess_scores(&scores, &ds, Theta::new(1, 1).unwrap(), Metric::DemographicParity).unwrap();
        // Per-group accuracy is maximized independently.
        for g in Group::ALL {
            let rows: Vec<_> = ds.records.iter().zip(&scores).filter(|(x, _)| x.group == g).collect();
            let acc = |t: i64| rows.iter().filter(|(x, &s)| (s >= t) == x.label).count();
            let grid = threshold_grid(&rows.iter().map(|r| *r.1).collect::<Vec<_>>());
            let best = grid.iter().map(|&t| acc(t)).max().unwrap();
            assert_eq!(acc(r.thresholds.get(g)), best);
        }
    }
}

#[test]
fn postprocess_respects_theta_for_every_metric() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..100 {
        let (ds, scores) = scored_instance(&mut rng, 60);
        let theta = Theta::new(rng.gen_range(0..=10), 40).unwrap();
        let metric = Metric::ALL[trial % 4];
        match postprocess_scores(&scores, &ds, theta, metric) {
            Ok(r) => {
                let pred: Vec<bool> = ds.records.iter().zip(&scores).map(|(x, &s)| s >= r.thresholds.get(x.group)).collect();
                let g = gap(metric, &pred, &ds).unwrap();
                assert!(g.within(theta));
                assert_eq!(g, r.gap);
            }
            Err(PostprocessError::Infeasible { .. }) => assert_ne!(metric, Metric::DemographicParity),
            Err(PostprocessError::Metric(MetricError::EmptySubset(..))) => {}
            Err(e) => panic!("{e}"),
        }
    }
}
