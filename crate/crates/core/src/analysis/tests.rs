use proptest::prelude::*;

use super::*;
use crate::models::{FixedPointConfig, ScoreModel, Thresholds};

fn close(a: f64, b: f64, rel: f64) -> bool {
    ((a - b) / b).abs() < rel
}

#[test]
fn bound_values_and_edges() {
    assert!(close(evasion(0.01, 1000).unwrap(), 6.65e-3, 5e-3));
    assert!(close(evasion(0.01, 3800).unwrap(), 5.34e-9, 5e-3));
    assert!(close(evasion(0.00625, 3800).unwrap(), 6.834047635509879e-06, 1e-9));
    assert_eq!(catch_bound(2.0, 1).unwrap(), 1.0);
    assert_eq!(catch_bound(2.0, 500).unwrap(), 1.0);
    assert!(catch_bound(0.0, 5).is_err());
    assert!(catch_bound(2.5, 5).is_err());
    assert!(catch_bound(f64::NAN, 5).is_err());
    assert!(catch_bound(0.1, 0).is_err());
    // Tiny bounds keep full relative precision.
    let b = catch_bound(1e-12, 1).unwrap();
    assert!(close(b, 5e-13, 1e-12));
}

#[test]
fn table_matches_power_form() {
    let t = evasion_table(3800).unwrap();
    assert_eq!(t.rows.len(), 7);
    for r in &t.rows {
        let direct = (1.0 - r.epsilon / 2.0).powi(3800);
        assert!(close(r.evasion, direct, 1e-9), "{r:?}");
        assert!((r.bound + r.evasion - 1.0).abs() < 1e-15);
    }
    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("epsilon,nu,bound,evasion"));
    assert_eq!(text.lines().count(), 8);
}

#[test]
fn epsilon_star_closed_forms_and_bisection() {
    assert!((epsilon_star(0.5, 1).unwrap() - 1.0).abs() < 1e-15);
    assert!(epsilon_star(1.0 - 1e-15, 10).unwrap() > 1.9);
    assert!(epsilon_star(1.0, 10).is_err());
    // Independent root: bisection on the power form.
    let (p, nu) = (0.99, 3800u64);
    let f = |e: f64| 1.0 - (1.0 - e / 2.0).powf(nu as f64) - p;
    let (mut lo, mut hi) = (0.0f64, 2.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((epsilon_star(p, nu).unwrap() - lo).abs() < 1e-10);
    let pts = epsilon_region(0.1, 0.99, [100, 1000, 3800]).unwrap();
    assert!(pts.windows(2).all(|w| w[0].epsilon_star > w[1].epsilon_star));
    assert_eq!(pts[0].verified_queries, 200);
    let mut buf = Vec::new();
    write_region_csv(&pts, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
}

#[test]
fn wilson_covers_and_shrinks() {
    let (lo, hi) = wilson_interval(50, 100, Z95);
    assert!(lo < 0.5 && hi > 0.5 && (0.5 - lo - (hi - 0.5)).abs() < 1e-12);
    let (lo, hi) = wilson_interval(100, 100, Z95);
    assert!(lo > 0.96 && hi == 1.0);
    let (lo, hi) = wilson_interval(0, 1000, Z95);
    assert!(lo < 1e-12 && hi < 0.004);
    let w1 = wilson_interval(300, 1000, Z95);
    let w2 = wilson_interval(3000, 10000, Z95);
    assert!(w2.1 - w2.0 < w1.1 - w1.0);
}

#[test]
fn curves_csv_has_one_column_per_epsilon() {
    let mut buf = Vec::new();
    write_evasion_curves_csv(&[0.005, 0.01, 0.02], &[1000, 5000, 10000], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "verified_queries,nu,eps_0.005,eps_0.01,eps_0.02");
    assert_eq!(lines.count(), 3);
}

fn scenario(per_group: usize) -> McScenario {
    let fpc = FixedPointConfig::default();
    let model = ThresholdedModel::new(ScoreModel::logreg(vec![1.0, -1.0, 0.5], -0.2).quantize(fpc).unwrap(), Thresholds::uniform(0));
    let clients = balanced_clients(
        &SyntheticConfig {
            n_features: 3,
            seed: 4,
            ..Default::default()
        },
        per_group,
    );
    McScenario::build(&model, &clients.clone(), clients, Metric::DemographicParity, Theta::new(1, 1).unwrap(), 9).unwrap()
}

#[test]
fn monte_carlo_trivial_cases() {
    let sc = scenario(40);
    assert_eq!(sc.clients.group_sizes(), [40, 40]);
    let none = monte_carlo_catch(&sc, &AttackSpec::none(), 5, 100, 1).unwrap();
    assert_eq!(none.caught, 0);
    assert_eq!(none.epsilon_realized_min, 0.0);
    let all_a: AttackSpec = "record-tamper:p_a=1".parse().unwrap();
    let r = monte_carlo_catch(&sc, &all_a, 1, 100, 1).unwrap();
    assert_eq!(r.caught, 100);
    assert_eq!(r.failures, r.provider_blamed);
    assert!(monte_carlo_catch(&sc, &all_a, 1, 99, 1).is_err());
    let sw: AttackSpec = "model-switch:rate=1".parse().unwrap();
    let r = monte_carlo_catch(&sc, &sw, 3, 100, 1).unwrap();
    assert_eq!(r.caught, 100);
    assert_eq!(r.failures, r.provider_blamed);
}

#[test]
fn monte_carlo_respects_bound_and_is_deterministic() {
    let sc = scenario(60);
    let spec: AttackSpec = "record-tamper:p_a=0.05,p_b=0.05,dir_a=up,dir_b=down@3".parse().unwrap();
    let r = monte_carlo_catch(&sc, &spec, 20, 400, 7).unwrap();
    assert_eq!(r, monte_carlo_catch(&sc, &spec, 20, 400, 7).unwrap());
    let p = r.row.empirical_catch.unwrap();
    let sd = (r.row.bound * (1.0 - r.row.bound) / 400.0).sqrt();
    assert!(p >= r.row.bound - 3.0 * sd, "{r:?}");
    assert!(r.row.ci_low.unwrap() <= p && p <= r.row.ci_high.unwrap());
}

proptest! {
    #[test]
    fn bound_is_monotone(e1 in 1e-6f64..2.0, e2 in 1e-6f64..2.0, n1 in 1u64..5000, n2 in 1u64..5000) {
        let (elo, ehi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let (nlo, nhi) = if n1 <= n2 { (n1, n2) } else { (n2, n1) };
        prop_assert!(catch_bound(elo, nlo).unwrap() <= catch_bound(ehi, nlo).unwrap());
        prop_assert!(catch_bound(elo, nlo).unwrap() <= catch_bound(elo, nhi).unwrap());
        let b = catch_bound(elo, nlo).unwrap();
        prop_assert!((0.0..=1.0).contains(&b));
    }
}
