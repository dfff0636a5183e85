use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Group, LabeledDataset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    DemographicParity,
    /// Both error rates, each normalized by the full group size.
    EqualizedOdds,
    EqualOpportunity,
    PredictiveEquality,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::DemographicParity,
        Metric::EqualizedOdds,
        Metric::EqualOpportunity,
        Metric::PredictiveEquality,
    ];

    /// Whether the metric depends on true labels.
    pub fn needs_labels(self) -> bool {
        self != Metric::DemographicParity
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Metric::DemographicParity => "dp",
            Metric::EqualizedOdds => "eo",
            Metric::EqualOpportunity => "eopp",
            Metric::PredictiveEquality => "pe",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "dp" | "demographic-parity" => Ok(Metric::DemographicParity),
            "eo" | "equalized-odds" => Ok(Metric::EqualizedOdds),
            "eopp" | "equal-opportunity" => Ok(Metric::EqualOpportunity),
            "pe" | "predictive-equality" => Ok(Metric::PredictiveEquality),
            _ => Err(format!("unknown metric {s:?} (expected dp, eo, eopp or pe)")),
        }
    }
}

/// A public fairness threshold `num / den` with `den <= 2^16`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Theta {
    pub num: u64,
    pub den: u64,
}

pub const THETA_MAX_DEN: u64 = 1 << 16;

impl Theta {
    pub fn new(num: u64, den: u64) -> Result<Self, MetricError> {
        if den == 0 || den > THETA_MAX_DEN || num > den {
            return Err(MetricError::BadTheta(format!("{num}/{den}")));
        }
        Ok(Theta { num, den })
    }

    pub fn as_ratio(&self) -> Ratio<u64> {
        Ratio::new(self.num, self.den)
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `self - other`, floored at zero. When the exact difference needs a
    /// denominator above the cap it is rounded down, so the result never
    /// exceeds the true difference.
    pub fn saturating_sub(self, other: Theta) -> Theta {
        let d = self.as_ratio() - other.as_ratio().min(self.as_ratio());
        let (num, den) = (*d.numer(), *d.denom());
        if den <= THETA_MAX_DEN {
            Theta { num, den }
        } else {
            let num = (num as u128 * THETA_MAX_DEN as u128 / den as u128) as u64;
            Theta { num, den: THETA_MAX_DEN }
        }
    }
}

impl fmt::Display for Theta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Theta {
    type Err = MetricError;
    fn from_str(s: &str) -> Result<Self, MetricError> {
        let bad = || MetricError::BadTheta(s.to_string());
        let (n, d) = s.split_once('/').ok_or_else(bad)?;
        Theta::new(n.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("group {0:?} is empty")]
    EmptyGroup(Group),
    #[error("group {0:?} has no records with label {1}")]
    EmptySubset(Group, bool),
    #[error("{0} predictions for {1} records")]
    Length(usize, usize),
    #[error("invalid theta {0:?}: expected NUM/DEN with 0 < DEN <= 65536 and NUM <= DEN")]
    BadTheta(String),
}

/// Per-group confusion counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub n: u64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl GroupCounts {
    pub fn add(&mut self, label: bool, pred: bool) {
        self.n += 1;
        match (label, pred) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn predicted_positive(&self) -> u64 {
        self.tp + self.fp
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.fp + self.tn
    }

    pub fn correct(&self) -> u64 {
        self.tp + self.tn
    }
}

/// Counts for both groups, indexed by [`Group::index`].
pub type Counts = [GroupCounts; 2];

pub fn count<I>(rows: I) -> Counts
where
    I: IntoIterator<Item = (Group, bool, bool)>,
{
    let mut c = Counts::default();
    for (g, label, pred) in rows {
        c[g.index()].add(label, pred);
    }
    c
}

pub fn count_dataset(pred: &[bool], ds: &LabeledDataset) -> Result<Counts, MetricError> {
    if pred.len() != ds.len() {
        return Err(MetricError::Length(pred.len(), ds.len()));
    }
    Ok(count(ds.records.iter().zip(pred).map(|(r, &p)| (r.group, r.label, p))))
}

/// The per-group rate(s) a metric compares, as `(numerator, denominator)`.
/// These are exactly the quantities the circuits accumulate.
pub fn rate_terms(metric: Metric, c: &GroupCounts) -> Vec<(u64, u64)> {
    match metric {
        Metric::DemographicParity => vec![(c.predicted_positive(), c.n)],
        Metric::EqualizedOdds => vec![(c.fp, c.n), (c.fn_, c.n)],
        Metric::EqualOpportunity => vec![(c.tp, c.positives())],
        Metric::PredictiveEquality => vec![(c.fp, c.negatives())],
    }
}

/// `theta_num * d_a * d_b >= theta_den * |n_a d_b - n_b d_a|`, the
/// division-free form of `|n_a/d_a - n_b/d_b| <= theta`.
pub fn inequality_holds(theta: Theta, a: (u64, u64), b: (u64, u64)) -> bool {
    let lhs = theta.num as u128 * a.1 as u128 * b.1 as u128;
    let cross = (a.0 as u128 * b.1 as u128).abs_diff(b.0 as u128 * a.1 as u128);
    lhs >= theta.den as u128 * cross
}

/// A fairness gap held as exact rationals; one value per compared rate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FairnessGap {
    pub metric: Metric,
    pub values: Vec<Ratio<u64>>,
}

impl FairnessGap {
    pub fn max(&self) -> Ratio<u64> {
        self.values.iter().copied().max().unwrap_or_default()
    }

    pub fn within(&self, theta: Theta) -> bool {
        self.values.iter().all(|v| *v <= theta.as_ratio())
    }

    pub fn max_f64(&self) -> f64 {
        let m = self.max();
        *m.numer() as f64 / *m.denom() as f64
    }
}

fn abs_diff(a: Ratio<u64>, b: Ratio<u64>) -> Ratio<u64> {
    if a >= b {
        a - b
    } else {
        b - a
    }
}

fn check_terms(metric: Metric, c: &Counts) -> Result<(), MetricError> {
    for g in Group::ALL {
        let gc = &c[g.index()];
        if gc.n == 0 {
            return Err(MetricError::EmptyGroup(g));
        }
        match metric {
            Metric::EqualOpportunity if gc.positives() == 0 => return Err(MetricError::EmptySubset(g, true)),
            Metric::PredictiveEquality if gc.negatives() == 0 => return Err(MetricError::EmptySubset(g, false)),
            _ => {}
        }
    }
    Ok(())
}

pub fn gap_from_counts(metric: Metric, c: &Counts) -> Result<FairnessGap, MetricError> {
    check_terms(metric, c)?;
    let ta = rate_terms(metric, &c[0]);
    let tb = rate_terms(metric, &c[1]);
    let values = ta
        .iter()
        .zip(&tb)
        .map(|(&(na, da), &(nb, db))| abs_diff(Ratio::new(na, da), Ratio::new(nb, db)))
        .collect();
    Ok(FairnessGap { metric, values })
}

/// Whether the counts satisfy the metric at `theta`, by the same
/// cross-multiplied comparison the circuits prove.
pub fn counts_within(metric: Metric, c: &Counts, theta: Theta) -> Result<bool, MetricError> {
    check_terms(metric, c)?;
    let ta = rate_terms(metric, &c[0]);
    let tb = rate_terms(metric, &c[1]);
    Ok(ta.iter().zip(&tb).all(|(&a, &b)| inequality_holds(theta, a, b)))
}

pub fn gap(metric: Metric, pred: &[bool], ds: &LabeledDataset) -> Result<FairnessGap, MetricError> {
    gap_from_counts(metric, &count_dataset(pred, ds)?)
}

/// `|c_a/N_a - c_b/N_b|` over positive predictions.
pub fn dp_gap(pred: &[bool], ds: &LabeledDataset) -> Result<FairnessGap, MetricError> {
    gap(Metric::DemographicParity, pred, ds)
}

/// False-positive and false-negative gaps with counts normalized by the
/// full group size.
pub fn eo_gaps(pred: &[bool], ds: &LabeledDataset) -> Result<FairnessGap, MetricError> {
    gap(Metric::EqualizedOdds, pred, ds)
}

/// The conditional form of equalized odds: false-positive rate over
/// negatives and false-negative rate over positives.
pub fn eo_gaps_conditional(pred: &[bool], ds: &LabeledDataset) -> Result<FairnessGap, MetricError> {
    let c = count_dataset(pred, ds)?;
    let fpr = gap_from_counts(Metric::PredictiveEquality, &c)?;
    let tpr = gap_from_counts(Metric::EqualOpportunity, &c)?;
    // |FNR_a - FNR_b| = |TPR_a - TPR_b|.
    Ok(FairnessGap {
        metric: Metric::EqualizedOdds,
        values: vec![fpr.values[0], tpr.values[0]],
    })
}

/// True-positive-rate gap.
pub fn eopp_gap(pred: &[bool], ds: &LabeledDataset) -> Result<FairnessGap, MetricError> {
    gap(Metric::EqualOpportunity, pred, ds)
}

/// False-positive-rate gap.
pub fn pe_gap(pred: &[bool], ds: &LabeledDataset) -> Result<FairnessGap, MetricError> {
    gap(Metric::PredictiveEquality, pred, ds)
}
