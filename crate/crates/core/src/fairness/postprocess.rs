use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::{counts_within, gap_from_counts, Counts, FairnessGap, GroupCounts, Metric, MetricError, Theta};
use super::{Group, LabeledDataset};
use crate::models::{ModelError, QuantizedModel, ThresholdedModel, Thresholds, THRESHOLD_INF};

#[derive(Debug, Error, PartialEq)]
pub enum PostprocessError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no threshold pair satisfies {metric} <= {theta}")]
    Infeasible { metric: Metric, theta: Theta },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostprocessReport {
    pub thresholds: Thresholds,
    pub accuracy: Ratio<u64>,
    pub gap: FairnessGap,
    pub candidates_a: usize,
    pub candidates_b: usize,
}

/// Candidate thresholds for one group's scores: `-inf`, the rounded-up
/// midpoint between each pair of consecutive distinct scores, and `+inf`.
/// Any threshold yields the same predictions as one of these.
pub fn threshold_grid(scores: &[i64]) -> Vec<i64> {
    let mut s = scores.to_vec();
    s.sort_unstable();
    s.dedup();
    let mut grid = Vec::with_capacity(s.len() + 1);
    grid.push(-THRESHOLD_INF);
    grid.extend(s.windows(2).map(|w| (w[0] + w[1] + 1).div_euclid(2)));
    grid.push(THRESHOLD_INF);
    grid
}

/// Confusion counts of one group at every grid threshold.
fn sweep(grid: &[i64], mut rows: Vec<(i64, bool)>) -> Vec<GroupCounts> {
    rows.sort_unstable_by_key(|r| r.0);
    let pos = rows.iter().filter(|r| r.1).count() as u64;
    let n = rows.len() as u64;
    // Rows below the threshold are predicted negative.
    let mut below = 0usize;
    let (mut fn_, mut tn) = (0u64, 0u64);
    grid.iter()
        .map(|&t| {
            while below < rows.len() && rows[below].0 < t {
                if rows[below].1 {
                    fn_ += 1;
                } else {
                    tn += 1;
                }
                below += 1;
            }
            GroupCounts {
                n,
                tp: pos - fn_,
                fp: (n - pos) - tn,
                fn_,
                tn,
            }
        })
        .collect()
}

/// Chooses per-group thresholds maximizing accuracy on `ds` subject to the
/// metric's gap being at most `theta`. Ties go to the lowest `t_a`, then
/// the lowest `t_b`.
pub fn postprocess_scores(
    scores: &[i64],
    ds: &LabeledDataset,
    theta: Theta,
    metric: Metric,
) -> Result<PostprocessReport, PostprocessError> {
    if scores.len() != ds.len() {
        return Err(MetricError::Length(scores.len(), ds.len()).into());
    }
    let mut rows: [Vec<(i64, bool)>; 2] = Default::default();
    for (r, &s) in ds.records.iter().zip(scores) {
        rows[r.group.index()].push((s, r.label));
    }
    for g in Group::ALL {
        if rows[g.index()].is_empty() {
            return Err(MetricError::EmptyGroup(g).into());
        }
    }
    let grids: Vec<Vec<i64>> = rows.iter().map(|r| threshold_grid(&r.iter().map(|x| x.0).collect::<Vec<_>>())).collect();
    let counts_a = sweep(&grids[0], rows[0].clone());
    let counts_b = sweep(&grids[1], rows[1].clone());

    let mut best: Option<(u64, usize, usize)> = None;
    for (ia, ca) in counts_a.iter().enumerate() {
        for (ib, cb) in counts_b.iter().enumerate() {
            let correct = ca.correct() + cb.correct();
            if best.is_some_and(|b| correct <= b.0) {
                continue;
            }
            if counts_within(metric, &[*ca, *cb], theta)? {
                best = Some((correct, ia, ib));
            }
        }
    }
    let (correct, ia, ib) = best.ok_or(PostprocessError::Infeasible { metric, theta })?;
    let counts: Counts = [counts_a[ia], counts_b[ib]];
    Ok(PostprocessReport {
        thresholds: Thresholds {
            a: grids[0][ia],
            b: grids[1][ib],
        },
        accuracy: Ratio::new(correct, ds.len() as u64),
        gap: gap_from_counts(metric, &counts)?,
        candidates_a: grids[0].len(),
        candidates_b: grids[1].len(),
    })
}

/// Fair post-processing of a quantized model on a validation set.
pub fn postprocess_thresholds(
    model: &QuantizedModel,
    d_val: &LabeledDataset,
    theta: Theta,
    metric: Metric,
) -> Result<(ThresholdedModel, PostprocessReport), PostprocessError> {
    let scores = d_val
        .records
        .iter()
        .map(|r| model.score_features(&r.features))
        .collect::<Result<Vec<_>, _>>()?;
    let report = postprocess_scores(&scores, d_val, theta, metric)?;
    Ok((ThresholdedModel::new(model.clone(), report.thresholds), report))
}
