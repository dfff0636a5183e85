//! Group-fairness metrics in the clear and fairness-aware threshold
//! post-processing.
//!
//! All gaps are exact rationals so that clear-side verdicts agree bit for
//! bit with the cross-multiplied inequalities proven in circuits.

mod dataset;
mod metrics;
mod postprocess;

pub use dataset::{
    default_schema, read_csv, read_csv_scaled, synthetic, write_csv, DatasetError, Group, LabeledDataset, Normalization, Record, Schema,
    SyntheticConfig,
};
pub use metrics::{
    count, count_dataset, counts_within, dp_gap, eo_gaps, eo_gaps_conditional, eopp_gap, gap, gap_from_counts,
    inequality_holds, pe_gap, rate_terms, Counts, FairnessGap, GroupCounts, Metric, MetricError, Theta, THETA_MAX_DEN,
};
pub use postprocess::{postprocess_scores, postprocess_thresholds, threshold_grid, PostprocessError, PostprocessReport};

#[cfg(test)]
mod tests;
