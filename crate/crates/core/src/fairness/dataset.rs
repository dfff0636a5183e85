use std::collections::HashMap;
use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::authvalue::Fp;

/// Sensitive-attribute group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::A, Group::B];

    /// Field code used inside circuits and commitments.
    pub fn code(self) -> u64 {
        match self {
            Group::A => 0,
            Group::B => 1,
        }
    }

    pub fn from_code(c: u64) -> Option<Group> {
        match c {
            0 => Some(Group::A),
            1 => Some(Group::B),
            _ => None,
        }
    }

    pub fn codes() -> [Fp; 2] {
        [Fp::new(0), Fp::new(1)]
    }

    pub fn other(self) -> Group {
        match self {
            Group::A => Group::B,
            Group::B => Group::A,
        }
    }

    pub fn index(self) -> usize {
        self.code() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    /// Normalized to [0, 1].
    pub features: Vec<f64>,
    pub label: bool,
    pub group: Group,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub feature_names: Vec<String>,
    pub records: Vec<Record>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset is empty")]
    Empty,
    #[error("group {0:?} has no records")]
    EmptyGroup(Group),
    #[error("record {row}: expected {expected} features, found {found}")]
    Dimension { row: usize, expected: usize, found: usize },
    #[error("column {0:?} not found in header")]
    MissingColumn(String),
    #[error("row {row}: unknown group value {value:?}")]
    UnknownGroup { row: usize, value: String },
    #[error("row {row}: label {value:?} is not binary")]
    BadLabel { row: usize, value: String },
    #[error("row {row}, column {column:?}: {value:?} is not numeric")]
    NotNumeric { row: usize, column: String, value: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl LabeledDataset {
    pub fn new(feature_names: Vec<String>, records: Vec<Record>) -> Self {
        LabeledDataset { feature_names, records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.records.first().map_or(self.feature_names.len(), |r| r.features.len())
    }

    pub fn group_sizes(&self) -> [usize; 2] {
        let mut n = [0; 2];
        for r in &self.records {
            n[r.group.index()] += 1;
        }
        n
    }

    /// Errors unless both groups are present and all rows agree on width.
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.records.is_empty() {
            return Err(DatasetError::Empty);
        }
        let d = self.n_features();
        for (row, r) in self.records.iter().enumerate() {
            if r.features.len() != d {
                return Err(DatasetError::Dimension {
                    row,
                    expected: d,
                    found: r.features.len(),
                });
            }
        }
        let n = self.group_sizes();
        for g in Group::ALL {
            if n[g.index()] == 0 {
                return Err(DatasetError::EmptyGroup(g));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn groups(&self) -> Vec<Group> {
        self.records.iter().map(|r| r.group).collect()
    }

    /// Deterministic shuffled split; the first part has `round(frac * len)` records.
    pub fn split(&self, frac: f64, seed: u64) -> (LabeledDataset, LabeledDataset) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
        let cut = ((self.len() as f64) * frac).round() as usize;
        let take = |ix: &[usize]| LabeledDataset {
            feature_names: self.feature_names.clone(),
            records: ix.iter().map(|&i| self.records[i].clone()).collect(),
        };
        (take(&idx[..cut]), take(&idx[cut..]))
    }

    /// `n` records drawn without replacement, reshuffling whenever the set
    /// runs out. Over whole passes every record appears equally often.
    pub fn resample_cycled(&self, n: usize, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut idx = Vec::with_capacity(n);
        let mut pass: Vec<usize> = (0..self.len()).collect();
        while idx.len() < n && !pass.is_empty() {
            rand::seq::SliceRandom::shuffle(pass.as_mut_slice(), &mut rng);
            idx.extend(pass.iter().take(n - idx.len()));
        }
        self.subset(&idx)
    }

    /// Records with the given indices, in order.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            feature_names: self.feature_names.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    /// Same records with the group codes swapped.
    pub fn relabel_groups(&self) -> LabeledDataset {
        let mut out = self.clone();
        for r in &mut out.records {
            r.group = r.group.other();
        }
        out
    }
}

/// Names the columns of a CSV file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub label_column: String,
    /// Label value that counts as positive; anything else must be `negative_label`.
    pub positive_label: String,
    pub negative_label: String,
    pub sensitive_column: String,
    pub group_a: String,
    pub group_b: String,
    pub feature_columns: Vec<String>,
}

/// Per-feature min-max constants, persisted so that client queries are
/// scaled the same way as training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalization {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for r in rows {
            for (k, &v) in r.iter().enumerate() {
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
        Normalization { min, max }
    }

    /// Scales into [0, 1], clamping values outside the fitted range.
    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(k, &v)| {
                let span = self.max[k] - self.min[k];
                if span > 0.0 {
                    ((v - self.min[k]) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Reads a headed CSV and normalizes its features.
pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<(LabeledDataset, Normalization), DatasetError> {
    let (raw, meta) = read_rows(reader, schema)?;
    let norm = Normalization::fit(&raw);
    let raw: Vec<Vec<f64>> = raw.iter().map(|f| norm.apply(f)).collect();
    Ok((build(schema, raw, meta)?, norm))
}

/// Reads a headed CSV whose features are already scaled, such as one
/// written by [`write_csv`].
pub fn read_csv_scaled<R: Read>(reader: R, schema: &Schema) -> Result<LabeledDataset, DatasetError> {
    let (raw, meta) = read_rows(reader, schema)?;
    build(schema, raw, meta)
}

type Rows = (Vec<Vec<f64>>, Vec<(bool, Group)>);

fn read_rows<R: Read>(reader: R, schema: &Schema) -> Result<Rows, DatasetError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: HashMap<String, usize> = rdr
        .headers()?
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().to_string(), i))
        .collect();
    let col = |name: &String| header.get(name).copied().ok_or_else(|| DatasetError::MissingColumn(name.clone()));
    let label_ix = col(&schema.label_column)?;
    let group_ix = col(&schema.sensitive_column)?;
    let feature_ix: Vec<usize> = schema.feature_columns.iter().map(col).collect::<Result<_, _>>()?;

    let mut raw = Vec::new();
    let mut meta = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let label = match field(label_ix) {
            v if v == schema.positive_label => true,
            v if v == schema.negative_label => false,
            v => {
                return Err(DatasetError::BadLabel {
                    row,
                    value: v.to_string(),
                })
            }
        };
        let group = match field(group_ix) {
            v if v == schema.group_a => Group::A,
            v if v == schema.group_b => Group::B,
            v => {
                return Err(DatasetError::UnknownGroup {
                    row,
                    value: v.to_string(),
                })
            }
        };
        let feats = feature_ix
            .iter()
            .zip(&schema.feature_columns)
            .map(|(&i, name)| {
                field(i).parse::<f64>().map_err(|_| DatasetError::NotNumeric {
                    row,
                    column: name.clone(),
                    value: field(i).to_string(),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        raw.push(feats);
        meta.push((label, group));
    }
    Ok((raw, meta))
}

fn build(schema: &Schema, raw: Vec<Vec<f64>>, meta: Vec<(bool, Group)>) -> Result<LabeledDataset, DatasetError> {
    let records = raw
        .into_iter()
        .zip(meta)
        .map(|(features, (label, group))| Record { features, label, group })
        .collect();
    let ds = LabeledDataset::new(schema.feature_columns.clone(), records);
    ds.validate()?;
    Ok(ds)
}

/// Writes a dataset as CSV with columns `f0..`, `group`, `label`.
pub fn write_csv<W: std::io::Write>(ds: &LabeledDataset, writer: W) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ds.feature_names.clone();
    header.push("group".into());
    header.push("label".into());
    w.write_record(&header)?;
    for r in &ds.records {
        let mut row: Vec<String> = r.features.iter().map(|v| format!("{v}")).collect();
        row.push(if r.group == Group::A { "a" } else { "b" }.into());
        row.push(if r.label { "1" } else { "0" }.into());
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// The schema matching [`write_csv`] output.
pub fn default_schema(feature_names: &[String]) -> Schema {
    Schema {
        label_column: "label".into(),
        positive_label: "1".into(),
        negative_label: "0".into(),
        sensitive_column: "group".into(),
        group_a: "a".into(),
        group_b: "b".into(),
        feature_columns: feature_names.to_vec(),
    }
}

/// Parameters of the seeded two-group generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    pub n_features: usize,
    /// Probability a record belongs to group a.
    pub group_a_fraction: f64,
    /// P(label = 1 | group a).
    pub base_rate_a: f64,
    pub base_rate_b: f64,
    /// Distance between the class means along the informative direction.
    pub separation: f64,
    /// Offset added to group b's features, making group membership partly
    /// predictable from them.
    pub group_shift: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n: 2000,
            n_features: 13,
            group_a_fraction: 0.5,
            base_rate_a: 0.6,
            base_rate_b: 0.35,
            separation: 0.25,
            group_shift: 0.05,
            noise: 0.15,
            seed: 0,
        }
    }
}

pub fn synthetic(cfg: &SyntheticConfig) -> LabeledDataset {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.noise.max(1e-9)).expect("finite noise");
    // Fixed informative direction per feature, alternating sign with decaying weight.
    let dir: Vec<f64> = (0..cfg.n_features)
        .map(|k| if k % 2 == 0 { 1.0 } else { -0.6 } / (1.0 + k as f64 / 4.0))
        .collect();
    let records = (0..cfg.n)
        .map(|_| {
            let group = if rng.gen_bool(cfg.group_a_fraction.clamp(0.0, 1.0)) {
                Group::A
            } else {
                Group::B
            };
            let rate = match group {
                Group::A => cfg.base_rate_a,
                Group::B => cfg.base_rate_b,
            };
            let label = rng.gen_bool(rate.clamp(0.0, 1.0));
            let sign = if label { 0.5 } else { -0.5 };
            let shift = if group == Group::B { cfg.group_shift } else { 0.0 };
            let features = dir
                .iter()
                .map(|&d| (0.5 + sign * cfg.separation * d + shift + normal.sample(&mut rng)).clamp(0.0, 1.0))
                .collect();
            Record { features, label, group }
        })
        .collect();
    let names = (0..cfg.n_features).map(|k| format!("f{k}")).collect();
    LabeledDataset::new(names, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_seeded_and_biased() {
        let cfg = SyntheticConfig {
            n: 4000,
            seed: 3,
            ..Default::default()
        };
        let a = synthetic(&cfg);
        assert_eq!(a, synthetic(&cfg));
        assert_ne!(a, synthetic(&SyntheticConfig { seed: 4, ..cfg.clone() }));
        a.validate().unwrap();
        let rate = |g: Group| {
            let rs: Vec<_> = a.records.iter().filter(|r| r.group == g).collect();
            rs.iter().filter(|r| r.label).count() as f64 / rs.len() as f64
        };
        assert!((rate(Group::A) - 0.6).abs() < 0.05);
        assert!((rate(Group::B) - 0.35).abs() < 0.05);
        assert!(a.records.iter().all(|r| r.features.iter().all(|&v| (0.0..=1.0).contains(&v))));
    }

    #[test]
    fn scaled_csv_roundtrip_is_exact() {
        let ds = synthetic(&SyntheticConfig {
            n: 50,
            n_features: 3,
            seed: 1,
            ..Default::default()
        });
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = read_csv_scaled(&buf[..], &default_schema(&ds.feature_names)).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn csv_roundtrip_normalizes() {
        let text = "age,income,sex,y\n20,100,m,yes\n40,300,f,no\n30,200,f,yes\n";
        let schema = Schema {
            label_column: "y".into(),
            positive_label: "yes".into(),
            negative_label: "no".into(),
            sensitive_column: "sex".into(),
            group_a: "f".into(),
            group_b: "m".into(),
            feature_columns: vec!["age".into(), "income".into()],
        };
        let (ds, norm) = read_csv(text.as_bytes(), &schema).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.records[0].features, vec![0.0, 0.0]);
        assert_eq!(ds.records[1].features, vec![1.0, 1.0]);
        assert_eq!(ds.records[2].features, vec![0.5, 0.5]);
        assert_eq!(ds.records[0].group, Group::B);
        assert!(!ds.records[1].label);
        assert_eq!(norm.min, vec![20.0, 100.0]);

        let mut out = Vec::new();
        write_csv(&ds, &mut out).unwrap();
        let (back, _) = read_csv(out.as_slice(), &default_schema(&ds.feature_names)).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn csv_errors() {
        let schema = default_schema(&["x".to_string()]);
        let bad_group = "x,group,label\n1,c,1\n";
        assert!(matches!(read_csv(bad_group.as_bytes(), &schema), Err(DatasetError::UnknownGroup { .. })));
        let bad_label = "x,group,label\n1,a,2\n";
        assert!(matches!(read_csv(bad_label.as_bytes(), &schema), Err(DatasetError::BadLabel { .. })));
        let one_group = "x,group,label\n1,a,1\n2,a,0\n";
        assert!(matches!(read_csv(one_group.as_bytes(), &schema), Err(DatasetError::EmptyGroup(Group::B))));
        let missing = "y,group,label\n1,a,1\n";
        assert!(matches!(read_csv(missing.as_bytes(), &schema), Err(DatasetError::MissingColumn(_))));
    }

    #[test]
    fn resample_cycled_balances_passes() {
        let ds = synthetic(&SyntheticConfig {
            n: 30,
            seed: 4,
            ..Default::default()
        });
        let out = ds.resample_cycled(75, 9);
        assert_eq!(out.len(), 75);
        for r in &ds.records {
            let k = out.records.iter().filter(|o| *o == r).count();
            assert!((2..=3).contains(&k));
        }
        assert_eq!(out, ds.resample_cycled(75, 9));
    }

    #[test]
    fn split_partitions() {
        let ds = synthetic(&SyntheticConfig {
            n: 101,
            ..Default::default()
        });
        let (a, b) = ds.split(0.3, 9);
        assert_eq!(a.len(), 30);
        assert_eq!(a.len() + b.len(), 101);
        assert_eq!(ds.relabel_groups().relabel_groups(), ds);
    }
}
