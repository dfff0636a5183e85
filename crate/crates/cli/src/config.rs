//! Run configuration: a flat `key = value` text file.
//!
//! ```text
//! # comment
//! data.source = synthetic        # or a CSV path
//! data.n = 2000
//! seed.data = 1
//! ```
//!
//! Every key is optional except the six `seed.*` keys. Unknown and repeated
//! keys are errors. The full key list, with defaults, is in `KEYS`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use oath::adversary::AttackSpec;
use oath::fairness::{Metric, Schema, SyntheticConfig, Theta};
use oath::models::{FixedPointConfig, ModelKind, TrainConfig};
use oath::pipeline::ClientSource;

/// Every recognised key with its default (`None` means mandatory).
pub const KEYS: &[(&str, Option<&str>)] = &[
    ("data.source", Some("synthetic")),
    ("data.n", Some("2000")),
    ("data.features", Some("13")),
    ("data.group_a_fraction", Some("0.5")),
    ("data.base_rate_a", Some("0.6")),
    ("data.base_rate_b", Some("0.35")),
    ("data.separation", Some("0.25")),
    ("data.group_shift", Some("0.05")),
    ("data.noise", Some("0.15")),
    ("data.label", Some("label")),
    ("data.positive", Some("1")),
    ("data.negative", Some("0")),
    ("data.group", Some("group")),
    ("data.group_a", Some("a")),
    ("data.group_b", Some("b")),
    ("data.columns", Some("")),
    ("data.train_fraction", Some("0.5")),
    ("model.kind", Some("logreg")),
    ("model.hidden", Some("8")),
    ("train.epochs", Some("200")),
    ("train.learning_rate", Some("0.5")),
    ("train.batch_size", Some("64")),
    ("train.l2", Some("0.0001")),
    ("fp.frac_bits", Some("16")),
    ("fp.int_bits", Some("8")),
    ("metric", Some("dp")),
    ("theta", Some("1/10")),
    ("calibration.margin", Some("1/40")),
    ("nu", Some("100")),
    ("clients.n", Some("2000")),
    ("clients.count", Some("20")),
    ("clients.source", Some("resample")),
    ("attack", Some("none")),
    ("audit.mode", Some("circuit")),
    ("seed.data", None),
    ("seed.train", None),
    ("seed.clients", None),
    ("seed.dealer", None),
    ("seed.audit", None),
    ("seed.attack", None),
    ("out", Some("out")),
];

const SEED_KEYS: [&str; 6] = ["seed.data", "seed.train", "seed.clients", "seed.dealer", "seed.audit", "seed.attack"];

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticConfig),
    Csv { path: PathBuf, schema: Schema },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct Seeds {
    pub data: u64,
    pub train: u64,
    pub clients: u64,
    pub dealer: u64,
    pub audit: u64,
    pub attack: u64,
}

impl Seeds {
    /// All six seeds from one, for quick reruns under a different draw.
    pub fn from_override(s: u64) -> Self {
        Seeds {
            data: s,
            train: s.wrapping_add(1),
            clients: s.wrapping_add(2),
            dealer: s.wrapping_add(3),
            audit: s.wrapping_add(4),
            attack: s.wrapping_add(5),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub train_fraction: f64,
    pub train: TrainConfig,
    pub fpc: FixedPointConfig,
    pub metric: Metric,
    pub theta: Theta,
    pub calibration_margin: Theta,
    pub nu: u64,
    pub n_queries: usize,
    pub n_clients: u64,
    pub client_source: ClientSource,
    pub attack: AttackSpec,
    pub audit_mode: oath::audit::AuditMode,
    pub seeds: Seeds,
    pub out: PathBuf,
}

/// Command-line values that replace config entries.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub metric: Option<Metric>,
    pub theta: Option<Theta>,
    pub nu: Option<u64>,
    pub attack: Option<String>,
}

/// Parses `key = value` lines into a map, rejecting unknown or repeated keys.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split_once('#').map_or(line, |(l, _)| l).trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`", i + 1))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.iter().any(|(name, _)| *name == k) {
            bail!("line {}: unknown key {k:?}", i + 1);
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            bail!("line {}: key {k:?} given twice", i + 1);
        }
    }
    Ok(map)
}

struct Values(BTreeMap<String, String>);

impl Values {
    fn raw(&self, key: &str) -> Result<&str> {
        if let Some(v) = self.0.get(key) {
            return Ok(v);
        }
        match KEYS.iter().find(|(k, _)| *k == key) {
            Some((_, Some(d))) => Ok(d),
            Some((_, None)) => bail!("missing mandatory key {key:?}"),
            None => unreachable!("key {key} not in KEYS"),
        }
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(key)?;
        v.parse().map_err(|e| anyhow!("{key} = {v:?}: {e}"))
    }

    fn list(&self, key: &str) -> Vec<String> {
        self.raw(key)
            .unwrap_or("")
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect()
    }
}

impl RunConfig {
    pub fn from_text(text: &str, base: &Path, ov: &Overrides) -> Result<Self> {
        let v = Values(parse_pairs(text)?);
        let seeds = match ov.seed {
            Some(s) => Seeds::from_override(s),
            None => {
                let s: Vec<u64> = SEED_KEYS.iter().map(|k| v.get(k)).collect::<Result<_>>()?;
                Seeds {
                    data: s[0],
                    train: s[1],
                    clients: s[2],
                    dealer: s[3],
                    audit: s[4],
                    attack: s[5],
                }
            }
        };
        let source = v.raw("data.source")?;
        let data = if source == "synthetic" {
            DataSource::Synthetic(SyntheticConfig {
                n: v.get("data.n")?,
                n_features: v.get("data.features")?,
                group_a_fraction: v.get("data.group_a_fraction")?,
                base_rate_a: v.get("data.base_rate_a")?,
                base_rate_b: v.get("data.base_rate_b")?,
                separation: v.get("data.separation")?,
                group_shift: v.get("data.group_shift")?,
                noise: v.get("data.noise")?,
                seed: seeds.data,
            })
        } else {
            let columns = v.list("data.columns");
            if columns.is_empty() {
                bail!("data.columns must list the feature columns of {source}");
            }
            DataSource::Csv {
                path: base.join(source),
                schema: Schema {
                    label_column: v.get("data.label")?,
                    positive_label: v.get("data.positive")?,
                    negative_label: v.get("data.negative")?,
                    sensitive_column: v.get("data.group")?,
                    group_a: v.get("data.group_a")?,
                    group_b: v.get("data.group_b")?,
                    feature_columns: columns,
                },
            }
        };
        let kind = match v.raw("model.kind")? {
            "logreg" => ModelKind::LogReg,
            "ffnn" => ModelKind::Ffnn,
            k => bail!("model.kind = {k:?}: expected logreg or ffnn"),
        };
        let hidden = v
            .list("model.hidden")
            .iter()
            .map(|h| h.parse::<usize>().with_context(|| format!("model.hidden entry {h:?}")))
            .collect::<Result<_>>()?;
        let client_source = match v.raw("clients.source")? {
            "resample" => ClientSource::Resample,
            "fresh" => ClientSource::Fresh,
            s => bail!("clients.source = {s:?}: expected resample or fresh"),
        };
        if client_source == ClientSource::Fresh && matches!(data, DataSource::Csv { .. }) {
            bail!("clients.source = fresh needs a synthetic data source");
        }
        let audit_mode = match v.raw("audit.mode")? {
            "circuit" => oath::audit::AuditMode::Circuit,
            "clear" => oath::audit::AuditMode::ClearMirror,
            m => bail!("audit.mode = {m:?}: expected circuit or clear"),
        };
        let attack_text = ov.attack.clone().unwrap_or(v.raw("attack")?.to_string());
        let mut attack: AttackSpec = attack_text.parse().map_err(|e| anyhow!("attack = {attack_text:?}: {e}"))?;
        if !attack_text.contains('@') {
            attack = attack.with_seed(seeds.attack);
        }
        attack.validate()?;
        let train_fraction: f64 = v.get("data.train_fraction")?;
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            bail!("data.train_fraction must lie strictly between 0 and 1");
        }
        let fpc = FixedPointConfig {
            frac_bits: v.get("fp.frac_bits")?,
            int_bits: v.get("fp.int_bits")?,
        };
        fpc.validate()?;
        Ok(RunConfig {
            data,
            train_fraction,
            train: TrainConfig {
                kind,
                hidden,
                learning_rate: v.get("train.learning_rate")?,
                epochs: v.get("train.epochs")?,
                batch_size: v.get("train.batch_size")?,
                l2: v.get("train.l2")?,
                seed: seeds.train,
            },
            fpc,
            metric: ov.metric.map_or_else(|| v.get("metric"), Ok)?,
            theta: ov.theta.map_or_else(|| v.get("theta"), Ok)?,
            calibration_margin: v.get("calibration.margin")?,
            nu: ov.nu.map_or_else(|| v.get("nu"), Ok)?,
            n_queries: v.get("clients.n")?,
            n_clients: v.get("clients.count")?,
            client_source,
            attack,
            audit_mode,
            seeds,
            out: ov.out.clone().unwrap_or_else(|| base.join(v.raw("out").unwrap_or("out"))),
        })
    }

    pub fn load(path: &Path, ov: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_text(&text, base, ov)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SEEDS: &str = "seed.data=1\nseed.train=2\nseed.clients=3\nseed.dealer=4\nseed.audit=5\nseed.attack=6\n";

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_text(SEEDS, Path::new("/x"), &Overrides::default()).unwrap();
        assert_eq!(c.nu, 100);
        assert_eq!(c.theta, Theta::new(1, 10).unwrap());
        assert_eq!(c.seeds.audit, 5);
        assert_eq!(c.attack.seed, 6);
        assert_eq!(c.out, PathBuf::from("/x/out"));
        match c.data {
            DataSource::Synthetic(s) => assert_eq!((s.n, s.seed), (2000, 1)),
            _ => panic!(),
        }
    }

    #[test]
    fn seeds_are_mandatory() {
        let err = RunConfig::from_text("nu = 5", Path::new("."), &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("seed.data"));
        let ov = Overrides {
            seed: Some(10),
            ..Default::default()
        };
        let c = RunConfig::from_text("nu = 5", Path::new("."), &ov).unwrap();
        assert_eq!(c.seeds, Seeds::from_override(10));
    }

    #[test]
    fn rejects_unknown_and_repeated_keys() {
        assert!(parse_pairs("nu = 1\nnuu = 2").is_err());
        assert!(parse_pairs("nu = 1\nnu = 2").is_err());
        assert!(parse_pairs("nu").is_err());
        let m = parse_pairs("  # only a comment\nnu = 7 # trailing\n").unwrap();
        assert_eq!(m["nu"], "7");
    }

    #[test]
    fn flags_override_file() {
        let ov = Overrides {
            metric: Some(Metric::EqualizedOdds),
            theta: Some(Theta::new(1, 4).unwrap()),
            nu: Some(9),
            attack: Some("record-tamper:p_a=0.5@3".into()),
            ..Default::default()
        };
        let c = RunConfig::from_text(&format!("{SEEDS}metric = dp\nnu = 100"), Path::new("."), &ov).unwrap();
        assert_eq!(c.metric, Metric::EqualizedOdds);
        assert_eq!(c.nu, 9);
        assert_eq!(c.attack.seed, 3);
    }

    #[test]
    fn csv_source_needs_columns() {
        let text = format!("{SEEDS}data.source = d.csv\n");
        assert!(RunConfig::from_text(&text, Path::new("."), &Overrides::default()).is_err());
        let text = format!("{SEEDS}data.source = d.csv\ndata.columns = x, y\n");
        let c = RunConfig::from_text(&text, Path::new("/d"), &Overrides::default()).unwrap();
        match c.data {
            DataSource::Csv { path, schema } => {
                assert_eq!(path, PathBuf::from("/d/d.csv"));
                assert_eq!(schema.feature_columns, vec!["x", "y"]);
            }
            _ => panic!(),
        }
    }
}
