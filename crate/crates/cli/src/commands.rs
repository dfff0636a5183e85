//! Subcommands. Each reads the artifacts of earlier phases from the output
//! directory and writes its own there.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use oath::analysis::{
    epsilon_region, write_evasion_curves_csv, write_region_csv, ProfileRow, SoundnessProfile, TABLE_EPSILONS,
};
use oath::audit::AuditTranscript;
use oath::certify::{certify, Certification, CertificationResult, CertifyOptions};
use oath::fairness::{default_schema, read_csv, read_csv_scaled, synthetic, write_csv, LabeledDataset, Theta};
use oath::models::{train, ModelBundle, ThresholdedModel};
use oath::pipeline::{
    answer_strategy, audit_phase, calibrate, client_queries, phase2_seed, queries_from, run_phase2, run_pipeline,
    split_seed, AuditParams, Phase2, PipelineConfig,
};
use oath::queryauth::{decode_log, encode_log, verify_log, ClientReceipt, CommitmentStore, PublicKey};

use crate::config::{DataSource, RunConfig};

/// How a subcommand ended. Both carry the JSON printed on stdout.
pub enum Status {
    Ok(Value),
    /// A verdict went against the provider (Rejected or Fail).
    Fail(Value),
    /// Human-readable output only.
    Text(String),
}

impl Status {
    fn and_then(self, f: impl FnOnce() -> Result<Status>) -> Result<Status> {
        match self {
            Status::Fail(v) => Ok(Status::Fail(v)),
            _ => f(),
        }
    }
}

pub const TRAIN_CSV: &str = "train.csv";
pub const VAL_CSV: &str = "val.csv";
pub const CLIENTS_CSV: &str = "clients.csv";
pub const CALIBRATION_CSV: &str = "calibration.csv";
pub const MODEL_BIN: &str = "model.bin";
pub const MODEL_JSON: &str = "model.json";
pub const POSTPROCESS_JSON: &str = "postprocess.json";
pub const CERTIFICATION: &str = "certification.jsonl";
pub const LOG_BIN: &str = "log.bin";
pub const STORE: &str = "store.jsonl";
pub const RECEIPTS: &str = "receipts.jsonl";
pub const KEYS_JSON: &str = "keys.json";
pub const AUDIT: &str = "audit.jsonl";
pub const BLAME_JSON: &str = "blame.json";
pub const ATTACK_JSON: &str = "attack.json";
pub const EVASION_TABLE: &str = "evasion_table.csv";
pub const EVASION_CURVES: &str = "evasion_curves.csv";
pub const EPSILON_REGION: &str = "epsilon_region.csv";
pub const REPORT_TXT: &str = "report.txt";
pub const REPORT_JSON: &str = "report.json";

/// Verified-query counts (`2 nu`) plotted in the evasion curves.
const CURVE_VERIFIED: [u64; 12] = [2, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 7600, 20000];
/// Deviations tabulated alongside the plotted ones.
const EXTRA_EPSILONS: [f64; 1] = [0.01];
/// `nu` values of the epsilon region plot.
const REGION_NUS: [u64; 11] = [10, 20, 50, 100, 200, 500, 1000, 2000, 3800, 5000, 10000];

#[derive(Serialize, Deserialize)]
struct Keys {
    provider: PublicKey,
    clients: Vec<PublicKey>,
}

fn path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out.join(name)
}

fn create(p: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?))
}

fn open(p: &Path, produced_by: &str) -> Result<BufReader<File>> {
    let f = File::open(p).with_context(|| format!("{} not found; run `oath {produced_by}` first", p.display()))?;
    Ok(BufReader::new(f))
}

fn write_json<T: Serialize>(p: &Path, v: &T) -> Result<()> {
    let mut w = create(p)?;
    serde_json::to_writer_pretty(&mut w, v)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_dataset(p: &Path, ds: &LabeledDataset) -> Result<()> {
    let mut w = create(p)?;
    write_csv(ds, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Reads a dataset written by `gen-data` or `train`.
fn read_dataset(p: &Path, produced_by: &str) -> Result<LabeledDataset> {
    let mut text = String::new();
    std::io::Read::read_to_string(&mut open(p, produced_by)?, &mut text)?;
    let header = text.lines().next().unwrap_or("");
    let names: Vec<String> = header
        .split(',')
        .filter(|h| *h != "group" && *h != "label")
        .map(String::from)
        .collect();
    read_csv_scaled(text.as_bytes(), &default_schema(&names)).with_context(|| format!("reading {}", p.display()))
}

fn read_model(cfg: &RunConfig) -> Result<(ModelBundle, ThresholdedModel)> {
    let p = path(cfg, MODEL_BIN);
    let bytes = fs::read(&p).with_context(|| format!("{} not found; run `oath train` first", p.display()))?;
    let bundle = ModelBundle::from_bytes(&bytes).with_context(|| format!("reading {}", p.display()))?;
    let model = bundle.thresholded()?;
    Ok((bundle, model))
}

/// Phase order is enforced through the certification log: later phases
/// refuse to run without its model digest, and the digest must match the
/// model on disk.
fn certified_model(cfg: &RunConfig) -> Result<(ThresholdedModel, CertificationResult)> {
    let p = path(cfg, CERTIFICATION);
    let text = fs::read_to_string(&p).map_err(|_| {
        anyhow!(
            "missing certification digest: {} not found; run `oath certify` before answering or auditing",
            p.display()
        )
    })?;
    let result = Certification::read_result(&text).map_err(|e| anyhow!("reading {}: {e}", p.display()))?;
    let (_, model) = read_model(cfg)?;
    if result.model_digest != model.digest() {
        bail!(
            "certification digest {:016x} does not match model.bin ({:016x}); re-run `oath certify`",
            result.model_digest.value(),
            model.digest().value()
        );
    }
    Ok((model, result))
}

fn population(cfg: &RunConfig) -> Result<LabeledDataset> {
    match &cfg.data {
        DataSource::Synthetic(s) => Ok(synthetic(s)),
        DataSource::Csv { path: p, schema } => {
            let f = File::open(p).with_context(|| format!("opening dataset {}", p.display()))?;
            let (ds, norm) = read_csv(f, schema).with_context(|| format!("reading {}", p.display()))?;
            write_json(&path(cfg, "normalization.json"), &norm)?;
            Ok(ds)
        }
    }
}

pub fn gen_data(cfg: &RunConfig) -> Result<Status> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let pop = population(cfg)?;
    let (train_set, val) = pop.split(cfg.train_fraction, split_seed(cfg.seeds.data));
    let synth = match &cfg.data {
        DataSource::Synthetic(s) => s.clone(),
        DataSource::Csv { .. } => Default::default(),
    };
    let clients = client_queries(cfg.client_source, &synth, &val, cfg.n_queries, cfg.seeds.clients);
    write_dataset(&path(cfg, TRAIN_CSV), &train_set)?;
    write_dataset(&path(cfg, VAL_CSV), &val)?;
    write_dataset(&path(cfg, CLIENTS_CSV), &clients)?;
    Ok(Status::Ok(json!({
        "phase": "gen-data",
        "train": train_set.len(),
        "val": val.len(),
        "clients": clients.len(),
    })))
}

pub fn train_cmd(cfg: &RunConfig) -> Result<Status> {
    let train_set = read_dataset(&path(cfg, TRAIN_CSV), "gen-data")?;
    let val = read_dataset(&path(cfg, VAL_CSV), "gen-data")?;
    let score = train(&train_set, &cfg.train)?;
    let q = score.quantize(cfg.fpc)?;
    let cal = calibrate(&q, &val, cfg.theta, cfg.calibration_margin, cfg.metric, &cfg.attack)?;
    let bundle = ModelBundle {
        model: score,
        fpc: cfg.fpc,
        thresholds: Some(cal.model.thresholds),
    };
    fs::write(path(cfg, MODEL_BIN), bundle.to_bytes())?;
    fs::write(path(cfg, MODEL_JSON), bundle.to_json() + "\n")?;
    write_json(&path(cfg, POSTPROCESS_JSON), &cal.report)?;
    write_dataset(&path(cfg, CALIBRATION_CSV), &cal.d_val)?;
    Ok(Status::Ok(json!({
        "phase": "train",
        "thresholds": cal.model.thresholds,
        "validation_gap": cal.report.gap.max_f64(),
        "validation_accuracy": *cal.report.accuracy.numer() as f64 / *cal.report.accuracy.denom() as f64,
    })))
}

pub fn certify_cmd(cfg: &RunConfig) -> Result<Status> {
    let (_, model) = read_model(cfg)?;
    let d_val = read_dataset(&path(cfg, CALIBRATION_CSV), "train")?;
    let c = certify(&model, &d_val, cfg.theta, cfg.metric, CertifyOptions::seeded(cfg.seeds.dealer));
    let mut w = create(&path(cfg, CERTIFICATION))?;
    c.write_jsonl(&mut w)?;
    w.flush()?;
    let summary = json!({
        "phase": "certify",
        "verdict": c.result.verdict,
        "model_digest": format!("{:016x}", c.result.model_digest.value()),
        "dataset_size": c.result.dataset_size,
    });
    Ok(if c.result.verdict.is_certified() {
        Status::Ok(summary)
    } else {
        Status::Fail(summary)
    })
}

pub fn answer(cfg: &RunConfig) -> Result<Status> {
    let (model, cert) = certified_model(cfg)?;
    if !cert.verdict.is_certified() {
        bail!("the model was not certified ({:?}); nothing to answer with", cert.verdict);
    }
    let clients = read_dataset(&path(cfg, CLIENTS_CSV), "gen-data")?;
    let queries = queries_from(&clients, cfg.fpc)?;
    let strategy = answer_strategy(&model, &cfg.attack)?;
    let p2 = run_phase2(&model, &queries, cfg.n_clients, phase2_seed(cfg.seeds.clients), strategy)?;

    fs::write(path(cfg, LOG_BIN), encode_log(&p2.log))?;
    let mut w = create(&path(cfg, STORE))?;
    p2.store.write_jsonl(&mut w)?;
    w.flush()?;
    let mut w = create(&path(cfg, RECEIPTS))?;
    for r in &p2.receipts {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    w.flush()?;
    write_json(
        &path(cfg, KEYS_JSON),
        &Keys {
            provider: p2.provider_key,
            clients: p2.client_keys,
        },
    )?;
    Ok(Status::Ok(json!({
        "phase": "answer",
        "queries": p2.log.len(),
        "positives": p2.log.iter().filter(|r| r.o).count(),
    })))
}

fn read_receipts(p: &Path) -> Result<Vec<ClientReceipt>> {
    let mut out = Vec::new();
    for (i, line) in open(p, "answer")?.lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).with_context(|| format!("{} line {}", p.display(), i + 1))?);
        }
    }
    Ok(out)
}

fn fail_reason(audit: &AuditTranscript) -> Value {
    json!({
        "phase": "audit",
        "verdict": audit.verdict,
        "N": audit.n,
        "sampled": audit.checks.len(),
    })
}

pub fn audit(cfg: &RunConfig) -> Result<Status> {
    let (model, cert) = certified_model(cfg)?;
    let store = CommitmentStore::read_jsonl(open(&path(cfg, STORE), "answer")?)?;
    let receipts = read_receipts(&path(cfg, RECEIPTS))?;
    let keys: Keys = serde_json::from_reader(open(&path(cfg, KEYS_JSON), "answer")?)?;
    let log_bytes = fs::read(path(cfg, LOG_BIN)).context("log.bin not found; run `oath answer` first")?;

    // The provider checks its own log before proving anything about it.
    let log = match decode_log(&log_bytes) {
        Ok(log) => log,
        Err(e) => {
            return Ok(Status::Fail(json!({
                "phase": "audit",
                "verdict": "Fail",
                "reason": "log-integrity",
                "detail": e.to_string(),
            })))
        }
    };
    let defects = verify_log(&log, &keys.clients, &keys.provider);
    if !defects.is_empty() {
        let blamed: Vec<u64> = defects.iter().map(|d| d.0).collect();
        let list: Vec<Value> = defects.iter().map(|(i, d)| json!({ "index": i, "defect": d })).collect();
        write_json(&path(cfg, BLAME_JSON), &json!({ "log_defects": list }))?;
        return Ok(Status::Fail(json!({
            "phase": "audit",
            "verdict": "Fail",
            "reason": "log-integrity",
            "blamed": blamed,
        })));
    }

    let clients = read_dataset(&path(cfg, CLIENTS_CSV), "gen-data")?;
    let labels = clients.labels();
    if receipts.len() != store.len() {
        bail!("{} receipts for {} store entries", receipts.len(), store.len());
    }
    let p2 = Phase2 {
        log,
        receipts,
        store,
        client_keys: keys.clients,
        provider_key: keys.provider,
    };
    let params = AuditParams {
        metric: cfg.metric,
        theta: cfg.theta,
        nu: cfg.nu,
        seed: cfg.seeds.audit,
        mode: cfg.audit_mode,
    };
    let phase = audit_phase(&model, &cert, &p2, Some(&labels), params, &cfg.attack)?;
    let mut w = create(&path(cfg, AUDIT))?;
    phase.audit.write_jsonl(&mut w)?;
    w.flush()?;
    write_json(&path(cfg, BLAME_JSON), &json!({ "blame": phase.blame }))?;
    let mut summary = fail_reason(&phase.audit);
    summary["blame"] = serde_json::to_value(&phase.blame)?;
    Ok(if phase.audit.verdict.is_pass() {
        Status::Ok(summary)
    } else {
        Status::Fail(summary)
    })
}

/// Every phase in order through the artifact files.
pub fn run(cfg: &RunConfig) -> Result<Status> {
    gen_data(cfg)?
        .and_then(|| train_cmd(cfg))?
        .and_then(|| certify_cmd(cfg))?
        .and_then(|| answer(cfg))?
        .and_then(|| audit(cfg))
}

pub fn attack(cfg: &RunConfig) -> Result<Status> {
    let DataSource::Synthetic(data) = &cfg.data else {
        bail!("the attack subcommand runs on synthetic data only; use the per-phase subcommands for CSV sources");
    };
    fs::create_dir_all(&cfg.out)?;
    let pcfg = PipelineConfig {
        data: data.clone(),
        train_fraction: cfg.train_fraction,
        n_queries: cfg.n_queries,
        n_clients: cfg.n_clients,
        client_seed: cfg.seeds.clients,
        client_source: cfg.client_source,
        calibration_margin: cfg.calibration_margin,
        train: cfg.train.clone(),
        fpc: cfg.fpc,
        metric: cfg.metric,
        theta: cfg.theta,
        nu: cfg.nu,
        dealer_seed: cfg.seeds.dealer,
        audit_seed: cfg.seeds.audit,
        audit_mode: cfg.audit_mode,
        attack: cfg.attack.clone(),
    };
    let out = run_pipeline(&pcfg)?;
    let mut w = create(&path(cfg, CERTIFICATION))?;
    out.certification.write_jsonl(&mut w)?;
    w.flush()?;
    if let Some(a) = &out.audit {
        let mut w = create(&path(cfg, AUDIT))?;
        a.write_jsonl(&mut w)?;
        w.flush()?;
    }
    write_json(&path(cfg, BLAME_JSON), &json!({ "blame": out.blame }))?;
    let certified = out.certification.result.verdict.is_certified();
    let summary = json!({
        "phase": "attack",
        "attack": cfg.attack.to_string(),
        "certification": out.certification.result.verdict,
        "audit": out.audit.as_ref().map(|a| &a.verdict),
        "honest_gap": out.honest_gap,
        "measured_gap": out.measured_gap,
        "blame": out.blame,
    });
    write_json(&path(cfg, ATTACK_JSON), &summary)?;
    let caught = !certified || out.audit.as_ref().is_some_and(|a| !a.verdict.is_pass());
    Ok(if caught { Status::Fail(summary) } else { Status::Ok(summary) })
}

fn fmt_table(profile: &SoundnessProfile) -> String {
    let mut s = format!("{:>9}  {:>6}  {:>10}  {:>10}\n", "epsilon", "nu", "evasion", "catch");
    for r in &profile.rows {
        s += &format!("{:>9}  {:>6}  {:>10.2e}  {:>10.6}\n", r.epsilon, r.nu, r.evasion, r.bound);
    }
    s
}

/// Analytic tables and plot data. Needs no run artifacts.
pub fn bound(out: &Path, nu: u64, theta: Theta, p_catch: f64) -> Result<(Status, String)> {
    fs::create_dir_all(out)?;
    let mut eps = TABLE_EPSILONS.to_vec();
    eps.extend(EXTRA_EPSILONS);
    eps.sort_by(f64::total_cmp);
    let table = SoundnessProfile {
        rows: eps.iter().map(|&e| ProfileRow::analytic(e, nu)).collect::<Result<_, _>>()?,
    };
    table.write_csv(create(&out.join(EVASION_TABLE))?)?;
    write_evasion_curves_csv(&TABLE_EPSILONS, &CURVE_VERIFIED, create(&out.join(EVASION_CURVES))?)?;
    let region = epsilon_region(theta.as_f64(), p_catch, REGION_NUS)?;
    write_region_csv(&region, create(&out.join(EPSILON_REGION))?)?;
    let text = fmt_table(&table);
    Ok((Status::Ok(json!({ "phase": "bound", "nu": nu, "rows": table.rows })), text))
}

fn read_jsonl_records(p: &Path) -> Result<Vec<Value>> {
    let text = fs::read_to_string(p)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Into::into))
        .collect()
}

fn read_opt_json(p: &Path) -> Result<Option<Value>> {
    if !p.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_str(&fs::read_to_string(p)?)?))
}

/// A JSON value for a text report: strings without their quotes.
fn plain(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        v => v.to_string(),
    }
}

/// Gathers whatever artifacts exist in the output directory into one JSON
/// report, a text summary and the plot CSVs.
pub fn report(cfg: &RunConfig) -> Result<Status> {
    let cert_path = path(cfg, CERTIFICATION);
    let certification = if cert_path.exists() {
        let r = Certification::read_result(&fs::read_to_string(&cert_path)?).map_err(|e| anyhow!(e))?;
        Some(serde_json::to_value(r)?)
    } else {
        None
    };
    let audit_path = path(cfg, AUDIT);
    let audit = if audit_path.exists() {
        let mut recs = read_jsonl_records(&audit_path)?;
        let mut summary = recs.remove(0);
        if let Some(o) = summary.as_object_mut() {
            o.remove("timings");
        }
        Some(summary)
    } else {
        None
    };
    let (bound_status, table) = bound(&cfg.out, cfg.nu, cfg.theta, 0.99)?;
    let Status::Ok(bound_rows) = bound_status else { unreachable!() };
    let report = json!({
        "format": "oath-report",
        "version": 1,
        "metric": cfg.metric,
        "theta": cfg.theta.to_string(),
        "nu": cfg.nu,
        "attack": cfg.attack.to_string(),
        "seeds": cfg.seeds,
        "postprocess": read_opt_json(&path(cfg, POSTPROCESS_JSON))?,
        "certification": certification,
        "audit": audit,
        "blame": read_opt_json(&path(cfg, BLAME_JSON))?,
        "attack_run": read_opt_json(&path(cfg, ATTACK_JSON))?,
        "bound": bound_rows["rows"],
    });
    write_json(&path(cfg, REPORT_JSON), &report)?;

    let mut txt = String::new();
    txt += &format!("metric {}  theta {}  nu {}  attack {}\n", cfg.metric, cfg.theta, cfg.nu, cfg.attack);
    match &report["certification"] {
        Value::Null => txt += "certification: not run\n",
        c => txt += &format!("certification: {}  digest {}\n", plain(&c["verdict"]), plain(&c["model_digest"])),
    }
    match &report["audit"] {
        Value::Null => txt += "audit: not run\n",
        a => {
            txt += &format!("audit: {}\n", plain(&a["verdict"]));
            txt += &format!(
                "  N {} (a {}, b {}), {} correctness + {} consistency proofs\n",
                a["N"], a["N_a"], a["N_b"], a["correctness_proofs"], a["consistency_proofs"]
            );
        }
    }
    if let Some(b) = report["blame"]["blame"].as_array() {
        txt += &format!("blamed records: {}\n", b.len());
    }
    txt += &format!("\nevasion probability at nu = {}:\n{table}", cfg.nu);
    fs::write(path(cfg, REPORT_TXT), &txt)?;
    Ok(Status::Ok(json!({ "phase": "report", "report": path(cfg, REPORT_JSON) })))
}
