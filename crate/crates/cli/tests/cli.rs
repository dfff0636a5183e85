use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

const CONFIG: &str = "\
# small honest run
data.n = 1200
data.features = 6
clients.n = 1000
clients.count = 10
theta = 1/10
nu = 60
seed.data = 11
seed.train = 12
seed.clients = 13
seed.dealer = 14
seed.audit = 15
seed.attack = 16
";

struct Run {
    code: i32,
    json: Value,
    stdout: String,
    stderr: String,
}

fn setup() -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(&conf, CONFIG).unwrap();
    (dir, conf)
}

fn oath(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_oath")).args(args).output().unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    Run {
        code: out.status.code().unwrap(),
        json: serde_json::from_str(stdout.trim()).unwrap_or(Value::Null),
        stdout,
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn phase(conf: &Path, out: &Path, sub: &str, extra: &[&str]) -> Run {
    let mut args = vec![sub, "--config", conf.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend(extra);
    oath(&args)
}

#[test]
fn honest_run_passes_and_reports() {
    let (dir, conf) = setup();
    let out = dir.path().join("out");
    let r = phase(&conf, &out, "run", &[]);
    assert_eq!(r.code, 0, "{} {}", r.stdout, r.stderr);
    assert_eq!(r.json["result"]["verdict"], "Pass");
    for f in [
        "train.csv",
        "val.csv",
        "clients.csv",
        "model.bin",
        "model.json",
        "postprocess.json",
        "certification.jsonl",
        "log.bin",
        "store.jsonl",
        "receipts.jsonl",
        "keys.json",
        "audit.jsonl",
        "blame.json",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let r = phase(&conf, &out, "report", &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let txt = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(txt.contains("certification: Certified"));
    assert!(txt.contains("audit: Pass"));
    assert!(txt.contains("60 correctness + 60 consistency") || txt.contains("120 correctness + 120 consistency"));
    let rep: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(rep["audit"]["verdict"], "Pass");
    for f in ["evasion_table.csv", "evasion_curves.csv", "epsilon_region.csv"] {
        assert!(out.join(f).exists());
    }
}

#[test]
fn record_tamper_attack_is_caught_and_blamed() {
    let (dir, conf) = setup();
    let out = dir.path().join("atk");
    let r = phase(&conf, &out, "attack", &["--attack", "record-tamper:p_a=0.5"]);
    assert_eq!(r.code, 1, "{}", r.stdout);
    let reasons = &r.json["reason"]["audit"]["Fail"]["reasons"];
    assert!(reasons.as_array().unwrap().iter().any(|x| x == "Consistency"), "{reasons}");
    let blamed = r.json["reason"]["audit"]["Fail"]["blamed"].as_array().unwrap();
    assert!(!blamed.is_empty());
    let blame = r.json["reason"]["blame"].as_array().unwrap();
    assert_eq!(blame.len(), blamed.len());
    assert!(blame.iter().all(|b| b["party"] == "Provider"));
    assert!(out.join("attack.json").exists());
}

#[test]
fn per_phase_model_switch_fails_audit() {
    let (dir, conf) = setup();
    let out = dir.path().join("ms");
    for sub in ["gen-data", "train", "certify"] {
        assert_eq!(phase(&conf, &out, sub, &[]).code, 0, "{sub}");
    }
    let r = phase(&conf, &out, "answer", &["--attack", "model-switch:rate=1"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let r = phase(&conf, &out, "audit", &[]);
    assert_eq!(r.code, 1, "{}", r.stdout);
    assert!(r.json["reason"]["verdict"]["Fail"]["reasons"]
        .as_array()
        .unwrap()
        .iter()
        .any(|x| x == "Correctness"));
}

#[test]
fn bound_prints_evasion_table() {
    let dir = tempfile::tempdir().unwrap();
    let r = oath(&["bound", "--nu", "3800", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(r.code, 0);
    let row = r.stdout.lines().find(|l| l.split_whitespace().next() == Some("0.01")).unwrap();
    assert!(row.contains("5.34e-9"), "{row}");
    let csv = fs::read_to_string(dir.path().join("evasion_table.csv")).unwrap();
    assert!(csv.starts_with("epsilon,nu,bound,evasion"));
    assert!(dir.path().join("epsilon_region.csv").exists());
    assert!(dir.path().join("evasion_curves.csv").exists());
}

#[test]
fn audit_before_certify_is_a_phase_order_error() {
    let (dir, conf) = setup();
    let out = dir.path().join("po");
    assert_eq!(phase(&conf, &out, "gen-data", &[]).code, 0);
    assert_eq!(phase(&conf, &out, "train", &[]).code, 0);
    let r = phase(&conf, &out, "audit", &[]);
    assert_eq!(r.code, 2);
    assert_eq!(r.json["status"], "error");
    assert!(r.json["error"].as_str().unwrap().contains("missing certification digest"));
}

#[test]
fn missing_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, CONFIG.replace("seed.audit = 15\n", "")).unwrap();
    let r = phase(&conf, &dir.path().join("o"), "gen-data", &[]);
    assert_eq!(r.code, 2);
    assert!(r.json["error"].as_str().unwrap().contains("seed.audit"));
}

#[test]
fn edited_log_bytes_fail_the_audit() {
    let (dir, conf) = setup();
    let base = dir.path().join("base");
    for sub in ["gen-data", "train", "certify", "answer"] {
        assert_eq!(phase(&conf, &base, sub, &[]).code, 0, "{sub}");
    }
    let log = fs::read(base.join("log.bin")).unwrap();
    let files: Vec<PathBuf> = fs::read_dir(&base).unwrap().map(|e| e.unwrap().path()).collect();
    // Header, a feature, a coin, the answer byte, both signatures, a commitment.
    let rec = 20usize;
    let mut positions = vec![3, 12, rec + 1, rec + 8, rec + 21];
    positions.extend([log.len() - 1, log.len() - 9, log.len() - 70, log.len() - 140, log.len() / 2]);
    for (k, &pos) in positions.iter().enumerate() {
        let case = dir.path().join(format!("edit{k}"));
        fs::create_dir_all(&case).unwrap();
        for f in &files {
            fs::copy(f, case.join(f.file_name().unwrap())).unwrap();
        }
        let mut bytes = log.clone();
        bytes[pos] ^= 0x04;
        fs::write(case.join("log.bin"), bytes).unwrap();
        let r = phase(&conf, &case, "audit", &[]);
        assert_eq!(r.code, 1, "byte {pos}: {}", r.stdout);
        assert_eq!(r.json["reason"]["reason"], "log-integrity", "byte {pos}");
    }
}

fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            let mut bytes = fs::read(&p).unwrap();
            if name == "audit.jsonl" {
                // Timings are the one field allowed to differ.
                let text = String::from_utf8(bytes).unwrap();
                let lines: Vec<String> = text
                    .lines()
                    .map(|l| {
                        let mut v: Value = serde_json::from_str(l).unwrap();
                        v.as_object_mut().unwrap().remove("timings");
                        v.to_string()
                    })
                    .collect();
                bytes = lines.join("\n").into_bytes();
            }
            (name, bytes)
        })
        .collect()
}

#[test]
fn reruns_are_byte_identical() {
    let (dir, conf) = setup();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(phase(&conf, &a, "run", &[]).code, 0);
    assert_eq!(phase(&conf, &b, "run", &[]).code, 0);
    let (fa, fb) = (artifacts(&a), artifacts(&b));
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (name, bytes) in &fa {
        assert!(bytes == &fb[name], "{name} differs");
    }
    // A different seed changes the artifacts.
    let c = dir.path().join("c");
    assert_eq!(phase(&conf, &c, "run", &["--seed-override", "99"]).code, 0);
    assert_ne!(artifacts(&c)["log.bin"], fa["log.bin"]);
}

#[test]
fn csv_source_runs_end_to_end() {
    let (dir, conf) = setup();
    let src = dir.path().join("src");
    assert_eq!(phase(&conf, &src, "gen-data", &[]).code, 0);
    let csv = src.join("train.csv");
    let header = fs::read_to_string(&csv).unwrap().lines().next().unwrap().to_string();
    let cols: Vec<&str> = header.split(',').filter(|c| *c != "group" && *c != "label").collect();
    let conf2 = dir.path().join("csv.conf");
    let text = CONFIG.replace("data.n = 1200\ndata.features = 6\n", "")
        + &format!("data.source = src/train.csv\ndata.columns = {}\nclients.n = 600\n", cols.join(","));
    fs::write(&conf2, text.replace("clients.n = 1000\n", "")).unwrap();
    let out = dir.path().join("csvout");
    let r = phase(&conf2, &out, "run", &[]);
    assert_eq!(r.code, 0, "{} {}", r.stdout, r.stderr);
    assert!(out.join("normalization.json").exists());
    let r = phase(&conf2, &out, "attack", &[]);
    assert_eq!(r.code, 2);
}
