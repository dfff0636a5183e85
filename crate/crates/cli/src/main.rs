//! `oath`: certify a model's fairness, answer authenticated queries and
//! audit them, one phase per subcommand.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use oath::fairness::{Metric, Theta};

use commands::Status;
use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "oath", version, about = "Fairness certification, authenticated queries and audit")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Global {
    /// Run configuration (flat `key = value` file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Derive every seed from this one instead of the config's `seed.*`.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Fairness metric: dp, eo, eopp or pe.
    #[arg(long, global = true)]
    metric: Option<Metric>,
    /// Fairness threshold as NUM/DEN.
    #[arg(long, global = true)]
    theta: Option<Theta>,
    /// Queries verified per group.
    #[arg(long, global = true)]
    nu: Option<u64>,
    /// Attack spec, e.g. `record-tamper:p_a=0.5` or `model-switch:rate=1@7`.
    #[arg(long, global = true)]
    attack: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build train.csv, val.csv and clients.csv.
    GenData,
    /// Train, quantize and post-process; writes model.bin, model.json, postprocess.json.
    Train,
    /// Phase 1: prove the model fair on the calibration set.
    Certify,
    /// Phase 2: answer the client queries with signatures and commitments.
    Answer,
    /// Phase 3: audit the answered queries.
    Audit,
    /// Every phase in order through the artifact files.
    Run,
    /// End-to-end run under the configured attack.
    Attack,
    /// Evasion probability tables and plot data.
    Bound {
        /// Catch probability for the epsilon region.
        #[arg(long, default_value_t = 0.99)]
        p_catch: f64,
    },
    /// Summarize the artifacts in the output directory.
    Report,
}

fn load(g: &Global) -> Result<RunConfig> {
    let Some(path) = &g.config else {
        bail!("--config is required for this subcommand");
    };
    let ov = Overrides {
        out: g.out.clone(),
        seed: g.seed_override,
        metric: g.metric,
        theta: g.theta,
        nu: g.nu,
        attack: g.attack.clone(),
    };
    RunConfig::load(path, &ov)
}

fn dispatch(cli: &Cli) -> Result<Status> {
    if let Cmd::Bound { p_catch } = cli.cmd {
        let out = cli.global.out.clone().unwrap_or_else(|| PathBuf::from("."));
        let nu = cli.global.nu.unwrap_or(3800);
        let theta = cli.global.theta.unwrap_or(Theta::new(1, 10)?);
        let (_, table) = commands::bound(&out, nu, theta, p_catch)?;
        return Ok(Status::Text(table));
    }
    let cfg = load(&cli.global)?;
    match cli.cmd {
        Cmd::GenData => commands::gen_data(&cfg),
        Cmd::Train => commands::train_cmd(&cfg),
        Cmd::Certify => commands::certify_cmd(&cfg),
        Cmd::Answer => commands::answer(&cfg),
        Cmd::Audit => commands::audit(&cfg),
        Cmd::Run => commands::run(&cfg),
        Cmd::Attack => commands::attack(&cfg),
        Cmd::Report => commands::report(&cfg),
        Cmd::Bound { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(Status::Ok(v)) => {
            println!("{}", serde_json::json!({ "status": "ok", "result": v }));
            ExitCode::SUCCESS
        }
        Ok(Status::Text(t)) => {
            print!("{t}");
            ExitCode::SUCCESS
        }
        Ok(Status::Fail(v)) => {
            println!("{}", serde_json::json!({ "status": "fail", "reason": v }));
            ExitCode::from(1)
        }
        Err(e) => {
            println!("{}", serde_json::json!({ "status": "error", "error": format!("{e:#}") }));
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
