//! `idrift`: inertial-drift experiments from the command line.
//!
//! Exit status: 0 when every verdict passes, 2 when one fails, 1 on error.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use inertial_drift::harness::ExperimentReport;
use serde_json::{json, Map, Value};

use config::{parse_config, parse_list, parse_matrix, parse_mu_rule, CommandName, DemoKind, RunConfig};

#[derive(Parser)]
#[command(
    name = "idrift",
    version,
    about = "Noise-induced drift of inertial systems driven by OU noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Limit drift f_alpha(x) and the full limit drift at one point.
    Drift(Flags),
    /// M, L_alpha, N_alpha and alpha N_alpha at one point.
    Matrices(Flags),
    /// Coupled pre-limit and limit trajectories at one eps.
    Simulate(Flags),
    /// Coupled sup-distance along a decreasing eps sequence.
    Converge(Flags),
    /// Stationary covariance of the frozen fast system against Q_alpha.
    Covariance(Flags),
    /// mu = eps^2 and mu = sqrt(eps) against the alpha = 0 and alpha = inf limits.
    Regimes(Flags),
    /// Turbulence demonstrations.
    Demo {
        kind: DemoKind,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Args, Default)]
struct Flags {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    /// Model parameter, repeatable: --param k1=2.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Number or `inf`.
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    /// Comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    eps: Option<String>,
    /// `proportional:a`, `power:g` or `fixed:mu`.
    #[arg(long)]
    mu_rule: Option<String>,
    #[arg(long = "T", alias = "horizon")]
    horizon: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "paths")]
    n_paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated point or initial position.
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    /// OU matrix A, rows separated by `;`.
    #[arg(long, allow_hyphen_values = true)]
    noise_a: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    noise_b: Option<String>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    /// Output directory.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Overwrite an output directory written by a different configuration.
    #[arg(long)]
    force: bool,
}

impl Flags {
    /// The flags that were set, in config-file shape.
    fn to_map(&self) -> Result<Map<String, Value>> {
        let mut m = Map::new();
        let mut model = Map::new();
        let mut params = Map::new();
        if let Some(name) = &self.model {
            model.insert("name".into(), json!(name));
        }
        for (k, v) in [("lambda", self.lambda), ("sigma", self.sigma)] {
            if let Some(v) = v {
                params.insert(k.into(), json!(v));
            }
        }
        for p in &self.params {
            let (k, v) = p
                .split_once('=')
                .with_context(|| format!("--param {p:?} is not KEY=VALUE"))?;
            let v: f64 = v
                .trim()
                .parse()
                .with_context(|| format!("--param {k}: bad number {v:?}"))?;
            params.insert(k.trim().into(), json!(v));
        }
        if !params.is_empty() {
            model.insert("params".into(), Value::Object(params));
        }
        if !model.is_empty() {
            m.insert("model".into(), Value::Object(model));
        }
        let mut noise = Map::new();
        if let Some(a) = &self.noise_a {
            noise.insert("a".into(), json!(parse_matrix(a)?));
        }
        if let Some(b) = &self.noise_b {
            noise.insert("b".into(), json!(parse_matrix(b)?));
        }
        if !noise.is_empty() {
            m.insert("noise".into(), Value::Object(noise));
        }
        if let Some(a) = &self.alpha {
            m.insert("alpha".into(), json!(a));
        }
        if let Some(e) = &self.eps {
            m.insert("eps".into(), json!(parse_list(e)?));
        }
        if let Some(r) = &self.mu_rule {
            m.insert("mu_rule".into(), serde_json::to_value(parse_mu_rule(r)?)?);
        }
        if let Some(t) = self.horizon {
            m.insert("T".into(), json!(t));
        }
        if let Some(dt) = self.dt {
            m.insert("dt".into(), json!(dt));
        }
        if let Some(n) = self.n_paths {
            m.insert("n_paths".into(), json!(n));
        }
        if let Some(s) = self.seed {
            m.insert("seed".into(), json!(s));
        }
        if let Some(x) = &self.x {
            m.insert("x".into(), json!(parse_list(x)?));
        }
        if let Some(g) = self.grid {
            m.insert("grid".into(), json!(g));
        }
        if let Some(d) = self.delta {
            m.insert("delta".into(), json!(d));
        }
        if let Some(o) = &self.out {
            m.insert("output".into(), json!(o));
        }
        Ok(m)
    }
}

/// Refuses to overwrite results of a different configuration.
fn prepare_output(dir: &Path, hash: &str, force: bool) -> Result<()> {
    let existing = dir.join("report.json");
    if existing.exists() && !force {
        let text = std::fs::read_to_string(&existing)?;
        let old: Value = serde_json::from_str(&text).unwrap_or(Value::Null);
        if old.get("config_hash").and_then(Value::as_str) != Some(hash) {
            bail!(
                "{} holds results of a different configuration; pass --force to overwrite",
                dir.display()
            );
        }
    }
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn report_json(config: &RunConfig, hash: &str, report: &ExperimentReport, wall: f64) -> Value {
    json!({
        "command": config.command,
        "demo": config.demo,
        "config_hash": hash,
        "experiment": report.experiment,
        "seed": report.seed,
        "passed": report.passed(),
        "flagged": report.flagged,
        "total_paths": report.total_paths,
        "rows": report.rows,
        "notes": report.notes,
        "wall_seconds": wall,
    })
}

fn run(command: CommandName, demo: Option<DemoKind>, flags: &Flags) -> Result<bool> {
    let config = parse_config(command, demo, flags.config.as_deref(), flags.to_map()?)?;
    let hash = config.hash();
    prepare_output(&config.output, &hash, flags.force)?;
    std::fs::write(config.output.join("config.echo.json"), config.canonical_json())?;

    let start = Instant::now();
    let report = commands::dispatch(&config, flags.workers)?;
    let wall = start.elapsed().as_secs_f64();

    let json = report_json(&config, &hash, &report, wall);
    std::fs::write(
        config.output.join("report.json"),
        serde_json::to_string_pretty(&json)? + "\n",
    )?;
    std::fs::write(config.output.join("data.csv"), report.data.to_csv())?;

    for row in &report.rows {
        println!(
            "{:<44} {:>14.6e} ± {:<10.3e} {:?}",
            row.param, row.estimate, row.stderr, row.verdict
        );
    }
    for note in &report.notes {
        println!("note: {note}");
    }
    let passed = report.passed();
    println!(
        "{} in {wall:.2} s, results in {}",
        if passed { "pass" } else { "FAIL" },
        config.output.display()
    );
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors share the error status; 2 is reserved for verdicts.
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match &cli.command {
        Cmd::Drift(f) => run(CommandName::Drift, None, f),
        Cmd::Matrices(f) => run(CommandName::Matrices, None, f),
        Cmd::Simulate(f) => run(CommandName::Simulate, None, f),
        Cmd::Converge(f) => run(CommandName::Converge, None, f),
        Cmd::Covariance(f) => run(CommandName::Covariance, None, f),
        Cmd::Regimes(f) => run(CommandName::Regimes, None, f),
        Cmd::Demo { kind, flags } => run(CommandName::Demo, Some(*kind), flags),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
