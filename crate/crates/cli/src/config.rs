//! Run configuration: defaults, then the config file, then flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use inertial_drift::sde::MuRule;
use inertial_drift::Alpha;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CommandName {
    Drift,
    Matrices,
    Simulate,
    Converge,
    Covariance,
    Regimes,
    Demo,
}

impl fmt::Display for CommandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).map_err(|_| fmt::Error)?;
        f.write_str(v.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DemoKind {
    Vortex,
    Cellular,
    Turbophoresis,
    Divergence,
}

impl DemoKind {
    pub fn model_name(self) -> &'static str {
        match self {
            DemoKind::Vortex => "vortex",
            DemoKind::Cellular | DemoKind::Divergence => "cellular",
            DemoKind::Turbophoresis => "pipe",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl ModelConfig {
    /// `params[key]`, or `default` when absent.
    pub fn param(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }
}

/// `A` and `B` as row lists, or a builtin name. Empty means `identity`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
}

/// Accepts a number or a string such as `"inf"`; written back as a number
/// when finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaField(pub Alpha);

impl Serialize for AlphaField {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Alpha::Infinite => s.serialize_str("inf"),
            a => s.serialize_f64(a.value()),
        }
    }
}

impl<'de> Deserialize<'de> for AlphaField {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        let alpha = match Raw::deserialize(d)? {
            Raw::Num(v) => Alpha::new(v),
            Raw::Str(s) => s.parse(),
        };
        alpha.map(AlphaField).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demo: Option<DemoKind>,
    pub model: ModelConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    pub alpha: AlphaField,
    pub eps: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_rule: Option<MuRule>,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub output: PathBuf,
}

fn defaults(command: CommandName, demo: Option<DemoKind>) -> Value {
    let (model, eps, horizon, n_paths): (&str, Vec<f64>, f64, usize) = match (command, demo) {
        (CommandName::Converge, _) => ("scalar-sine", vec![0.1, 0.05, 0.02, 0.01], 1.0, 200),
        (CommandName::Regimes, _) => ("scalar-sine-xi", vec![1e-3], 1.0, 200),
        (CommandName::Simulate, _) => ("scalar-sine", vec![0.01], 1.0, 100),
        (CommandName::Covariance, _) => ("scalar", vec![], 100.0, 100),
        (CommandName::Demo, Some(kind)) => {
            let horizon = match kind {
                DemoKind::Cellular => 5.0,
                DemoKind::Turbophoresis => 2.0,
                _ => 1.0,
            };
            (kind.model_name(), vec![], horizon, 500)
        }
        _ => ("scalar", vec![], 1.0, 1),
    };
    let mut v = serde_json::json!({
        "command": command,
        "model": { "name": model },
        "alpha": 1.0,
        "eps": eps,
        "T": horizon,
        "n_paths": n_paths,
        "seed": 0,
        "output": "out",
    });
    if let Some(kind) = demo {
        v["demo"] = serde_json::to_value(kind).expect("plain enum");
    }
    v
}

/// Recursive merge: objects merge key by key, everything else replaces.
fn overlay(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => overlay(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Builds the effective configuration. `flags` holds only the values set
/// on the command line, in config-file shape.
pub fn parse_config(
    command: CommandName,
    demo: Option<DemoKind>,
    file: Option<&Path>,
    flags: Map<String, Value>,
) -> Result<RunConfig> {
    let mut merged = defaults(command, demo);
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let from_file: Value =
            serde_json::from_str(&text).with_context(|| format!("{} is not valid JSON", path.display()))?;
        if !from_file.is_object() {
            bail!("{}: the config must be a JSON object", path.display());
        }
        for (key, actual) in [
            ("command", command.to_string()),
            (
                "demo",
                demo.map(|d| format!("{d:?}").to_lowercase()).unwrap_or_default(),
            ),
        ] {
            if let Some(v) = from_file.get(key) {
                if v.as_str() != Some(actual.as_str()) {
                    bail!(
                        "{}: {key} is {v}, but the command line asks for {actual:?}",
                        path.display()
                    );
                }
            }
        }
        overlay(&mut merged, from_file);
    }
    overlay(&mut merged, Value::Object(flags));
    let config: RunConfig = serde_path_to_error::deserialize(merged).map_err(|e| {
        let path = e.path().to_string();
        anyhow::anyhow!("config error at {path}: {}", e.into_inner())
    })?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    /// Checks that do not need the model; the model-specific ones run when
    /// the model is built, still before any simulation.
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            bail!("T must be positive and finite, got {}", self.horizon);
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt <= self.horizon) {
                bail!("dt must lie in (0, T], got {dt}");
            }
        }
        if self.n_paths == 0 {
            bail!("n_paths must be at least 1");
        }
        if let Some(bad) = self.eps.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            bail!("eps values must be positive, got {bad}");
        }
        match self.command {
            CommandName::Converge => {
                if self.eps.len() < 2 || self.eps.windows(2).any(|w| w[1] >= w[0]) {
                    bail!(
                        "converge needs at least two strictly decreasing eps values, got {:?}",
                        self.eps
                    );
                }
            }
            CommandName::Simulate | CommandName::Regimes => {
                if self.eps.len() != 1 {
                    bail!("{} takes exactly one eps value, got {:?}", self.command, self.eps);
                }
            }
            CommandName::Covariance => {
                if self.alpha.0.finite().is_none() {
                    bail!("covariance needs a finite positive alpha, got {}", self.alpha.0);
                }
            }
            CommandName::Demo if self.demo.is_none() => bail!("demo needs a kind"),
            _ => {}
        }
        if let Some(rule) = self.mu_rule {
            let p = match rule {
                MuRule::Fixed(v) | MuRule::Proportional(v) | MuRule::Power(v) => v,
            };
            if !(p > 0.0 && p.is_finite()) {
                bail!("mu_rule parameter must be positive, got {p}");
            }
        }
        if let Some(g) = self.grid {
            if g < 2 {
                bail!("grid needs at least 2 points per axis, got {g}");
            }
        }
        if let Some(d) = self.delta {
            if !(d > 0.0) {
                bail!("delta must be positive, got {d}");
            }
        }
        Ok(())
    }

    /// Canonical JSON of the effective configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises") + "\n"
    }

    /// SHA-256 of the canonical JSON with the output path removed, so the
    /// same experiment hashes alike wherever it is written.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serialises");
        v.as_object_mut().expect("object").remove("output");
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}

/// `proportional:1`, `power:2`, `fixed:0.01`.
pub fn parse_mu_rule(s: &str) -> Result<MuRule> {
    let (kind, value) = s
        .split_once(':')
        .with_context(|| format!("mu rule {s:?} is not of the form kind:value"))?;
    let v: f64 = value
        .trim()
        .parse()
        .with_context(|| format!("bad mu rule value {value:?}"))?;
    Ok(match kind.trim() {
        "fixed" => MuRule::Fixed(v),
        "proportional" => MuRule::Proportional(v),
        "power" => MuRule::Power(v),
        other => bail!("unknown mu rule {other:?}; use fixed, proportional or power"),
    })
}

/// Rows separated by `;`, entries by `,`.
pub fn parse_matrix(s: &str) -> Result<Vec<Vec<f64>>> {
    s.split(';')
        .map(parse_list)
        .collect::<Result<Vec<_>>>()
        .with_context(|| format!("bad matrix literal {s:?}"))
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad number {v:?}")))
        .collect()
}
