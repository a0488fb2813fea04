//! TOML experiment configuration layered over the named presets.
//!
//! ```toml
//! preset = "theory"          # optional base, defaults to figure1
//!
//! [data]
//! n = 20
//! mu = [5.0]                 # leading entries, zero-padded to d
//!
//! [train]
//! mode = "multi"
//! eta = 0.01
//! negatives = "all"          # or a per-anchor count such as 8
//! ```
//!
//! Every key is optional; unspecified values come from the base preset.

use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::data::{padded, DataConfig, NegativePolicy};
use crate::error::{Error, Result};
use crate::trainer::{Mode, TrainConfig};

pub const PRESETS: [&str; 2] = ["figure1", "theory"];

/// Named preset in the given mode.
pub fn preset(name: &str, mode: Mode) -> Result<TrainConfig> {
    match name {
        "figure1" => Ok(TrainConfig::figure1(mode)),
        "theory" => Ok(TrainConfig::theory(mode)),
        other => Err(Error::Config(format!(
            "unknown preset {other:?}, expected one of {}",
            PRESETS.join(", ")
        ))),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    preset: Option<String>,
    #[serde(default)]
    data: DataSection,
    #[serde(default)]
    train: TrainSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataSection {
    d: Option<usize>,
    d_tilde: Option<usize>,
    n: Option<usize>,
    mu: Option<Vec<f64>>,
    mu_tilde: Option<Vec<f64>>,
    sigma_xi: Option<f64>,
    sigma_xi_tilde: Option<f64>,
    sigma_eps: Option<f64>,
    nu: Option<Vec<f64>>,
    sigma_zeta: Option<f64>,
    n_test: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Negatives {
    Keyword(String),
    Count(usize),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    mode: Option<Mode>,
    m: Option<usize>,
    sigma0: Option<f64>,
    eta: Option<f64>,
    tau: Option<f64>,
    epochs: Option<usize>,
    negatives: Option<Negatives>,
    probe_every: Option<usize>,
    log_every: Option<usize>,
    seed: Option<u64>,
    probe_lambda: Option<f64>,
    stage_threshold: Option<f64>,
    check_projection: Option<bool>,
}

/// Parsed configuration plus the name of the preset it was layered on.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub base: String,
    pub config: TrainConfig,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_data(cfg: &mut DataConfig, s: DataSection) -> Result<()> {
    let resized = s.d.is_some() || s.d_tilde.is_some();
    set(&mut cfg.d, s.d);
    set(&mut cfg.d_tilde, s.d_tilde.or(s.d));
    set(&mut cfg.n, s.n);
    set(&mut cfg.sigma_xi, s.sigma_xi);
    set(&mut cfg.sigma_xi_tilde, s.sigma_xi_tilde);
    set(&mut cfg.sigma_eps, s.sigma_eps);
    set(&mut cfg.sigma_zeta, s.sigma_zeta);
    set(&mut cfg.n_test, s.n_test);
    let lead = |v: Option<Vec<f64>>, old: &[f64], len: usize, what: &str| -> Result<Vec<f64>> {
        let src = v.unwrap_or_else(|| old.iter().copied().take(len).collect());
        if src.len() > len {
            return Err(Error::Config(format!(
                "{what} has {} entries but dimension is {len}",
                src.len()
            )));
        }
        Ok(padded(&src, len))
    };
    if resized || s.mu.is_some() {
        cfg.mu = lead(s.mu, &cfg.mu, cfg.d, "mu")?;
    }
    if resized || s.nu.is_some() {
        cfg.nu = lead(s.nu, &cfg.nu, cfg.d, "nu")?;
    }
    if resized || s.mu_tilde.is_some() {
        cfg.mu_tilde = lead(s.mu_tilde, &cfg.mu_tilde, cfg.d_tilde, "mu_tilde")?;
    }
    Ok(())
}

fn apply_train(cfg: &mut TrainConfig, s: TrainSection) -> Result<()> {
    set(&mut cfg.mode, s.mode);
    set(&mut cfg.m, s.m);
    set(&mut cfg.sigma0, s.sigma0);
    set(&mut cfg.eta, s.eta);
    set(&mut cfg.tau, s.tau);
    set(&mut cfg.epochs, s.epochs);
    set(&mut cfg.probe_every, s.probe_every);
    set(&mut cfg.log_every, s.log_every);
    set(&mut cfg.probe.lambda, s.probe_lambda);
    set(&mut cfg.stage_threshold, s.stage_threshold);
    set(&mut cfg.check_projection, s.check_projection);
    if let Some(seed) = s.seed {
        *cfg = cfg.clone().with_seed(seed);
    }
    cfg.negatives = match s.negatives {
        None => cfg.negatives,
        Some(Negatives::Count(m)) => NegativePolicy::Fixed(m),
        Some(Negatives::Keyword(k)) if k == "all" => NegativePolicy::AllOpposite,
        Some(Negatives::Keyword(k)) => {
            return Err(Error::Config(format!(
                "negatives must be \"all\" or a count, got {k:?}"
            )))
        }
    };
    Ok(())
}

/// Parses TOML text. `mode` (when given) overrides the file's mode.
pub fn parse(text: &str, mode: Option<Mode>) -> Result<Loaded> {
    let file: FileConfig = toml::from_str(text)?;
    let base = file.preset.unwrap_or_else(|| "figure1".to_string());
    let mut config = preset(&base, Mode::Single)?;
    apply_data(&mut config.data, file.data)?;
    apply_train(&mut config, file.train)?;
    set(&mut config.mode, mode);
    config.validate()?;
    Ok(Loaded { base, config })
}

pub fn load(path: &Path, mode: Option<Mode>) -> Result<Loaded> {
    parse(&std::fs::read_to_string(path)?, mode)
}

/// Hex SHA-256 of the canonical JSON form of the configuration.
pub fn config_hash(cfg: &TrainConfig) -> Result<String> {
    let json = serde_json::to_vec(cfg)?;
    Ok(hex::encode(Sha256::digest(&json)))
}
