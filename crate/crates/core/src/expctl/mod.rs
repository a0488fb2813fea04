//! Experiment driver behind the `expctl` binary: per-seed runs with trace
//! and summary files, the four Figure-1 panels, and the verification suite.

mod output;
mod verify;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::config_hash;
use crate::error::{Error, Result};
use crate::trainer::{check_assumptions, train_with, Mode, TrainConfig, TrainOutcome};

pub use output::{write_atomic, TraceWriter};
pub use verify::{cmd_verify, CheckRow, VerifyOptions, VerifyReport};

/// Parses `0,1,2` or a half-open range `0..3`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("bad seed list {s:?}, expected e.g. 0,1,2 or 0..3"));
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        (a..b).collect()
    } else {
        s.split(',')
            .map(|t| t.trim().parse::<u64>().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub preset: String,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub version: &'static str,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn trace_path(out: &Path, mode: Mode, seed: u64) -> PathBuf {
    out.join(format!("trace_{mode}_{seed}.csv"))
}

pub fn summary_path(out: &Path, mode: Mode, seed: u64) -> PathBuf {
    out.join(format!("summary_{mode}_{seed}.json"))
}

/// Flat JSON summary of one run.
pub fn summary_json(cfg: &TrainConfig, outcome: &TrainOutcome) -> Result<Value> {
    let last = outcome.final_record();
    let mut obj = Map::new();
    let mut put = |k: &str, v: Value| {
        obj.insert(k.to_string(), v);
    };
    put("mode", json!(cfg.mode));
    put("seed", json!(cfg.seed));
    put("config_hash", json!(config_hash(cfg)?));
    put("steps", json!(cfg.epochs));
    put("initial_loss", json!(outcome.initial_loss));
    put("uniform_loss", json!(outcome.uniform_loss));
    put("final_loss", json!(last.loss));
    put("final_accuracy", json!(last.probe_accuracy));
    put("stage_boundary", json!(outcome.stage_boundary));
    let s = outcome.ledger.summarize();
    put("max_gamma", json!(s.primary.max_gamma));
    put("min_gamma", json!(-s.primary.max_neg_gamma));
    put("mean_abs_gamma", json!(s.primary.mean_abs_gamma));
    put("max_rho", json!(s.primary.max_rho));
    put("max_psi", json!(s.primary.max_psi));
    put("max_gamma_tilde", json!(s.tilde.map(|t| t.max_gamma)));
    put("max_rho_tilde", json!(s.tilde.map(|t| t.max_rho)));
    put("max_psi_tilde", json!(s.tilde.map(|t| t.max_psi)));
    put("max_softmax_error", json!(outcome.max_softmax_error()));
    put("max_ledger_gap", json!(outcome.max_ledger_gap()));
    put("max_grad_residual", json!(outcome.max_grad_residual()));
    for item in check_assumptions(cfg).items {
        put(&format!("assumption_{}", item.name), json!(item.value));
        put(&format!("assumption_{}_status", item.name), json!(item.status));
    }
    Ok(Value::Object(obj))
}

/// Trains one seed, streaming the trace to `<trace>.partial` and renaming it
/// into place on success. A failed run leaves the partial trace behind.
pub fn run_one(cfg: &TrainConfig, out: &Path) -> Result<TrainOutcome> {
    let path = trace_path(out, cfg.mode, cfg.seed);
    let mut writer = TraceWriter::create(&path)?;
    let outcome = train_with(cfg, &mut writer)?;
    writer.finish()?;
    let summary = serde_json::to_vec_pretty(&summary_json(cfg, &outcome)?)?;
    write_atomic(&summary_path(out, cfg.mode, cfg.seed), &summary)?;
    Ok(outcome)
}

/// Runs every seed, at most `threads` at a time. Results keep seed order.
pub fn run_seeds(base: &TrainConfig, seeds: &[u64], out: &Path, threads: usize) -> Vec<Result<TrainOutcome>> {
    let threads = threads.max(1);
    let mut results = Vec::with_capacity(seeds.len());
    for chunk in seeds.chunks(threads) {
        if threads == 1 {
            results.push(run_one(&base.clone().with_seed(chunk[0]), out));
            continue;
        }
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&seed| {
                    let cfg = base.clone().with_seed(seed);
                    s.spawn(move || run_one(&cfg, out))
                })
                .collect();
            for h in handles {
                results.push(
                    h.join()
                        .unwrap_or_else(|_| Err(Error::Config("worker panicked".into()))),
                );
            }
        });
    }
    results
}

#[derive(Debug)]
pub struct RunReport {
    pub manifest: RunManifest,
    pub outcomes: Vec<(u64, Result<TrainOutcome>)>,
}

impl RunReport {
    pub fn all_ok(&self) -> bool {
        self.outcomes.iter().all(|(_, r)| r.is_ok())
    }

    pub fn mean_final_accuracy(&self) -> Option<f64> {
        let accs: Vec<f64> = self
            .outcomes
            .iter()
            .filter_map(|(_, r)| r.as_ref().ok())
            .map(TrainOutcome::final_accuracy)
            .collect();
        (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
    }
}

/// Runs `cfg` for each seed and writes traces, summaries and `manifest.json`.
pub fn cmd_run(cfg: &TrainConfig, preset: &str, seeds: &[u64], out: &Path, threads: usize) -> Result<RunReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let started = unix_now();
    let results = run_seeds(cfg, seeds, out, threads);
    let manifest = RunManifest {
        config_hash: config_hash(cfg)?,
        preset: preset.to_string(),
        seeds: seeds.to_vec(),
        out_dir: out.to_path_buf(),
        started_unix: started,
        finished_unix: unix_now(),
        version: env!("CARGO_PKG_VERSION"),
    };
    write_atomic(&out.join("manifest.json"), &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(RunReport {
        manifest,
        outcomes: seeds.iter().copied().zip(results).collect(),
    })
}

pub const PANELS: [&str; 4] = ["loss", "accuracy", "signal", "noise"];

fn panel_value(panel: &str, r: &crate::trainer::TraceRecord) -> Option<f64> {
    match panel {
        "loss" => Some(r.loss),
        "accuracy" => r.probe_accuracy,
        "signal" => Some(r.max_gamma),
        "noise" => Some(r.max_rho),
        _ => None,
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Panel CSV text: per logged step, mean and population std across seeds
/// for each mode. Cells without data in every seed are left empty.
pub fn panel_csv(panel: &str, single: &[TrainOutcome], multi: &[TrainOutcome]) -> Result<String> {
    let steps: Vec<usize> = single
        .first()
        .or(multi.first())
        .map(|o| o.trace.iter().map(|r| r.step).collect())
        .unwrap_or_default();
    for o in single.iter().chain(multi) {
        let other: Vec<usize> = o.trace.iter().map(|r| r.step).collect();
        if other != steps {
            return Err(Error::Config("runs logged different steps".into()));
        }
    }
    let cells = |runs: &[TrainOutcome], k: usize| -> (String, String) {
        let vals: Option<Vec<f64>> = runs.iter().map(|o| panel_value(panel, &o.trace[k])).collect();
        match vals {
            Some(v) if !v.is_empty() => {
                let (m, s) = mean_std(&v);
                (m.to_string(), s.to_string())
            }
            _ => (String::new(), String::new()),
        }
    };
    let mut text = String::from("step,single_mean,single_std,multi_mean,multi_std\n");
    for (k, step) in steps.iter().enumerate() {
        let (sm, ss) = cells(single, k);
        let (mm, ms) = cells(multi, k);
        text.push_str(&format!("{step},{sm},{ss},{mm},{ms}\n"));
    }
    Ok(text)
}

#[derive(Debug)]
pub struct Figure1Report {
    pub single: RunReport,
    pub multi: RunReport,
    pub panels: Vec<PathBuf>,
}

/// Runs both modes of `base` over `seeds` into `out` and merges the traces
/// into `panel_{loss,accuracy,signal,noise}.csv`.
pub fn cmd_figure1(
    base: &TrainConfig,
    preset: &str,
    seeds: &[u64],
    out: &Path,
    threads: usize,
) -> Result<Figure1Report> {
    let mut reports = Vec::new();
    for mode in [Mode::Single, Mode::Multi] {
        let cfg = TrainConfig { mode, ..base.clone() };
        let report = cmd_run(&cfg, preset, seeds, out, threads)?;
        if let Some((seed, Err(e))) = report.outcomes.iter().find(|(_, r)| r.is_err()) {
            return Err(Error::Config(format!("{mode} run for seed {seed} failed: {e}")));
        }
        reports.push(report);
    }
    let multi = reports.pop().expect("two reports");
    let single = reports.pop().expect("two reports");
    let ok = |r: &RunReport| -> Vec<TrainOutcome> {
        r.outcomes
            .iter()
            .filter_map(|(_, o)| o.as_ref().ok().cloned())
            .collect()
    };
    let (s, m) = (ok(&single), ok(&multi));
    let mut panels = Vec::new();
    for panel in PANELS {
        let path = out.join(format!("panel_{panel}.csv"));
        write_atomic(&path, panel_csv(panel, &s, &m)?.as_bytes())?;
        panels.push(path);
    }
    Ok(Figure1Report { single, multi, panels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0,1,2").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds(" 4 ").unwrap(), vec![4]);
        assert_eq!(parse_seeds("2..5").unwrap(), vec![2, 3, 4]);
        assert!(parse_seeds("").is_err());
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("a,b").is_err());
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}
