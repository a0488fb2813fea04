use std::fmt;

use serde::Serialize;

use crate::error::Result;
use crate::gradcheck::{check_instance, Fault, Instance};
use crate::lemmas::{stage_one_growth, InactiveNoise, ScaleSeparation, ShareCheck, SignInvariance};
use crate::trainer::{check_assumptions, train_with, Mode, TrainConfig};

pub const LEDGER_TOL: f64 = 1e-8;
pub const RESIDUAL_TOL: f64 = 1e-10;
pub const SOFTMAX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    /// Corrupts one gradient entry in the finite-difference check.
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRow {
    pub seed: u64,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub warnings: Vec<String>,
    pub checks: Vec<CheckRow>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, seed: u64, name: &str) -> Option<&CheckRow> {
        self.checks.iter().find(|c| c.seed == seed && c.name == name)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        writeln!(f, "{:<6} {:<28} {:<6} detail", "seed", "check", "result")?;
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{:<6} {:<28} {:<6} {}", c.seed, c.name, status, c.detail)?;
        }
        Ok(())
    }
}

fn share_detail(s: &ShareCheck) -> String {
    format!("{}/{} = {:.4} (need {})", s.holding, s.total, s.share(), s.required)
}

/// Runs the verification suite on `base` (both modes) for each seed.
pub fn cmd_verify(base: &TrainConfig, seeds: &[u64], opts: &VerifyOptions) -> Result<VerifyReport> {
    let warnings = check_assumptions(base)
        .warnings()
        .map(|w| {
            format!(
                "assumption {} = {} outside expected range ({})",
                w.name, w.value, w.expect
            )
        })
        .collect();
    let mut checks = Vec::new();
    for &seed in seeds {
        let mut row = |name, passed, detail: String| {
            checks.push(CheckRow {
                seed,
                name,
                passed,
                detail,
            })
        };

        let mut fd_err: f64 = 0.0;
        for mode in [Mode::Single, Mode::Multi] {
            fd_err = fd_err.max(check_instance(Instance::small(seed), mode, opts.fault)?.max_error());
        }
        row(
            "gradient finite difference",
            fd_err <= crate::gradcheck::FD_TOLERANCE,
            format!("max rel error {fd_err:.3e}"),
        );

        let mut cfg = TrainConfig {
            mode: Mode::Single,
            check_projection: true,
            ..base.clone()
        }
        .with_seed(seed);
        let mut single_obs = (SignInvariance::default(), InactiveNoise::default());
        let single = train_with(&cfg, &mut single_obs)?;
        cfg.mode = Mode::Multi;
        let mut multi_obs = InactiveNoise::default();
        let multi = train_with(&cfg, &mut multi_obs)?;

        let gap = single
            .max_ledger_gap()
            .unwrap_or(0.0)
            .max(multi.max_ledger_gap().unwrap_or(0.0));
        let res = single
            .max_grad_residual()
            .unwrap_or(0.0)
            .max(multi.max_grad_residual().unwrap_or(0.0));
        row(
            "ledger vs projection",
            gap <= LEDGER_TOL && res <= RESIDUAL_TOL,
            format!("gap {gap:.3e}, residual {res:.3e}"),
        );
        let soft = single.max_softmax_error().max(multi.max_softmax_error());
        row(
            "softmax normalization",
            soft <= SOFTMAX_TOL,
            format!("max error {soft:.3e}"),
        );

        let sign = single_obs.0.result();
        row("single sign invariance", sign.passed(), share_detail(&sign));
        let zero = single_obs.1.result();
        row("single zero rho", zero.passed(), share_detail(&zero));
        let both = multi_obs.result();
        row("multi both-negative zero rho", both.passed(), share_detail(&both));

        for (name, out, mode) in [
            ("single stage-1 growth", &single, Mode::Single),
            ("multi stage-1 growth", &multi, Mode::Multi),
        ] {
            let ok = stage_one_growth(&out.trace, mode, out.stage_boundary);
            let detail = match out.stage_boundary {
                Some(b) => format!("boundary at step {b}"),
                None => "no boundary, checked whole run".to_string(),
            };
            row(name, ok, detail);
        }
        for (name, out, mode) in [
            ("single scale separation", &single, Mode::Single),
            ("multi scale separation", &multi, Mode::Multi),
        ] {
            let sep = ScaleSeparation::at(out.final_record(), mode);
            row(
                name,
                sep.passed(),
                format!("{:.4} vs {:.4}, ratio {:.3}", sep.leading, sep.trailing, sep.ratio()),
            );
        }
    }
    Ok(VerifyReport { warnings, checks })
}
