//! Empirical checks of the coefficient dynamics: sign invariance of gamma,
//! inactive noise pairs that never memorize, stage-1 growth, and end-of-run
//! scale separation.
//!
//! The structural lemmas hold with high probability under dimension
//! conditions, so each check reports the fraction of cases that comply and
//! passes above a fixed share.

use serde::Serialize;

use crate::error::Result;
use crate::trainer::{Mode, StepObserver, StepView, TraceRecord};

/// |rho| at or below this counts as exactly zero.
pub const ZERO_TOL: f64 = 1e-12;
pub const SIGN_SHARE: f64 = 0.99;
pub const ZERO_SHARE: f64 = 0.95;
pub const SCALE_RATIO: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShareCheck {
    pub holding: usize,
    pub total: usize,
    pub required: f64,
}

impl ShareCheck {
    pub fn share(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.holding as f64 / self.total as f64
        }
    }

    pub fn passed(&self) -> bool {
        self.share() >= self.required
    }
}

/// gamma_r keeps the sign of ⟨w_r(0), mu⟩ and moves monotonically away from
/// zero, counted over (r, t) pairs with t ≥ 1.
#[derive(Debug, Default)]
pub struct SignInvariance {
    previous: Option<Vec<f64>>,
    holding: usize,
    total: usize,
}

impl StepObserver for SignInvariance {
    fn on_step(&mut self, view: &StepView<'_>) -> Result<()> {
        let c = &view.ledger.primary;
        let gamma = c.gamma.to_vec();
        if let Some(prev) = &self.previous {
            for ((&g, &p), &init) in gamma.iter().zip(prev).zip(c.init_signal_inner().iter()) {
                let ok = if init > 0.0 {
                    g >= 0.0 && g >= p
                } else if init < 0.0 {
                    g <= 0.0 && g <= p
                } else {
                    true
                };
                self.total += 1;
                self.holding += usize::from(ok);
            }
        }
        self.previous = Some(gamma);
        Ok(())
    }
}

impl SignInvariance {
    pub fn result(&self) -> ShareCheck {
        ShareCheck {
            holding: self.holding,
            total: self.total,
            required: SIGN_SHARE,
        }
    }
}

/// Pairs (r, i) whose initial noise activation is negative keep rho = 0 for
/// the whole run. In multi-modal runs only pairs negative in both
/// modalities are tracked, and both rho and rho_tilde must stay zero.
#[derive(Debug, Default)]
pub struct InactiveNoise {
    /// (r, i, still zero) for tracked pairs.
    pairs: Option<Vec<(usize, usize, bool)>>,
}

impl StepObserver for InactiveNoise {
    fn on_step(&mut self, view: &StepView<'_>) -> Result<()> {
        let ledger = view.ledger;
        let c = &ledger.primary;
        let pairs = self.pairs.get_or_insert_with(|| {
            let init = c.init_noise_inner();
            let init_t = ledger.tilde.as_ref().map(|t| t.init_noise_inner());
            let mut out = Vec::new();
            for ((r, i), &v) in init.indexed_iter() {
                let tilde_negative = init_t.is_none_or(|t| t[[r, i]] < 0.0);
                if v < 0.0 && tilde_negative {
                    out.push((r, i, true));
                }
            }
            out
        });
        for (r, i, ok) in pairs.iter_mut() {
            let zero = c.rho[[*r, *i]].abs() <= ZERO_TOL
                && ledger.tilde.as_ref().is_none_or(|t| t.rho[[*r, *i]].abs() <= ZERO_TOL);
            *ok &= zero;
        }
        Ok(())
    }
}

impl InactiveNoise {
    pub fn result(&self) -> ShareCheck {
        let pairs = self.pairs.as_deref().unwrap_or(&[]);
        ShareCheck {
            holding: pairs.iter().filter(|p| p.2).count(),
            total: pairs.len(),
            required: ZERO_SHARE,
        }
    }
}

fn dominant(mode: Mode, r: &TraceRecord) -> f64 {
    match mode {
        Mode::Single => r.max_rho,
        Mode::Multi => r.max_gamma,
    }
}

/// Whether the dominant coefficient strictly increases across logged steps
/// up to and including the stage boundary (the whole trace if it never
/// crosses).
pub fn stage_one_growth(trace: &[TraceRecord], mode: Mode, boundary: Option<usize>) -> bool {
    let stage_one: Vec<f64> = trace
        .iter()
        .take_while(|r| boundary.is_none_or(|b| r.step <= b))
        .map(|r| dominant(mode, r))
        .collect();
    stage_one.windows(2).all(|w| w[1] > w[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaleSeparation {
    /// The quantity that should dominate.
    pub leading: f64,
    /// The quantity it should dominate.
    pub trailing: f64,
}

impl ScaleSeparation {
    /// Single-modal: max psi against max |gamma|. Multi-modal: max gamma
    /// against max psi.
    pub fn at(record: &TraceRecord, mode: Mode) -> Self {
        let max_abs_gamma = record.max_gamma.max(-record.min_gamma);
        match mode {
            Mode::Single => ScaleSeparation {
                leading: record.max_psi,
                trailing: max_abs_gamma,
            },
            Mode::Multi => ScaleSeparation {
                leading: record.max_gamma,
                trailing: record.max_psi,
            },
        }
    }

    pub fn ratio(&self) -> f64 {
        self.leading / self.trailing
    }

    pub fn passed(&self) -> bool {
        self.leading >= SCALE_RATIO * self.trailing
    }
}
