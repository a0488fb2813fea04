//! Central finite differences of the stop-gradient surrogate, compared with
//! the closed-form gradients.

use ndarray::Array2;
use serde::Serialize;

use crate::data::{gen_train, padded, rng_for, DataConfig, NegativePolicy, NegativeSets, Stream};
use crate::encoder::{init_weights, EncoderWeights};
use crate::error::Result;
use crate::loss::{grad_multi, grad_single, surrogate_loss, ModelWeights, Objective};
use crate::trainer::Mode;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Acceptable relative error between analytic and numeric gradients.
pub const FD_TOLERANCE: f64 = 1e-5;

/// Numeric gradient of `f` at `w`, perturbing one entry at a time.
pub fn central_difference<F>(w: &EncoderWeights, h: f64, mut f: F) -> Result<Array2<f64>>
where
    F: FnMut(&EncoderWeights) -> Result<f64>,
{
    let (m, d) = (w.m(), w.d());
    let mut out = Array2::zeros((m, d));
    let mut probe = w.clone();
    for r in 0..m {
        for k in 0..d {
            let orig = probe.matrix()[[r, k]];
            probe.matrix_mut()[[r, k]] = orig + h;
            let up = f(&probe)?;
            probe.matrix_mut()[[r, k]] = orig - h;
            let down = f(&probe)?;
            probe.matrix_mut()[[r, k]] = orig;
            out[[r, k]] = (up - down) / (2.0 * h);
        }
    }
    Ok(out)
}

/// ‖a − b‖ / max(‖a‖, ‖b‖), 0 when both vanish.
pub fn relative_error(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let diff = (a - b).mapv(|v| v * v).sum().sqrt();
    let scale = a.mapv(|v| v * v).sum().sqrt().max(b.mapv(|v| v * v).sum().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Shape of a random gradient-check problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Instance {
    pub d: usize,
    pub n: usize,
    pub m: usize,
    pub negatives: usize,
    pub tau: f64,
    pub sigma0: f64,
    pub seed: u64,
}

impl Instance {
    pub fn small(seed: u64) -> Self {
        Instance {
            d: 8,
            n: 4,
            m: 3,
            negatives: 2,
            tau: 1.0,
            sigma0: 1.0,
            seed,
        }
    }

    /// Varies the shape within d ≤ 16, n ≤ 6, m ≤ 4, M ≤ 3 by seed. Labels
    /// alternate, so M never exceeds n/2.
    pub fn varied(seed: u64) -> Self {
        let n = [4, 6][(seed % 2) as usize];
        Instance {
            d: 8 + (seed as usize * 3) % 9,
            n,
            m: 2 + (seed as usize) % 3,
            negatives: 1 + (seed as usize / 2) % (n / 2),
            tau: [1.0, 0.5, 2.0][(seed % 3) as usize],
            sigma0: 1.0,
            seed,
        }
    }
}

/// Adds `delta` to one analytic gradient entry before comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fault {
    pub row: usize,
    pub col: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheck {
    pub instance: Instance,
    pub mode: Mode,
    pub rel_error_w: f64,
    pub rel_error_w_tilde: Option<f64>,
}

impl GradCheck {
    pub fn max_error(&self) -> f64 {
        self.rel_error_w.max(self.rel_error_w_tilde.unwrap_or(0.0))
    }

    pub fn passed(&self) -> bool {
        self.max_error() <= FD_TOLERANCE
    }
}

/// Builds the instance, then compares analytic and numeric gradients.
/// Labels alternate so every anchor has n/2 opposite-label candidates.
pub fn check_instance(inst: Instance, mode: Mode, fault: Option<Fault>) -> Result<GradCheck> {
    let cfg = DataConfig {
        d: inst.d,
        d_tilde: inst.d,
        n: inst.n,
        mu: padded(&[2.0], inst.d),
        mu_tilde: padded(&[0.0, 3.0], inst.d),
        sigma_xi: 1.0,
        sigma_xi_tilde: 1.0,
        sigma_eps: 0.3,
        nu: padded(&[1.0], inst.d),
        sigma_zeta: 1.0,
        n_test: 2,
        seed: inst.seed,
    };
    let mut data = gen_train(&cfg, &mut rng_for(inst.seed, Stream::Train))?;
    data.labels = (0..inst.n).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
    let negs = NegativeSets::build(
        &data,
        NegativePolicy::Fixed(inst.negatives),
        &mut rng_for(inst.seed, Stream::Negatives),
    )?;
    let obj = Objective::new(&data, &negs, inst.tau)?;
    let w = init_weights(inst.m, inst.d, inst.sigma0, &mut rng_for(inst.seed, Stream::InitW));
    let inject = |g: &mut Array2<f64>| {
        if let Some(f) = fault {
            g[[f.row, f.col]] += f.delta;
        }
    };

    match mode {
        Mode::Single => {
            let mut analytic = grad_single(&w, &obj)?.grad_w;
            inject(&mut analytic);
            let numeric = central_difference(&w, FD_STEP, |live| {
                surrogate_loss(ModelWeights::Single(live), ModelWeights::Single(&w), &obj)
            })?;
            Ok(GradCheck {
                instance: inst,
                mode,
                rel_error_w: relative_error(&analytic, &numeric),
                rel_error_w_tilde: None,
            })
        }
        Mode::Multi => {
            let wt = init_weights(inst.m, inst.d, inst.sigma0, &mut rng_for(inst.seed, Stream::InitWTilde));
            let g = grad_multi(&w, &wt, &obj)?;
            let mut analytic = g.grad_w;
            inject(&mut analytic);
            let analytic_t = g.grad_w_tilde.expect("multi-modal gradient has both encoders");
            let numeric = central_difference(&w, FD_STEP, |live| {
                surrogate_loss(ModelWeights::Multi(live, &wt), ModelWeights::Multi(&w, &wt), &obj)
            })?;
            let numeric_t = central_difference(&wt, FD_STEP, |live| {
                surrogate_loss(ModelWeights::Multi(&w, live), ModelWeights::Multi(&w, &wt), &obj)
            })?;
            Ok(GradCheck {
                instance: inst,
                mode,
                rel_error_w: relative_error(&analytic, &numeric),
                rel_error_w_tilde: Some(relative_error(&analytic_t, &numeric_t)),
            })
        }
    }
}
