//! Signal-learning / noise-memorization decomposition of the weights.
//!
//! Every neuron evolves as
//!
//! ```text
//! w_r(t) = w_r(0) + gamma_r(t)·mu/‖mu‖² + Σ_i rho_{r,i}(t)·xi_i/‖xi_i‖²
//! ```
//!
//! The ledger integrates gamma and rho from the gradient prefactors step by
//! step. [`SpanProjector`] recovers the same coefficients independently by
//! least squares on `w(t) − w(0)`; the two must agree to round-off.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::Serialize;

use crate::encoder::EncoderWeights;
use crate::error::{check_dim, Error, Result};
use crate::loss::Prefactors;

/// Coefficients of one encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    /// gamma_r, length m.
    pub gamma: Array1<f64>,
    /// rho_{r,i}, m × n.
    pub rho: Array2<f64>,
    mu_norm_sq: f64,
    noise_norms_sq: Vec<f64>,
    /// ⟨w_r(0), xi_i⟩, m × n.
    init_noise_inner: Array2<f64>,
    /// ⟨w_r(0), mu⟩, length m.
    init_signal_inner: Array1<f64>,
}

impl Coefficients {
    pub fn new(w0: &EncoderWeights, mu: &Array1<f64>, noise: &ArrayView2<'_, f64>) -> Result<Self> {
        check_dim("signal", w0.d(), mu.len())?;
        check_dim("noise", w0.d(), noise.ncols())?;
        let (m, n) = (w0.m(), noise.nrows());
        Ok(Coefficients {
            gamma: Array1::zeros(m),
            rho: Array2::zeros((m, n)),
            mu_norm_sq: mu.dot(mu),
            noise_norms_sq: noise.rows().into_iter().map(|r| r.dot(&r)).collect(),
            init_noise_inner: w0.matrix().dot(&noise.t()),
            init_signal_inner: w0.matrix().dot(mu),
        })
    }

    fn accumulate(&mut self, pre: &Prefactors, eta: f64) -> Result<()> {
        check_dim("signal prefactors", self.gamma.len(), pre.signal.len())?;
        check_dim("noise prefactor rows", self.rho.nrows(), pre.noise.nrows())?;
        check_dim("noise prefactor columns", self.rho.ncols(), pre.noise.ncols())?;
        self.gamma.scaled_add(-eta * self.mu_norm_sq, &pre.signal);
        for (i, mut col) in self.rho.axis_iter_mut(Axis(1)).enumerate() {
            col.scaled_add(-eta * self.noise_norms_sq[i], &pre.noise.column(i));
        }
        Ok(())
    }

    /// ρ_{r,i} + ⟨w_r(0), ξ_i⟩.
    pub fn psi(&self) -> Array2<f64> {
        &self.rho + &self.init_noise_inner
    }

    pub fn init_noise_inner(&self) -> &Array2<f64> {
        &self.init_noise_inner
    }

    pub fn init_signal_inner(&self) -> &Array1<f64> {
        &self.init_signal_inner
    }

    /// `w(0) + gamma·mu/‖mu‖² + Σ rho·xi/‖xi‖²`.
    pub fn reconstruct(&self, w0: &EncoderWeights, mu: &Array1<f64>, noise: &ArrayView2<'_, f64>) -> Array2<f64> {
        let mut scaled_rho = self.rho.clone();
        for (i, mut col) in scaled_rho.axis_iter_mut(Axis(1)).enumerate() {
            col /= self.noise_norms_sq[i];
        }
        let mut w = w0.matrix().to_owned() + scaled_rho.dot(noise);
        for (mut row, &g) in w.axis_iter_mut(Axis(0)).zip(self.gamma.iter()) {
            row.scaled_add(g / self.mu_norm_sq, mu);
        }
        w
    }

    pub fn summary(&self) -> CoefficientSummary {
        let psi = self.psi();
        CoefficientSummary {
            max_gamma: max_or_zero(self.gamma.iter()),
            max_neg_gamma: max_or_zero(self.gamma.iter().map(|g| -g)),
            mean_abs_gamma: self.gamma.iter().map(|g| g.abs()).sum::<f64>() / self.gamma.len().max(1) as f64,
            max_rho: max_or_zero(self.rho.iter()),
            max_psi: max_or_zero(psi.iter()),
        }
    }
}

fn max_or_zero<I>(it: I) -> f64
where
    I: IntoIterator,
    I::Item: std::borrow::Borrow<f64>,
{
    use std::borrow::Borrow;
    let mut out: Option<f64> = None;
    for v in it {
        let v = *v.borrow();
        out = Some(out.map_or(v, |o: f64| o.max(v)));
    }
    out.unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoefficientSummary {
    pub max_gamma: f64,
    pub max_neg_gamma: f64,
    pub mean_abs_gamma: f64,
    pub max_rho: f64,
    pub max_psi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedgerSummary {
    pub step: usize,
    #[serde(flatten)]
    pub primary: CoefficientSummary,
    pub tilde: Option<CoefficientSummary>,
}

/// gamma/rho for the modality-1 encoder and, in multi-modal runs, the
/// modality-2 encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientLedger {
    pub primary: Coefficients,
    pub tilde: Option<Coefficients>,
    step: usize,
}

impl CoefficientLedger {
    pub fn new(primary: Coefficients, tilde: Option<Coefficients>) -> Self {
        CoefficientLedger {
            primary,
            tilde,
            step: 0,
        }
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// Adds one gradient step taken at `step` with learning rate `eta`.
    pub fn accumulate(
        &mut self,
        step: usize,
        pre: &Prefactors,
        pre_tilde: Option<&Prefactors>,
        eta: f64,
    ) -> Result<()> {
        if step != self.step {
            return Err(Error::StepMismatch {
                ledger: self.step,
                gradient: step,
            });
        }
        match (&mut self.tilde, pre_tilde) {
            (Some(t), Some(p)) => t.accumulate(p, eta)?,
            (None, None) => {}
            (Some(_), None) => return Err(Error::Config("multi-modal ledger needs modality-2 prefactors".into())),
            (None, Some(_)) => return Err(Error::Config("single-modal ledger got modality-2 prefactors".into())),
        }
        self.primary.accumulate(pre, eta)?;
        self.step += 1;
        Ok(())
    }

    pub fn summarize(&self) -> LedgerSummary {
        LedgerSummary {
            step: self.step,
            primary: self.primary.summary(),
            tilde: self.tilde.as_ref().map(Coefficients::summary),
        }
    }
}

/// Least-squares coefficients and residual of rows against a span.
#[derive(Debug, Clone)]
pub struct Projection {
    /// k × (n+1): column 0 multiplies the first basis vector, column i+1 the (i+1)-th.
    pub coefficients: Array2<f64>,
    pub residual_norms: Vec<f64>,
    pub row_norms: Vec<f64>,
}

impl Projection {
    /// max_r ‖residual_r‖ / ‖row_r‖, with zero rows counting as zero.
    pub fn max_relative_residual(&self) -> f64 {
        self.residual_norms
            .iter()
            .zip(&self.row_norms)
            .map(|(&res, &norm)| if norm > 0.0 { res / norm } else { res })
            .fold(0.0, f64::max)
    }
}

/// QR factorization of the basis `{mu/‖mu‖², xi_1/‖xi_1‖², …}`, reused across
/// projections.
pub struct SpanProjector {
    basis: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    condition: f64,
}

const CONDITION_LIMIT: f64 = 1e12;

impl SpanProjector {
    pub fn new(mu: ArrayView1<'_, f64>, noise: ArrayView2<'_, f64>) -> Result<Self> {
        check_dim("noise", mu.len(), noise.ncols())?;
        let (d, n) = (mu.len(), noise.nrows());
        let k = n + 1;
        let mu_sq = mu.dot(&mu);
        let norms: Vec<f64> = noise.rows().into_iter().map(|r| r.dot(&r)).collect();
        let basis = DMatrix::from_fn(d, k, |row, col| {
            if col == 0 {
                mu[row] / mu_sq
            } else {
                noise[[col - 1, row]] / norms[col - 1]
            }
        });
        if d < k || basis.iter().any(|v| !v.is_finite()) {
            return Err(Error::RankDeficient {
                condition: f64::INFINITY,
            });
        }
        let qr = basis.clone().qr();
        let q = qr.q();
        let r = qr.r();
        let diag: Vec<f64> = (0..k).map(|j| r[(j, j)].abs()).collect();
        let hi = diag.iter().cloned().fold(0.0, f64::max);
        let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if condition > CONDITION_LIMIT {
            return Err(Error::RankDeficient { condition });
        }
        Ok(SpanProjector { basis, q, r, condition })
    }

    /// Ratio of the largest to smallest |R_jj| of the basis QR.
    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    /// Projects each row of `rows` (k × d) onto the span.
    pub fn project(&self, rows: ArrayView2<'_, f64>) -> Result<Projection> {
        check_dim("projected rows", self.basis.nrows(), rows.ncols())?;
        let (k, d) = rows.dim();
        let targets = DMatrix::from_fn(d, k, |row, col| rows[[col, row]]);
        let qt_v = self.q.transpose() * &targets;
        let coef = self.r.solve_upper_triangular(&qt_v).ok_or(Error::RankDeficient {
            condition: self.condition,
        })?;
        let fitted = &self.basis * &coef;
        let residual = &targets - fitted;
        let nb = self.basis.ncols();
        Ok(Projection {
            coefficients: Array2::from_shape_fn((k, nb), |(r, c)| coef[(c, r)]),
            residual_norms: residual.column_iter().map(|c| c.norm()).collect(),
            row_norms: targets.column_iter().map(|c| c.norm()).collect(),
        })
    }
}

/// Coefficients recovered by least squares.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub gamma: Array1<f64>,
    pub rho: Array2<f64>,
    pub residual_norms: Vec<f64>,
}

impl Decomposition {
    pub fn from_projection(p: &Projection) -> Self {
        Decomposition {
            gamma: p.coefficients.column(0).to_owned(),
            rho: p.coefficients.slice(ndarray::s![.., 1..]).to_owned(),
            residual_norms: p.residual_norms.clone(),
        }
    }

    /// ‖(gamma, rho) − (gamma', rho')‖ / max of the two norms; 0 when both vanish.
    pub fn relative_gap(&self, c: &Coefficients) -> f64 {
        let diff = (&self.gamma - &c.gamma).mapv(|v| v * v).sum() + (&self.rho - &c.rho).mapv(|v| v * v).sum();
        let a = self.gamma.mapv(|v| v * v).sum() + self.rho.mapv(|v| v * v).sum();
        let b = c.gamma.mapv(|v| v * v).sum() + c.rho.mapv(|v| v * v).sum();
        let scale = a.max(b).sqrt();
        if scale == 0.0 {
            0.0
        } else {
            diff.sqrt() / scale
        }
    }
}

/// Solves `w_t − w_0 ≈ gamma·mu/‖mu‖² + Σ rho_i·xi_i/‖xi_i‖²` row by row.
pub fn project_decompose(
    w_t: &EncoderWeights,
    w_0: &EncoderWeights,
    mu: ArrayView1<'_, f64>,
    noise: ArrayView2<'_, f64>,
) -> Result<Decomposition> {
    check_dim("weight rows", w_0.m(), w_t.m())?;
    check_dim("weight columns", w_0.d(), w_t.d())?;
    let projector = SpanProjector::new(mu, noise)?;
    let delta = &w_t.matrix() - &w_0.matrix();
    Ok(Decomposition::from_projection(&projector.project(delta.view())?))
}
