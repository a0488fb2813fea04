//! Stop-gradient InfoNCE objectives and their closed-form gradients.
//!
//! In every similarity one factor is live (it carries the derivative) and the
//! other sits under stop-gradient. For the single-modal loss the anchor's
//! features are live and the positive/negative features are frozen. For the
//! multi-modal loss the h-centered direction differentiates W with g frozen,
//! and the g-centered direction differentiates W̃ with h frozen.
//!
//! Because each similarity is linear in the live features, the gradient row
//! of neuron r is a combination of the signal direction and the training
//! noise vectors only:
//!
//! ```text
//! ∇_{w_r} L = s_r · mu + Σ_i c_{r,i} · xi_i
//! ```
//!
//! The scalars `s_r` and `c_{r,i}` are returned as [`Prefactors`] so the
//! coefficient ledger can integrate them without projecting.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::data::{Dataset, NegativeSets};
use crate::encoder::{relu, relu_gate, EncoderWeights};
use crate::error::{check_dim, Error, Result};

/// Positive and negative similarities of every anchor in one InfoNCE direction.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityTable {
    pub pos: Vec<f64>,
    pub neg: Vec<Vec<f64>>,
    pub tau: f64,
}

/// Softmax weights: `pos[i]` = ℓ'_i, `neg[i][k]` = ℓ'_{i,j} for the k-th negative.
#[derive(Debug, Clone, PartialEq)]
pub struct LossDerivatives {
    pub pos: Vec<f64>,
    pub neg: Vec<Vec<f64>>,
}

impl LossDerivatives {
    /// max_i |ℓ'_i + Σ_j ℓ'_{i,j} − 1|.
    pub fn normalization_error(&self) -> f64 {
        self.pos
            .iter()
            .zip(&self.neg)
            .map(|(p, row)| (p + row.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn mean_pos(&self) -> f64 {
        self.pos.iter().sum::<f64>() / self.pos.len() as f64
    }
}

/// Softmax of the positive against its negatives at temperature τ, with
/// max-subtraction.
pub fn loss_derivatives(table: &SimilarityTable) -> Result<LossDerivatives> {
    if !(table.tau > 0.0 && table.tau.is_finite()) {
        return Err(Error::Config(format!(
            "temperature must be positive, got {}",
            table.tau
        )));
    }
    check_dim("negative rows", table.pos.len(), table.neg.len())?;
    let mut pos = Vec::with_capacity(table.pos.len());
    let mut neg = Vec::with_capacity(table.neg.len());
    for (&p, row) in table.pos.iter().zip(&table.neg) {
        let (lp, lrow, _) = softmax_row(p, row, table.tau)?;
        pos.push(lp);
        neg.push(lrow);
    }
    Ok(LossDerivatives { pos, neg })
}

/// Returns (ℓ'_i, [ℓ'_{i,j}], −log ℓ'_i).
fn softmax_row(pos: f64, neg: &[f64], tau: f64) -> Result<(f64, Vec<f64>, f64)> {
    if !pos.is_finite() || neg.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("similarity table"));
    }
    let top = neg.iter().fold(pos / tau, |acc, &v| acc.max(v / tau));
    let e_pos = (pos / tau - top).exp();
    let e_neg: Vec<f64> = neg.iter().map(|&v| (v / tau - top).exp()).collect();
    let z = e_pos + e_neg.iter().sum::<f64>();
    let nll = z.ln() + top - pos / tau;
    Ok((e_pos / z, e_neg.into_iter().map(|e| e / z).collect(), nll))
}

/// Dataset, fixed negative sets and temperature.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub data: &'a Dataset,
    pub negatives: &'a NegativeSets,
    pub tau: f64,
}

impl<'a> Objective<'a> {
    pub fn new(data: &'a Dataset, negatives: &'a NegativeSets, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {tau}")));
        }
        check_dim("negative sets", data.len(), negatives.len())?;
        Ok(Objective { data, negatives, tau })
    }
}

/// Scalar coefficients of one gradient: `signal[r]` multiplies mu and
/// `noise[[r, i]]` multiplies xi_i in row r.
#[derive(Debug, Clone, PartialEq)]
pub struct Prefactors {
    pub signal: Array1<f64>,
    pub noise: Array2<f64>,
}

impl Prefactors {
    fn zeros(m: usize, n: usize) -> Self {
        Prefactors {
            signal: Array1::zeros(m),
            noise: Array2::zeros((m, n)),
        }
    }

    /// `signal ⊗ mu + noise · Xi`.
    pub fn assemble(&self, mu: &Array1<f64>, noise_basis: &ArrayView2<'_, f64>) -> Array2<f64> {
        let mut grad = self.noise.dot(noise_basis);
        for (mut row, &s) in grad.axis_iter_mut(Axis(0)).zip(self.signal.iter()) {
            row.scaled_add(s, mu);
        }
        grad
    }
}

/// Gradients for one or both encoders together with their prefactors.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    pub grad_w: Array2<f64>,
    pub grad_w_tilde: Option<Array2<f64>>,
    pub prefactors: Prefactors,
    pub prefactors_tilde: Option<Prefactors>,
}

/// Loss value, softmax tables and gradient from a single pass.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    /// One entry for single-modal; h-centered then g-centered for multi-modal.
    pub derivatives: Vec<LossDerivatives>,
    pub tables: Vec<SimilarityTable>,
    pub grad: GradientPair,
}

impl Evaluation {
    pub fn normalization_error(&self) -> f64 {
        self.derivatives
            .iter()
            .map(LossDerivatives::normalization_error)
            .fold(0.0, f64::max)
    }

    /// Mean ℓ'_i over anchors and directions.
    pub fn mean_pos_weight(&self) -> f64 {
        let k = self.derivatives.len() as f64;
        self.derivatives.iter().map(LossDerivatives::mean_pos).sum::<f64>() / k
    }
}

/// ReLU features of one encoder on the training patches.
struct PatchFeatures {
    signal: Array2<f64>,
    signal_gate: Array2<f64>,
    noise: Array2<f64>,
    noise_gate: Array2<f64>,
    /// Features of `xi + eps`; only the single-modal positive uses them.
    aug: Option<Array2<f64>>,
}

impl PatchFeatures {
    fn compute(
        w: &EncoderWeights,
        signal: &Array1<f64>,
        labels: &[i8],
        noise: &Array2<f64>,
        aug: Option<&Array2<f64>>,
    ) -> Result<Self> {
        check_dim("signal patch", w.d(), signal.len())?;
        check_dim("noise patch", w.d(), noise.ncols())?;
        let along_signal = w.matrix().dot(signal);
        let (n, m) = (labels.len(), w.m());
        let mut sig_pre = Array2::zeros((n, m));
        for (i, &y) in labels.iter().enumerate() {
            let y = f64::from(y);
            for r in 0..m {
                sig_pre[[i, r]] = y * along_signal[r];
            }
        }
        let noise_pre = w.preactivations(&noise.view());
        Ok(PatchFeatures {
            signal: sig_pre.mapv(relu),
            signal_gate: sig_pre.mapv(relu_gate),
            noise: noise_pre.mapv(relu),
            noise_gate: noise_pre.mapv(relu_gate),
            aug: aug.map(|a| w.preactivations(&a.view()).mapv(relu)),
        })
    }
}

/// Output of one InfoNCE direction: loss, table, and ∂loss/∂(live feature)
/// per anchor already scaled by 1/(n·m·τ).
struct DirectionResult {
    loss: f64,
    table: SimilarityTable,
    derivatives: LossDerivatives,
    d_signal: Array2<f64>,
    d_noise: Array2<f64>,
}

/// One InfoNCE direction. Anchor i's live features are paired with frozen
/// partner features: signal row i and `frozen_pos_noise` row i for the
/// positive, signal/noise rows j for each negative j.
fn direction(
    live: &PatchFeatures,
    frozen: &PatchFeatures,
    frozen_pos_noise: &Array2<f64>,
    negatives: &NegativeSets,
    tau: f64,
) -> Result<DirectionResult> {
    let (n, m) = live.signal.dim();
    check_dim("encoder width", m, frozen.signal.ncols())?;
    let mf = m as f64;
    let scale = 1.0 / (n as f64 * mf * tau);

    let cross = live.signal.dot(&frozen.signal.t()) + live.noise.dot(&frozen.noise.t());
    let mut pos = Vec::with_capacity(n);
    let mut neg = Vec::with_capacity(n);
    for i in 0..n {
        let p = live.signal.row(i).dot(&frozen.signal.row(i)) + live.noise.row(i).dot(&frozen_pos_noise.row(i));
        pos.push(p / mf);
        neg.push(negatives.of(i).iter().map(|&j| cross[[i, j]] / mf).collect::<Vec<_>>());
    }
    let table = SimilarityTable { pos, neg, tau };

    let mut loss = 0.0;
    let mut lpos = Vec::with_capacity(n);
    let mut lneg = Vec::with_capacity(n);
    let mut d_signal = Array2::zeros((n, m));
    let mut d_noise = Array2::zeros((n, m));
    for i in 0..n {
        let (lp, lrow, nll) = softmax_row(table.pos[i], &table.neg[i], tau)?;
        loss += nll;
        let mut ds = d_signal.row_mut(i);
        ds.scaled_add(-(1.0 - lp), &frozen.signal.row(i));
        for (&j, &l) in negatives.of(i).iter().zip(&lrow) {
            ds.scaled_add(l, &frozen.signal.row(j));
        }
        ds *= scale;
        let mut dn = d_noise.row_mut(i);
        dn.scaled_add(-(1.0 - lp), &frozen_pos_noise.row(i));
        for (&j, &l) in negatives.of(i).iter().zip(&lrow) {
            dn.scaled_add(l, &frozen.noise.row(j));
        }
        dn *= scale;
        lpos.push(lp);
        lneg.push(lrow);
    }
    Ok(DirectionResult {
        loss: loss / n as f64,
        table,
        derivatives: LossDerivatives { pos: lpos, neg: lneg },
        d_signal,
        d_noise,
    })
}

/// Chain rule through the live ReLU gates.
fn prefactors(live: &PatchFeatures, dir: &DirectionResult, labels: &[i8]) -> Prefactors {
    let (n, m) = live.signal.dim();
    let mut out = Prefactors::zeros(m, n);
    for (i, &y) in labels.iter().enumerate() {
        let y = f64::from(y);
        for r in 0..m {
            out.signal[r] += dir.d_signal[[i, r]] * live.signal_gate[[i, r]] * y;
            out.noise[[r, i]] = dir.d_noise[[i, r]] * live.noise_gate[[i, r]];
        }
    }
    out
}

fn single_features(w: &EncoderWeights, data: &Dataset) -> Result<PatchFeatures> {
    PatchFeatures::compute(w, &data.mu, &data.labels, &data.noise1, Some(&data.aug_patch))
}

fn modality1(w: &EncoderWeights, data: &Dataset) -> Result<PatchFeatures> {
    PatchFeatures::compute(w, &data.mu, &data.labels, &data.noise1, None)
}

fn modality2(w: &EncoderWeights, data: &Dataset) -> Result<PatchFeatures> {
    PatchFeatures::compute(w, &data.mu_tilde, &data.labels, &data.noise2, None)
}

fn single_direction(
    live: &EncoderWeights,
    frozen: &EncoderWeights,
    obj: &Objective<'_>,
) -> Result<(PatchFeatures, DirectionResult)> {
    let lf = single_features(live, obj.data)?;
    let ff = if std::ptr::eq(live, frozen) {
        None
    } else {
        Some(single_features(frozen, obj.data)?)
    };
    let fr = ff.as_ref().unwrap_or(&lf);
    let aug = fr
        .aug
        .as_ref()
        .expect("single-modal features carry the augmented patch");
    let dir = direction(&lf, fr, aug, obj.negatives, obj.tau)?;
    Ok((lf, dir))
}

/// Single-modal loss.
pub fn loss_single(w: &EncoderWeights, obj: &Objective<'_>) -> Result<f64> {
    Ok(single_direction(w, w, obj)?.1.loss)
}

/// Single-modal loss, tables and analytic gradient.
pub fn evaluate_single(w: &EncoderWeights, obj: &Objective<'_>) -> Result<Evaluation> {
    let (lf, dir) = single_direction(w, w, obj)?;
    let pre = prefactors(&lf, &dir, &obj.data.labels);
    let grad_w = pre.assemble(&obj.data.mu, &obj.data.noise1.view());
    Ok(Evaluation {
        loss: dir.loss,
        derivatives: vec![dir.derivatives],
        tables: vec![dir.table],
        grad: GradientPair {
            grad_w,
            grad_w_tilde: None,
            prefactors: pre,
            prefactors_tilde: None,
        },
    })
}

pub fn grad_single(w: &EncoderWeights, obj: &Objective<'_>) -> Result<GradientPair> {
    Ok(evaluate_single(w, obj)?.grad)
}

struct MultiPass {
    h_live: PatchFeatures,
    g_live: PatchFeatures,
    h_dir: DirectionResult,
    g_dir: DirectionResult,
}

fn multi_pass(
    live: (&EncoderWeights, &EncoderWeights),
    frozen: (&EncoderWeights, &EncoderWeights),
    obj: &Objective<'_>,
) -> Result<MultiPass> {
    let h_live = modality1(live.0, obj.data)?;
    let g_live = modality2(live.1, obj.data)?;
    let h_frozen = if std::ptr::eq(live.0, frozen.0) {
        None
    } else {
        Some(modality1(frozen.0, obj.data)?)
    };
    let g_frozen = if std::ptr::eq(live.1, frozen.1) {
        None
    } else {
        Some(modality2(frozen.1, obj.data)?)
    };
    let hf = h_frozen.as_ref().unwrap_or(&h_live);
    let gf = g_frozen.as_ref().unwrap_or(&g_live);
    let h_dir = direction(&h_live, gf, &gf.noise, obj.negatives, obj.tau)?;
    let g_dir = direction(&g_live, hf, &hf.noise, obj.negatives, obj.tau)?;
    Ok(MultiPass {
        h_live,
        g_live,
        h_dir,
        g_dir,
    })
}

/// Sum of the h-centered and g-centered InfoNCE terms.
pub fn loss_multi(w: &EncoderWeights, w_tilde: &EncoderWeights, obj: &Objective<'_>) -> Result<f64> {
    let pass = multi_pass((w, w_tilde), (w, w_tilde), obj)?;
    Ok(pass.h_dir.loss + pass.g_dir.loss)
}

/// Multi-modal loss, both tables and the gradients of both encoders.
pub fn evaluate_multi(w: &EncoderWeights, w_tilde: &EncoderWeights, obj: &Objective<'_>) -> Result<Evaluation> {
    let pass = multi_pass((w, w_tilde), (w, w_tilde), obj)?;
    let labels = &obj.data.labels;
    let pre = prefactors(&pass.h_live, &pass.h_dir, labels);
    let pre_tilde = prefactors(&pass.g_live, &pass.g_dir, labels);
    let grad_w = pre.assemble(&obj.data.mu, &obj.data.noise1.view());
    let grad_w_tilde = pre_tilde.assemble(&obj.data.mu_tilde, &obj.data.noise2.view());
    Ok(Evaluation {
        loss: pass.h_dir.loss + pass.g_dir.loss,
        derivatives: vec![pass.h_dir.derivatives, pass.g_dir.derivatives],
        tables: vec![pass.h_dir.table, pass.g_dir.table],
        grad: GradientPair {
            grad_w,
            grad_w_tilde: Some(grad_w_tilde),
            prefactors: pre,
            prefactors_tilde: Some(pre_tilde),
        },
    })
}

pub fn grad_multi(w: &EncoderWeights, w_tilde: &EncoderWeights, obj: &Objective<'_>) -> Result<GradientPair> {
    Ok(evaluate_multi(w, w_tilde, obj)?.grad)
}

/// Weights of one model: a single encoder or the (h, g) pair.
#[derive(Debug, Clone, Copy)]
pub enum ModelWeights<'a> {
    Single(&'a EncoderWeights),
    Multi(&'a EncoderWeights, &'a EncoderWeights),
}

/// The loss with every stop-gradient argument evaluated at `frozen`.
///
/// Equals the true loss when `live == frozen`; its derivative in `live` is
/// the analytic gradient, which makes the stop-gradient checkable with
/// finite differences.
pub fn surrogate_loss(live: ModelWeights<'_>, frozen: ModelWeights<'_>, obj: &Objective<'_>) -> Result<f64> {
    match (live, frozen) {
        (ModelWeights::Single(l), ModelWeights::Single(f)) => {
            check_same_shape(l, f)?;
            Ok(single_direction(l, f, obj)?.1.loss)
        }
        (ModelWeights::Multi(l, lt), ModelWeights::Multi(f, ft)) => {
            check_same_shape(l, f)?;
            check_same_shape(lt, ft)?;
            let pass = multi_pass((l, lt), (f, ft), obj)?;
            Ok(pass.h_dir.loss + pass.g_dir.loss)
        }
        _ => Err(Error::Config(
            "live and frozen weights must both be single or both multi".into(),
        )),
    }
}

fn check_same_shape(a: &EncoderWeights, b: &EncoderWeights) -> Result<()> {
    check_dim("frozen encoder rows", a.m(), b.m())?;
    check_dim("frozen encoder columns", a.d(), b.d())
}
