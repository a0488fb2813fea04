//! Full-batch gradient descent for the single-modal and multi-modal
//! objectives, with coefficient tracking, trace recording and periodic probe
//! refits.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{
    gen_test, gen_train, rng_for, DataConfig, Dataset, NegativePolicy, NegativeSets, Stream, TestSplits,
};
use crate::encoder::{embed_batch, init_weights, EncoderWeights};
use crate::error::{Error, Result};
use crate::ledger::{CoefficientLedger, Coefficients, Decomposition, SpanProjector};
use crate::loss::{evaluate_multi, evaluate_single, Evaluation, Objective};
use crate::probe::{eval_01, fit_probe, ProbeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Single,
    Multi,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Single => "single",
            Mode::Multi => "multi",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Mode::Single),
            "multi" => Ok(Mode::Multi),
            other => Err(Error::Config(format!(
                "unknown mode {other:?}, expected single or multi"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub data: DataConfig,
    pub m: usize,
    pub sigma0: f64,
    pub eta: f64,
    pub tau: f64,
    /// Full-batch steps.
    pub epochs: usize,
    pub negatives: NegativePolicy,
    pub probe_every: usize,
    pub log_every: usize,
    pub mode: Mode,
    pub seed: u64,
    pub probe: ProbeConfig,
    /// Θ(1) level the dominant coefficient must reach to end stage 1.
    pub stage_threshold: f64,
    /// Cross-check the ledger against least-squares projection at logged steps.
    pub check_projection: bool,
}

impl TrainConfig {
    pub fn figure1(mode: Mode) -> Self {
        TrainConfig {
            data: DataConfig::figure1(),
            m: 50,
            sigma0: 0.01,
            eta: 0.01,
            tau: 1.0,
            epochs: 200,
            negatives: NegativePolicy::AllOpposite,
            probe_every: 10,
            log_every: 10,
            mode,
            seed: 0,
            probe: ProbeConfig::default(),
            stage_threshold: 1.0,
            check_projection: true,
        }
    }

    pub fn theory(mode: Mode) -> Self {
        TrainConfig {
            data: DataConfig::theory(),
            ..TrainConfig::figure1(mode)
        }
    }

    /// Uses `seed` for the data, the test splits and the initialization.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.data.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        if self.m == 0 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be finite and >= 0, got {}", self.eta)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.sigma0 >= 0.0 && self.sigma0.is_finite()) {
            return Err(Error::Config(format!("sigma0 must be >= 0, got {}", self.sigma0)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.log_every == 0 || self.probe_every == 0 {
            return Err(Error::Config("log_every and probe_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Coefficient whose crossing of `stage_threshold` ends stage 1.
    pub fn dominant(&self, r: &TraceRecord) -> f64 {
        match self.mode {
            Mode::Single => r.max_rho,
            Mode::Multi => r.max_gamma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub loss: f64,
    pub max_gamma: f64,
    pub min_gamma: f64,
    pub max_rho: f64,
    pub max_psi: f64,
    pub ell_pos_mean: f64,
    pub probe_accuracy: Option<f64>,
    pub stage: u8,
    pub max_gamma_tilde: Option<f64>,
    pub max_rho_tilde: Option<f64>,
    /// max |ℓ'_i + Σ_j ℓ'_{i,j} − 1| at this step.
    pub softmax_error: f64,
    /// Relative gap between accumulated and projected coefficients.
    pub ledger_gap: Option<f64>,
    /// Max relative residual of gradient rows outside the mu/xi span.
    pub grad_residual: Option<f64>,
}

impl TraceRecord {
    pub const HEADER: [&'static str; 14] = [
        "step",
        "loss",
        "max_gamma",
        "min_gamma",
        "max_rho",
        "max_psi",
        "ell_pos_mean",
        "probe_accuracy",
        "stage",
        "max_gamma_tilde",
        "max_rho_tilde",
        "softmax_error",
        "ledger_gap",
        "grad_residual",
    ];

    /// CSV fields with shortest round-trip float formatting; absent values are empty.
    pub fn csv_fields(&self) -> Vec<String> {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        vec![
            self.step.to_string(),
            self.loss.to_string(),
            self.max_gamma.to_string(),
            self.min_gamma.to_string(),
            self.max_rho.to_string(),
            self.max_psi.to_string(),
            self.ell_pos_mean.to_string(),
            opt(self.probe_accuracy),
            self.stage.to_string(),
            opt(self.max_gamma_tilde),
            opt(self.max_rho_tilde),
            self.softmax_error.to_string(),
            opt(self.ledger_gap),
            opt(self.grad_residual),
        ]
    }
}

/// State handed to observers before the update of step `step` is applied.
pub struct StepView<'a> {
    pub step: usize,
    pub mode: Mode,
    pub w: &'a EncoderWeights,
    pub w_tilde: Option<&'a EncoderWeights>,
    pub eval: &'a Evaluation,
    pub ledger: &'a CoefficientLedger,
    pub eta: f64,
}

/// Hooks into the training loop. `on_step` sees every iterate (including the
/// final one, which is not followed by an update); `on_record` sees each
/// trace row as soon as it is produced.
pub trait StepObserver {
    fn on_step(&mut self, _view: &StepView<'_>) -> Result<()> {
        Ok(())
    }

    fn on_record(&mut self, _record: &TraceRecord) -> Result<()> {
        Ok(())
    }
}

impl StepObserver for () {}

impl<A: StepObserver, B: StepObserver> StepObserver for (A, B) {
    fn on_step(&mut self, view: &StepView<'_>) -> Result<()> {
        self.0.on_step(view)?;
        self.1.on_step(view)
    }

    fn on_record(&mut self, record: &TraceRecord) -> Result<()> {
        self.0.on_record(record)?;
        self.1.on_record(record)
    }
}

impl<T: StepObserver + ?Sized> StepObserver for &mut T {
    fn on_step(&mut self, view: &StepView<'_>) -> Result<()> {
        (**self).on_step(view)
    }

    fn on_record(&mut self, record: &TraceRecord) -> Result<()> {
        (**self).on_record(record)
    }
}

/// Everything derived from a config before the first step.
pub struct Setup {
    pub data: Dataset,
    pub negatives: NegativeSets,
    pub test: TestSplits,
    pub w0: EncoderWeights,
    pub w0_tilde: Option<EncoderWeights>,
}

impl Setup {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let data = gen_train(&cfg.data, &mut rng_for(cfg.data.seed, Stream::Train))?;
        let negatives = NegativeSets::build(&data, cfg.negatives, &mut rng_for(cfg.data.seed, Stream::Negatives))?;
        let test = gen_test(&cfg.data, &mut rng_for(cfg.data.seed, Stream::Test))?;
        let w0 = init_weights(cfg.m, cfg.data.d, cfg.sigma0, &mut rng_for(cfg.seed, Stream::InitW));
        let w0_tilde = match cfg.mode {
            Mode::Single => None,
            Mode::Multi => Some(init_weights(
                cfg.m,
                cfg.data.d_tilde,
                cfg.sigma0,
                &mut rng_for(cfg.seed, Stream::InitWTilde),
            )),
        };
        Ok(Setup {
            data,
            negatives,
            test,
            w0,
            w0_tilde,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub w: EncoderWeights,
    pub w_tilde: Option<EncoderWeights>,
    pub w0: EncoderWeights,
    pub w0_tilde: Option<EncoderWeights>,
    pub ledger: CoefficientLedger,
    pub trace: Vec<TraceRecord>,
    pub initial_loss: f64,
    /// Loss of one InfoNCE direction at zero weights, mean of log(1 + M_i).
    pub uniform_loss: f64,
    pub stage_boundary: Option<usize>,
    /// max |ℓ'_i + Σ_j ℓ'_{i,j} − 1| over every step, logged or not.
    pub softmax_error: f64,
}

impl TrainOutcome {
    pub fn final_record(&self) -> &TraceRecord {
        self.trace.last().expect("trace always has the final row")
    }

    pub fn final_loss(&self) -> f64 {
        self.final_record().loss
    }

    pub fn final_accuracy(&self) -> f64 {
        self.final_record().probe_accuracy.unwrap_or(f64::NAN)
    }

    pub fn max_softmax_error(&self) -> f64 {
        self.softmax_error
    }

    pub fn max_ledger_gap(&self) -> Option<f64> {
        self.trace.iter().filter_map(|r| r.ledger_gap).reduce(f64::max)
    }

    pub fn max_grad_residual(&self) -> Option<f64> {
        self.trace.iter().filter_map(|r| r.grad_residual).reduce(f64::max)
    }
}

/// Probe accuracy of the modality-1 encoder on the OOD splits.
pub fn probe_accuracy(w: &EncoderWeights, test: &TestSplits, cfg: &ProbeConfig) -> Result<f64> {
    let fit = embed_batch(w, test.probe.signal.view(), test.probe.noise.view())?;
    let head = fit_probe(fit.view(), &test.probe.labels, cfg)?;
    let eval = embed_batch(w, test.eval.signal.view(), test.eval.noise.view())?;
    Ok(eval_01(&head, eval.view(), &test.eval.labels)?.accuracy)
}

struct ProjectionCheck {
    primary: SpanProjector,
    tilde: Option<SpanProjector>,
}

impl ProjectionCheck {
    fn gap(&self, proj: &SpanProjector, w: &EncoderWeights, w0: &EncoderWeights, coeffs: &Coefficients) -> Result<f64> {
        let delta = &w.matrix() - &w0.matrix();
        let dec = Decomposition::from_projection(&proj.project(delta.view())?);
        Ok(dec.relative_gap(coeffs))
    }

    fn residual(proj: &SpanProjector, grad: ArrayView2<'_, f64>) -> Result<f64> {
        Ok(proj.project(grad)?.max_relative_residual())
    }
}

pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(cfg, &mut ())
}

/// Runs `cfg.epochs` full-batch steps. Row `t` of the trace describes the
/// iterate `W(t)`; the last row is the final iterate `W(epochs)`.
pub fn train_with(cfg: &TrainConfig, observer: &mut dyn StepObserver) -> Result<TrainOutcome> {
    let setup = Setup::new(cfg)?;
    train_from(cfg, &setup, observer)
}

pub fn train_from(cfg: &TrainConfig, setup: &Setup, observer: &mut dyn StepObserver) -> Result<TrainOutcome> {
    cfg.validate()?;
    let data = &setup.data;
    let obj = Objective::new(data, &setup.negatives, cfg.tau)?;
    let mut w = setup.w0.clone();
    let mut w_tilde = setup.w0_tilde.clone();
    let primary = Coefficients::new(&w, &data.mu, &data.noise1.view())?;
    let tilde = match &w_tilde {
        Some(wt) => Some(Coefficients::new(wt, &data.mu_tilde, &data.noise2.view())?),
        None => None,
    };
    let mut ledger = CoefficientLedger::new(primary, tilde);
    let projection = if cfg.check_projection {
        Some(ProjectionCheck {
            primary: SpanProjector::new(data.mu.view(), data.noise1.view())?,
            tilde: match cfg.mode {
                Mode::Multi => Some(SpanProjector::new(data.mu_tilde.view(), data.noise2.view())?),
                Mode::Single => None,
            },
        })
    } else {
        None
    };

    let mut trace = Vec::new();
    let mut initial_loss = f64::NAN;
    let mut stage: u8 = 1;
    let mut boundary = None;
    let mut softmax_error: f64 = 0.0;
    for step in 0..=cfg.epochs {
        let evaluated = match &w_tilde {
            None => evaluate_single(&w, &obj),
            Some(wt) => evaluate_multi(&w, wt, &obj),
        };
        let max_abs_weight = || w_tilde.as_ref().map_or(w.max_abs(), |wt| w.max_abs().max(wt.max_abs()));
        let eval = match evaluated {
            Ok(e) => e,
            Err(Error::NonFinite(_)) => {
                return Err(Error::Diverged {
                    step,
                    loss: f64::NAN,
                    max_abs_weight: max_abs_weight(),
                })
            }
            Err(e) => return Err(e),
        };
        if step == 0 {
            initial_loss = eval.loss;
        }
        softmax_error = softmax_error.max(eval.normalization_error());
        if !eval.loss.is_finite() || eval.loss > 10.0 * initial_loss {
            return Err(Error::Diverged {
                step,
                loss: eval.loss,
                max_abs_weight: max_abs_weight(),
            });
        }

        observer.on_step(&StepView {
            step,
            mode: cfg.mode,
            w: &w,
            w_tilde: w_tilde.as_ref(),
            eval: &eval,
            ledger: &ledger,
            eta: cfg.eta,
        })?;

        let last = step == cfg.epochs;
        if step % cfg.log_every == 0 || last {
            let summary = ledger.summarize();
            let probe = if step % cfg.probe_every == 0 || last {
                Some(probe_accuracy(&w, &setup.test, &cfg.probe)?)
            } else {
                None
            };
            let (ledger_gap, grad_residual) = match &projection {
                Some(p) => {
                    let mut gap = p.gap(&p.primary, &w, &setup.w0, &ledger.primary)?;
                    let mut res = ProjectionCheck::residual(&p.primary, eval.grad.grad_w.view())?;
                    if let (Some(pt), Some(wt), Some(w0t), Some(ct), Some(gt)) = (
                        &p.tilde,
                        &w_tilde,
                        &setup.w0_tilde,
                        &ledger.tilde,
                        &eval.grad.grad_w_tilde,
                    ) {
                        gap = gap.max(p.gap(pt, wt, w0t, ct)?);
                        res = res.max(ProjectionCheck::residual(pt, gt.view())?);
                    }
                    (Some(gap), Some(res))
                }
                None => (None, None),
            };
            let mut record = TraceRecord {
                step,
                loss: eval.loss,
                max_gamma: summary.primary.max_gamma,
                min_gamma: -summary.primary.max_neg_gamma,
                max_rho: summary.primary.max_rho,
                max_psi: summary.primary.max_psi,
                ell_pos_mean: eval.mean_pos_weight(),
                probe_accuracy: probe,
                stage,
                max_gamma_tilde: summary.tilde.map(|t| t.max_gamma),
                max_rho_tilde: summary.tilde.map(|t| t.max_rho),
                softmax_error: eval.normalization_error(),
                ledger_gap,
                grad_residual,
            };
            if boundary.is_none() && cfg.dominant(&record) >= cfg.stage_threshold {
                boundary = Some(step);
                stage = 2;
                record.stage = 2;
            }
            observer.on_record(&record)?;
            trace.push(record);
        }

        if !last {
            w.step(&eval.grad.grad_w, cfg.eta);
            if let (Some(wt), Some(gt)) = (w_tilde.as_mut(), eval.grad.grad_w_tilde.as_ref()) {
                wt.step(gt, cfg.eta);
            }
            ledger.accumulate(
                step,
                &eval.grad.prefactors,
                eval.grad.prefactors_tilde.as_ref(),
                cfg.eta,
            )?;
        }
    }

    Ok(TrainOutcome {
        w,
        w_tilde,
        w0: setup.w0.clone(),
        w0_tilde: setup.w0_tilde.clone(),
        ledger,
        trace,
        initial_loss,
        uniform_loss: setup.negatives.uniform_loss(),
        stage_boundary: boundary,
        softmax_error,
    })
}

/// First logged step whose dominant coefficient reaches `threshold`.
pub fn detect_stage_boundary(trace: &[TraceRecord], mode: Mode, threshold: f64) -> Option<usize> {
    trace
        .iter()
        .find(|r| {
            let v = match mode {
                Mode::Single => r.max_rho,
                Mode::Multi => r.max_gamma,
            };
            v >= threshold
        })
        .map(|r| r.step)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Warn,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionItem {
    pub name: &'static str,
    pub value: f64,
    /// Reading of `value` that counts as satisfied.
    pub expect: &'static str,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub items: Vec<AssumptionItem>,
}

impl AssumptionReport {
    pub fn get(&self, name: &str) -> Option<&AssumptionItem> {
        self.items.iter().find(|i| i.name == name)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &AssumptionItem> {
        self.items.iter().filter(|i| i.status == Status::Warn)
    }
}

/// Scale conditions of the theory, each as a raw ratio. Hidden constants
/// make these advisory: a ratio on the wrong side of 1 is a warning.
pub fn check_assumptions(cfg: &TrainConfig) -> AssumptionReport {
    let dc = &cfg.data;
    let d = dc.d as f64;
    let n = dc.n as f64;
    let m = cfg.m as f64;
    let mu = dc.mu.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mu_t = dc.mu_tilde.iter().map(|v| v * v).sum::<f64>().sqrt();
    let sx = dc.sigma_xi;
    let s0 = cfg.sigma0;
    let snr = mu / (sx * d.sqrt());

    let at_least = |name, value: f64, bound: f64, expect| AssumptionItem {
        name,
        value,
        expect,
        status: if value >= bound { Status::Pass } else { Status::Warn },
    };
    let at_most = |name, value: f64, bound: f64, expect| AssumptionItem {
        name,
        value,
        expect,
        status: if value <= bound { Status::Pass } else { Status::Warn },
    };
    let items = vec![
        AssumptionItem {
            name: "snr",
            value: snr,
            expect: "reported",
            status: Status::Pass,
        },
        AssumptionItem {
            name: "n_snr_sq",
            value: n * snr * snr,
            expect: "order one, within [0.1, 10]",
            status: if (0.1..=10.0).contains(&(n * snr * snr)) {
                Status::Pass
            } else {
                Status::Warn
            },
        },
        at_least("d_over_n_sq", d / (n * n), 1.0, ">= 1"),
        at_least("d_over_n_per_sigma0_sigma_xi", d * s0 * sx / n, 1.0, ">= 1"),
        at_least("d_over_inv_sigma0_sq_mu_sq", d * s0 * s0 * mu * mu, 1.0, ">= 1"),
        at_most("eta_over_m_per_mu_sq", cfg.eta * mu * mu / m, 1.0, "<= 1"),
        at_most(
            "eta_over_nm_per_sigma_xi_sq_d",
            cfg.eta * sx * sx * d / (n * m),
            1.0,
            "<= 1",
        ),
        at_most(
            "sigma0_times_max_noise_signal",
            s0 * (sx * d.sqrt()).max(mu),
            1.0,
            "<= 1",
        ),
        at_most("sigma_eps_over_mu", dc.sigma_eps / mu, 1.0, "<= 1"),
        at_most("sigma_eps_over_sigma_xi", dc.sigma_eps / sx, 1.0, "<= 1"),
        at_least("c_mu", mu_t / mu, 2.66, ">= 2.66"),
    ];
    AssumptionReport { items }
}

/// Embeddings of both test splits under `w`, for external analysis.
pub fn test_embeddings(w: &EncoderWeights, test: &TestSplits) -> Result<(Array2<f64>, Array2<f64>)> {
    Ok((
        embed_batch(w, test.probe.signal.view(), test.probe.noise.view())?,
        embed_batch(w, test.eval.signal.view(), test.eval.noise.view())?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::padded;

    pub(crate) fn small(mode: Mode) -> TrainConfig {
        let d = 60;
        TrainConfig {
            data: DataConfig {
                d,
                d_tilde: d,
                n: 6,
                mu: padded(&[3.0], d),
                mu_tilde: padded(&[0.0, 6.0], d),
                sigma_xi: 1.0,
                sigma_xi_tilde: 1.0,
                sigma_eps: 0.1,
                nu: padded(&[2.0], d),
                sigma_zeta: 1.0,
                n_test: 20,
                seed: 3,
            },
            m: 4,
            sigma0: 0.1,
            eta: 0.5,
            tau: 1.0,
            epochs: 30,
            negatives: NegativePolicy::AllOpposite,
            probe_every: 10,
            log_every: 5,
            mode,
            seed: 3,
            probe: ProbeConfig::default(),
            stage_threshold: 1.0,
            check_projection: true,
        }
    }

    fn record(step: usize, max_rho: f64) -> TraceRecord {
        TraceRecord {
            step,
            loss: 1.0,
            max_gamma: 0.0,
            min_gamma: 0.0,
            max_rho,
            max_psi: max_rho,
            ell_pos_mean: 0.5,
            probe_accuracy: None,
            stage: 1,
            max_gamma_tilde: None,
            max_rho_tilde: None,
            softmax_error: 0.0,
            ledger_gap: None,
            grad_residual: None,
        }
    }

    #[test]
    fn boundary_is_first_crossing() {
        let trace: Vec<_> = [0.1, 0.5, 1.2, 2.0]
            .iter()
            .enumerate()
            .map(|(k, &v)| record(10 * k, v))
            .collect();
        assert_eq!(detect_stage_boundary(&trace, Mode::Single, 1.0), Some(20));
        let flat: Vec<_> = (0..4).map(|k| record(10 * k, 0.0)).collect();
        assert_eq!(detect_stage_boundary(&flat, Mode::Single, 1.0), None);
        assert_eq!(detect_stage_boundary(&flat, Mode::Multi, 1.0), None);
    }

    #[test]
    fn zero_learning_rate_keeps_init() {
        for mode in [Mode::Single, Mode::Multi] {
            let mut cfg = small(mode);
            cfg.eta = 0.0;
            let out = train(&cfg).unwrap();
            assert_eq!(out.w, out.w0);
            assert_eq!(out.w_tilde, out.w0_tilde);
            assert!(out.ledger.primary.gamma.iter().all(|&v| v == 0.0));
            assert!(out.ledger.primary.rho.iter().all(|&v| v == 0.0));
            assert_eq!(out.ledger.step(), cfg.epochs);
        }
    }

    #[test]
    fn trace_steps_increase_and_end_at_final() {
        let cfg = small(Mode::Multi);
        let out = train(&cfg).unwrap();
        let steps: Vec<usize> = out.trace.iter().map(|r| r.step).collect();
        assert!(steps.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*steps.last().unwrap(), cfg.epochs);
        assert!(out.final_record().probe_accuracy.is_some());
        assert!(out.trace.iter().all(|r| r.max_gamma_tilde.is_some()));
    }

    #[test]
    fn bad_configs_rejected() {
        let mut cfg = small(Mode::Single);
        cfg.epochs = 0;
        assert!(train(&cfg).is_err());
        let mut cfg = small(Mode::Single);
        cfg.tau = 0.0;
        assert!(train(&cfg).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let mut cfg = small(Mode::Single);
        cfg.eta = 1e6;
        cfg.sigma0 = 1.0;
        match train(&cfg) {
            Err(Error::Diverged { step, .. }) => assert!(step >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("single".parse::<Mode>().unwrap(), Mode::Single);
        assert_eq!("multi".parse::<Mode>().unwrap(), Mode::Multi);
        assert!("both".parse::<Mode>().is_err());
    }

    #[test]
    fn figure1_assumptions() {
        let report = check_assumptions(&TrainConfig::figure1(Mode::Multi));
        let snr = report.get("snr").unwrap().value;
        assert!((snr - 5.0 / 2000f64.sqrt()).abs() < 1e-15);
        assert!((snr - 0.1118).abs() < 1e-4);
        assert!((report.get("n_snr_sq").unwrap().value - 1.25).abs() < 1e-12);
        let c_mu = report.get("c_mu").unwrap();
        assert!((c_mu.value - 3.0).abs() < 1e-15);
        assert_eq!(c_mu.status, Status::Pass);
        let dn = report.get("d_over_n_sq").unwrap();
        assert!((dn.value - 0.2).abs() < 1e-15);
        assert_eq!(dn.status, Status::Warn);
    }

    #[test]
    fn theory_assumptions_pass_dimension_check() {
        let report = check_assumptions(&TrainConfig::theory(Mode::Single));
        let dn = report.get("d_over_n_sq").unwrap();
        assert!((dn.value - 10.0).abs() < 1e-12);
        assert_eq!(dn.status, Status::Pass);
    }
}
