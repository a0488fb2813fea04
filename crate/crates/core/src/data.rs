//! Two-modality signal-plus-noise training data, augmented positives,
//! hard-negative index sets, and the shifted test distribution.
//!
//! Every sample in modality 1 is the pair of patches `[y·mu, xi]`; modality 2
//! is `[y·mu_tilde, xi_tilde]` with the same label. The single-modal positive
//! keeps the signal patch and perturbs the noise patch to `xi + eps`.
//!
//! Gaussian draws use `rand_distr::StandardNormal` (the ZIGNOR ziggurat
//! sampler) on top of a ChaCha8 stream, so a seed reproduces the same dataset
//! on every platform for a fixed `rand_distr` version.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Independent RNG streams derived from a single seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Train = 0,
    Test = 1,
    InitW = 2,
    InitWTilde = 3,
    Negatives = 4,
}

pub fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub d: usize,
    pub d_tilde: usize,
    pub n: usize,
    pub mu: Vec<f64>,
    pub mu_tilde: Vec<f64>,
    pub sigma_xi: f64,
    pub sigma_xi_tilde: f64,
    pub sigma_eps: f64,
    pub nu: Vec<f64>,
    pub sigma_zeta: f64,
    /// Samples per test split (probe and eval each get this many).
    pub n_test: usize,
    pub seed: u64,
}

/// Pads `lead` with zeros to length `len`.
pub fn padded(lead: &[f64], len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    for (dst, src) in v.iter_mut().zip(lead) {
        *dst = *src;
    }
    v
}

impl DataConfig {
    /// Synthetic-experiment values: d = 2000, n = 100, mu = 5·e1,
    /// mu_tilde = 15·e2, eps ~ N(0, 0.01 I), nu = 2·e1, 200 test samples.
    pub fn figure1() -> Self {
        let d = 2000;
        DataConfig {
            d,
            d_tilde: d,
            n: 100,
            mu: padded(&[5.0], d),
            mu_tilde: padded(&[0.0, 15.0], d),
            sigma_xi: 1.0,
            sigma_xi_tilde: 1.0,
            sigma_eps: 0.1,
            nu: padded(&[2.0], d),
            sigma_zeta: 1.0,
            n_test: 100,
            seed: 0,
        }
    }

    /// High-dimensional regime with d ≥ n². The test signal is tilted so that
    /// ⟨nu, mu⟩ = ‖mu‖²/√d while keeping ‖nu‖ = 2.
    pub fn theory() -> Self {
        let d = 4000;
        let n = 20;
        let mu_norm_sq = 25.0;
        let nu_norm = 2.0_f64;
        let along = mu_norm_sq / (d as f64).sqrt() / 5.0;
        let across = (nu_norm * nu_norm - along * along).sqrt();
        DataConfig {
            d,
            d_tilde: d,
            n,
            mu: padded(&[5.0], d),
            mu_tilde: padded(&[0.0, 15.0], d),
            sigma_xi: 1.0,
            sigma_xi_tilde: 1.0,
            sigma_eps: 0.1,
            nu: padded(&[along, across], d),
            sigma_zeta: 1.0,
            n_test: 100,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d_tilde == 0 {
            return Err(Error::Config("patch dimensions must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(Error::Config(format!("n must be at least 2, got {}", self.n)));
        }
        if self.n_test < 2 {
            return Err(Error::Config(format!("n_test must be at least 2, got {}", self.n_test)));
        }
        for (name, v) in [
            ("sigma_xi", self.sigma_xi),
            ("sigma_xi_tilde", self.sigma_xi_tilde),
            ("sigma_eps", self.sigma_eps),
            ("sigma_zeta", self.sigma_zeta),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        for (name, v, len) in [
            ("mu", &self.mu, self.d),
            ("nu", &self.nu, self.d),
            ("mu_tilde", &self.mu_tilde, self.d_tilde),
        ] {
            if v.len() != len {
                return Err(Error::Config(format!(
                    "{name} has length {} but its modality has dimension {len}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("{name} has non-finite entries")));
            }
        }
        Ok(())
    }

    pub fn mu(&self) -> Array1<f64> {
        Array1::from(self.mu.clone())
    }

    pub fn mu_tilde(&self) -> Array1<f64> {
        Array1::from(self.mu_tilde.clone())
    }
}

/// Borrowed view of one training pair.
#[derive(Debug, Clone)]
pub struct PairedSample<'a> {
    pub y: i8,
    pub mu: ArrayView1<'a, f64>,
    pub mu_tilde: ArrayView1<'a, f64>,
    pub noise1: ArrayView1<'a, f64>,
    pub noise2: ArrayView1<'a, f64>,
    pub aug_noise: ArrayView1<'a, f64>,
    pub aug_patch: ArrayView1<'a, f64>,
}

impl PairedSample<'_> {
    pub fn signal1(&self) -> Array1<f64> {
        self.mu.mapv(|v| f64::from(self.y) * v)
    }

    pub fn signal2(&self) -> Array1<f64> {
        self.mu_tilde.mapv(|v| f64::from(self.y) * v)
    }

    /// Noise patch of the augmented positive, `xi + eps`.
    pub fn positive_noise(&self) -> Array1<f64> {
        self.aug_patch.to_owned()
    }
}

/// Training set with noise vectors stored explicitly (they form the basis of
/// the coefficient decomposition).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub labels: Vec<i8>,
    pub mu: Array1<f64>,
    pub mu_tilde: Array1<f64>,
    /// n × d, row i is xi_i.
    pub noise1: Array2<f64>,
    /// n × d_tilde, row i is xi_tilde_i.
    pub noise2: Array2<f64>,
    /// n × d, row i is eps_i.
    pub aug_noise: Array2<f64>,
    /// n × d, row i is xi_i + eps_i.
    pub aug_patch: Array2<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn d(&self) -> usize {
        self.mu.len()
    }

    pub fn d_tilde(&self) -> usize {
        self.mu_tilde.len()
    }

    pub fn sample(&self, i: usize) -> PairedSample<'_> {
        PairedSample {
            y: self.labels[i],
            mu: self.mu.view(),
            mu_tilde: self.mu_tilde.view(),
            noise1: self.noise1.row(i),
            noise2: self.noise2.row(i),
            aug_noise: self.aug_noise.row(i),
            aug_patch: self.aug_patch.row(i),
        }
    }

    pub fn labels_f64(&self) -> Vec<f64> {
        self.labels.iter().map(|&y| f64::from(y)).collect()
    }

    pub fn opposite_count(&self, i: usize) -> usize {
        let yi = self.labels[i];
        self.labels.iter().filter(|&&y| y != yi).count()
    }

    /// Squared norms ‖xi_i‖² per sample.
    pub fn noise1_norms_sq(&self) -> Vec<f64> {
        self.noise1.rows().into_iter().map(|r| r.dot(&r)).collect()
    }

    pub fn noise2_norms_sq(&self) -> Vec<f64> {
        self.noise2.rows().into_iter().map(|r| r.dot(&r)).collect()
    }
}

fn rademacher<R: Rng>(rng: &mut R) -> i8 {
    if rng.gen::<bool>() {
        1
    } else {
        -1
    }
}

fn gaussian_row<R: Rng>(rng: &mut R, len: usize, std: f64) -> impl Iterator<Item = f64> + '_ {
    (0..len).map(move |_| std * rng.sample::<f64, _>(StandardNormal))
}

/// Draws the n training pairs. Per sample the draw order is label, xi, xi_tilde, eps.
pub fn gen_train<R: Rng>(cfg: &DataConfig, rng: &mut R) -> Result<Dataset> {
    cfg.validate()?;
    let (n, d, dt) = (cfg.n, cfg.d, cfg.d_tilde);
    let mut labels = Vec::with_capacity(n);
    let mut noise1 = Array2::zeros((n, d));
    let mut noise2 = Array2::zeros((n, dt));
    let mut aug_noise = Array2::zeros((n, d));
    for i in 0..n {
        labels.push(rademacher(rng));
        for (dst, v) in noise1.row_mut(i).iter_mut().zip(gaussian_row(rng, d, cfg.sigma_xi)) {
            *dst = v;
        }
        for (dst, v) in noise2
            .row_mut(i)
            .iter_mut()
            .zip(gaussian_row(rng, dt, cfg.sigma_xi_tilde))
        {
            *dst = v;
        }
        for (dst, v) in aug_noise.row_mut(i).iter_mut().zip(gaussian_row(rng, d, cfg.sigma_eps)) {
            *dst = v;
        }
    }
    let aug_patch = &noise1 + &aug_noise;
    Ok(Dataset {
        labels,
        mu: cfg.mu(),
        mu_tilde: cfg.mu_tilde(),
        noise1,
        noise2,
        aug_noise,
        aug_patch,
    })
}

/// How many negatives each anchor gets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "m")]
pub enum NegativePolicy {
    /// Every sample with the opposite label.
    #[default]
    AllOpposite,
    /// A fixed number of opposite-label samples per anchor, drawn once.
    Fixed(usize),
}

/// Opposite-label negatives of anchor `i`.
///
/// When `m` equals the number of opposite-label samples the result is all of
/// them in ascending order and `rng` is not touched; otherwise `m` of them
/// are drawn without replacement and returned sorted.
pub fn negatives_for<R: Rng>(i: usize, dataset: &Dataset, m: usize, rng: &mut R) -> Result<Vec<usize>> {
    if i >= dataset.len() {
        return Err(Error::Config(format!(
            "anchor index {i} out of range for {} samples",
            dataset.len()
        )));
    }
    let yi = dataset.labels[i];
    let pool: Vec<usize> = (0..dataset.len()).filter(|&j| dataset.labels[j] != yi).collect();
    if m > pool.len() {
        return Err(Error::Config(format!(
            "anchor {i} needs {m} negatives but only {} samples carry the opposite label",
            pool.len()
        )));
    }
    if m == pool.len() {
        return Ok(pool);
    }
    let mut picked: Vec<usize> = index::sample(rng, pool.len(), m).into_iter().map(|k| pool[k]).collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Negative index sets for every anchor, fixed for the whole run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeSets {
    sets: Vec<Vec<usize>>,
}

impl NegativeSets {
    pub fn build<R: Rng>(dataset: &Dataset, policy: NegativePolicy, rng: &mut R) -> Result<Self> {
        let sets = (0..dataset.len())
            .map(|i| {
                let m = match policy {
                    NegativePolicy::AllOpposite => dataset.opposite_count(i),
                    NegativePolicy::Fixed(m) => m,
                };
                if m == 0 {
                    return Err(Error::Config(format!(
                        "anchor {i} has no opposite-label sample to use as a negative"
                    )));
                }
                negatives_for(i, dataset, m, rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(NegativeSets { sets })
    }

    pub fn from_sets(sets: Vec<Vec<usize>>) -> Self {
        NegativeSets { sets }
    }

    pub fn of(&self, i: usize) -> &[usize] {
        &self.sets[i]
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Mean of log(1 + M_i): the loss of one InfoNCE direction at zero weights.
    pub fn uniform_loss(&self) -> f64 {
        let n = self.sets.len() as f64;
        self.sets.iter().map(|s| (1.0 + s.len() as f64).ln()).sum::<f64>() / n
    }
}

#[derive(Debug, Clone)]
pub struct TestSample {
    pub y: i8,
    pub signal: Array1<f64>,
    pub noise: Array1<f64>,
}

/// One OOD split, stored as matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub labels: Vec<i8>,
    /// n_test × d, row k is y_k·nu.
    pub signal: Array2<f64>,
    /// n_test × d, row k is zeta_k.
    pub noise: Array2<f64>,
}

impl TestSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, k: usize) -> TestSample {
        TestSample {
            y: self.labels[k],
            signal: self.signal.row(k).to_owned(),
            noise: self.noise.row(k).to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestSplits {
    pub probe: TestSet,
    pub eval: TestSet,
}

fn gen_test_set<R: Rng>(cfg: &DataConfig, rng: &mut R) -> TestSet {
    let (k, d) = (cfg.n_test, cfg.d);
    let mut labels = Vec::with_capacity(k);
    let mut signal = Array2::zeros((k, d));
    let mut noise = Array2::zeros((k, d));
    for row in 0..k {
        let y = rademacher(rng);
        labels.push(y);
        for (dst, &v) in signal.row_mut(row).iter_mut().zip(&cfg.nu) {
            *dst = f64::from(y) * v;
        }
        for (dst, v) in noise.row_mut(row).iter_mut().zip(gaussian_row(rng, d, cfg.sigma_zeta)) {
            *dst = v;
        }
    }
    TestSet { labels, signal, noise }
}

/// Probe split first, then eval split, from one stream: the two are
/// independent draws.
pub fn gen_test<R: Rng>(cfg: &DataConfig, rng: &mut R) -> Result<TestSplits> {
    cfg.validate()?;
    let probe = gen_test_set(cfg, rng);
    let eval = gen_test_set(cfg, rng);
    Ok(TestSplits { probe, eval })
}

/// Sanity statistics on a generated training set. Reported, never enforced.
#[derive(Debug, Clone, Serialize)]
pub struct DataDiagnostics {
    pub positives: usize,
    pub label_imbalance: f64,
    pub label_imbalance_bound: f64,
    pub noise_norm_violations: usize,
    pub noise_norm_min: f64,
    pub noise_norm_max: f64,
}

pub fn diagnostics(cfg: &DataConfig, data: &Dataset) -> DataDiagnostics {
    let n = data.len() as f64;
    let positives = data.labels.iter().filter(|&&y| y == 1).count();
    let expected = cfg.sigma_xi * cfg.sigma_xi * cfg.d as f64;
    let norms = data.noise1_norms_sq();
    let violations = norms
        .iter()
        .filter(|&&v| v < expected / 2.0 || v > 1.5 * expected)
        .count();
    DataDiagnostics {
        positives,
        label_imbalance: (positives as f64 - n / 2.0).abs(),
        label_imbalance_bound: (n * 8f64.ln() / 2.0).sqrt(),
        noise_norm_violations: violations,
        noise_norm_min: norms.iter().cloned().fold(f64::INFINITY, f64::min),
        noise_norm_max: norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    }
}
