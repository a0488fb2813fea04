//! Logistic-regression head on frozen embeddings, and 0-1 evaluation.

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// L2 penalty on the head weights (the bias is not penalized).
    pub lambda: f64,
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            lambda: 1e-4,
            grad_tol: 1e-6,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub w: Array1<f64>,
    pub b: f64,
}

impl LinearHead {
    pub fn score(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.w.dot(&x) + self.b
    }

    pub fn scores(&self, features: ArrayView2<'_, f64>) -> Array1<f64> {
        features.dot(&self.w) + self.b
    }
}

/// Mean logistic loss plus `lambda/2·‖w‖²` and its gradient in (w, b).
fn objective(x: &ArrayView2<'_, f64>, y: &[f64], w: &Array1<f64>, b: f64, lambda: f64) -> (f64, Array1<f64>, f64) {
    let n = y.len() as f64;
    let margins = x.dot(w) + b;
    let mut loss = 0.0;
    let mut coef = Array1::zeros(y.len());
    for (k, (&z, &yk)) in margins.iter().zip(y).enumerate() {
        let t = yk * z;
        // log(1 + e^{-t}) and its derivative, stable in both tails.
        loss += if t > 0.0 {
            (-t).exp().ln_1p()
        } else {
            -t + t.exp().ln_1p()
        };
        let sig = if t > 0.0 {
            let e = (-t).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + t.exp())
        };
        coef[k] = -yk * sig / n;
    }
    let gw = x.t().dot(&coef) + lambda * w;
    let gb = coef.sum();
    (loss / n + 0.5 * lambda * w.dot(w), gw, gb)
}

/// Largest eigenvalue of `[X 1]ᵀ[X 1]` by power iteration from the all-ones vector.
fn gram_spectral_norm(x: &ArrayView2<'_, f64>) -> f64 {
    let p = x.ncols();
    let mut v = Array1::<f64>::ones(p + 1);
    let mut lambda = 0.0;
    for _ in 0..200 {
        let xv = x.dot(&v.slice(ndarray::s![..p])) + v[p];
        let mut next = Array1::zeros(p + 1);
        next.slice_mut(ndarray::s![..p]).assign(&x.t().dot(&xv));
        next[p] = xv.sum();
        let norm = next.dot(&next).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm / v.dot(&v).sqrt();
        v = next / norm;
    }
    lambda
}

/// Fits the head by full-batch gradient descent from zero with step
/// `1/L`, `L = ‖[X 1]‖²/(4n) + lambda`.
pub fn fit_probe(features: ArrayView2<'_, f64>, labels: &[i8], cfg: &ProbeConfig) -> Result<LinearHead> {
    check_dim("probe labels", features.nrows(), labels.len())?;
    if labels.len() < 2 {
        return Err(Error::Config("probe needs at least two samples".into()));
    }
    if !labels.contains(&1) {
        return Err(Error::SingleClass(-1));
    }
    if !labels.contains(&-1) {
        return Err(Error::SingleClass(1));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("probe features"));
    }
    let y: Vec<f64> = labels.iter().map(|&v| f64::from(v)).collect();
    let n = y.len() as f64;
    let lipschitz = gram_spectral_norm(&features) / (4.0 * n) + cfg.lambda;
    let lr = 1.0 / lipschitz;
    let mut w = Array1::zeros(features.ncols());
    let mut b = 0.0;
    for _ in 0..cfg.max_iter {
        let (_, gw, gb) = objective(&features, &y, &w, b, cfg.lambda);
        if (gw.dot(&gw) + gb * gb).sqrt() <= cfg.grad_tol {
            break;
        }
        w.scaled_add(-lr, &gw);
        b -= lr * gb;
    }
    Ok(LinearHead { w, b })
}

/// Regularized training objective of a head, for diagnostics and tests.
pub fn probe_objective(head: &LinearHead, features: ArrayView2<'_, f64>, labels: &[i8], lambda: f64) -> f64 {
    let y: Vec<f64> = labels.iter().map(|&v| f64::from(v)).collect();
    objective(&features, &y, &head.w, head.b, lambda).0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZeroOne {
    pub error: f64,
    pub accuracy: f64,
}

/// Fraction of samples with `y·f(x) ≤ 0`; a zero score counts as an error.
pub fn eval_01(head: &LinearHead, features: ArrayView2<'_, f64>, labels: &[i8]) -> Result<ZeroOne> {
    check_dim("eval labels", features.nrows(), labels.len())?;
    check_dim("eval features", head.w.len(), features.ncols())?;
    let scores = head.scores(features);
    let wrong = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &y)| f64::from(y) * s <= 0.0)
        .count();
    let error = wrong as f64 / labels.len().max(1) as f64;
    Ok(ZeroOne {
        error,
        accuracy: 1.0 - error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{rng_for, Stream};
    use crate::encoder::init_weights;
    use ndarray::{array, Array2};

    #[test]
    fn separable_1d() {
        let x = array![[-1.0], [-1.0], [1.0], [1.0]];
        let y = [-1, -1, 1, 1];
        let head = fit_probe(x.view(), &y, &ProbeConfig::default()).unwrap();
        assert_eq!(eval_01(&head, x.view(), &y).unwrap().accuracy, 1.0);
    }

    #[test]
    fn uninformative_features_give_flat_head() {
        let x = Array2::from_elem((10, 1), 1.0);
        let y = [1, 1, 1, 1, 1, 1, -1, -1, -1, -1];
        let head = fit_probe(x.view(), &y, &ProbeConfig::default()).unwrap();
        // w and b both see the same constant column, so only their sum is pinned.
        let acc = eval_01(&head, x.view(), &y).unwrap().accuracy;
        assert!((acc - 0.6).abs() < 1e-12);
        let zero_feature = Array2::zeros((10, 1));
        let head = fit_probe(zero_feature.view(), &y, &ProbeConfig::default()).unwrap();
        assert!(head.w[0].abs() < 1e-12);
        assert!((head.b - (0.6f64 / 0.4).ln()).abs() < 1e-5);
    }

    #[test]
    fn single_class_rejected() {
        let x = array![[1.0], [2.0]];
        assert!(matches!(
            fit_probe(x.view(), &[1, 1], &ProbeConfig::default()),
            Err(Error::SingleClass(1))
        ));
    }

    #[test]
    fn perfect_and_flipped_heads() {
        let x = array![[2.0, 0.0], [-1.0, 0.5], [3.0, 1.0], [-2.0, -1.0]];
        let y = [1, -1, 1, -1];
        let good = LinearHead {
            w: array![1.0, 0.0],
            b: 0.0,
        };
        assert_eq!(eval_01(&good, x.view(), &y).unwrap().error, 0.0);
        let bad = LinearHead {
            w: array![-1.0, 0.0],
            b: 0.0,
        };
        assert_eq!(eval_01(&bad, x.view(), &y).unwrap().error, 1.0);
        let flat = LinearHead {
            w: array![0.0, 0.0],
            b: 0.0,
        };
        assert_eq!(eval_01(&flat, x.view(), &y).unwrap().error, 1.0);
    }

    #[test]
    fn accuracy_invariant_under_permutation() {
        let x = init_weights(30, 4, 1.0, &mut rng_for(1, Stream::Test))
            .matrix()
            .to_owned();
        let y: Vec<i8> = (0..30)
            .map(|k| if x[[k, 0]] + 0.3 * x[[k, 2]] > 0.0 { 1 } else { -1 })
            .collect();
        let head = LinearHead {
            w: array![1.0, 0.2, 0.1, -0.3],
            b: 0.05,
        };
        let base = eval_01(&head, x.view(), &y).unwrap().accuracy;
        let perm: Vec<usize> = (0..30).map(|k| (k * 7) % 30).collect();
        let xp = Array2::from_shape_fn((30, 4), |(r, c)| x[[perm[r], c]]);
        let yp: Vec<i8> = perm.iter().map(|&k| y[k]).collect();
        assert_eq!(eval_01(&head, xp.view(), &yp).unwrap().accuracy, base);
    }

    /// Newton / IRLS on the same regularized objective, as an independent solver.
    fn irls(x: &Array2<f64>, y: &[i8], lambda: f64) -> LinearHead {
        let (n, p) = x.dim();
        let mut theta = vec![0.0; p + 1];
        for _ in 0..100 {
            let mut grad = vec![0.0; p + 1];
            let mut hess = vec![vec![0.0; p + 1]; p + 1];
            for k in 0..n {
                let mut row: Vec<f64> = x.row(k).to_vec();
                row.push(1.0);
                let z: f64 = row.iter().zip(&theta).map(|(a, b)| a * b).sum();
                let yk = f64::from(y[k]);
                let s = 1.0 / (1.0 + (yk * z).exp());
                let pr = 1.0 / (1.0 + (-z).exp());
                for a in 0..=p {
                    grad[a] += -yk * s * row[a] / n as f64;
                    for b in 0..=p {
                        hess[a][b] += pr * (1.0 - pr) * row[a] * row[b] / n as f64;
                    }
                }
            }
            for a in 0..p {
                grad[a] += lambda * theta[a];
                hess[a][a] += lambda;
            }
            // Solve hess · step = grad by Gaussian elimination.
            let mut aug: Vec<Vec<f64>> = hess
                .iter()
                .zip(&grad)
                .map(|(r, g)| {
                    let mut r = r.clone();
                    r.push(*g);
                    r
                })
                .collect();
            let k = p + 1;
            for c in 0..k {
                let piv = (c..k)
                    .max_by(|&a, &b| aug[a][c].abs().total_cmp(&aug[b][c].abs()))
                    .unwrap();
                aug.swap(c, piv);
                for r in c + 1..k {
                    let f = aug[r][c] / aug[c][c];
                    for q in c..=k {
                        aug[r][q] -= f * aug[c][q];
                    }
                }
            }
            let mut step = vec![0.0; k];
            for c in (0..k).rev() {
                let tail: f64 = (c + 1..k).map(|q| aug[c][q] * step[q]).sum();
                step[c] = (aug[c][k] - tail) / aug[c][c];
            }
            for a in 0..k {
                theta[a] -= step[a];
            }
        }
        LinearHead {
            w: Array1::from(theta[..p].to_vec()),
            b: theta[p],
        }
    }

    #[test]
    fn agrees_with_newton_solver() {
        let x = init_weights(20, 5, 1.0, &mut rng_for(3, Stream::Test))
            .matrix()
            .to_owned();
        let noise = init_weights(1, 20, 1.0, &mut rng_for(4, Stream::Test))
            .matrix()
            .to_owned();
        let y: Vec<i8> = (0..20)
            .map(|k| {
                if x[[k, 0]] - 0.5 * x[[k, 1]] + noise[[0, k]] > 0.0 {
                    1
                } else {
                    -1
                }
            })
            .collect();
        let cfg = ProbeConfig::default();
        let gd = fit_probe(x.view(), &y, &cfg).unwrap();
        let newton = irls(&x, &y, cfg.lambda);
        let eval = init_weights(200, 5, 1.0, &mut rng_for(5, Stream::Test))
            .matrix()
            .to_owned();
        let a = gd.scores(eval.view());
        let b = newton.scores(eval.view());
        for (sa, sb) in a.iter().zip(b.iter()) {
            assert_eq!(sa.signum(), sb.signum());
        }
        assert!(
            probe_objective(&gd, x.view(), &y, cfg.lambda) - probe_objective(&newton, x.view(), &y, cfg.lambda) < 1e-8
        );
    }
}
