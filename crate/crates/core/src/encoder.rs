//! One-layer ReLU encoders applied patchwise, without bias.

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};

/// `m × d` weight matrix; row r is neuron r.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    w: Array2<f64>,
}

impl EncoderWeights {
    pub fn new(w: Array2<f64>) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encoder weights"));
        }
        Ok(EncoderWeights { w })
    }

    pub fn zeros(m: usize, d: usize) -> Self {
        EncoderWeights {
            w: Array2::zeros((m, d)),
        }
    }

    pub fn m(&self) -> usize {
        self.w.nrows()
    }

    pub fn d(&self) -> usize {
        self.w.ncols()
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.w.view()
    }

    pub fn matrix_mut(&mut self) -> &mut Array2<f64> {
        &mut self.w
    }

    pub fn row(&self, r: usize) -> ArrayView1<'_, f64> {
        self.w.row(r)
    }

    pub fn max_abs(&self) -> f64 {
        self.w.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// `w ← w − eta·grad`.
    pub fn step(&mut self, grad: &Array2<f64>, eta: f64) {
        self.w.scaled_add(-eta, grad);
    }

    /// Preactivations `⟨w_r, v⟩` for every row of `patches` (k × d) → k × m.
    pub fn preactivations(&self, patches: &ArrayView2<'_, f64>) -> Array2<f64> {
        patches.dot(&self.w.t())
    }

    /// Text checkpoint: a header line `m d step`, then one line per neuron.
    pub fn write_checkpoint<W: Write>(&self, out: &mut W, step: usize) -> Result<()> {
        writeln!(out, "{} {} {}", self.m(), self.d(), step)?;
        for row in self.w.rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(input: R) -> Result<(Self, usize)> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::Config("empty checkpoint".into()))??;
        let parsed: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("bad checkpoint header: {e}")))?;
        let [m, d, step] = parsed[..] else {
            return Err(Error::Config(format!("bad checkpoint header: {header:?}")));
        };
        let mut w = Array2::zeros((m, d));
        for r in 0..m {
            let line = lines
                .next()
                .ok_or_else(|| Error::Config(format!("checkpoint truncated at row {r}")))??;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("bad checkpoint row {r}: {e}")))?;
            check_dim("checkpoint row", d, vals.len())?;
            w.row_mut(r).assign(&Array1::from(vals));
        }
        Ok((EncoderWeights::new(w)?, step))
    }
}

/// Entries i.i.d. N(0, sigma0²), drawn row by row.
pub fn init_weights<R: Rng>(m: usize, d: usize, sigma0: f64, rng: &mut R) -> EncoderWeights {
    let w = Array2::from_shape_simple_fn((m, d), || sigma0 * rng.sample::<f64, _>(StandardNormal));
    EncoderWeights { w }
}

#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// ReLU derivative with the convention σ'(0) = 0.
#[inline]
pub fn relu_gate(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `[σ(⟨w_r, v⟩)]_r`.
pub fn patch_feature(w: &EncoderWeights, v: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    check_dim("patch", w.d(), v.len())?;
    Ok(w.w.dot(&v).mapv(relu))
}

/// A sample made of two patches of the same dimension.
#[derive(Debug, Clone, Copy)]
pub struct TwoPatch<'a> {
    pub first: ArrayView1<'a, f64>,
    pub second: ArrayView1<'a, f64>,
}

impl<'a> TwoPatch<'a> {
    pub fn new(first: ArrayView1<'a, f64>, second: ArrayView1<'a, f64>) -> Self {
        TwoPatch { first, second }
    }
}

/// Embedding `h̄_r(x) = h_r(x¹) + h_r(x²)`.
pub fn embed(w: &EncoderWeights, s: TwoPatch<'_>) -> Result<Array1<f64>> {
    Ok(patch_feature(w, s.first)? + patch_feature(w, s.second)?)
}

/// Embeddings of `k` samples given as two `k × d` patch matrices.
pub fn embed_batch(w: &EncoderWeights, first: ArrayView2<'_, f64>, second: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check_dim("first patch", w.d(), first.ncols())?;
    check_dim("second patch", w.d(), second.ncols())?;
    let a = w.preactivations(&first).mapv(relu);
    let b = w.preactivations(&second).mapv(relu);
    Ok(a + b)
}

/// Patchwise similarity `(1/m)·[⟨f_l(a¹), f_r(b¹)⟩ + ⟨f_l(a²), f_r(b²)⟩]`.
///
/// This is a value-level function; which side carries the derivative is
/// decided in [`crate::loss`].
pub fn sim_value(left: &EncoderWeights, right: &EncoderWeights, a: TwoPatch<'_>, b: TwoPatch<'_>) -> Result<f64> {
    check_dim("encoder width", left.m(), right.m())?;
    let m = left.m() as f64;
    let first = patch_feature(left, a.first)?.dot(&patch_feature(right, b.first)?);
    let second = patch_feature(left, a.second)?.dot(&patch_feature(right, b.second)?);
    Ok((first + second) / m)
}
