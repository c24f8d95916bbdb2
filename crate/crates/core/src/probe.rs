//! Linear probe: how much label information survives quantization.
//!
//! A multinomial softmax classifier is trained on original embeddings and,
//! under the identical split, on reconstructed embeddings. The ratio of the
//! two held-out accuracies is the retention score.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::embed_io::EmbeddingMatrix;
use crate::error::{AsgError, Result};

pub const PROBE_EPOCHS: usize = 500;
pub const PROBE_STEP: f64 = 0.1;
pub const PROBE_L2: f64 = 1e-4;
pub const PROBE_TEST_FRACTION: f64 = 0.2;
const MIN_CLASS_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeResult {
    pub base_accuracy: f64,
    pub quantized_accuracy: f64,
    /// quantized / base.
    pub relative: f64,
}

struct Softmax {
    classes: usize,
    dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Softmax {
    fn scores(&self, x: &[f32], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let w = &self.weights[c * self.dim..(c + 1) * self.dim];
            *o = self.bias[c] + w.iter().zip(x).map(|(&a, &b)| a * b as f64).sum::<f64>();
        }
    }

    fn predict(&self, x: &[f32], buf: &mut [f64]) -> usize {
        self.scores(x, buf);
        let mut best = 0;
        for c in 1..self.classes {
            if buf[c] > buf[best] {
                best = c;
            }
        }
        best
    }

    /// Full-batch gradient descent on mean cross-entropy plus L2 on weights.
    fn fit(features: &EmbeddingMatrix, labels: &[usize], train: &[usize], classes: usize) -> Self {
        let dim = features.cols();
        let mut model = Softmax {
            classes,
            dim,
            weights: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
        };
        let mut grad_w = vec![0.0; classes * dim];
        let mut grad_b = vec![0.0; classes];
        let mut p = vec![0.0; classes];
        let inv_n = 1.0 / train.len() as f64;

        for _ in 0..PROBE_EPOCHS {
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            grad_b.iter_mut().for_each(|g| *g = 0.0);
            for &t in train {
                let x = features.row(t);
                model.scores(x, &mut p);
                let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for v in p.iter_mut() {
                    *v = (*v - max).exp();
                    z += *v;
                }
                for (c, v) in p.iter_mut().enumerate() {
                    *v /= z;
                    if c == labels[t] {
                        *v -= 1.0;
                    }
                    grad_b[c] += *v;
                    for (g, &xi) in grad_w[c * dim..(c + 1) * dim].iter_mut().zip(x) {
                        *g += *v * xi as f64;
                    }
                }
            }
            for (w, g) in model.weights.iter_mut().zip(&grad_w) {
                *w -= PROBE_STEP * (g * inv_n + PROBE_L2 * *w);
            }
            for (b, g) in model.bias.iter_mut().zip(&grad_b) {
                *b -= PROBE_STEP * g * inv_n;
            }
        }
        model
    }

    fn accuracy(&self, features: &EmbeddingMatrix, labels: &[usize], test: &[usize]) -> f64 {
        let mut buf = vec![0.0; self.classes];
        let correct = test
            .iter()
            .filter(|&&t| self.predict(features.row(t), &mut buf) == labels[t])
            .count();
        correct as f64 / test.len() as f64
    }
}

/// Seeded 80/20 split of `0..n` into (train, test).
pub fn probe_split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64 * PROBE_TEST_FRACTION).round() as usize).clamp(1, n - 1);
    let test = idx.split_off(n - n_test);
    (idx, test)
}

pub fn probe_eval(
    original: &EmbeddingMatrix,
    reconstructed: &EmbeddingMatrix,
    labels: &[usize],
    split_seed: u64,
) -> Result<ProbeResult> {
    if original.rows() != reconstructed.rows() || original.cols() != reconstructed.cols() {
        return Err(AsgError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            original.rows(),
            original.cols(),
            reconstructed.rows(),
            reconstructed.cols()
        )));
    }
    if labels.len() != original.rows() {
        return Err(AsgError::InvalidArgument(format!(
            "{} labels for {} rows",
            labels.len(),
            original.rows()
        )));
    }
    let classes = labels.iter().max().map_or(0, |&c| c + 1);
    let mut counts = vec![0usize; classes];
    for &l in labels {
        counts[l] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(AsgError::InvalidArgument(
            "probe needs at least two classes".into(),
        ));
    }
    if let Some(c) = counts.iter().position(|&c| c > 0 && c < MIN_CLASS_SIZE) {
        return Err(AsgError::InvalidArgument(format!(
            "class {c} has {} members, need at least {MIN_CLASS_SIZE}",
            counts[c]
        )));
    }

    let (train, test) = probe_split(labels.len(), split_seed);
    let base = Softmax::fit(original, labels, &train, classes).accuracy(original, labels, &test);
    let quantized =
        Softmax::fit(reconstructed, labels, &train, classes).accuracy(reconstructed, labels, &test);
    Ok(ProbeResult {
        base_accuracy: base,
        quantized_accuracy: quantized,
        relative: quantized / base,
    })
}
