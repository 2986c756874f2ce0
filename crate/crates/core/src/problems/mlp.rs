use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{estimate_constants, Problem, ProblemConstants, ProblemError, Sample};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub width: usize,
    pub dataset_size: usize,
    /// Probability that a training label is replaced by a different class.
    pub label_noise: f64,
    pub input_dim: usize,
    pub classes: usize,
    pub batch_size: usize,
    /// Within-class standard deviation; class means are standard normal.
    pub cluster_std: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            width: 64,
            dataset_size: 2048,
            label_noise: 0.0,
            input_dim: 4,
            classes: 4,
            batch_size: 32,
            cluster_std: 1.0,
        }
    }
}

/// Two-layer tanh network `softmax(W₂ tanh(W₁ x))` on Gaussian clusters.
/// Only the hidden matrix `W₁` (width × input_dim) is optimized; `W₂` stays
/// at its random initialization.
#[derive(Debug, Clone)]
pub struct TinyMlp {
    config: MlpConfig,
    inputs: Vec<f64>,
    labels: Vec<usize>,
    readout: Matrix,
    smoothness: f64,
    sigma: f64,
}

pub fn make_tiny_mlp(
    seed: u64,
    width: usize,
    dataset_size: usize,
    label_noise: f64,
) -> Result<TinyMlp, ProblemError> {
    TinyMlp::new(
        seed,
        MlpConfig {
            width,
            dataset_size,
            label_noise,
            ..MlpConfig::default()
        },
    )
}

impl TinyMlp {
    pub fn new(seed: u64, config: MlpConfig) -> Result<Self, ProblemError> {
        let c = &config;
        if c.width == 0 || c.width > 128 {
            return Err(ProblemError::InvalidConstants(format!("width {} not in 1..=128", c.width)));
        }
        if c.dataset_size == 0 || c.dataset_size > 4096 {
            return Err(ProblemError::InvalidConstants(format!(
                "dataset_size {} not in 1..=4096",
                c.dataset_size
            )));
        }
        if !(0.0..=1.0).contains(&c.label_noise) {
            return Err(ProblemError::InvalidConstants("label_noise must lie in [0, 1]".into()));
        }
        if c.classes < 2 || c.input_dim == 0 || c.batch_size == 0 {
            return Err(ProblemError::InvalidConstants(
                "need >= 2 classes, positive input_dim and batch_size".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let means = Matrix::random_normal(c.classes, c.input_dim, &mut rng);
        let noise = Matrix::random_normal(c.dataset_size, c.input_dim, &mut rng);
        let mut inputs = Vec::with_capacity(c.dataset_size * c.input_dim);
        let mut labels = Vec::with_capacity(c.dataset_size);
        for i in 0..c.dataset_size {
            let class = i % c.classes;
            for j in 0..c.input_dim {
                inputs.push(means[(class, j)] + c.cluster_std * noise[(i, j)]);
            }
            let label = if rng.random::<f64>() < c.label_noise {
                (class + rng.random_range(1..c.classes)) % c.classes
            } else {
                class
            };
            labels.push(label);
        }
        let mut readout = Matrix::random_normal(c.classes, c.width, &mut rng);
        readout.scale_mut(1.0 / (c.width as f64).sqrt());
        let mut mlp = Self {
            config,
            inputs,
            labels,
            readout,
            smoothness: f64::NAN,
            sigma: f64::NAN,
        };
        let mut probe_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51_7cc1_b727_220a);
        let (l, s) = estimate_constants(&mlp, 10_000, 10, 100, 0.5, &mut probe_rng);
        mlp.smoothness = l;
        mlp.sigma = s;
        Ok(mlp)
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    fn input(&self, i: usize) -> &[f64] {
        let d = self.config.input_dim;
        &self.inputs[i * d..(i + 1) * d]
    }

    /// Cross-entropy of one example; adds its gradient into `grad` scaled by
    /// `weight` when given.
    fn example(&self, w: &Matrix, i: usize, grad: Option<(&mut Matrix, f64)>) -> f64 {
        let (width, classes) = (self.config.width, self.config.classes);
        let x = self.input(i);
        let hidden: Vec<f64> = (0..width)
            .map(|r| w.row(r).iter().zip(x).map(|(a, b)| a * b).sum::<f64>().tanh())
            .collect();
        let logits: Vec<f64> = (0..classes)
            .map(|k| self.readout.row(k).iter().zip(&hidden).map(|(a, b)| a * b).sum())
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let label = self.labels[i];
        let loss = total.ln() + max - logits[label];
        if let Some((g, weight)) = grad {
            let mut dz: Vec<f64> = exps.iter().map(|e| e / total).collect();
            dz[label] -= 1.0;
            for (r, &h) in hidden.iter().enumerate() {
                let dh: f64 = (0..classes).map(|k| self.readout[(k, r)] * dz[k]).sum();
                let da = weight * dh * (1.0 - h * h);
                let row = &mut g.as_mut_slice()[r * x.len()..(r + 1) * x.len()];
                for (gj, xj) in row.iter_mut().zip(x) {
                    *gj += da * xj;
                }
            }
        }
        loss
    }

    /// Mean-loss gradient over the given example indices.
    pub fn batch_gradient(&self, w: &Matrix, indices: &[usize]) -> Matrix {
        let mut g = Matrix::zeros(self.config.width, self.config.input_dim);
        let weight = 1.0 / indices.len() as f64;
        for &i in indices {
            self.example(w, i, Some((&mut g, weight)));
        }
        g
    }
}

impl Problem for TinyMlp {
    fn name(&self) -> &'static str {
        "tiny_mlp"
    }

    fn shape(&self) -> (usize, usize) {
        (self.config.width, self.config.input_dim)
    }

    fn constants(&self) -> ProblemConstants {
        ProblemConstants {
            smoothness: self.smoothness,
            noise_sigma: self.sigma,
            pl_mu: None,
            f_star: None,
        }
    }

    fn value(&self, w: &Matrix) -> f64 {
        let n = self.config.dataset_size;
        (0..n).map(|i| self.example(w, i, None)).sum::<f64>() / n as f64
    }

    fn gradient(&self, w: &Matrix) -> Matrix {
        let all: Vec<usize> = (0..self.config.dataset_size).collect();
        self.batch_gradient(w, &all)
    }

    fn stochastic_gradient(&self, w: &Matrix, sample: Sample) -> Matrix {
        let mut rng = sample.rng();
        let n = self.config.dataset_size;
        let batch: Vec<usize> = (0..self.config.batch_size)
            .map(|_| rng.random_range(0..n))
            .collect();
        self.batch_gradient(w, &batch)
    }

    fn initial_point(&self, rng: &mut dyn RngCore) -> Matrix {
        let (m, n) = self.shape();
        let mut w = Matrix::random_normal(m, n, rng);
        w.scale_mut(1.0 / (n as f64).sqrt());
        w
    }
}
