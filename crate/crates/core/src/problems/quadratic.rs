use rand_distr::{Distribution, StandardNormal};

use super::{Batch, Problem, ProblemError};
use crate::rng::RngStream;

/// `0.5 * sum_i lambda_i (w_i - w*_i)^2` with eigenvalues log-spaced in
/// `[1, condition]` and a Gaussian minimizer. Stochastic gradients add
/// `N(0, noise_std^2)` per coordinate.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    eigenvalues: Vec<f64>,
    target: Vec<f64>,
    noise_std: f64,
}

impl QuadraticProblem {
    pub fn new(dim: usize, condition: f64, rng: &mut RngStream) -> Result<Self, ProblemError> {
        if dim == 0 || !(condition >= 1.0) {
            return Err(ProblemError::InvalidSpec(format!(
                "quadratic needs dim >= 1 and condition >= 1, got {dim}, {condition}"
            )));
        }
        let eigenvalues = (0..dim)
            .map(|i| {
                if dim == 1 {
                    1.0
                } else {
                    condition.powf(i as f64 / (dim - 1) as f64)
                }
            })
            .collect();
        let target = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        Ok(Self {
            eigenvalues,
            target,
            noise_std: 0.0,
        })
    }

    pub fn with_noise(mut self, noise_std: f64) -> Self {
        self.noise_std = noise_std;
        self
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// The minimizer `w*`.
    pub fn target(&self) -> &[f64] {
        &self.target
    }
}

impl Problem for QuadraticProblem {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        self.target.len()
    }

    fn layout(&self) -> Vec<(String, usize)> {
        vec![("w".to_string(), self.dim())]
    }

    fn initial_point(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    fn loss(&self, w: &[f64]) -> f64 {
        0.5 * w
            .iter()
            .zip(&self.target)
            .zip(&self.eigenvalues)
            .map(|((w, t), l)| l * (w - t) * (w - t))
            .sum::<f64>()
    }

    fn full_gradient(&self, w: &[f64]) -> Vec<f64> {
        w.iter()
            .zip(&self.target)
            .zip(&self.eigenvalues)
            .map(|((w, t), l)| l * (w - t))
            .collect()
    }

    fn sample_batch(&self, rng: &mut RngStream) -> Batch {
        let noise = if self.noise_std > 0.0 {
            (0..self.dim())
                .map(|_| self.noise_std * Distribution::<f64>::sample(&StandardNormal, rng))
                .collect()
        } else {
            Vec::new()
        };
        Batch {
            noise,
            ..Batch::default()
        }
    }

    // The batch objective adds the linear term noise . (w - w*), so the
    // batch gradient is unbiased and consistent with the batch loss.
    fn batch_loss_grad(&self, w: &[f64], batch: &Batch) -> (f64, Vec<f64>) {
        let mut loss = self.loss(w);
        let mut grad = self.full_gradient(w);
        for (i, xi) in batch.noise.iter().enumerate() {
            loss += xi * (w[i] - self.target[i]);
            grad[i] += xi;
        }
        (loss, grad)
    }

    fn optimum(&self) -> Option<f64> {
        Some(0.0)
    }
}
