use std::sync::OnceLock;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Batch, Problem, ProblemError};
use crate::rng::RngStream;

/// L2 penalty that keeps the objective strictly convex.
pub const L2: f64 = 1e-4;
/// Norm of the ground-truth separating direction.
const SIGNAL: f64 = 3.0;
const ORACLE_MAX_STEPS: usize = 100_000;
const ORACLE_TOL: f64 = 1e-11;

/// Regularized binary logistic regression on synthetic Gaussian features,
/// labels from a random ground-truth direction with a fraction flipped.
///
/// Parameters are `[weight (features), bias (1)]`.
#[derive(Debug)]
pub struct LogisticProblem {
    features: usize,
    inputs: Vec<f64>,
    labels: Vec<f64>,
    batch_size: usize,
    optimum: OnceLock<(f64, Vec<f64>)>,
}

fn softplus(a: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p()
}

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

impl LogisticProblem {
    pub fn new(
        features: usize,
        samples: usize,
        batch_size: usize,
        label_noise: f64,
        rng: &mut RngStream,
    ) -> Result<Self, ProblemError> {
        if features == 0 || samples == 0 || batch_size == 0 || batch_size > samples {
            return Err(ProblemError::InvalidSpec(format!(
                "logistic needs features, samples >= 1 and 1 <= batch_size <= samples; got {features}, {samples}, {batch_size}"
            )));
        }
        let mut truth: Vec<f64> = (0..features).map(|_| StandardNormal.sample(rng)).collect();
        let norm = truth
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
            .max(f64::MIN_POSITIVE);
        truth.iter_mut().for_each(|x| *x *= SIGNAL / norm);

        let inputs: Vec<f64> = (0..samples * features)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        let labels = inputs
            .chunks(features)
            .map(|x| {
                let z: f64 = x.iter().zip(&truth).map(|(a, b)| a * b).sum();
                let y = if z >= 0.0 { 1.0 } else { -1.0 };
                if rng.random::<f64>() < label_noise {
                    -y
                } else {
                    y
                }
            })
            .collect();
        Ok(Self::from_data(features, inputs, labels, batch_size))
    }

    /// Builds a problem from explicit data; labels must be +-1.
    pub fn from_data(
        features: usize,
        inputs: Vec<f64>,
        labels: Vec<f64>,
        batch_size: usize,
    ) -> Self {
        assert_eq!(inputs.len(), features * labels.len());
        Self {
            features,
            inputs,
            labels,
            batch_size,
            optimum: OnceLock::new(),
        }
    }

    pub fn samples(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Data term and gradient over rows `(x, y)`, plus the L2 penalty.
    fn loss_grad_rows<'a>(
        &self,
        w: &[f64],
        rows: impl Iterator<Item = (&'a [f64], f64)>,
    ) -> (f64, Vec<f64>) {
        let n = self.features;
        let mut grad = vec![0.0; n + 1];
        let mut loss = 0.0;
        let mut count = 0usize;
        for (x, y) in rows {
            let z: f64 = x.iter().zip(&w[..n]).map(|(a, b)| a * b).sum::<f64>() + w[n];
            let margin = y * z;
            loss += softplus(-margin);
            // d/dz softplus(-y z) = -y * sigmoid(-y z)
            let coef = -y * sigmoid(-margin);
            for (g, xi) in grad[..n].iter_mut().zip(x) {
                *g += coef * xi;
            }
            grad[n] += coef;
            count += 1;
        }
        let inv = 1.0 / count.max(1) as f64;
        loss *= inv;
        grad.iter_mut().for_each(|g| *g *= inv);
        let mut sq = 0.0;
        for (g, wi) in grad.iter_mut().zip(w) {
            *g += L2 * wi;
            sq += wi * wi;
        }
        (loss + 0.5 * L2 * sq, grad)
    }

    fn lipschitz_bound(&self) -> f64 {
        // power iteration on (1/m) A^T A with A = [X, 1]
        let n = self.features;
        let m = self.samples() as f64;
        let mut u = vec![1.0; n + 1];
        let mut lambda = 0.0;
        for _ in 0..100 {
            let mut next = vec![0.0; n + 1];
            for x in self.inputs.chunks(n) {
                let au: f64 = x.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() + u[n];
                for (o, xi) in next[..n].iter_mut().zip(x) {
                    *o += au * xi;
                }
                next[n] += au;
            }
            next.iter_mut().for_each(|v| *v /= m);
            let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            lambda = norm / u.iter().map(|v| v * v).sum::<f64>().sqrt();
            u = next.into_iter().map(|v| v / norm).collect();
        }
        1.05 * (0.25 * lambda) + L2
    }

    fn solve(&self) -> (f64, Vec<f64>) {
        let step = 1.0 / self.lipschitz_bound();
        let mut w = vec![0.0; self.features + 1];
        for _ in 0..ORACLE_MAX_STEPS {
            let g = self.full_gradient(&w);
            if g.iter().map(|x| x * x).sum::<f64>().sqrt() < ORACLE_TOL {
                break;
            }
            w.iter_mut().zip(&g).for_each(|(w, g)| *w -= step * g);
        }
        (self.loss(&w), w)
    }

    /// Minimizer found by full-batch gradient descent (computed once).
    pub fn optimum_point(&self) -> &[f64] {
        &self.optimum.get_or_init(|| self.solve()).1
    }
}

impl Problem for LogisticProblem {
    fn name(&self) -> &str {
        "logistic"
    }

    fn dim(&self) -> usize {
        self.features + 1
    }

    fn layout(&self) -> Vec<(String, usize)> {
        vec![
            ("weight".to_string(), self.features),
            ("bias".to_string(), 1),
        ]
    }

    fn initial_point(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    fn loss(&self, w: &[f64]) -> f64 {
        self.loss_grad_rows(
            w,
            self.inputs
                .chunks(self.features)
                .zip(self.labels.iter().copied()),
        )
        .0
    }

    fn full_gradient(&self, w: &[f64]) -> Vec<f64> {
        self.loss_grad_rows(
            w,
            self.inputs
                .chunks(self.features)
                .zip(self.labels.iter().copied()),
        )
        .1
    }

    fn sample_batch(&self, rng: &mut RngStream) -> Batch {
        let n = self.features;
        let picked = index::sample(rng, self.samples(), self.batch_size);
        let mut inputs = Vec::with_capacity(self.batch_size * n);
        let mut targets = Vec::with_capacity(self.batch_size);
        for i in picked.iter() {
            inputs.extend_from_slice(&self.inputs[i * n..(i + 1) * n]);
            targets.push(self.labels[i]);
        }
        Batch {
            inputs,
            width: n,
            targets,
            noise: Vec::new(),
        }
    }

    fn batch_loss_grad(&self, w: &[f64], batch: &Batch) -> (f64, Vec<f64>) {
        self.loss_grad_rows(
            w,
            batch
                .inputs
                .chunks(self.features)
                .zip(batch.targets.iter().copied()),
        )
    }

    fn optimum(&self) -> Option<f64> {
        Some(self.optimum.get_or_init(|| self.solve()).0)
    }
}
