//! Deterministic desk-scale optimization problems with analytic gradients,
//! plus gradient-spike and input-anomaly injectors.

mod inject;
mod logistic;
mod mlp;
mod quadratic;

pub use inject::{corrupt_inputs, inject_spikes, AnomalyInjector, AnomalySpec, SpikeInjector};
pub use logistic::LogisticProblem;
pub use mlp::MlpProblem;
pub use quadratic::QuadraticProblem;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::{ParamError, ParameterStore};
use crate::rng::{streams, RngStream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("invalid problem spec: {0}")]
    InvalidSpec(String),
}

/// One mini-batch. Problems without input data (the quadratic) only use
/// `noise`; data-driven problems carry row-major `inputs` of width `width`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub inputs: Vec<f64>,
    pub width: usize,
    pub targets: Vec<f64>,
    pub noise: Vec<f64>,
}

impl Batch {
    pub fn rows(&self) -> usize {
        self.inputs.len().checked_div(self.width).unwrap_or(0)
    }
}

pub trait Problem: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Segment layout of the parameter vector.
    fn layout(&self) -> Vec<(String, usize)>;

    fn initial_point(&self) -> Vec<f64>;

    /// Full, noise-free objective.
    fn loss(&self, w: &[f64]) -> f64;

    /// Gradient of [`Problem::loss`].
    fn full_gradient(&self, w: &[f64]) -> Vec<f64>;

    fn sample_batch(&self, rng: &mut RngStream) -> Batch;

    /// Mini-batch loss and its gradient at `w`.
    fn batch_loss_grad(&self, w: &[f64], batch: &Batch) -> (f64, Vec<f64>);

    /// Stochastic gradient for the batch drawn from `rng`.
    fn gradient(&self, w: &[f64], rng: &mut RngStream) -> Vec<f64> {
        let batch = self.sample_batch(rng);
        self.batch_loss_grad(w, &batch).1
    }

    /// Minimum of the full objective, when known.
    fn optimum(&self) -> Option<f64>;

    fn store(&self) -> Result<ParameterStore, ParamError> {
        ParameterStore::with_values(&self.layout(), self.initial_point())
    }
}

/// Declarative problem description, as found in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Quadratic {
        dim: usize,
        #[serde(default = "one")]
        condition: f64,
        #[serde(default)]
        noise_std: f64,
        #[serde(default)]
        seed: u64,
    },
    Logistic {
        features: usize,
        samples: usize,
        #[serde(default = "default_batch")]
        batch_size: usize,
        #[serde(default = "default_label_noise")]
        label_noise: f64,
        #[serde(default)]
        seed: u64,
    },
    Mlp {
        widths: Vec<usize>,
        samples: usize,
        #[serde(default = "default_batch")]
        batch_size: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn one() -> f64 {
    1.0
}

fn default_batch() -> usize {
    32
}

fn default_label_noise() -> f64 {
    0.1
}

impl ProblemSpec {
    /// Seed of the dataset / problem instance.
    pub fn seed(&self) -> u64 {
        match self {
            ProblemSpec::Quadratic { seed, .. }
            | ProblemSpec::Logistic { seed, .. }
            | ProblemSpec::Mlp { seed, .. } => *seed,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        match self {
            ProblemSpec::Quadratic {
                dim,
                condition,
                noise_std,
                ..
            } => {
                if *dim == 0 {
                    errs.push("problem.dim must be at least 1".into());
                }
                if !(*condition >= 1.0 && condition.is_finite()) {
                    errs.push(format!("problem.condition must be >= 1, got {condition}"));
                }
                if !(*noise_std >= 0.0 && noise_std.is_finite()) {
                    errs.push(format!("problem.noise_std must be >= 0, got {noise_std}"));
                }
            }
            ProblemSpec::Logistic {
                features,
                samples,
                batch_size,
                label_noise,
                ..
            } => {
                if *features == 0 {
                    errs.push("problem.features must be at least 1".into());
                }
                if *samples == 0 {
                    errs.push("problem.samples must be at least 1".into());
                }
                if *batch_size == 0 || batch_size > samples {
                    errs.push(format!(
                        "problem.batch_size must lie in [1, samples], got {batch_size}"
                    ));
                }
                if !(0.0..=0.5).contains(label_noise) {
                    errs.push(format!(
                        "problem.label_noise must lie in [0, 0.5], got {label_noise}"
                    ));
                }
            }
            ProblemSpec::Mlp {
                widths,
                samples,
                batch_size,
                ..
            } => {
                if widths.len() < 3 {
                    errs.push("problem.widths needs input, >= 1 hidden and output width".into());
                }
                if widths.contains(&0) {
                    errs.push("problem.widths entries must be positive".into());
                }
                if *samples == 0 {
                    errs.push("problem.samples must be at least 1".into());
                }
                if *batch_size == 0 || batch_size > samples {
                    errs.push(format!(
                        "problem.batch_size must lie in [1, samples], got {batch_size}"
                    ));
                }
            }
        }
        errs
    }

    pub fn build(&self) -> Result<Box<dyn Problem>, ProblemError> {
        let errs = self.validate();
        if !errs.is_empty() {
            return Err(ProblemError::InvalidSpec(errs.join("; ")));
        }
        Ok(match *self {
            ProblemSpec::Quadratic {
                dim,
                condition,
                noise_std,
                seed,
            } => {
                let mut rng = RngStream::new(seed, streams::PROBLEM);
                Box::new(QuadraticProblem::new(dim, condition, &mut rng)?.with_noise(noise_std))
            }
            ProblemSpec::Logistic {
                features,
                samples,
                batch_size,
                label_noise,
                seed,
            } => {
                let mut rng = RngStream::new(seed, streams::PROBLEM);
                Box::new(LogisticProblem::new(
                    features,
                    samples,
                    batch_size,
                    label_noise,
                    &mut rng,
                )?)
            }
            ProblemSpec::Mlp {
                ref widths,
                samples,
                batch_size,
                seed,
            } => {
                let mut rng = RngStream::new(seed, streams::PROBLEM);
                Box::new(MlpProblem::new(widths, samples, batch_size, &mut rng)?)
            }
        })
    }
}

/// Cumulative regret `R(T) = sum_{t <= T} (f_t - f*)`.
pub fn regret(losses: &[f64], optimum: f64) -> Vec<f64> {
    losses
        .iter()
        .scan(0.0, |acc, &f| {
            *acc += f - optimum;
            Some(*acc)
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod testing {
    /// Central finite differences of `f` at `w`.
    pub fn finite_difference(f: impl Fn(&[f64]) -> f64, w: &[f64], h: f64) -> Vec<f64> {
        let mut x = w.to_vec();
        (0..w.len())
            .map(|i| {
                let orig = x[i];
                x[i] = orig + h;
                let up = f(&x);
                x[i] = orig - h;
                let down = f(&x);
                x[i] = orig;
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    /// max_i |a_i - b_i| / max(1, |b_i|)
    pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
            .fold(0.0, f64::max)
    }
}
