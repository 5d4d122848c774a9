use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::{streams, RngStream};

/// Multiplies each gradient coordinate by `factor` with probability
/// `probability`, independently per coordinate and step.
#[derive(Debug, Clone)]
pub struct SpikeInjector {
    pub probability: f64,
    pub factor: f64,
    stream: RngStream,
}

impl SpikeInjector {
    pub fn new(probability: f64, factor: f64, seed: u64) -> Self {
        Self {
            probability,
            factor,
            stream: RngStream::new(seed, streams::SPIKES),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.probability == 0.0 || self.factor == 1.0
    }

    /// Injects the spikes for `step`; a pure function of `(seed, step)`.
    pub fn inject(&self, grad: &[f64], step: u64) -> (Vec<f64>, Vec<usize>) {
        inject_spikes(grad, self, &mut self.stream.fork(step))
    }
}

/// Returns the spiked gradient and the coordinates that were hit. Hit
/// coordinates keep their sign; everything else is bit-identical.
pub fn inject_spikes(
    grad: &[f64],
    injector: &SpikeInjector,
    rng: &mut RngStream,
) -> (Vec<f64>, Vec<usize>) {
    let mut out = grad.to_vec();
    let mut hits = Vec::new();
    if injector.probability <= 0.0 {
        return (out, hits);
    }
    for (i, g) in out.iter_mut().enumerate() {
        if rng.random::<f64>() < injector.probability {
            *g *= injector.factor;
            hits.push(i);
        }
    }
    (out, hits)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalySpec {
    #[serde(default = "default_corruption")]
    pub probability: f64,
    pub severity: f64,
}

fn default_corruption() -> f64 {
    0.10
}

/// Adds `N(0, (severity * max|X|)^2)` noise to a random fraction of batch
/// input values, `max` taken over the current batch.
#[derive(Debug, Clone)]
pub struct AnomalyInjector {
    pub probability: f64,
    pub severity: f64,
    stream: RngStream,
}

impl AnomalyInjector {
    pub fn new(probability: f64, severity: f64, seed: u64) -> Self {
        Self {
            probability,
            severity,
            stream: RngStream::new(seed, streams::ANOMALY),
        }
    }

    pub fn corrupt(&self, inputs: &[f64], step: u64) -> Vec<f64> {
        corrupt_inputs(inputs, self, &mut self.stream.fork(step))
    }
}

pub fn corrupt_inputs(inputs: &[f64], injector: &AnomalyInjector, rng: &mut RngStream) -> Vec<f64> {
    let mut out = inputs.to_vec();
    if injector.severity <= 0.0 || injector.probability <= 0.0 {
        return out;
    }
    let max = inputs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let sd = injector.severity * max;
    for x in out.iter_mut() {
        if rng.random::<f64>() < injector.probability {
            *x += sd * Distribution::<f64>::sample(&StandardNormal, rng);
        }
    }
    out
}
