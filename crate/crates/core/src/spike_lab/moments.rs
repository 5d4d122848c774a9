use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SpikeLabError;
use crate::rng::RngStream;

/// Relative band used to decide that a spiked trajectory has recovered.
pub const RECOVERY_BAND: f64 = 0.05;

/// Gaussian gradient stream with one injected spike.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentSimConfig {
    pub mean: f64,
    /// Variance of the gradient draws; the standard deviation is its root.
    pub variance: f64,
    pub steps: usize,
    pub spike_step: usize,
    pub spike_magnitude: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for MomentSimConfig {
    fn default() -> Self {
        Self {
            mean: 0.1,
            variance: 0.1,
            steps: 200,
            spike_step: 30,
            spike_magnitude: 10.0,
            beta1: 0.9,
            beta2: 0.999,
        }
    }
}

impl MomentSimConfig {
    pub fn validate(&self) -> Result<(), SpikeLabError> {
        let mut errs = Vec::new();
        if !(self.variance >= 0.0 && self.variance.is_finite()) {
            errs.push(format!(
                "variance must be non-negative, got {}",
                self.variance
            ));
        }
        if self.spike_step >= self.steps {
            errs.push(format!(
                "spike_step ({}) must be below steps ({})",
                self.spike_step, self.steps
            ));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                errs.push(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(SpikeLabError::InvalidConfig(errs.join("; ")))
        }
    }
}

/// Paired moment trajectories with and without the spike.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSimResult {
    pub gradients: Vec<f64>,
    pub clean_m: Vec<f64>,
    pub clean_v: Vec<f64>,
    pub spiked_m: Vec<f64>,
    pub spiked_v: Vec<f64>,
    /// Steps after the spike until `m` re-enters the band around the clean
    /// twin; `None` if it never does within the horizon.
    pub m_recovery: Option<usize>,
    pub v_recovery: Option<usize>,
}

impl MomentSimResult {
    /// `spiked_v / clean_v` at the final step.
    pub fn final_v_ratio(&self) -> f64 {
        self.spiked_v.last().unwrap() / self.clean_v.last().unwrap()
    }
}

fn recovery(clean: &[f64], spiked: &[f64], from: usize) -> Option<usize> {
    (from..clean.len())
        .find(|&t| (spiked[t] - clean[t]).abs() <= RECOVERY_BAND * clean[t].abs())
        .map(|t| t - from)
}

/// Runs Adam's moment recursions on `g ~ N(mean, variance)` twice, sharing
/// every draw. At `spike_step` the spiked run sees `spike_magnitude` and the
/// clean run sees the noise-free `mean`.
pub fn simulate_moments(
    cfg: &MomentSimConfig,
    rng: &mut RngStream,
) -> Result<MomentSimResult, SpikeLabError> {
    cfg.validate()?;
    let normal = Normal::new(cfg.mean, cfg.variance.sqrt())
        .map_err(|e| SpikeLabError::InvalidConfig(e.to_string()))?;
    let gradients: Vec<f64> = (0..cfg.steps).map(|_| normal.sample(rng)).collect();

    let run = |spike: f64| {
        let (mut m, mut v) = (0.0, 0.0);
        let mut ms = Vec::with_capacity(cfg.steps);
        let mut vs = Vec::with_capacity(cfg.steps);
        for (t, &draw) in gradients.iter().enumerate() {
            let g = if t == cfg.spike_step { spike } else { draw };
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            ms.push(m);
            vs.push(v);
        }
        (ms, vs)
    };
    let (clean_m, clean_v) = run(cfg.mean);
    let (spiked_m, spiked_v) = run(cfg.spike_magnitude);
    let m_recovery = recovery(&clean_m, &spiked_m, cfg.spike_step);
    let v_recovery = recovery(&clean_v, &spiked_v, cfg.spike_step);
    Ok(MomentSimResult {
        gradients,
        clean_m,
        clean_v,
        spiked_m,
        spiked_v,
        m_recovery,
        v_recovery,
    })
}
