//! Optimizer kernels: dense Adam, clipped-Adam baselines and SPAM.
//!
//! All optimizers implement [`Optimizer`], which the harness drives with a
//! per-step learning-rate multiplier coming from the global schedule.

mod adam;
mod clip;
mod config;
mod spam;

pub use adam::{adam_step, AdamState, FilteredAdam, GradientFilter};
pub use clip::{gaussian_clip, norm_clip, value_clip, GaussianClipTracker};
pub use config::{AdamConfig, BiasClock, MaskStrategy, SpamConfig, SpikeMode, UnmaskedPolicy};
pub use spam::{
    detect_spikes_online, momentum_reset, spam_step, spike_transform, warmup_scale, Spam,
    SpamState, SpikeCounts,
};

use thiserror::Error;

use crate::params::ParameterStore;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error("non-finite gradient at coordinate {index}")]
    NonFiniteGradient { index: usize },
    #[error("gradient has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
}

/// Per-step telemetry emitted by every optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    pub clipped_count: usize,
    pub nullified_count: usize,
    pub warmup_scale: f64,
    pub update_norm: f64,
    pub mask_resampled: bool,
}

pub trait Optimizer: Send {
    /// Applies one update. `lr_scale` multiplies the configured learning
    /// rate (global schedule); pass 1.0 for the raw rate.
    fn step(
        &mut self,
        store: &mut ParameterStore,
        grad: &[f64],
        lr_scale: f64,
    ) -> Result<StepReport, OptimError>;

    /// `(sum |m|, sum |v|)` over the stored moment entries.
    fn moment_l1(&self) -> (f64, f64);

    /// Number of stored entries per moment vector.
    fn moment_len(&self) -> usize;
}

pub(crate) fn check_gradient(grad: &[f64], n: usize) -> Result<(), OptimError> {
    if grad.len() != n {
        return Err(OptimError::LengthMismatch {
            expected: n,
            got: grad.len(),
        });
    }
    match grad.iter().position(|g| !g.is_finite()) {
        Some(index) => Err(OptimError::NonFiniteGradient { index }),
        None => Ok(()),
    }
}

pub(crate) fn l1(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x.abs()).sum()
}
