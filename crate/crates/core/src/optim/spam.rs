//! Adam with spike-aware clipping, periodic momentum reset and sparse moments.
//!
//! One step, in order:
//!
//! 1. every `reset_interval` steps (including the first) the moment mask is
//!    resampled and both moments are zeroed for every masked coordinate;
//! 2. the gradient is restricted to the mask;
//! 3. masked coordinates with `g^2 > theta * v` (pre-update `v`) are
//!    clipped to `sign(g) * sqrt(theta * v)` or zeroed;
//! 4. Adam moments are updated on the masked coordinates;
//! 5. masked weights move by `lr * warmup * m_hat / (sqrt(v_hat) + eps)`
//!    where `warmup` ramps with a half cosine over the first `warmup_steps`
//!    steps after each reset;
//! 6. unmasked weights follow [`UnmaskedPolicy`];
//! 7. optional decoupled weight decay.

use std::f64::consts::PI;

use rand::RngCore;

use super::adam::{adam_coordinate, bias_corrections};
use super::{check_gradient, l1, BiasClock, MaskStrategy, SpamConfig, SpikeMode, UnmaskedPolicy};
use super::{OptimError, Optimizer, StepReport};
use crate::params::{IndexMask, ParameterStore};
use crate::rng::RngStream;

/// Post-reset learning-rate multiplier, `0.5 * (1 - cos(pi * s / n))` for
/// `s < n` and 1 afterwards. `n == 0` disables the ramp.
pub fn warmup_scale(steps_since_reset: u64, warmup_steps: u64) -> f64 {
    if warmup_steps == 0 || steps_since_reset >= warmup_steps {
        1.0
    } else {
        0.5 * (1.0 - (PI * steps_since_reset as f64 / warmup_steps as f64).cos())
    }
}

/// Flags coordinates with `g^2 > theta * v`. Coordinates with `v == 0` have
/// no history to deviate from and are never flagged.
pub fn detect_spikes_online(grad: &[f64], v: &[f64], theta: f64) -> Vec<bool> {
    debug_assert_eq!(grad.len(), v.len());
    grad.iter()
        .zip(v)
        .map(|(&g, &v)| v > 0.0 && g * g > theta * v)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SpikeCounts {
    pub clipped: usize,
    pub nullified: usize,
}

/// `sign(g) * sqrt(theta * v)`, nudged down so that the square never
/// exceeds `theta * v` after rounding.
fn clip_value(g: f64, v: f64, theta: f64) -> f64 {
    let bound = theta * v;
    let mut c = bound.sqrt();
    while c > 0.0 && c * c > bound {
        c = c.next_down();
    }
    c.copysign(g)
}

/// Rewrites the flagged coordinates according to `mode`; unflagged
/// coordinates pass through untouched.
pub fn spike_transform(
    grad: &[f64],
    v: &[f64],
    flags: &[bool],
    mode: SpikeMode,
    theta: f64,
) -> (Vec<f64>, SpikeCounts) {
    let mut counts = SpikeCounts::default();
    let out = grad
        .iter()
        .zip(v)
        .zip(flags)
        .map(|((&g, &v), &flag)| {
            if !flag {
                return g;
            }
            match mode {
                SpikeMode::Clip => {
                    counts.clipped += 1;
                    clip_value(g, v, theta)
                }
                SpikeMode::Nullify => {
                    counts.nullified += 1;
                    0.0
                }
            }
        })
        .collect();
    (out, counts)
}

/// Optimizer state. Moments live only on the masked coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SpamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub mask: IndexMask,
    /// Completed steps.
    pub t: u64,
    /// Steps completed since the last reset.
    pub t_reset: u64,
}

impl SpamState {
    /// Fresh state with a randomly drawn initial mask. The first call to
    /// [`spam_step`] performs a reset and resamples it per the configured
    /// strategy.
    pub fn new(n: usize, cfg: &SpamConfig, rng: &mut RngStream) -> Result<Self, OptimError> {
        cfg.check()?;
        let mask = IndexMask::sample(n, cfg.density, rng)
            .map_err(|e| OptimError::InvalidConfig(e.to_string()))?;
        let k = mask.len();
        Ok(Self {
            m: vec![0.0; k],
            v: vec![0.0; k],
            mask,
            t: 0,
            t_reset: 0,
        })
    }

    pub fn moments_are_zero(&self) -> bool {
        self.m.iter().chain(&self.v).all(|&x| x == 0.0)
    }
}

/// Resamples the mask and zeroes both moments. Moments are never carried
/// over, not even for coordinates present in both the old and new mask.
pub fn momentum_reset(
    state: &mut SpamState,
    store: &ParameterStore,
    grad: &[f64],
    cfg: &SpamConfig,
    rng: &mut RngStream,
) -> Result<StepReport, OptimError> {
    let n = store.len();
    let as_cfg = |e: crate::params::ParamError| OptimError::InvalidConfig(e.to_string());
    let mask = match cfg.mask_strategy {
        MaskStrategy::Random => IndexMask::sample(n, cfg.density, rng).map_err(as_cfg)?,
        MaskStrategy::MaxWeight => {
            rng.next_u64();
            let mags: Vec<f64> = store.values().iter().map(|w| w.abs()).collect();
            IndexMask::top_k(&mags, cfg.density).map_err(as_cfg)?
        }
        MaskStrategy::MaxGradient => {
            rng.next_u64();
            let mags: Vec<f64> = grad.iter().map(|g| g.abs()).collect();
            IndexMask::top_k(&mags, cfg.density).map_err(as_cfg)?
        }
    };
    let k = mask.len();
    state.mask = mask;
    state.m = vec![0.0; k];
    state.v = vec![0.0; k];
    state.t_reset = 0;
    Ok(StepReport {
        warmup_scale: warmup_scale(0, cfg.warmup_steps),
        mask_resampled: true,
        ..StepReport::default()
    })
}

/// One SPAM step using the configured learning rate.
pub fn spam_step(
    state: &mut SpamState,
    store: &mut ParameterStore,
    grad: &[f64],
    cfg: &SpamConfig,
    rng: &mut RngStream,
) -> Result<StepReport, OptimError> {
    spam_step_with_lr(state, store, grad, cfg, rng, cfg.adam.lr)
}

pub(crate) fn spam_step_with_lr(
    state: &mut SpamState,
    store: &mut ParameterStore,
    grad: &[f64],
    cfg: &SpamConfig,
    rng: &mut RngStream,
    lr: f64,
) -> Result<StepReport, OptimError> {
    let n = store.len();
    check_gradient(grad, n)?;
    if state.mask.universe() != n {
        return Err(OptimError::LengthMismatch {
            expected: state.mask.universe(),
            got: n,
        });
    }

    let mut resampled = false;
    if state.t.is_multiple_of(cfg.reset_interval) {
        momentum_reset(state, store, grad, cfg, rng)?;
        resampled = true;
    }

    let scale = warmup_scale(state.t_reset, cfg.warmup_steps);
    let step_lr = lr * scale;

    let masked: Vec<f64> = state.mask.indices().iter().map(|&i| grad[i]).collect();
    let flags = detect_spikes_online(&masked, &state.v, cfg.gss_threshold);
    let (masked, counts) =
        spike_transform(&masked, &state.v, &flags, cfg.spike_mode, cfg.gss_threshold);

    let clock = match cfg.bias_correction_clock {
        BiasClock::Global => state.t + 1,
        BiasClock::SinceReset => state.t_reset + 1,
    };
    let (bias1, bias2) = bias_corrections(&cfg.adam, clock);
    let decay = if cfg.weight_decay > 0.0 {
        Some(1.0 - step_lr * cfg.weight_decay)
    } else {
        None
    };

    let indices = state.mask.indices();
    let w = store.values_mut();
    let mut k = 0;
    let mut sq = 0.0;
    for i in 0..n {
        let delta = if k < indices.len() && indices[k] == i {
            let d = adam_coordinate(
                &mut state.m[k],
                &mut state.v[k],
                masked[k],
                &cfg.adam,
                bias1,
                bias2,
                step_lr,
            );
            k += 1;
            d
        } else {
            match cfg.unmasked_policy {
                UnmaskedPolicy::RawSgd => step_lr * grad[i],
                UnmaskedPolicy::Frozen => 0.0,
            }
        };
        let old = w[i];
        match decay {
            None => {
                w[i] = old - delta;
                sq += delta * delta;
            }
            Some(f) => {
                w[i] = (old - delta) * f;
                let diff = w[i] - old;
                sq += diff * diff;
            }
        }
    }

    state.t += 1;
    state.t_reset += 1;
    Ok(StepReport {
        clipped_count: counts.clipped,
        nullified_count: counts.nullified,
        warmup_scale: scale,
        update_norm: sq.sqrt(),
        mask_resampled: resampled,
    })
}

/// SPAM bundled with its configuration and mask-sampling stream.
#[derive(Debug, Clone)]
pub struct Spam {
    pub cfg: SpamConfig,
    pub state: SpamState,
    rng: RngStream,
}

impl Spam {
    pub fn new(n: usize, cfg: SpamConfig, mut rng: RngStream) -> Result<Self, OptimError> {
        let state = SpamState::new(n, &cfg, &mut rng)?;
        Ok(Self { cfg, state, rng })
    }
}

impl Optimizer for Spam {
    fn step(
        &mut self,
        store: &mut ParameterStore,
        grad: &[f64],
        lr_scale: f64,
    ) -> Result<StepReport, OptimError> {
        let lr = self.cfg.adam.lr * lr_scale;
        spam_step_with_lr(&mut self.state, store, grad, &self.cfg, &mut self.rng, lr)
    }

    fn moment_l1(&self) -> (f64, f64) {
        (l1(&self.state.m), l1(&self.state.v))
    }

    fn moment_len(&self) -> usize {
        self.state.m.len()
    }
}
