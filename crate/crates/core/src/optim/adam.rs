use super::{check_gradient, l1, norm_clip, value_clip, AdamConfig, GaussianClipTracker};
use super::{OptimError, Optimizer, StepReport};
use crate::params::ParameterStore;
use crate::spike_lab::RunningAbsMean;

/// Dense Adam moments over every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Completed steps.
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One Adam moment update on a single coordinate; returns the parameter
/// decrement `step_lr * m_hat / (sqrt(v_hat) + eps)`.
///
/// Shared by dense Adam and SPAM so both produce bit-identical updates.
#[inline]
#[allow(clippy::too_many_arguments)]
pub(crate) fn adam_coordinate(
    m: &mut f64,
    v: &mut f64,
    g: f64,
    cfg: &AdamConfig,
    bias1: f64,
    bias2: f64,
    step_lr: f64,
) -> f64 {
    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
    let m_hat = *m / bias1;
    let v_hat = *v / bias2;
    step_lr * m_hat / (v_hat.sqrt() + cfg.eps)
}

/// `(1 - beta1^t, 1 - beta2^t)` for a 1-based step count.
#[inline]
pub(crate) fn bias_corrections(cfg: &AdamConfig, t: u64) -> (f64, f64) {
    let t = t.min(i32::MAX as u64) as i32;
    (1.0 - cfg.beta1.powi(t), 1.0 - cfg.beta2.powi(t))
}

/// Standard Adam with bias correction and a warmup scale of 1.
pub fn adam_step(
    state: &mut AdamState,
    store: &mut ParameterStore,
    grad: &[f64],
    cfg: &AdamConfig,
) -> Result<StepReport, OptimError> {
    adam_step_with_lr(state, store, grad, cfg, cfg.lr)
}

pub(crate) fn adam_step_with_lr(
    state: &mut AdamState,
    store: &mut ParameterStore,
    grad: &[f64],
    cfg: &AdamConfig,
    lr: f64,
) -> Result<StepReport, OptimError> {
    check_gradient(grad, store.len())?;
    state.t += 1;
    let (bias1, bias2) = bias_corrections(cfg, state.t);
    let mut sq = 0.0;
    let w = store.values_mut();
    for i in 0..w.len() {
        let delta = adam_coordinate(
            &mut state.m[i],
            &mut state.v[i],
            grad[i],
            cfg,
            bias1,
            bias2,
            lr,
        );
        w[i] -= delta;
        sq += delta * delta;
    }
    Ok(StepReport {
        warmup_scale: 1.0,
        update_norm: sq.sqrt(),
        ..StepReport::default()
    })
}

/// Pre-processing applied to the gradient before a dense Adam step.
#[derive(Debug, Clone)]
pub enum GradientFilter {
    None,
    ValueClip {
        threshold: f64,
    },
    NormClip {
        max_norm: f64,
    },
    Gaussian(GaussianClipTracker),
    /// Zeroes coordinates whose running spike score exceeds `theta`.
    Nullify {
        tracker: RunningAbsMean,
        theta: f64,
    },
}

/// Adam preceded by a [`GradientFilter`]; covers plain Adam and every
/// clipping baseline.
#[derive(Debug, Clone)]
pub struct FilteredAdam {
    pub cfg: AdamConfig,
    pub state: AdamState,
    pub filter: GradientFilter,
}

impl FilteredAdam {
    pub fn new(n: usize, cfg: AdamConfig, filter: GradientFilter) -> Self {
        Self {
            cfg,
            state: AdamState::new(n),
            filter,
        }
    }
}

impl Optimizer for FilteredAdam {
    fn step(
        &mut self,
        store: &mut ParameterStore,
        grad: &[f64],
        lr_scale: f64,
    ) -> Result<StepReport, OptimError> {
        check_gradient(grad, store.len())?;
        let (filtered, clipped, nullified) = match &mut self.filter {
            GradientFilter::None => (None, 0, 0),
            GradientFilter::ValueClip { threshold } => {
                let out = value_clip(grad, *threshold);
                let c = grad.iter().filter(|g| g.abs() > *threshold).count();
                (Some(out), c, 0)
            }
            GradientFilter::NormClip { max_norm } => {
                let out = norm_clip(grad, *max_norm);
                let c = if out.as_slice() == grad {
                    0
                } else {
                    grad.iter().filter(|&&g| g != 0.0).count()
                };
                (Some(out), c, 0)
            }
            GradientFilter::Gaussian(tracker) => {
                let (out, c) = tracker.apply(grad);
                (Some(out), c, 0)
            }
            GradientFilter::Nullify { tracker, theta } => {
                let (out, z) = tracker.filter(grad, *theta);
                (Some(out), 0, z)
            }
        };
        let g = filtered.as_deref().unwrap_or(grad);
        let lr = self.cfg.lr * lr_scale;
        let mut report = adam_step_with_lr(&mut self.state, store, g, &self.cfg, lr)?;
        report.clipped_count = clipped;
        report.nullified_count = nullified;
        Ok(report)
    }

    fn moment_l1(&self) -> (f64, f64) {
        (l1(&self.state.m), l1(&self.state.v))
    }

    fn moment_len(&self) -> usize {
        self.state.m.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(n: usize) -> ParameterStore {
        ParameterStore::new(&[("w", n)]).unwrap()
    }

    #[test]
    fn first_step_is_sign_step() {
        let mut s = store(1);
        let mut st = AdamState::new(1);
        let cfg = AdamConfig {
            lr: 0.1,
            eps: 0.0,
            ..AdamConfig::default()
        };
        let r = adam_step(&mut st, &mut s, &[1.0], &cfg).unwrap();
        assert!((s.values()[0] + 0.1).abs() < 1e-15);
        assert!((r.update_norm - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut s = store(3);
        s.values_mut().copy_from_slice(&[1.0, -2.0, 3.0]);
        let mut st = AdamState::new(3);
        let r = adam_step(&mut st, &mut s, &[0.0; 3], &AdamConfig::default()).unwrap();
        assert_eq!(s.values(), &[1.0, -2.0, 3.0]);
        assert_eq!(r.update_norm, 0.0);
    }

    #[test]
    fn rejects_bad_gradients() {
        let mut s = store(2);
        let mut st = AdamState::new(2);
        let cfg = AdamConfig::default();
        assert_eq!(
            adam_step(&mut st, &mut s, &[0.0, f64::NAN], &cfg),
            Err(OptimError::NonFiniteGradient { index: 1 })
        );
        assert!(matches!(
            adam_step(&mut st, &mut s, &[0.0], &cfg),
            Err(OptimError::LengthMismatch { .. })
        ));
        assert_eq!(st.t, 0);
    }

    #[test]
    fn filtered_counts() {
        let mut s = store(2);
        let mut opt = FilteredAdam::new(
            2,
            AdamConfig::default(),
            GradientFilter::ValueClip { threshold: 1.0 },
        );
        let r = opt.step(&mut s, &[0.5, -3.0], 1.0).unwrap();
        assert_eq!(r.clipped_count, 1);
        assert_eq!(opt.moment_len(), 2);
    }
}
