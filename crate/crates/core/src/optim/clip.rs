//! Classical gradient clipping baselines.

/// Clamps every coordinate to `[-threshold, threshold]`.
pub fn value_clip(grad: &[f64], threshold: f64) -> Vec<f64> {
    grad.iter()
        .map(|&g| g.clamp(-threshold, threshold))
        .collect()
}

/// Rescales the whole vector onto the `max_norm` ball when its L2 norm
/// exceeds `max_norm`.
pub fn norm_clip(grad: &[f64], max_norm: f64) -> Vec<f64> {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grad.iter().map(|g| g * scale).collect()
    } else {
        grad.to_vec()
    }
}

/// Three-sigma clipping around a running mean: any coordinate with
/// `|g - mean| > 3 * sqrt(var)` is pulled back onto the boundary.
///
/// Returns the clipped gradient and the number of coordinates changed.
pub fn gaussian_clip(grad: &[f64], running_mean: &[f64], running_var: &[f64]) -> (Vec<f64>, usize) {
    debug_assert_eq!(grad.len(), running_mean.len());
    debug_assert_eq!(grad.len(), running_var.len());
    let mut clipped = 0;
    let out = grad
        .iter()
        .zip(running_mean)
        .zip(running_var)
        .map(|((&g, &mean), &var)| {
            let bound = 3.0 * var.max(0.0).sqrt();
            let dev = g - mean;
            if dev.abs() > bound {
                clipped += 1;
                // mean + bound may round outward
                let edge = if dev > 0.0 {
                    mean + bound
                } else {
                    mean - bound
                };
                pull_inside(edge, mean, bound)
            } else {
                g
            }
        })
        .collect();
    (out, clipped)
}

// Steps x towards `mean` one ulp at a time while |x - mean| > bound.
fn pull_inside(x: f64, mean: f64, bound: f64) -> f64 {
    let mut y = x;
    // at most a couple of ulps are ever needed
    for _ in 0..4 {
        if (y - mean).abs() <= bound {
            break;
        }
        y = if y > mean { y.next_down() } else { y.next_up() };
    }
    y
}

/// Exponential moving estimates of the per-coordinate gradient mean and
/// variance used by [`gaussian_clip`].
///
/// During the first `warmup` observations the statistics are fed raw
/// gradients and no clipping is applied; with zero variance every
/// coordinate would otherwise collapse onto the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianClipTracker {
    mean: Vec<f64>,
    var: Vec<f64>,
    decay: f64,
    warmup: u64,
    seen: u64,
}

impl GaussianClipTracker {
    pub fn new(n: usize, decay: f64, warmup: u64) -> Self {
        Self {
            mean: vec![0.0; n],
            var: vec![0.0; n],
            decay,
            warmup,
            seen: 0,
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    /// Clips `grad` against the current statistics, then folds the result
    /// into them.
    pub fn apply(&mut self, grad: &[f64]) -> (Vec<f64>, usize) {
        let (out, clipped) = if self.seen < self.warmup.max(1) {
            (grad.to_vec(), 0)
        } else {
            gaussian_clip(grad, &self.mean, &self.var)
        };
        if self.seen == 0 {
            self.mean.copy_from_slice(&out);
        } else {
            let rho = self.decay;
            for ((m, v), &g) in self.mean.iter_mut().zip(self.var.iter_mut()).zip(&out) {
                let dev = g - *m;
                *m += (1.0 - rho) * dev;
                *v = rho * (*v + (1.0 - rho) * dev * dev);
            }
        }
        self.seen += 1;
        (out, clipped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_clip_examples() {
        assert_eq!(value_clip(&[0.5, -2.0], 1.0), vec![0.5, -1.0]);
        assert_eq!(value_clip(&[0.3, -0.9], 1.0), vec![0.3, -0.9]);
        assert_eq!(value_clip(&[1e-2], 1e-3), vec![1e-3]);
    }

    #[test]
    fn norm_clip_examples() {
        let out = norm_clip(&[3.0, 4.0], 1.0);
        assert!((out[0] - 0.6).abs() < 1e-15 && (out[1] - 0.8).abs() < 1e-15);
        assert_eq!(norm_clip(&[3.0, 4.0], 5.0), vec![3.0, 4.0]);
        assert_eq!(norm_clip(&[0.0, 0.0], 1.0), vec![0.0, 0.0]);
    }

    #[test]
    fn gaussian_clip_examples() {
        assert_eq!(gaussian_clip(&[5.0], &[0.0], &[1.0]), (vec![3.0], 1));
        assert_eq!(gaussian_clip(&[-5.0], &[0.0], &[1.0]), (vec![-3.0], 1));
        assert_eq!(gaussian_clip(&[2.5], &[0.0], &[1.0]), (vec![2.5], 0));
        assert_eq!(gaussian_clip(&[0.7], &[0.2], &[0.0]), (vec![0.2], 1));
    }

    #[test]
    fn tracker_does_not_clip_during_warmup() {
        let mut t = GaussianClipTracker::new(1, 0.9, 3);
        for g in [1.0, 1.0, 100.0] {
            assert_eq!(t.apply(&[g]).1, 0);
        }
        let (out, c) = t.apply(&[1e6]);
        assert_eq!(c, 1);
        assert!(out[0] < 1e6);
    }
}
