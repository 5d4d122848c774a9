/// Zeroes every coordinate whose score `|g_i| / running_mean_i` exceeds
/// `theta`. Coordinates with a zero running mean are left alone.
pub fn nullify_filter(grad: &[f64], running_mean: &[f64], theta: f64) -> Vec<f64> {
    grad.iter()
        .zip(running_mean)
        .map(|(&g, &mean)| {
            if mean > 0.0 && g.abs() / mean > theta {
                0.0
            } else {
                g
            }
        })
        .collect()
}

/// Online per-coordinate mean of `|g|`, the streaming stand-in for the
/// full-trace mean of the spike score. The very first gradient seeds the
/// mean, so its own score is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningAbsMean {
    sum: Vec<f64>,
    count: u64,
}

impl RunningAbsMean {
    pub fn new(n: usize) -> Self {
        Self {
            sum: vec![0.0; n],
            count: 0,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> Vec<f64> {
        let c = self.count.max(1) as f64;
        self.sum.iter().map(|s| s / c).collect()
    }

    /// Folds the raw magnitudes of `grad` into the mean.
    pub fn observe(&mut self, grad: &[f64]) {
        for (s, g) in self.sum.iter_mut().zip(grad) {
            *s += g.abs();
        }
        self.count += 1;
    }

    /// Scores `grad` against the history so far, nullifies spikes, then
    /// records the raw gradient. Returns the filtered gradient and the
    /// number of zeroed coordinates.
    pub fn filter(&mut self, grad: &[f64], theta: f64) -> (Vec<f64>, usize) {
        let seeding = self.count == 0;
        if seeding {
            self.observe(grad);
        }
        let out = nullify_filter(grad, &self.mean(), theta);
        let zeroed = out
            .iter()
            .zip(grad)
            .filter(|(o, g)| **o == 0.0 && **g != 0.0)
            .count();
        if !seeding {
            self.observe(grad);
        }
        (out, zeroed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn large_score_is_zeroed() {
        assert_eq!(nullify_filter(&[20.0], &[0.1], 50.0), vec![0.0]);
        assert_eq!(nullify_filter(&[2.0], &[0.1], 50.0), vec![2.0]);
    }

    #[test]
    fn first_step_is_self_normalized() {
        let mut r = RunningAbsMean::new(2);
        let (out, z) = r.filter(&[5.0, -3.0], 1.0);
        assert_eq!(out, vec![5.0, -3.0]);
        assert_eq!(z, 0);
    }

    #[test]
    fn running_filter_catches_spike() {
        let mut r = RunningAbsMean::new(1);
        for _ in 0..10 {
            r.filter(&[0.1], 50.0);
        }
        let (out, z) = r.filter(&[20.0], 50.0);
        assert_eq!((out[0], z), (0.0, 1));
    }
}
