use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};

use super::{Batch, Problem, ProblemError};
use crate::rng::RngStream;

const TARGET_NOISE: f64 = 0.01;

/// Tiny regression network: tanh hidden layers, linear output, loss
/// `mean over samples of 0.5 * |y_hat - y|^2`. Targets come from a random
/// teacher network of the same shape.
///
/// Parameter order is `layer0.weight, layer0.bias, layer1.weight, ...`
/// with row-major `(out, in)` weight matrices.
#[derive(Debug, Clone)]
pub struct MlpProblem {
    widths: Vec<usize>,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    batch_size: usize,
    init: Vec<f64>,
}

fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

fn random_params(widths: &[usize], bias_scale: f64, rng: &mut RngStream) -> Vec<f64> {
    let mut out = Vec::with_capacity(param_count(widths));
    for w in widths.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let scale = 1.0 / (fan_in as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            out.push(scale * Distribution::<f64>::sample(&StandardNormal, rng));
        }
        for _ in 0..fan_out {
            out.push(bias_scale * Distribution::<f64>::sample(&StandardNormal, rng));
        }
    }
    out
}

impl MlpProblem {
    pub fn new(
        widths: &[usize],
        samples: usize,
        batch_size: usize,
        rng: &mut RngStream,
    ) -> Result<Self, ProblemError> {
        if widths.len() < 3 || widths.contains(&0) {
            return Err(ProblemError::InvalidSpec(format!(
                "mlp needs at least one hidden layer and positive widths, got {widths:?}"
            )));
        }
        if samples == 0 || batch_size == 0 || batch_size > samples {
            return Err(ProblemError::InvalidSpec(format!(
                "mlp needs 1 <= batch_size <= samples, got {batch_size}, {samples}"
            )));
        }
        let teacher = random_params(widths, 0.1, &mut rng.fork(0));
        let init = random_params(widths, 0.0, &mut rng.fork(1));
        let d_in = widths[0];
        let inputs: Vec<f64> = (0..samples * d_in)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        let mut shell = Self {
            widths: widths.to_vec(),
            inputs: Vec::new(),
            targets: Vec::new(),
            batch_size,
            init,
        };
        let mut targets = Vec::with_capacity(samples * shell.output_width());
        for x in inputs.chunks(d_in) {
            let acts = shell.forward(&teacher, x);
            for y in acts.last().unwrap() {
                targets.push(y + TARGET_NOISE * Distribution::<f64>::sample(&StandardNormal, rng));
            }
        }
        shell.inputs = inputs;
        shell.targets = targets;
        Ok(shell)
    }

    /// A network over explicit data and starting point.
    pub fn from_data(
        widths: &[usize],
        inputs: Vec<f64>,
        targets: Vec<f64>,
        batch_size: usize,
        init: Vec<f64>,
    ) -> Self {
        let samples = inputs.len() / widths[0];
        assert_eq!(inputs.len(), samples * widths[0]);
        assert_eq!(targets.len(), samples * widths[widths.len() - 1]);
        assert_eq!(init.len(), param_count(widths));
        Self {
            widths: widths.to_vec(),
            inputs,
            targets,
            batch_size,
            init,
        }
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// Offset of `layer`'s weight block in the parameter vector.
    fn offset(&self, layer: usize) -> usize {
        param_count(&self.widths[..=layer])
    }

    /// Activations of every layer, input first.
    fn forward(&self, w: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        for l in 0..self.layers() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let off = self.offset(l);
            let (weights, bias) = w[off..off + fan_out * (fan_in + 1)].split_at(fan_in * fan_out);
            let a = acts.last().unwrap();
            let last = l + 1 == self.layers();
            let z: Vec<f64> = (0..fan_out)
                .map(|j| {
                    let s = weights[j * fan_in..(j + 1) * fan_in]
                        .iter()
                        .zip(a)
                        .map(|(p, q)| p * q)
                        .sum::<f64>()
                        + bias[j];
                    if last {
                        s
                    } else {
                        s.tanh()
                    }
                })
                .collect();
            acts.push(z);
        }
        acts
    }

    fn loss_grad_rows<'a>(
        &self,
        w: &[f64],
        rows: impl Iterator<Item = (&'a [f64], &'a [f64])>,
    ) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; w.len()];
        let mut loss = 0.0;
        let mut count = 0usize;
        for (x, y) in rows {
            let acts = self.forward(w, x);
            let out = acts.last().unwrap();
            let mut delta: Vec<f64> = out.iter().zip(y).map(|(p, t)| p - t).collect();
            loss += 0.5 * delta.iter().map(|d| d * d).sum::<f64>();
            for l in (0..self.layers()).rev() {
                let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
                let off = self.offset(l);
                let a = &acts[l];
                for j in 0..fan_out {
                    let row = off + j * fan_in;
                    for i in 0..fan_in {
                        grad[row + i] += delta[j] * a[i];
                    }
                    grad[off + fan_in * fan_out + j] += delta[j];
                }
                if l > 0 {
                    // back through W_l, then through tanh of layer l
                    delta = (0..fan_in)
                        .map(|i| {
                            let back: f64 = (0..fan_out)
                                .map(|j| w[off + j * fan_in + i] * delta[j])
                                .sum();
                            back * (1.0 - a[i] * a[i])
                        })
                        .collect();
                }
            }
            count += 1;
        }
        let inv = 1.0 / count.max(1) as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        (loss * inv, grad)
    }
}

impl Problem for MlpProblem {
    fn name(&self) -> &str {
        "mlp"
    }

    fn dim(&self) -> usize {
        param_count(&self.widths)
    }

    fn layout(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        for (l, w) in self.widths.windows(2).enumerate() {
            out.push((format!("layer{l}.weight"), w[0] * w[1]));
            out.push((format!("layer{l}.bias"), w[1]));
        }
        out
    }

    fn initial_point(&self) -> Vec<f64> {
        self.init.clone()
    }

    fn loss(&self, w: &[f64]) -> f64 {
        let (din, dout) = (self.widths[0], self.output_width());
        self.loss_grad_rows(w, self.inputs.chunks(din).zip(self.targets.chunks(dout)))
            .0
    }

    fn full_gradient(&self, w: &[f64]) -> Vec<f64> {
        let (din, dout) = (self.widths[0], self.output_width());
        self.loss_grad_rows(w, self.inputs.chunks(din).zip(self.targets.chunks(dout)))
            .1
    }

    fn sample_batch(&self, rng: &mut RngStream) -> Batch {
        let (din, dout) = (self.widths[0], self.output_width());
        let samples = self.inputs.len() / din;
        let picked = index::sample(rng, samples, self.batch_size);
        let mut inputs = Vec::with_capacity(self.batch_size * din);
        let mut targets = Vec::with_capacity(self.batch_size * dout);
        for i in picked.iter() {
            inputs.extend_from_slice(&self.inputs[i * din..(i + 1) * din]);
            targets.extend_from_slice(&self.targets[i * dout..(i + 1) * dout]);
        }
        Batch {
            inputs,
            width: din,
            targets,
            noise: Vec::new(),
        }
    }

    fn batch_loss_grad(&self, w: &[f64], batch: &Batch) -> (f64, Vec<f64>) {
        let (din, dout) = (self.widths[0], self.output_width());
        self.loss_grad_rows(w, batch.inputs.chunks(din).zip(batch.targets.chunks(dout)))
    }

    fn optimum(&self) -> Option<f64> {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::testing::{finite_difference, max_rel_err};
    use crate::rng::streams;

    #[test]
    fn layout_matches_dim() {
        let p =
            MlpProblem::new(&[3, 5, 2], 10, 4, &mut RngStream::new(0, streams::PROBLEM)).unwrap();
        let names: Vec<String> = p.layout().into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            [
                "layer0.weight",
                "layer0.bias",
                "layer1.weight",
                "layer1.bias"
            ]
        );
        assert_eq!(p.layout().iter().map(|(_, l)| l).sum::<usize>(), p.dim());
        assert_eq!(p.dim(), 3 * 5 + 5 + 5 * 2 + 2);
    }

    #[test]
    fn needs_a_hidden_layer() {
        assert!(MlpProblem::new(&[3, 1], 10, 4, &mut RngStream::new(0, streams::PROBLEM)).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let p = MlpProblem::new(
            &[3, 6, 4, 2],
            20,
            5,
            &mut RngStream::new(1, streams::PROBLEM),
        )
        .unwrap();
        let mut rng = RngStream::new(8, streams::DATA);
        for _ in 0..5 {
            let w: Vec<f64> = (0..p.dim())
                .map(|_| 0.7 * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect();
            let fd = finite_difference(|x| p.loss(x), &w, 1e-6);
            assert!(max_rel_err(&p.full_gradient(&w), &fd) < 1e-4);
        }
    }

    #[test]
    fn zero_network_zero_targets() {
        let widths = [2, 3, 1];
        let p = MlpProblem::from_data(
            &widths,
            vec![1.0, -2.0, 0.5, 0.5],
            vec![0.0, 0.0],
            2,
            vec![0.0; 13],
        );
        let g = p.full_gradient(&p.initial_point());
        // output bias is the last parameter
        assert_eq!(g[12], 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn symmetric_hidden_units_stay_identical() {
        let widths = [2, 2, 1];
        let mut rng = RngStream::new(3, streams::DATA);
        let inputs: Vec<f64> = (0..16).map(|_| StandardNormal.sample(&mut rng)).collect();
        let targets: Vec<f64> = (0..8).map(|_| StandardNormal.sample(&mut rng)).collect();
        // both hidden units share incoming weights, bias and outgoing weight
        let init = vec![0.3, -0.2, 0.3, -0.2, 0.1, 0.1, 0.5, 0.5, 0.0];
        let p = MlpProblem::from_data(&widths, inputs, targets, 8, init);
        let mut w = p.initial_point();
        for _ in 0..200 {
            let g = p.full_gradient(&w);
            w.iter_mut().zip(&g).for_each(|(w, g)| *w -= 0.1 * g);
        }
        assert_eq!(w[0..2], w[2..4]);
        assert_eq!(w[4], w[5]);
        assert_eq!(w[6], w[7]);
        assert!(p.loss(&w) < p.loss(&p.initial_point()));
    }
}
