//! Forward pass, reverse-mode gradients and data likelihoods for the MLP.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::weights::{Architecture, LayerShape};

/// An architecture bound to one weight vector.
#[derive(Debug, Clone)]
pub struct Network<'a> {
    arch: &'a Architecture,
    layers: Vec<LayerShape>,
    w: &'a [f64],
}

/// Pre-activations and activations of every layer for one input.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input, the last entry is the output.
    activations: Vec<Vec<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("non-empty cache")
    }
}

impl<'a> Network<'a> {
    pub fn new(arch: &'a Architecture, w: &'a [f64]) -> Self {
        assert_eq!(
            w.len(),
            arch.parameter_count(),
            "weight vector length does not match architecture"
        );
        Self {
            arch,
            layers: arch.layers(),
            w,
        }
    }

    pub fn arch(&self) -> &Architecture {
        self.arch
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cache = self.forward_cached(x);
        cache.activations.pop().expect("non-empty cache")
    }

    pub fn forward_cached(&self, x: &[f64]) -> ForwardCache {
        assert_eq!(x.len(), self.arch.input_dim, "input dimension mismatch");
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        activations.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (l, shape) in self.layers.iter().enumerate() {
            let input = &activations[l];
            let weights = &self.w[shape.weight_range()];
            let bias = &self.w[shape.bias_range()];
            let z: Vec<f64> = (0..shape.fan_out)
                .map(|i| {
                    let row = &weights[i * shape.fan_in..(i + 1) * shape.fan_in];
                    row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>() + bias[i]
                })
                .collect();
            if l == last {
                activations.push(z);
            } else {
                let act = self.arch.activation;
                activations.push(z.iter().map(|&v| act.apply(v)).collect());
                pre.push(z);
            }
        }
        ForwardCache { activations, pre }
    }

    /// Accumulate `scale * dL/dW` into `grad` for an output gradient `dl_dout`.
    pub fn backprop_into(&self, cache: &ForwardCache, dl_dout: &[f64], scale: f64, grad: &mut [f64]) {
        assert_eq!(dl_dout.len(), self.arch.output_dim, "output gradient dimension mismatch");
        assert_eq!(grad.len(), self.w.len());
        let mut delta: Vec<f64> = dl_dout.iter().map(|g| g * scale).collect();
        for l in (0..self.layers.len()).rev() {
            let shape = &self.layers[l];
            let input = &cache.activations[l];
            let wr = shape.weight_range();
            let br = shape.bias_range();
            for i in 0..shape.fan_out {
                let d = delta[i];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[wr.start + i * shape.fan_in..wr.start + (i + 1) * shape.fan_in];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
                grad[br.start + i] += d;
            }
            if l == 0 {
                break;
            }
            let weights = &self.w[wr];
            let z_prev = &cache.pre[l - 1];
            let act = self.arch.activation;
            delta = (0..shape.fan_in)
                .map(|j| {
                    let back: f64 = (0..shape.fan_out)
                        .map(|i| weights[i * shape.fan_in + j] * delta[i])
                        .sum();
                    back * act.derivative(z_prev[j])
                })
                .collect();
        }
    }
}

pub fn forward(arch: &Architecture, w: &[f64], x: &[f64]) -> Vec<f64> {
    Network::new(arch, w).forward(x)
}

/// Gradient w.r.t. the weights of any scalar whose output gradient is `dl_dout`.
pub fn backprop_scalar(arch: &Architecture, w: &[f64], x: &[f64], dl_dout: &[f64]) -> Vec<f64> {
    let net = Network::new(arch, w);
    let cache = net.forward_cached(x);
    let mut grad = vec![0.0; w.len()];
    net.backprop_into(&cache, dl_dout, 1.0, &mut grad);
    grad
}

/// Numerically stable `log(sum(exp(v)))`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FullBatch {
    #[serde(rename = "FULL")]
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchSize {
    Full(FullBatch),
    Size(NonZeroUsize),
}

impl BatchSize {
    pub const FULL: BatchSize = BatchSize::Full(FullBatch::Full);

    pub fn size(n: usize) -> Self {
        NonZeroUsize::new(n).map_or(Self::FULL, BatchSize::Size)
    }

    /// `None` when the whole dataset should be used.
    pub fn effective(self, n: usize) -> Option<usize> {
        match self {
            BatchSize::Full(_) => None,
            BatchSize::Size(s) if s.get() >= n => None,
            BatchSize::Size(s) => Some(s.get()),
        }
    }
}

impl Default for BatchSize {
    fn default() -> Self {
        Self::FULL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LikelihoodConfig {
    pub regression_noise_sigma: f64,
    pub batch_size: BatchSize,
}

impl Default for LikelihoodConfig {
    fn default() -> Self {
        Self {
            regression_noise_sigma: 0.1,
            batch_size: BatchSize::FULL,
        }
    }
}

impl LikelihoodConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.regression_noise_sigma > 0.0) || !self.regression_noise_sigma.is_finite() {
            return Err(Error::config("regression_noise_sigma must be positive"));
        }
        Ok(())
    }
}

/// `log N(y; mu, sigma^2)`.
#[inline]
pub fn gaussian_log_density(y: f64, mu: f64, sigma: f64) -> f64 {
    let r = (y - mu) / sigma;
    -0.5 * (2.0 * PI * sigma * sigma).ln() - 0.5 * r * r
}

/// Data log-likelihood and its weight gradient.
///
/// With a batch the value and gradient are rescaled by `N / |batch|`, giving
/// an unbiased estimate of the full-data quantity.
pub fn log_likelihood(
    arch: &Architecture,
    w: &[f64],
    data: &Dataset,
    cfg: &LikelihoodConfig,
    batch: Option<&[usize]>,
) -> Result<(f64, Vec<f64>)> {
    if w.len() != arch.parameter_count() {
        return Err(Error::shape("weight vector length does not match architecture"));
    }
    if !data.is_empty() {
        data.check_against(arch)?;
    }
    if let Some(b) = batch {
        if b.is_empty() && !data.is_empty() {
            return Err(Error::config("minibatch must be non-empty"));
        }
        if b.iter().any(|&i| i >= data.len()) {
            return Err(Error::shape("minibatch index out of range"));
        }
    }
    let mut grad = vec![0.0; w.len()];
    let value = accumulate_log_likelihood(arch, w, data, cfg, batch, &mut grad);
    Ok((value, grad))
}

/// Adds the likelihood gradient into `grad` and returns the value. Inputs are
/// assumed validated.
pub(crate) fn accumulate_log_likelihood(
    arch: &Architecture,
    w: &[f64],
    data: &Dataset,
    cfg: &LikelihoodConfig,
    batch: Option<&[usize]>,
    grad: &mut [f64],
) -> f64 {
    let n = data.len();
    if n == 0 {
        return 0.0;
    }
    let net = Network::new(arch, w);
    let all: Vec<usize>;
    let indices = match batch {
        Some(b) => b,
        None => {
            all = (0..n).collect();
            &all
        }
    };
    let scale = n as f64 / indices.len() as f64;
    let mut value = 0.0;
    match &data.targets {
        Targets::Regression(targets) => {
            let sigma = cfg.regression_noise_sigma;
            let inv_var = 1.0 / (sigma * sigma);
            for &i in indices {
                let cache = net.forward_cached(&data.inputs[i]);
                let out = cache.output();
                let y = &targets[i];
                let mut dl = vec![0.0; out.len()];
                for d in 0..out.len() {
                    value += gaussian_log_density(y[d], out[d], sigma);
                    dl[d] = (y[d] - out[d]) * inv_var;
                }
                net.backprop_into(&cache, &dl, scale, grad);
            }
        }
        Targets::Classification(labels) => {
            for &i in indices {
                let cache = net.forward_cached(&data.inputs[i]);
                let logp = log_softmax(cache.output());
                let label = labels[i];
                value += logp[label];
                let mut dl: Vec<f64> = logp.iter().map(|lp| -lp.exp()).collect();
                dl[label] += 1.0;
                net.backprop_into(&cache, &dl, scale, grad);
            }
        }
    }
    value * scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_diff_grad, max_relative_error};
    use crate::rng::stream;
    use crate::weights::{Activation, Task, WeightVector};
    use rand::Rng;

    /// Independent forward pass written straight from the matrix form.
    fn naive_forward(arch: &Architecture, w: &WeightVector, x: &[f64]) -> Vec<f64> {
        let layers = w.to_layers(arch);
        let mut a = x.to_vec();
        for (l, layer) in layers.iter().enumerate() {
            let fan_in = a.len();
            let fan_out = layer.bias.len();
            let mut z = vec![0.0; fan_out];
            for i in 0..fan_out {
                let mut s = layer.bias[i];
                for j in 0..fan_in {
                    s += layer.weights[i * fan_in + j] * a[j];
                }
                z[i] = s;
            }
            a = if l + 1 == layers.len() {
                z
            } else {
                z.into_iter()
                    .map(|v| match arch.activation {
                        Activation::Rbf => (-v * v).exp(),
                        Activation::Tanh => v.tanh(),
                    })
                    .collect()
            };
        }
        a
    }

    fn random_arch<R: Rng>(rng: &mut R, task: Task) -> Architecture {
        let hidden = (0..rng.random_range(1..3)).map(|_| rng.random_range(1..6)).collect();
        let act = if rng.random_bool(0.5) { Activation::Rbf } else { Activation::Tanh };
        let out = match task {
            Task::Regression => rng.random_range(1..3),
            Task::Classification => rng.random_range(2..4),
        };
        Architecture::new(rng.random_range(1..4), hidden, out, act, task).unwrap()
    }

    fn random_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-scale..scale)).collect()
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let arch = Architecture::regression(3, vec![4], 2);
        let w = vec![0.0; arch.parameter_count()];
        assert_eq!(forward(&arch, &w, &[1.0, -2.0, 3.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn single_unit_forward() {
        let arch = Architecture::regression(1, vec![1], 1);
        // W1, b1, W2, b2
        let w = [0.0, 0.0, 1.0, 0.0];
        assert_eq!(forward(&arch, &w, &[5.0]), vec![1.0]);
    }

    #[test]
    fn forward_matches_naive() {
        let mut rng = stream(11, 0);
        for _ in 0..50 {
            let arch = random_arch(&mut rng, Task::Regression);
            let w = WeightVector::sample_prior(&arch, 1.0, &mut rng);
            let x = random_vec(&mut rng, arch.input_dim, 2.0);
            let a = forward(&arch, w.as_slice(), &x);
            let b = naive_forward(&arch, &w, &x);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn backprop_zero_output_gradient() {
        let arch = Architecture::regression(2, vec![3], 1);
        let w = vec![0.3; arch.parameter_count()];
        let g = backprop_scalar(&arch, &w, &[0.1, 0.2], &[0.0]);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn backprop_single_unit_at_zero() {
        let arch = Architecture::regression(1, vec![1], 1);
        let g = backprop_scalar(&arch, &[0.0; 4], &[0.7], &[1.0]);
        assert_eq!(g, vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let mut rng = stream(12, 0);
        for _ in 0..30 {
            let arch = random_arch(&mut rng, Task::Regression);
            let w = WeightVector::sample_prior(&arch, 1.0, &mut rng);
            let x = random_vec(&mut rng, arch.input_dim, 1.5);
            let c = random_vec(&mut rng, arch.output_dim, 1.0);
            let analytic = backprop_scalar(&arch, w.as_slice(), &x, &c);
            let numeric = finite_diff_grad(
                |w| forward(&arch, w, &x).iter().zip(&c).map(|(a, b)| a * b).sum(),
                w.as_slice(),
                1e-5,
            )
            .unwrap();
            assert!(max_relative_error(&analytic, &numeric) <= 1e-5);
        }
    }

    #[test]
    fn likelihood_at_mode() {
        let arch = Architecture::regression(1, vec![2], 1);
        let w = vec![0.0; arch.parameter_count()];
        let data = Dataset::regression(vec![vec![0.0]; 4], vec![vec![0.0]; 4]).unwrap();
        let cfg = LikelihoodConfig {
            regression_noise_sigma: 1.0,
            ..Default::default()
        };
        let (v, g) = log_likelihood(&arch, &w, &data, &cfg, None).unwrap();
        assert!((v - (-2.0 * (2.0 * PI).ln())).abs() < 1e-12);
        assert!(g.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn uniform_softmax_likelihood() {
        let arch = Architecture::classification(2, vec![3], 3);
        let w = vec![0.0; arch.parameter_count()];
        let data = Dataset::classification(vec![vec![0.4, -0.2]], vec![2]).unwrap();
        let (v, _) = log_likelihood(&arch, &w, &data, &Default::default(), None).unwrap();
        assert!((v - (1.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_dataset_contributes_nothing() {
        let arch = Architecture::regression(1, vec![2], 1);
        let w = vec![0.5; arch.parameter_count()];
        let (v, g) =
            log_likelihood(&arch, &w, &Dataset::empty(Task::Regression), &Default::default(), None)
                .unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|x| *x == 0.0));
    }

    fn random_dataset<R: Rng>(rng: &mut R, arch: &Architecture, n: usize) -> Dataset {
        let inputs = (0..n).map(|_| random_vec(rng, arch.input_dim, 2.0)).collect();
        match arch.task {
            Task::Regression => Dataset::regression(
                inputs,
                (0..n).map(|_| random_vec(rng, arch.output_dim, 2.0)).collect(),
            ),
            Task::Classification => Dataset::classification(
                inputs,
                (0..n).map(|_| rng.random_range(0..arch.output_dim)).collect(),
            ),
        }
        .unwrap()
    }

    #[test]
    fn likelihood_gradients_match_finite_differences() {
        let mut rng = stream(13, 0);
        for trial in 0..24 {
            let task = if trial % 2 == 0 { Task::Regression } else { Task::Classification };
            let arch = random_arch(&mut rng, task);
            let w = WeightVector::sample_prior(&arch, 0.8, &mut rng);
            let data = random_dataset(&mut rng, &arch, 5);
            let cfg = LikelihoodConfig {
                regression_noise_sigma: 0.7,
                ..Default::default()
            };
            let (_, analytic) = log_likelihood(&arch, w.as_slice(), &data, &cfg, None).unwrap();
            let numeric = finite_diff_grad(
                |w| log_likelihood(&arch, w, &data, &cfg, None).unwrap().0,
                w.as_slice(),
                1e-5,
            )
            .unwrap();
            let err = max_relative_error(&analytic, &numeric);
            assert!(err <= 1e-5, "trial {trial}: rel err {err}");
        }
    }

    #[test]
    fn minibatch_estimator_is_unbiased() {
        let mut rng = stream(14, 0);
        for task in [Task::Regression, Task::Classification] {
            let arch = random_arch(&mut rng, task);
            let w = WeightVector::sample_prior(&arch, 1.0, &mut rng);
            let data = random_dataset(&mut rng, &arch, 6);
            let cfg = LikelihoodConfig::default();
            let (full, full_grad) = log_likelihood(&arch, w.as_slice(), &data, &cfg, None).unwrap();
            // every batch of size 2
            let mut sum = 0.0;
            let mut grad_sum = vec![0.0; w.len()];
            let mut count = 0.0;
            for a in 0..6 {
                for b in (a + 1)..6 {
                    let (v, g) =
                        log_likelihood(&arch, w.as_slice(), &data, &cfg, Some(&[a, b])).unwrap();
                    sum += v;
                    grad_sum.iter_mut().zip(&g).for_each(|(s, x)| *s += x);
                    count += 1.0;
                }
            }
            assert!((sum / count - full).abs() <= 1e-10 * full.abs().max(1.0));
            for (s, f) in grad_sum.iter().zip(&full_grad) {
                assert!((s / count - f).abs() <= 1e-10 * f.abs().max(1.0));
            }
        }
    }

    #[test]
    fn softmax_likelihood_is_non_positive() {
        let mut rng = stream(15, 0);
        for _ in 0..20 {
            let arch = random_arch(&mut rng, Task::Classification);
            let w = WeightVector::sample_prior(&arch, 3.0, &mut rng);
            let data = random_dataset(&mut rng, &arch, 4);
            let (v, _) = log_likelihood(&arch, w.as_slice(), &data, &Default::default(), None).unwrap();
            assert!(v < 0.0);
        }
    }

    #[test]
    fn batch_size_serde() {
        let full: BatchSize = serde_json::from_str("\"FULL\"").unwrap();
        assert_eq!(full, BatchSize::FULL);
        let n: BatchSize = serde_json::from_str("32").unwrap();
        assert_eq!(n.effective(100), Some(32));
        assert_eq!(n.effective(10), None);
        assert!(serde_json::from_str::<BatchSize>("0").is_err());
    }
}
