//! Log prior densities over the weights and their gradients.
//!
//! The constraint prior is the isotropic Gaussian weight prior times one
//! adherence term per constrained region:
//!
//! * positive regression regions: a Gaussian (mixture) around the target
//!   function at inputs drawn from the region,
//! * positive classification regions: a Dirichlet on the softmax output,
//! * negative regions: `exp(-gamma * E[c(x, phi(x))])` with the soft
//!   classifier `c`.
//!
//! All terms are Monte-Carlo estimates over inputs drawn by the caller, so a
//! fixed set of draws gives a deterministic objective.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::bnn::{log_softmax, log_sum_exp, Network};
use crate::constraints::{
    classifier_c_with_grad, sample_pi, ConstraintSet, NegativeRegion, PositiveRegion,
    PositiveTargets, Region, SamplerPi, SoftIndicatorParams,
};
use crate::error::{Error, Result};
use crate::weights::{Architecture, Task};

/// Probabilities below this are clamped before taking logs in the Dirichlet term.
pub const DIRICHLET_PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ResampleMode {
    /// Draw the constraint inputs once; the prior is a fixed function of the weights.
    FixedAtSetup,
    /// Draw fresh constraint inputs every iteration.
    PerIteration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub sigma_p: f64,
    pub gamma: f64,
    pub alpha_allowed: f64,
    pub alpha_forbidden: f64,
    pub indicator: SoftIndicatorParams,
    pub pi: SamplerPi,
    /// `None` picks the sampler's default: fixed for HMC, per-iteration for SVGD.
    pub resample_mode: Option<ResampleMode>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            sigma_p: 1.0,
            gamma: 10_000.0,
            alpha_allowed: 10.0,
            alpha_forbidden: 0.01,
            indicator: SoftIndicatorParams::default(),
            pi: SamplerPi::default(),
            resample_mode: None,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma_p", self.sigma_p),
            ("alpha_allowed", self.alpha_allowed),
            ("alpha_forbidden", self.alpha_forbidden),
            ("indicator.tau0", self.indicator.tau0),
            ("indicator.tau1", self.indicator.tau1),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be positive and finite")));
            }
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::config("gamma must be non-negative and finite"));
        }
        if self.alpha_forbidden >= self.alpha_allowed {
            return Err(Error::config("alpha_forbidden must be below alpha_allowed"));
        }
        self.pi.validate()
    }
}

/// Constraint inputs, one list per region of a [`ConstraintSet`].
pub type RegionSamples = Vec<Vec<Vec<f64>>>;

pub fn draw_region_samples<R: Rng + ?Sized>(
    set: &ConstraintSet,
    arch: &Architecture,
    pi: &SamplerPi,
    rng: &mut R,
) -> Result<RegionSamples> {
    set.regions
        .iter()
        .map(|r| sample_pi(r.input_box(), arch.input_dim, pi, rng))
        .collect()
}

/// `sum_i log N(w_i; 0, sigma_p^2)` and its gradient `-w / sigma_p^2`.
pub fn log_weight_prior(w: &[f64], sigma_p: f64) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; w.len()];
    let v = accumulate_weight_prior(w, sigma_p, &mut grad);
    (v, grad)
}

pub(crate) fn accumulate_weight_prior(w: &[f64], sigma_p: f64, grad: &mut [f64]) -> f64 {
    let var = sigma_p * sigma_p;
    let norm = -0.5 * (2.0 * PI * var).ln();
    let mut value = 0.0;
    for (g, &wi) in grad.iter_mut().zip(w) {
        value += norm - 0.5 * wi * wi / var;
        *g -= wi / var;
    }
    value
}

/// Gaussian (mixture) adherence to a positive regression region.
pub fn log_positive_regression(
    w: &[f64],
    arch: &Architecture,
    region: &PositiveRegion,
    samples: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    check_weights(w, arch)?;
    if arch.task != Task::Regression {
        return Err(Error::config("positive regression prior needs a regression task"));
    }
    let mut grad = vec![0.0; w.len()];
    let v = accumulate_positive(w, arch, region, &PriorConfig::default(), samples, &mut grad)?;
    Ok((v, grad))
}

/// Dirichlet adherence to a positive classification region.
pub fn log_positive_classification(
    w: &[f64],
    arch: &Architecture,
    region: &PositiveRegion,
    cfg: &PriorConfig,
    samples: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    check_weights(w, arch)?;
    if arch.task != Task::Classification {
        return Err(Error::config("Dirichlet prior needs a classification task"));
    }
    let mut grad = vec![0.0; w.len()];
    let v = accumulate_positive(w, arch, region, cfg, samples, &mut grad)?;
    Ok((v, grad))
}

/// `-gamma * mean_m c(x_m, phi(x_m))` for a negative region.
pub fn log_negative(
    w: &[f64],
    arch: &Architecture,
    region: &NegativeRegion,
    cfg: &PriorConfig,
    samples: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    check_weights(w, arch)?;
    if arch.task != Task::Regression {
        return Err(Error::config(
            "negative constraints do not apply to classification",
        ));
    }
    let mut grad = vec![0.0; w.len()];
    let v = accumulate_negative(&Network::new(arch, w), region, cfg, samples, &mut grad);
    Ok((v, grad))
}

/// Log of the (unnormalized) constraint prior: weight prior plus every region term.
pub fn log_constraint_prior(
    w: &[f64],
    arch: &Architecture,
    set: &ConstraintSet,
    cfg: &PriorConfig,
    samples: &RegionSamples,
) -> Result<(f64, Vec<f64>)> {
    check_weights(w, arch)?;
    set.validate(arch)?;
    check_samples(set, arch, samples)?;
    let mut grad = vec![0.0; w.len()];
    let v = accumulate_constraint_prior(w, arch, set, cfg, samples, &mut grad);
    Ok((v, grad))
}

/// Inputs must already be validated.
pub(crate) fn accumulate_constraint_prior(
    w: &[f64],
    arch: &Architecture,
    set: &ConstraintSet,
    cfg: &PriorConfig,
    samples: &RegionSamples,
    grad: &mut [f64],
) -> f64 {
    let mut value = accumulate_weight_prior(w, cfg.sigma_p, grad);
    let net = Network::new(arch, w);
    for (region, xs) in set.regions.iter().zip(samples) {
        value += match region {
            Region::Negative(n) => accumulate_negative(&net, n, cfg, xs, grad),
            Region::Positive(p) => positive_term(&net, p, cfg, xs, grad),
        };
    }
    value
}

pub(crate) fn check_samples(
    set: &ConstraintSet,
    arch: &Architecture,
    samples: &RegionSamples,
) -> Result<()> {
    if samples.len() != set.regions.len() {
        return Err(Error::shape(format!(
            "{} sample lists for {} regions",
            samples.len(),
            set.regions.len()
        )));
    }
    if samples.iter().flatten().any(|x| x.len() != arch.input_dim) {
        return Err(Error::shape("constraint sample has the wrong input dimension"));
    }
    Ok(())
}

fn check_weights(w: &[f64], arch: &Architecture) -> Result<()> {
    if w.len() != arch.parameter_count() {
        return Err(Error::shape(format!(
            "weight vector has {} entries, architecture needs {}",
            w.len(),
            arch.parameter_count()
        )));
    }
    Ok(())
}

fn accumulate_positive(
    w: &[f64],
    arch: &Architecture,
    region: &PositiveRegion,
    cfg: &PriorConfig,
    samples: &[Vec<f64>],
    grad: &mut [f64],
) -> Result<f64> {
    let wrapped = ConstraintSet {
        regions: vec![Region::Positive(region.clone())],
    };
    wrapped.validate(arch)?;
    if samples.iter().any(|x| x.len() != arch.input_dim) {
        return Err(Error::shape("constraint sample has the wrong input dimension"));
    }
    Ok(positive_term(&Network::new(arch, w), region, cfg, samples, grad))
}

fn positive_term(
    net: &Network<'_>,
    region: &PositiveRegion,
    cfg: &PriorConfig,
    samples: &[Vec<f64>],
    grad: &mut [f64],
) -> f64 {
    match &region.targets {
        PositiveTargets::Regression(_) => gaussian_mixture_term(net, region, samples, grad),
        PositiveTargets::Classification(allowed) => {
            dirichlet_term(net, allowed, cfg, samples, grad)
        }
    }
}

fn gaussian_mixture_term(
    net: &Network<'_>,
    region: &PositiveRegion,
    samples: &[Vec<f64>],
    grad: &mut [f64],
) -> f64 {
    let PositiveTargets::Regression(comps) = &region.targets else {
        unreachable!("regression targets");
    };
    let out_dim = net.arch().output_dim;
    let mut value = 0.0;
    let mut log_terms = vec![0.0; comps.len()];
    for x in samples {
        let cache = net.forward_cached(x);
        let out = cache.output();
        let targets: Vec<f64> = comps.iter().map(|c| c.target.eval(x, &[])).collect();
        for (k, c) in comps.iter().enumerate() {
            log_terms[k] = c.weight.ln()
                + crate::bnn::gaussian_log_density(out[c.output], targets[k], c.sigma);
        }
        let lse = log_sum_exp(&log_terms);
        value += lse;
        let mut dl = vec![0.0; out_dim];
        for (k, c) in comps.iter().enumerate() {
            let resp = (log_terms[k] - lse).exp();
            dl[c.output] += resp * (targets[k] - out[c.output]) / (c.sigma * c.sigma);
        }
        net.backprop_into(&cache, &dl, 1.0, grad);
    }
    value
}

/// `log B(alpha) = sum_k lnGamma(alpha_k) - lnGamma(sum_k alpha_k)`.
pub fn log_dirichlet_normalizer(alpha: &[f64]) -> f64 {
    alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(alpha.iter().sum())
}

pub fn dirichlet_alpha(classes: usize, allowed: &[usize], cfg: &PriorConfig) -> Vec<f64> {
    (0..classes)
        .map(|k| {
            if allowed.contains(&k) {
                cfg.alpha_allowed
            } else {
                cfg.alpha_forbidden
            }
        })
        .collect()
}

fn dirichlet_term(
    net: &Network<'_>,
    allowed: &[usize],
    cfg: &PriorConfig,
    samples: &[Vec<f64>],
    grad: &mut [f64],
) -> f64 {
    let classes = net.arch().output_dim;
    let alpha = dirichlet_alpha(classes, allowed, cfg);
    let log_b = log_dirichlet_normalizer(&alpha);
    let log_floor = DIRICHLET_PROB_FLOOR.ln();
    let mut value = 0.0;
    for x in samples {
        let cache = net.forward_cached(x);
        let logp = log_softmax(cache.output());
        let mut active_mass = 0.0;
        let mut dl = vec![0.0; classes];
        for k in 0..classes {
            let a1 = alpha[k] - 1.0;
            if logp[k] > log_floor {
                value += a1 * logp[k];
                dl[k] += a1;
                active_mass += a1;
            } else {
                value += a1 * log_floor;
            }
        }
        for k in 0..classes {
            dl[k] -= active_mass * logp[k].exp();
        }
        value -= log_b;
        net.backprop_into(&cache, &dl, 1.0, grad);
    }
    value
}

fn accumulate_negative(
    net: &Network<'_>,
    region: &NegativeRegion,
    cfg: &PriorConfig,
    samples: &[Vec<f64>],
    grad: &mut [f64],
) -> f64 {
    if samples.is_empty() || cfg.gamma == 0.0 {
        return 0.0;
    }
    let scale = -cfg.gamma / samples.len() as f64;
    let mut total_c = 0.0;
    let out_dim = net.arch().output_dim;
    for x in samples {
        let cache = net.forward_cached(x);
        let mut dl = vec![0.0; out_dim];
        total_c += classifier_c_with_grad(x, cache.output(), region, &cfg.indicator, scale, &mut dl);
        if dl.iter().any(|g| *g != 0.0) {
            net.backprop_into(&cache, &dl, 1.0, grad);
        }
    }
    scale * total_c
}
