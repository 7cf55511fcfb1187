use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Diagnostics, LogDensity, Method, SamplerRun};
use crate::error::{Error, Result};
use crate::rng::{streams, RngSeed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HmcConfig {
    pub step_size: f64,
    /// Zero gives the identity proposal.
    pub leapfrog_steps: usize,
    pub burn_in: usize,
    pub n_samples: usize,
    #[serde(default = "one")]
    pub thin: usize,
    #[serde(default)]
    pub seed: Option<RngSeed>,
    /// When set, the step size is tuned during burn-in by dual averaging
    /// towards this mean acceptance probability, then frozen.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_accept: Option<f64>,
}

fn one() -> usize {
    1
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::config("hmc.step_size must be positive"));
        }
        if self.n_samples == 0 {
            return Err(Error::config("hmc.n_samples must be positive"));
        }
        if self.thin == 0 {
            return Err(Error::config("hmc.thin must be at least 1"));
        }
        if let Some(t) = self.target_accept {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::config("hmc.target_accept must lie in (0, 1)"));
            }
        }
        Ok(())
    }

    pub fn total_iterations(&self) -> usize {
        self.burn_in + self.n_samples * self.thin
    }
}

/// Runs `steps` leapfrog steps of size `eps` on `H = -log p(w) + p.p / 2`.
///
/// `grad` must hold the gradient of `log p` at `w` on entry and holds it at the
/// final position on exit. Returns `log p` at the final position.
pub fn leapfrog<T: LogDensity + ?Sized>(
    target: &T,
    w: &mut [f64],
    p: &mut [f64],
    grad: &mut [f64],
    eps: f64,
    steps: usize,
) -> f64 {
    if steps == 0 {
        return target.log_density_and_grad(w, grad);
    }
    let mut logp = f64::NAN;
    axpy(p, 0.5 * eps, grad);
    for step in 0..steps {
        axpy(w, eps, p);
        logp = target.log_density_and_grad(w, grad);
        if !logp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return f64::NAN;
        }
        let scale = if step + 1 == steps { 0.5 * eps } else { eps };
        axpy(p, scale, grad);
    }
    logp
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn kinetic(p: &[f64]) -> f64 {
    0.5 * p.iter().map(|v| v * v).sum::<f64>()
}

/// Dual-averaging step-size adaptation (Nesterov's scheme as used by NUTS).
#[derive(Debug, Clone)]
struct DualAveraging {
    target: f64,
    mu: f64,
    h_bar: f64,
    log_eps: f64,
    log_eps_bar: f64,
    m: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps0: f64, target: f64) -> Self {
        Self {
            target,
            mu: (10.0 * eps0).ln(),
            h_bar: 0.0,
            log_eps: eps0.ln(),
            log_eps_bar: 0.0,
            m: 0.0,
        }
    }

    /// Feeds one acceptance probability; returns the next step size.
    fn update(&mut self, accept_prob: f64) -> f64 {
        self.m += 1.0;
        let w = 1.0 / (self.m + Self::T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_prob);
        self.log_eps = self.mu - self.m.sqrt() / Self::GAMMA * self.h_bar;
        let k = self.m.powf(-Self::KAPPA);
        self.log_eps_bar = k * self.log_eps + (1.0 - k) * self.log_eps_bar;
        self.log_eps.exp()
    }

    /// Averaged step size; `None` before any update.
    fn final_step(&self) -> Option<f64> {
        (self.m > 0.0).then(|| self.log_eps_bar.exp())
    }
}

/// Hamiltonian Monte Carlo with identity mass matrix.
///
/// Keeps every `thin`-th state after `burn_in` iterations. Proposals whose
/// trajectory hits a non-finite density are rejected.
pub fn hmc_run<T: LogDensity + ?Sized>(
    target: &mut T,
    init: Vec<f64>,
    cfg: &HmcConfig,
    seed: RngSeed,
) -> Result<SamplerRun> {
    cfg.validate()?;
    if target.is_stochastic() {
        return Err(Error::config(
            "HMC needs a deterministic target: use FIXED_AT_SETUP sampling and a full batch",
        ));
    }
    if init.len() != target.dim() {
        return Err(Error::shape("initial state has the wrong dimension"));
    }
    let start = Instant::now();
    let mut momentum_rng = seed.stream(streams::MOMENTUM);
    let mut accept_rng = seed.stream(streams::ACCEPT);

    let d = init.len();
    let mut w = init;
    let mut grad = vec![0.0; d];
    let mut logp = target.log_density_and_grad(&w, &mut grad);
    if !logp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::numerical(None, "log density is not finite at the initial state"));
    }

    let total = cfg.total_iterations();
    let mut samples = Vec::with_capacity(cfg.n_samples);
    let mut accepted = 0usize;
    let mut w_new = vec![0.0; d];
    let mut p = vec![0.0; d];
    let mut grad_new = vec![0.0; d];
    let mut eps = cfg.step_size;
    let mut adapt = cfg.target_accept.map(|t| DualAveraging::new(cfg.step_size, t));

    for it in 0..total {
        if it == cfg.burn_in {
            if let Some(final_eps) = adapt.take().and_then(|a| a.final_step()) {
                eps = final_eps;
            }
        }
        for pi in p.iter_mut() {
            *pi = momentum_rng.sample(StandardNormal);
        }
        let u: f64 = accept_rng.random();
        if cfg.leapfrog_steps == 0 {
            accepted += 1;
        } else {
            let h_old = -logp + kinetic(&p);
            w_new.copy_from_slice(&w);
            grad_new.copy_from_slice(&grad);
            let logp_new = leapfrog(
                target,
                &mut w_new,
                &mut p,
                &mut grad_new,
                eps,
                cfg.leapfrog_steps,
            );
            let h_new = -logp_new + kinetic(&p);
            if let Some(a) = adapt.as_mut() {
                let prob = if h_new.is_finite() { (h_old - h_new).exp().min(1.0) } else { 0.0 };
                eps = a.update(prob);
            }
            if h_new.is_finite() && u.ln() < h_old - h_new {
                std::mem::swap(&mut w, &mut w_new);
                std::mem::swap(&mut grad, &mut grad_new);
                logp = logp_new;
                accepted += 1;
            }
        }
        if it >= cfg.burn_in && (it - cfg.burn_in + 1) % cfg.thin == 0 {
            samples.push(w.clone());
        }
    }

    Ok(SamplerRun {
        samples,
        diagnostics: Diagnostics {
            method: Method::Hmc,
            acceptance_rate: Some(accepted as f64 / total.max(1) as f64),
            final_mean_grad_norm: None,
            step_size: Some(eps),
            iterations: total,
            wall_time_secs: Some(start.elapsed().as_secs_f64()),
        },
    })
}
