use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Diagnostics, LogDensity, Method, SamplerRun};
use crate::error::{Error, Result};
use crate::rng::RngSeed;

/// Lower bound on the kernel bandwidth.
pub const MIN_BANDWIDTH: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvgdConfig {
    pub n_particles: usize,
    pub n_iters: usize,
    /// Adagrad master step size.
    #[serde(default = "default_step_size")]
    pub step_size: f64,
    #[serde(default = "default_adagrad_eps")]
    pub adagrad_eps: f64,
    #[serde(default)]
    pub seed: Option<RngSeed>,
}

fn default_step_size() -> f64 {
    0.05
}

fn default_adagrad_eps() -> f64 {
    1e-8
}

impl SvgdConfig {
    pub fn new(n_particles: usize, n_iters: usize) -> Self {
        Self {
            n_particles,
            n_iters,
            step_size: default_step_size(),
            adagrad_eps: default_adagrad_eps(),
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::config("svgd.n_particles must be positive"));
        }
        if self.n_iters == 0 {
            return Err(Error::config("svgd.n_iters must be positive"));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::config("svgd.step_size must be positive"));
        }
        if !(self.adagrad_eps > 0.0) {
            return Err(Error::config("svgd.adagrad_eps must be positive"));
        }
        Ok(())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `med^2 / ln(S + 1)` from the median pairwise distance, floored at
/// [`MIN_BANDWIDTH`]. Takes the `S x S` squared-distance matrix.
pub fn median_bandwidth(sq_dists: &[Vec<f64>]) -> f64 {
    let s = sq_dists.len();
    let mut d: Vec<f64> = (0..s)
        .flat_map(|i| (i + 1..s).map(move |j| (i, j)))
        .map(|(i, j)| sq_dists[i][j].sqrt())
        .collect();
    if d.is_empty() {
        return MIN_BANDWIDTH;
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let med = if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    };
    (med * med / ((s + 1) as f64).ln()).max(MIN_BANDWIDTH)
}

/// Stein variational gradient descent with an RBF kernel and Adagrad steps.
///
/// The target is refreshed at the start of every iteration, so per-iteration
/// constraint samples and minibatches are shared by all particles.
pub fn svgd_run<T: LogDensity + ?Sized>(
    target: &mut T,
    init: Vec<Vec<f64>>,
    cfg: &SvgdConfig,
) -> Result<SamplerRun> {
    cfg.validate()?;
    if init.len() != cfg.n_particles {
        return Err(Error::config(format!(
            "expected {} initial particles, got {}",
            cfg.n_particles,
            init.len()
        )));
    }
    let d = target.dim();
    if init.iter().any(|p| p.len() != d) {
        return Err(Error::shape("initial particle has the wrong dimension"));
    }
    let start = Instant::now();
    let s = init.len();
    let mut particles = init;
    let mut accum = vec![vec![0.0; d]; s];
    let mut mean_phi_norm = 0.0;

    for it in 0..cfg.n_iters {
        target.refresh(it)?;
        let tgt: &T = target;
        let grads: Vec<Vec<f64>> = particles
            .par_iter()
            .map(|w| {
                let mut g = vec![0.0; d];
                let v = tgt.log_density_and_grad(w, &mut g);
                if !v.is_finite() {
                    g[0] = f64::NAN;
                }
                g
            })
            .collect();
        if grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::numerical(Some(it), "non-finite log density or gradient"));
        }

        let sq: Vec<Vec<f64>> = (0..s)
            .map(|i| (0..s).map(|j| sq_dist(&particles[i], &particles[j])).collect())
            .collect();
        let h = median_bandwidth(&sq);
        let kernel: Vec<Vec<f64>> = sq
            .iter()
            .map(|row| row.iter().map(|q| (-q / h).exp()).collect())
            .collect();

        let phis: Vec<Vec<f64>> = (0..s)
            .into_par_iter()
            .map(|i| {
                let mut phi = vec![0.0; d];
                for j in 0..s {
                    let k = kernel[j][i];
                    let rep = 2.0 / h * k;
                    for c in 0..d {
                        phi[c] += k * grads[j][c] + rep * (particles[i][c] - particles[j][c]);
                    }
                }
                for v in &mut phi {
                    *v /= s as f64;
                }
                phi
            })
            .collect();

        mean_phi_norm = phis
            .iter()
            .map(|phi| phi.iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum::<f64>()
            / s as f64;

        particles
            .par_iter_mut()
            .zip(accum.par_iter_mut())
            .zip(phis.par_iter())
            .for_each(|((w, acc), phi)| adagrad_step(w, acc, phi, cfg.step_size, cfg.adagrad_eps));

        if particles.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::numerical(Some(it), "particle became non-finite"));
        }
    }

    Ok(SamplerRun {
        samples: particles,
        diagnostics: Diagnostics {
            method: Method::Svgd,
            acceptance_rate: None,
            step_size: None,
            final_mean_grad_norm: Some(mean_phi_norm),
            iterations: cfg.n_iters,
            wall_time_secs: Some(start.elapsed().as_secs_f64()),
        },
    })
}

/// One Adagrad ascent step along `direction`.
pub(crate) fn adagrad_step(w: &mut [f64], accum: &mut [f64], direction: &[f64], lr: f64, eps: f64) {
    for ((wc, ac), &g) in w.iter_mut().zip(accum.iter_mut()).zip(direction) {
        *ac += g * g;
        *wc += lr * g / (ac.sqrt() + eps);
    }
}
