//! Posterior inference over the unnormalized log-joint
//! `log p_C(W) + log p(D | W)`.

mod hmc;
mod svgd;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

pub use hmc::{hmc_run, leapfrog, HmcConfig};
pub use svgd::{median_bandwidth, svgd_run, SvgdConfig};

use crate::bnn::{accumulate_log_likelihood, LikelihoodConfig};
use crate::constraints::ConstraintSet;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::priors::{
    accumulate_constraint_prior, check_samples, draw_region_samples, PriorConfig, RegionSamples,
    ResampleMode,
};
use crate::rng::{streams, RngSeed};
use crate::weights::{Architecture, WeightVector};

/// A differentiable log density over a flat parameter vector.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Returns the log density and overwrites `grad` with its gradient.
    fn log_density_and_grad(&self, w: &[f64], grad: &mut [f64]) -> f64;

    /// True when [`LogDensity::refresh`] changes the density.
    fn is_stochastic(&self) -> bool {
        false
    }

    /// Called by samplers before iteration `iteration`.
    fn refresh(&mut self, _iteration: usize) -> Result<()> {
        Ok(())
    }
}

/// Wraps a closure `f(w, grad) -> value` as a deterministic target.
pub struct FnTarget<F> {
    dim: usize,
    f: F,
}

impl<F> FnTarget<F>
where
    F: Fn(&[f64], &mut [f64]) -> f64 + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> LogDensity for FnTarget<F>
where
    F: Fn(&[f64], &mut [f64]) -> f64 + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density_and_grad(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        (self.f)(w, grad)
    }
}

/// Everything that defines the posterior.
#[derive(Debug, Clone)]
pub struct Model {
    pub arch: Architecture,
    pub constraints: ConstraintSet,
    pub prior: PriorConfig,
    pub data: Dataset,
    pub likelihood: LikelihoodConfig,
}

impl Model {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.prior.validate()?;
        self.likelihood.validate()?;
        self.constraints.validate(&self.arch)?;
        if self.data.task() != self.arch.task {
            return Err(Error::config("dataset task does not match the architecture"));
        }
        if !self.data.is_empty() {
            self.data.check_against(&self.arch)?;
        }
        Ok(())
    }
}

/// Log-joint value and gradient at `w` for the given constraint samples and
/// optional minibatch.
pub fn log_joint(
    w: &[f64],
    model: &Model,
    samples: &RegionSamples,
    batch: Option<&[usize]>,
) -> Result<(f64, Vec<f64>)> {
    model.validate()?;
    if w.len() != model.arch.parameter_count() {
        return Err(Error::shape("weight vector length does not match architecture"));
    }
    check_samples(&model.constraints, &model.arch, samples)?;
    if let Some(b) = batch {
        if b.is_empty() && !model.data.is_empty() {
            return Err(Error::config("minibatch must be non-empty"));
        }
        if b.iter().any(|&i| i >= model.data.len()) {
            return Err(Error::shape("minibatch index out of range"));
        }
    }
    let mut grad = vec![0.0; w.len()];
    let value = joint_into(w, model, samples, batch, &mut grad);
    Ok((value, grad))
}

fn joint_into(
    w: &[f64],
    model: &Model,
    samples: &RegionSamples,
    batch: Option<&[usize]>,
    grad: &mut [f64],
) -> f64 {
    grad.fill(0.0);
    let prior = accumulate_constraint_prior(
        w,
        &model.arch,
        &model.constraints,
        &model.prior,
        samples,
        grad,
    );
    let lik = accumulate_log_likelihood(&model.arch, w, &model.data, &model.likelihood, batch, grad);
    prior + lik
}

/// The log-joint as a sampler target. Owns the constraint samples and the
/// current minibatch; both are redrawn from per-iteration streams when
/// configured to.
#[derive(Debug, Clone)]
pub struct JointTarget {
    model: Model,
    mode: ResampleMode,
    seed: RngSeed,
    samples: RegionSamples,
    batch: Option<Vec<usize>>,
}

impl JointTarget {
    pub fn new(model: Model, mode: ResampleMode, seed: RngSeed) -> Result<Self> {
        model.validate()?;
        let samples = draw_region_samples(
            &model.constraints,
            &model.arch,
            &model.prior.pi,
            &mut seed.substream(streams::PRIOR_SAMPLES, 0),
        )?;
        Ok(Self {
            model,
            mode,
            seed,
            samples,
            batch: None,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn samples(&self) -> &RegionSamples {
        &self.samples
    }

    pub fn batch(&self) -> Option<&[usize]> {
        self.batch.as_deref()
    }

    fn batch_size(&self) -> Option<usize> {
        self.model.likelihood.batch_size.effective(self.model.data.len())
    }
}

impl LogDensity for JointTarget {
    fn dim(&self) -> usize {
        self.model.arch.parameter_count()
    }

    fn log_density_and_grad(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        joint_into(w, &self.model, &self.samples, self.batch.as_deref(), grad)
    }

    fn is_stochastic(&self) -> bool {
        let resamples = self.mode == ResampleMode::PerIteration && !self.model.constraints.is_empty();
        resamples || self.batch_size().is_some()
    }

    fn refresh(&mut self, iteration: usize) -> Result<()> {
        let it = iteration as u64;
        if self.mode == ResampleMode::PerIteration && !self.model.constraints.is_empty() {
            self.samples = draw_region_samples(
                &self.model.constraints,
                &self.model.arch,
                &self.model.prior.pi,
                &mut self.seed.substream(streams::PRIOR_SAMPLES, it + 1),
            )?;
        }
        if let Some(b) = self.batch_size() {
            let mut rng = self.seed.substream(streams::MINIBATCH, it);
            let mut idx = index::sample(&mut rng, self.model.data.len(), b).into_vec();
            idx.sort_unstable();
            self.batch = Some(idx);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    Hmc,
    Svgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptance_rate: Option<f64>,
    /// SVGD only: mean norm of the final Stein update direction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_mean_grad_norm: Option<f64>,
    /// HMC only: step size used after burn-in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    pub iterations: usize,
    /// Absent when a caller strips it for reproducible output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_secs: Option<f64>,
}

impl Diagnostics {
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }
}

/// Raw sampler output over an arbitrary parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerRun {
    pub samples: Vec<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorEnsemble {
    pub architecture: Architecture,
    pub method: Method,
    pub seed: RngSeed,
    pub weights: Vec<WeightVector>,
    pub diagnostics: Option<Diagnostics>,
}

/// On-disk posterior-sample format.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PosteriorFile {
    architecture: Architecture,
    seed: RngSeed,
    method: Method,
    samples: Vec<Vec<f64>>,
}

impl PosteriorEnsemble {
    pub fn new(
        architecture: Architecture,
        method: Method,
        seed: RngSeed,
        samples: Vec<Vec<f64>>,
    ) -> Result<Self> {
        architecture.validate()?;
        if samples.is_empty() {
            return Err(Error::config("posterior ensemble is empty"));
        }
        let weights = samples
            .into_iter()
            .map(|s| WeightVector::new(&architecture, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            architecture,
            method,
            seed,
            weights,
            diagnostics: None,
        })
    }

    pub fn from_run(architecture: Architecture, seed: RngSeed, run: SamplerRun) -> Result<Self> {
        let mut ens = Self::new(architecture, run.diagnostics.method, seed, run.samples)?;
        ens.diagnostics = Some(run.diagnostics);
        Ok(ens)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = PosteriorFile {
            architecture: self.architecture.clone(),
            seed: self.seed,
            method: self.method,
            samples: self.weights.iter().map(|w| w.as_slice().to_vec()).collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PosteriorFile = serde_json::from_str(text).map_err(|e| Error::Data(e.to_string()))?;
        Self::new(file.architecture, file.method, file.seed, file.samples)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        f.write_all(self.to_json()?.as_bytes())?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

pub(crate) fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let f = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(f)?)
}

/// Draws `count` weight vectors from the isotropic weight prior.
pub fn init_from_prior(arch: &Architecture, sigma_p: f64, count: usize, seed: RngSeed) -> Vec<Vec<f64>> {
    let mut rng = seed.stream(streams::INIT);
    (0..count)
        .map(|_| WeightVector::sample_prior(arch, sigma_p, &mut rng).into_inner())
        .collect()
}
