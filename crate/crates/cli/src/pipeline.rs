//! Steps shared by the subcommands and the experiment runner.

use ocbnn_core::constraints::ConstraintSet;
use ocbnn_core::data::generate;
use ocbnn_core::inference::{hmc_run, init_from_prior, svgd_run, JointTarget, Model};
use ocbnn_core::predictive::{posterior_predictive, Metrics, PredictiveSummary};
use ocbnn_core::{Dataset, Error, PosteriorEnsemble, Result, RngSeed};

use crate::config::{InferenceConfig, RunConfig};

pub fn load_dataset(cfg: &RunConfig, seed: RngSeed) -> Result<Dataset> {
    let data = generate(&cfg.dataset, seed)?;
    if !data.is_empty() {
        data.check_against(&cfg.architecture)?;
    }
    Ok(data)
}

/// Validates, draws the initial state from the weight prior and runs the
/// configured sampler on the log-joint.
pub fn infer(
    cfg: &RunConfig,
    constraints: ConstraintSet,
    data: Dataset,
    seed: RngSeed,
) -> Result<PosteriorEnsemble> {
    cfg.validate(&constraints)?;
    let arch = cfg.architecture.clone();
    let model = Model {
        arch: arch.clone(),
        constraints,
        prior: cfg.prior.clone(),
        data,
        likelihood: cfg.likelihood.clone(),
    };
    let sampler_seed = cfg.sampler_seed(seed);
    let mut target = JointTarget::new(model, cfg.resample_mode(), sampler_seed)?;
    let sigma_p = cfg.prior.sigma_p;
    let run = match &cfg.inference {
        InferenceConfig::Hmc(h) => {
            let init = init_from_prior(&arch, sigma_p, 1, sampler_seed).remove(0);
            hmc_run(&mut target, init, h, sampler_seed)?
        }
        InferenceConfig::Svgd(s) => {
            let init = init_from_prior(&arch, sigma_p, s.n_particles, sampler_seed);
            svgd_run(&mut target, init, s)?
        }
    };
    PosteriorEnsemble::from_run(arch, sampler_seed, run)
}

pub fn check_posterior(cfg: &RunConfig, ens: &PosteriorEnsemble) -> Result<()> {
    if ens.architecture != cfg.architecture {
        return Err(Error::config(
            "posterior architecture does not match the configured architecture",
        ));
    }
    Ok(())
}

pub fn predict_grid(cfg: &RunConfig, ens: &PosteriorEnsemble) -> Result<PredictiveSummary> {
    let grid = cfg
        .grid
        .as_ref()
        .ok_or_else(|| Error::config("config has no grid section"))?;
    grid.validate(cfg.architecture.input_dim)?;
    posterior_predictive(ens, &grid.points())
}

pub fn evaluate(ens: &PosteriorEnsemble, data: &Dataset, constraints: &ConstraintSet) -> Result<Metrics> {
    data.check_against(&ens.architecture)?;
    let summary = posterior_predictive(ens, &data.inputs)?;
    Metrics::evaluate(&summary, constraints, &data.targets)
}
