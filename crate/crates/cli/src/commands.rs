use std::fs;
use std::path::{Path, PathBuf};

use ocbnn_core::predictive::save_grid_csv;
use ocbnn_core::{Dataset, Error, PosteriorEnsemble, Result};

use crate::config::RunConfig;
use crate::pipeline;

/// Output directory: the command line wins over the config.
pub fn output_dir(cfg: &RunConfig, out: Option<&Path>) -> Result<PathBuf> {
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.outputs.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

pub fn cmd_generate(cfg: &RunConfig, seed: Option<u64>, out: Option<&Path>) -> Result<Vec<PathBuf>> {
    cfg.dataset.validate()?;
    let data = pipeline::load_dataset(cfg, cfg.run_seed(seed))?;
    let path = output_dir(cfg, out)?.join("dataset.csv");
    data.save_csv(&path)?;
    Ok(vec![path])
}

pub fn cmd_infer(
    cfg: &RunConfig,
    constraints: Option<&Path>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<Vec<PathBuf>> {
    let set = cfg.load_constraints(constraints)?;
    cfg.validate(&set)?;
    let run_seed = cfg.run_seed(seed);
    let data = pipeline::load_dataset(cfg, run_seed)?;
    let dir = output_dir(cfg, out)?;
    let ens = pipeline::infer(cfg, set, data, run_seed)?;
    let posterior = dir.join("posterior.json");
    let diagnostics = dir.join("diagnostics.json");
    ens.save_json(&posterior)?;
    ens.diagnostics
        .as_ref()
        .expect("sampler runs carry diagnostics")
        .save_json(&diagnostics)?;
    Ok(vec![posterior, diagnostics])
}

pub fn cmd_predict(cfg: &RunConfig, posterior: &Path, out: Option<&Path>) -> Result<Vec<PathBuf>> {
    let ens = load_posterior(posterior)?;
    pipeline::check_posterior(cfg, &ens)?;
    let summary = pipeline::predict_grid(cfg, &ens)?;
    let path = output_dir(cfg, out)?.join("grid.csv");
    save_grid_csv(&summary, &path)?;
    Ok(vec![path])
}

pub fn cmd_eval(
    cfg: &RunConfig,
    constraints: Option<&Path>,
    posterior: &Path,
    test: &Path,
    out: Option<&Path>,
) -> Result<Vec<PathBuf>> {
    let set = cfg.load_constraints(constraints)?;
    set.validate(&cfg.architecture)?;
    let ens = load_posterior(posterior)?;
    pipeline::check_posterior(cfg, &ens)?;
    let data = Dataset::load_csv(test)?;
    let metrics = pipeline::evaluate(&ens, &data, &set)?;
    let path = output_dir(cfg, out)?.join("metrics.json");
    metrics.save_json(&path)?;
    Ok(vec![path])
}

fn load_posterior(path: &Path) -> Result<PosteriorEnsemble> {
    PosteriorEnsemble::load_json(path).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("cannot read {}: {io}", path.display())),
        other => other,
    })
}
