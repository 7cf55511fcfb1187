//! The JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ocbnn_core::bnn::LikelihoodConfig;
use ocbnn_core::constraints::{parse_constraints, ConstraintSet};
use ocbnn_core::data::{GeneratorSpec, CLINICAL_FEATURES};
use ocbnn_core::inference::{HmcConfig, Method, SvgdConfig};
use ocbnn_core::predictive::GridSpec;
use ocbnn_core::priors::{PriorConfig, ResampleMode};
use ocbnn_core::{Architecture, Error, Result, RngSeed, Task};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum ConstraintSource {
    /// Constraint file, relative paths resolved against the config file.
    Path(PathBuf),
    Inline(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method")]
pub enum InferenceConfig {
    #[serde(rename = "HMC")]
    Hmc(HmcConfig),
    #[serde(rename = "SVGD")]
    Svgd(SvgdConfig),
}

impl InferenceConfig {
    pub fn method(&self) -> Method {
        match self {
            InferenceConfig::Hmc(_) => Method::Hmc,
            InferenceConfig::Svgd(_) => Method::Svgd,
        }
    }

    fn seed_override(&self) -> Option<RngSeed> {
        match self {
            InferenceConfig::Hmc(c) => c.seed,
            InferenceConfig::Svgd(c) => c.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub architecture: Architecture,
    pub dataset: GeneratorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<ConstraintSource>,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub likelihood: LikelihoodConfig,
    pub inference: InferenceConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid run config: {e}")))
    }

    /// Reads a config file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.rebase(path.parent().unwrap_or(Path::new("")));
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(ConstraintSource::Path(p)) = &mut self.constraints {
            fix(p);
        }
        if let GeneratorSpec::Csv { path } = &mut self.dataset {
            fix(path);
        }
        if let Some(p) = &mut self.outputs {
            fix(p);
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn run_seed(&self, cli_seed: Option<u64>) -> RngSeed {
        RngSeed(cli_seed.unwrap_or(self.seed))
    }

    /// Seed for the sampler: the inference section may pin its own.
    pub fn sampler_seed(&self, run_seed: RngSeed) -> RngSeed {
        self.inference.seed_override().unwrap_or(run_seed)
    }

    pub fn resample_mode(&self) -> ResampleMode {
        self.prior.resample_mode.unwrap_or(match self.inference {
            InferenceConfig::Hmc(_) => ResampleMode::FixedAtSetup,
            InferenceConfig::Svgd(_) => ResampleMode::PerIteration,
        })
    }

    pub fn load_constraints(&self, override_path: Option<&Path>) -> Result<ConstraintSet> {
        let path = match (override_path, &self.constraints) {
            (Some(p), _) => p,
            (None, Some(ConstraintSource::Path(p))) => p.as_path(),
            (None, Some(ConstraintSource::Inline(t))) => return Ok(parse_constraints(t)?),
            (None, None) => return Ok(ConstraintSet::default()),
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Ok(parse_constraints(&text)?)
    }

    /// Cross-field checks that need no data or sampling.
    pub fn validate(&self, constraints: &ConstraintSet) -> Result<()> {
        let arch = &self.architecture;
        arch.validate()?;
        self.prior.validate()?;
        self.likelihood.validate()?;
        self.dataset.validate()?;
        constraints.validate(arch)?;
        if let Some(task) = generator_task(&self.dataset) {
            if task != arch.task {
                return Err(Error::config(format!(
                    "dataset generator produces {task:?} data but the architecture is {:?}",
                    arch.task
                )));
            }
        }
        check_generator_shape(&self.dataset, arch)?;
        match &self.inference {
            InferenceConfig::Hmc(h) => {
                h.validate()?;
                if self.prior.resample_mode == Some(ResampleMode::PerIteration) {
                    return Err(Error::config(
                        "HMC needs resample_mode FIXED_AT_SETUP; per-iteration resampling breaks detailed balance",
                    ));
                }
                if self.likelihood.batch_size != ocbnn_core::bnn::BatchSize::FULL {
                    return Err(Error::config("HMC needs a full-batch likelihood"));
                }
            }
            InferenceConfig::Svgd(s) => s.validate()?,
        }
        if let Some(g) = &self.grid {
            g.validate(arch.input_dim)?;
        }
        Ok(())
    }
}

fn generator_task(spec: &GeneratorSpec) -> Option<Task> {
    match spec {
        GeneratorSpec::Quartic1d { .. } | GeneratorSpec::SparsePoints { .. } => Some(Task::Regression),
        GeneratorSpec::ThreeGaussians2d { .. } | GeneratorSpec::ClinicalSurrogate { .. } => {
            Some(Task::Classification)
        }
        GeneratorSpec::Csv { .. } => None,
    }
}

fn check_generator_shape(spec: &GeneratorSpec, arch: &Architecture) -> Result<()> {
    let (inputs, outputs) = match spec {
        GeneratorSpec::Quartic1d { .. } => (1, 1),
        GeneratorSpec::ThreeGaussians2d { means, .. } => (2, means.len()),
        GeneratorSpec::ClinicalSurrogate { .. } => (CLINICAL_FEATURES, 2),
        GeneratorSpec::SparsePoints { points } => match points.first() {
            Some(p) => (p.x.len(), p.y.len()),
            None => return Ok(()),
        },
        GeneratorSpec::Csv { .. } => return Ok(()),
    };
    if arch.input_dim != inputs || arch.output_dim != outputs {
        return Err(Error::config(format!(
            "dataset has {inputs} inputs and {outputs} outputs, architecture has {} and {}",
            arch.input_dim, arch.output_dim
        )));
    }
    Ok(())
}
