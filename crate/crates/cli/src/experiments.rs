//! Named experiments: each writes a training set, a constraint file and one
//! directory per variant (`baseline`, `oc`) holding the config that was run
//! and every artifact it produced.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ocbnn_core::constraints::{parse_constraints, ConstraintSet};
use ocbnn_core::data::{
    filter_constrained, generate, perturb, split, ClinicalParams, GeneratorSpec, SparsePoint,
    Standardizer, CLINICAL_FEATURES,
};
use ocbnn_core::inference::{HmcConfig, SvgdConfig};
use ocbnn_core::predictive::{posterior_predictive, save_grid_csv, GridAxis, GridSpec, Metrics};
use ocbnn_core::priors::PriorConfig;
use ocbnn_core::bnn::{BatchSize, LikelihoodConfig};
use ocbnn_core::{Architecture, Dataset, Error, Result, RngSeed};

use crate::config::{ConstraintSource, InferenceConfig, RunConfig};
use crate::pipeline;

pub const NAMES: [&str; 8] = [
    "fig1-left",
    "fig1-right",
    "fig2-left",
    "fig2-right",
    "fig5-left",
    "fig5-right",
    "clinical-surrogate",
    "joint-limits",
];

pub const BASELINE: &str = "baseline";
pub const CONSTRAINED: &str = "oc";

/// A fully specified experiment, ready to run.
#[derive(Debug, Clone)]
pub struct Plan {
    pub name: String,
    pub constraints: String,
    pub train: Dataset,
    pub test: Option<Dataset>,
    /// `(label, config)`; configs use paths relative to the variant directory.
    pub variants: Vec<(String, RunConfig)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    pub seed: u64,
    /// `FAST` or `FULL`.
    pub mode: String,
    /// Every emitted file except the manifest itself, relative and sorted.
    pub files: Vec<String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn unknown(name: &str) -> Error {
    Error::config(format!(
        "unknown experiment '{name}'; valid names: {}",
        NAMES.join(", ")
    ))
}

/// HMC schedule: 10000 burn-in and 1000 samples at thinning 10, or a tenth
/// of the iterations when fast.
fn hmc(step_size: f64, leapfrog_steps: usize, fast: bool) -> InferenceConfig {
    let (burn_in, n_samples, thin) = if fast { (1000, 200, 5) } else { (10_000, 1000, 10) };
    InferenceConfig::Hmc(HmcConfig {
        step_size,
        leapfrog_steps,
        burn_in,
        n_samples,
        thin,
        seed: None,
        target_accept: Some(0.8),
    })
}

fn svgd(n_particles: usize, n_iters: usize, fast: bool) -> InferenceConfig {
    let iters = if fast { n_iters / 10 } else { n_iters };
    InferenceConfig::Svgd(SvgdConfig::new(n_particles, iters))
}

fn grid_1d(min: f64, max: f64, count: usize) -> Option<GridSpec> {
    Some(GridSpec::new(vec![GridAxis { min, max, count }]))
}

fn csv_source(file: &str) -> GeneratorSpec {
    GeneratorSpec::Csv { path: PathBuf::from("..").join(file) }
}

struct Template {
    architecture: Architecture,
    prior: PriorConfig,
    likelihood: LikelihoodConfig,
    grid: Option<GridSpec>,
    seed: u64,
}

impl Template {
    fn new(architecture: Architecture, seed: u64) -> Self {
        Self {
            architecture,
            prior: PriorConfig::default(),
            likelihood: LikelihoodConfig::default(),
            grid: None,
            seed,
        }
    }

    fn config(&self, constrained: bool, inference: InferenceConfig) -> RunConfig {
        RunConfig {
            architecture: self.architecture.clone(),
            dataset: csv_source("train.csv"),
            constraints: constrained
                .then(|| ConstraintSource::Path(PathBuf::from("../constraints.txt"))),
            prior: self.prior.clone(),
            likelihood: self.likelihood.clone(),
            inference,
            outputs: None,
            grid: self.grid.clone(),
            seed: self.seed,
        }
    }

    fn pair(&self, baseline: InferenceConfig, oc: InferenceConfig) -> Vec<(String, RunConfig)> {
        vec![
            (BASELINE.to_string(), self.config(false, baseline)),
            (CONSTRAINED.to_string(), self.config(true, oc)),
        ]
    }
}

/// Stand-in points for the sparse regression experiments.
fn sparse_points() -> GeneratorSpec {
    let pts = [(-1.5, 2.0), (0.0, 0.5), (1.5, 2.0)];
    GeneratorSpec::SparsePoints {
        points: pts
            .iter()
            .map(|&(x, y)| SparsePoint { x: vec![x], y: vec![y] })
            .collect(),
    }
}

pub fn plan(name: &str, seed: u64, fast: bool) -> Result<Plan> {
    let rs = RngSeed(seed);
    let one_d = Architecture::regression(1, vec![10], 1);
    let (constraints, train, test, variants) = match name {
        "fig1-left" => {
            let c = "negative: -0.3 <= x[0] <= 0.3 : y[0] <= 2.5\n\
                     negative: -0.3 <= x[0] <= 0.3 : y[0] >= 3\n";
            let train = generate(
                &GeneratorSpec::Quartic1d {
                    n_points: 20,
                    noise_sigma: 0.1,
                    x_ranges: vec![[-2.0, -0.8], [0.8, 2.0]],
                },
                rs,
            )?;
            let mut t = Template::new(one_d, seed);
            t.grid = grid_1d(-3.0, 3.0, 601);
            (c.to_string(), train, None, t.pair(hmc(0.001, 100, fast), hmc(0.001, 100, fast)))
        }
        "fig1-right" => {
            let c = "positive: 1 <= x[0] <= 3, -2 <= x[1] <= 0 : class = 1\n";
            let train = generate(
                &GeneratorSpec::ThreeGaussians2d {
                    n_per_class: 8,
                    class_std: 0.8,
                    means: vec![[-3.0, 1.0], [0.0, -3.0], [2.0, 3.0]],
                },
                rs,
            )?;
            let mut t = Template::new(Architecture::classification(2, vec![10], 3), seed);
            let axis = GridAxis { min: -6.0, max: 6.0, count: 121 };
            t.grid = Some(GridSpec::new(vec![axis.clone(), axis]));
            // alpha 1 on forbidden classes: 0.01 rewards driving their
            // probabilities to the floor, which spills outside the box
            t.prior.alpha_forbidden = 1.0;
            (c.to_string(), train, None, t.pair(hmc(0.002, 50, fast), hmc(0.002, 50, fast)))
        }
        "fig2-left" => {
            let c = "positive: -5 <= x[0] <= -3 : y[0] = -x[0] + 5 ~ gauss(0.5)\n\
                     positive: 3 <= x[0] <= 5 : y[0] = x[0] + 5 ~ gauss(0.5)\n";
            let train = generate(&sparse_points(), rs)?;
            let mut t = Template::new(one_d, seed);
            t.grid = grid_1d(-6.0, 6.0, 601);
            (c.to_string(), train, None, t.pair(hmc(0.002, 50, fast), hmc(0.002, 50, fast)))
        }
        "fig2-right" => {
            let c = "negative: -1 <= x[0] <= 1 : -5 <= y[0] <= 3\n";
            let train = generate(
                &GeneratorSpec::Quartic1d {
                    n_points: 20,
                    noise_sigma: 0.1,
                    x_ranges: vec![[-2.0, -1.2], [1.2, 2.0]],
                },
                rs,
            )?;
            let mut t = Template::new(one_d, seed);
            t.grid = grid_1d(-3.0, 3.0, 601);
            (c.to_string(), train, None, t.pair(svgd(75, 3000, fast), svgd(75, 3000, fast)))
        }
        "fig5-left" => {
            let c = "negative: -5 <= x[0] <= -3 : y[0] >= -x[0] + 7\n\
                     negative: -5 <= x[0] <= -3 : y[0] <= -x[0] + 2\n\
                     negative: 3 <= x[0] <= 5 : y[0] >= x[0] + 7\n\
                     negative: 3 <= x[0] <= 5 : y[0] <= x[0] + 2\n";
            let train = generate(&sparse_points(), rs)?;
            let mut t = Template::new(one_d, seed);
            t.grid = grid_1d(-6.0, 6.0, 601);
            (c.to_string(), train, None, t.pair(hmc(0.002, 50, fast), hmc(0.001, 50, fast)))
        }
        "fig5-right" => {
            let c = "positive: -1 <= x[0] <= 1 : \
                     y[0] = -0.2*x[0]^3 + 0.5*x[0]^2 + 0.7*x[0] - 0.5 ~ gauss(0.5) @ 0.5 \
                     | y[0] = 0.2*x[0]^3 - 0.15*x[0]^2 + 3.5 ~ gauss(0.5) @ 0.5\n";
            let pts = [(-2.0, 1.5), (-1.6, 1.5), (1.6, 1.5), (2.0, 1.5)];
            let spec = GeneratorSpec::SparsePoints {
                points: pts
                    .iter()
                    .map(|&(x, y)| SparsePoint { x: vec![x], y: vec![y] })
                    .collect(),
            };
            let train = generate(&spec, rs)?;
            let mut t = Template::new(one_d, seed);
            t.grid = grid_1d(-3.0, 3.0, 601);
            (c.to_string(), train, None, t.pair(svgd(75, 3000, fast), svgd(75, 3000, fast)))
        }
        "clinical-surrogate" => clinical(seed, fast)?,
        "joint-limits" => joint_limits(seed, fast)?,
        _ => return Err(unknown(name)),
    };
    Ok(Plan {
        name: name.to_string(),
        constraints,
        train,
        test,
        variants,
    })
}

type PlanParts = (String, Dataset, Option<Dataset>, Vec<(String, RunConfig)>);

/// Clinical surrogate: split, drop training rows in the constrained region,
/// then standardize on the filtered training set. The region is written in
/// standardized units.
fn clinical(seed: u64, fast: bool) -> Result<PlanParts> {
    let rs = RngSeed(seed);
    let params = ClinicalParams::default();
    let raw = generate(
        &GeneratorSpec::ClinicalSurrogate { n_points: 3000, params: params.clone() },
        rs,
    )?;
    let (train, test) = split(&raw, 0.7, rs)?;
    let raw_box = format!(
        "positive: 0 <= x[{b}] <= {t} : class = 1\n",
        b = params.bp_feature,
        t = params.threshold
    );
    let train = filter_constrained(&train, &parse_constraints(&raw_box)?);
    let scaler = Standardizer::fit(&train)?;
    let (train, test) = (scaler.transform(&train), scaler.transform(&test));

    let mut bounds = Vec::new();
    for d in 0..CLINICAL_FEATURES {
        if d == params.bp_feature {
            let lo = scaler.value(d, params.bp_mean - 5.0 * params.bp_std);
            let hi = scaler.value(d, params.threshold);
            bounds.push(format!("{lo} <= x[{d}] <= {hi}"));
        } else {
            bounds.push(format!("-4 <= x[{d}] <= 4"));
        }
    }
    let c = format!("positive: {} : class = 1\n", bounds.join(", "));

    let mut t = Template::new(Architecture::classification(CLINICAL_FEATURES, vec![20], 2), seed);
    t.likelihood.batch_size = BatchSize::size(256);
    let inference = svgd(50, 1500, fast);
    let variants = t.pair(inference.clone(), inference);
    Ok((c, train, Some(test), variants))
}

/// Regression with feasibility limits: predictions outside the range seen in
/// training are forbidden. Test inputs are perturbed to probe extrapolation.
fn joint_limits(seed: u64, fast: bool) -> Result<PlanParts> {
    let rs = RngSeed(seed);
    let raw = generate(
        &GeneratorSpec::Quartic1d {
            n_points: 60,
            noise_sigma: 0.1,
            x_ranges: vec![[-2.0, 2.0]],
        },
        rs,
    )?;
    let (train, test) = split(&raw, 0.5, rs)?;
    let test = perturb(&test, 0.5, None, rs)?;
    let ys = train.regression_targets().expect("regression data");
    let hi = ys.iter().map(|y| y[0]).fold(f64::NEG_INFINITY, f64::max) + 0.5;
    let lo = ys.iter().map(|y| y[0]).fold(f64::INFINITY, f64::min) - 0.5;
    let c = format!(
        "negative: -3.5 <= x[0] <= 3.5 : y[0] >= {hi}\n\
         negative: -3.5 <= x[0] <= 3.5 : y[0] <= {lo}\n"
    );
    let mut t = Template::new(Architecture::regression(1, vec![20], 1), seed);
    t.grid = grid_1d(-3.5, 3.5, 351);
    let inference = svgd(50, 1000, fast);
    let variants = t.pair(inference.clone(), inference);
    Ok((c, train, Some(test), variants))
}

fn rel(root: &Path, p: &Path) -> String {
    p.strip_prefix(root)
        .unwrap_or(p)
        .to_string_lossy()
        .replace('\\', "/")
}

/// Runs every variant of `plan` under `out` and writes `manifest.json`.
pub fn run_plan(plan: &Plan, out: &Path, seed: u64, fast: bool) -> Result<Manifest> {
    fs::create_dir_all(out)?;
    let mut files: Vec<PathBuf> = Vec::new();

    let constraints_path = out.join("constraints.txt");
    fs::write(&constraints_path, &plan.constraints)?;
    files.push(constraints_path);
    let set: ConstraintSet = parse_constraints(&plan.constraints)?;

    let train_path = out.join("train.csv");
    plan.train.save_csv(&train_path)?;
    files.push(train_path.clone());
    // evaluate on exactly what was written
    let train = Dataset::load_csv(&train_path)?;
    let test = match &plan.test {
        Some(t) => {
            let p = out.join("test.csv");
            t.save_csv(&p)?;
            files.push(p.clone());
            Some(Dataset::load_csv(&p)?)
        }
        None => None,
    };

    for (label, cfg) in &plan.variants {
        eprintln!("[{}] {label}: {:?} inference", plan.name, cfg.inference.method());
        let dir = out.join(label);
        fs::create_dir_all(&dir)?;
        let cfg_path = dir.join("config.json");
        fs::write(&cfg_path, cfg.to_json())?;
        files.push(cfg_path.clone());
        let cfg = RunConfig::load(&cfg_path)?;
        let variant_set = cfg.load_constraints(None)?;
        let run_seed = cfg.run_seed(Some(seed));
        let data = pipeline::load_dataset(&cfg, run_seed)?;
        let ens = pipeline::infer(&cfg, variant_set, data, run_seed)?;

        let posterior = dir.join("posterior.json");
        ens.save_json(&posterior)?;
        files.push(posterior);
        if let Some(d) = &ens.diagnostics {
            // wall time goes to the log so reruns emit identical files
            let mut d = d.clone();
            if let Some(t) = d.wall_time_secs.take() {
                eprintln!("[{}] {label}: {t:.1}s", plan.name);
            }
            let p = dir.join("diagnostics.json");
            d.save_json(&p)?;
            files.push(p);
        }

        let m = pipeline::evaluate(&ens, &train, &set)?;
        let p = dir.join("metrics_train.json");
        m.save_json(&p)?;
        files.push(p);
        if let Some(test) = &test {
            let m = pipeline::evaluate(&ens, test, &set)?;
            let p = dir.join("metrics_test.json");
            m.save_json(&p)?;
            files.push(p);
        }
        if let Some(grid) = &cfg.grid {
            let summary = posterior_predictive(&ens, &grid.points())?;
            let p = dir.join("grid.csv");
            save_grid_csv(&summary, &p)?;
            files.push(p);
            let m = Metrics::constraints_only(&summary, &set)?;
            let p = dir.join("metrics_grid.json");
            m.save_json(&p)?;
            files.push(p);
        }
    }

    let mut names: Vec<String> = files.iter().map(|p| rel(out, p)).collect();
    names.sort();
    let manifest = Manifest {
        name: plan.name.clone(),
        seed,
        mode: if fast { "FAST" } else { "FULL" }.to_string(),
        files: names,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(out.join("manifest.json"), text)?;
    Ok(manifest)
}

pub fn run_experiment(name: &str, out: &Path, seed: u64, fast: bool) -> Result<Manifest> {
    let plan = plan(name, seed, fast)?;
    run_plan(&plan, out, seed, fast)
}
