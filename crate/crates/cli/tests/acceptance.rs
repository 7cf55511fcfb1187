//! Acceptance criteria. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line; exits non-zero if any fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use ocbnn_cli::experiments::{run_experiment, Manifest};
use ocbnn_core::bnn::{log_likelihood, BatchSize, LikelihoodConfig};
use ocbnn_core::constraints::{PositiveRegion, SamplerPi};
use ocbnn_core::data::{generate, GeneratorSpec};
use ocbnn_core::gradcheck::{finite_diff_grad, max_relative_error, DEFAULT_EPS};
use ocbnn_core::inference::{hmc_run, leapfrog, log_joint, svgd_run, FnTarget, HmcConfig, LogDensity, SvgdConfig};
use ocbnn_core::predictive::{load_grid_csv, posterior_predictive, Metrics};
use ocbnn_core::priors::{
    draw_region_samples, log_constraint_prior, log_negative, log_positive_classification,
    log_positive_regression, log_weight_prior, PriorConfig,
};
use ocbnn_core::{
    parse_constraints, Architecture, ConstraintSet, Dataset, Model, PosteriorEnsemble, RngSeed,
    WeightVector,
};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- gradients

const FIG1_LEFT: &str = "negative: -0.3 <= x[0] <= 0.3 : y[0] <= 2.5\n\
                         negative: -0.3 <= x[0] <= 0.3 : y[0] >= 3\n";
const FIG1_RIGHT: &str = "positive: 1 <= x[0] <= 3, -2 <= x[1] <= 0 : class = 1\n";
const FIG2_LEFT: &str = "positive: -5 <= x[0] <= -3 : y[0] = -x[0] + 5 ~ gauss(0.5)\n\
                         positive: 3 <= x[0] <= 5 : y[0] = x[0] + 5 ~ gauss(0.5)\n";
const FIG2_RIGHT: &str = "negative: -1 <= x[0] <= 1 : -5 <= y[0] <= 3\n";
const FIG5_LEFT: &str = "negative: -5 <= x[0] <= -3 : y[0] >= -x[0] + 7\n\
                         negative: -5 <= x[0] <= -3 : y[0] <= -x[0] + 2\n\
                         negative: 3 <= x[0] <= 5 : y[0] >= x[0] + 7\n\
                         negative: 3 <= x[0] <= 5 : y[0] <= x[0] + 2\n";
const FIG5_RIGHT: &str = "positive: -1 <= x[0] <= 1 : \
                          y[0] = -0.2*x[0]^3 + 0.5*x[0]^2 + 0.7*x[0] - 0.5 ~ gauss(0.5) @ 0.5 \
                          | y[0] = 0.2*x[0]^3 - 0.15*x[0]^2 + 3.5 ~ gauss(0.5) @ 0.5\n";

const POINTS: usize = 10;

/// Worst relative error of `f`'s analytic gradient over `POINTS` prior draws.
fn worst_error(arch: &Architecture, seed: u64, f: impl Fn(&[f64]) -> (f64, Vec<f64>)) -> f64 {
    let mut rng = RngSeed(seed).stream(0);
    let mut worst = 0.0f64;
    for _ in 0..POINTS {
        let w = WeightVector::sample_prior(arch, 1.0, &mut rng).into_inner();
        let (_, analytic) = f(&w);
        let numeric = finite_diff_grad(|v| f(v).0, &w, DEFAULT_EPS).expect("finite values");
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    worst
}

fn region_samples(set: &ConstraintSet, arch: &Architecture, seed: u64) -> Vec<Vec<Vec<f64>>> {
    draw_region_samples(set, arch, &SamplerPi::default(), &mut RngSeed(seed).stream(1)).unwrap()
}

fn first_positive(set: &ConstraintSet) -> &PositiveRegion {
    set.positives().next().unwrap()
}

fn gradient_suite() -> Outcome {
    let reg = Architecture::regression(1, vec![10], 1);
    let cls = Architecture::classification(2, vec![10], 3);
    let cfg = PriorConfig::default();
    let mut results: Vec<(&str, f64)> = Vec::new();

    results.push(("weight prior", worst_error(&reg, 1, |w| log_weight_prior(w, 1.3))));

    let gauss = parse_constraints(FIG2_LEFT).unwrap();
    let gs = region_samples(&gauss, &reg, 2);
    results.push((
        "positive gaussian",
        worst_error(&reg, 2, |w| log_positive_regression(w, &reg, first_positive(&gauss), &gs[0]).unwrap()),
    ));

    let mix = parse_constraints(FIG5_RIGHT).unwrap();
    let ms = region_samples(&mix, &reg, 3);
    results.push((
        "positive mixture",
        worst_error(&reg, 3, |w| log_positive_regression(w, &reg, first_positive(&mix), &ms[0]).unwrap()),
    ));

    let dir = parse_constraints(FIG1_RIGHT).unwrap();
    let ds = region_samples(&dir, &cls, 4);
    results.push((
        "positive dirichlet",
        worst_error(&cls, 4, |w| {
            log_positive_classification(w, &cls, first_positive(&dir), &cfg, &ds[0]).unwrap()
        }),
    ));

    for (name, text, seed) in [("negative (fig1-left)", FIG1_LEFT, 5), ("negative (fig2-right)", FIG2_RIGHT, 6)] {
        let set = parse_constraints(text).unwrap();
        let ns = region_samples(&set, &reg, seed);
        let region = set.negatives().next().unwrap();
        results.push((name, worst_error(&reg, seed, |w| log_negative(w, &reg, region, &cfg, &ns[0]).unwrap())));
    }

    let all = parse_constraints(FIG5_LEFT).unwrap();
    let alls = region_samples(&all, &reg, 7);
    results.push((
        "constraint prior",
        worst_error(&reg, 7, |w| log_constraint_prior(w, &reg, &all, &cfg, &alls).unwrap()),
    ));

    let quartic = generate(
        &GeneratorSpec::Quartic1d { n_points: 20, noise_sigma: 0.1, x_ranges: vec![[-2.0, 2.0]] },
        RngSeed(8),
    )
    .unwrap();
    let lik = LikelihoodConfig::default();
    results.push((
        "likelihood regression",
        worst_error(&reg, 8, |w| log_likelihood(&reg, w, &quartic, &lik, None).unwrap()),
    ));
    let gaussians = generate(
        &GeneratorSpec::ThreeGaussians2d { n_per_class: 8, class_std: 0.8, means: vec![[-3.0, 1.0], [0.0, -3.0], [2.0, 3.0]] },
        RngSeed(9),
    )
    .unwrap();
    let batch = [0usize, 3, 9, 17];
    let lik_b = LikelihoodConfig { batch_size: BatchSize::size(4), ..LikelihoodConfig::default() };
    results.push((
        "likelihood classification",
        worst_error(&cls, 9, |w| log_likelihood(&cls, w, &gaussians, &lik, None).unwrap()),
    ));
    results.push((
        "likelihood minibatch",
        worst_error(&cls, 10, |w| log_likelihood(&cls, w, &gaussians, &lik_b, Some(&batch)).unwrap()),
    ));

    let joint = |arch: &Architecture, text: &str, data: &Dataset, seed: u64| {
        let model = Model {
            arch: arch.clone(),
            constraints: parse_constraints(text).unwrap(),
            prior: cfg.clone(),
            data: data.clone(),
            likelihood: lik.clone(),
        };
        let samples = region_samples(&model.constraints, arch, seed);
        worst_error(arch, seed, |w| log_joint(w, &model, &samples, None).unwrap())
    };
    results.push(("log_joint regression", joint(&reg, FIG1_LEFT, &quartic, 11)));
    results.push(("log_joint classification", joint(&cls, FIG1_RIGHT, &gaussians, 12)));

    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let failing: Vec<String> = results
        .iter()
        .filter(|r| r.1 > 1e-5)
        .map(|(n, e)| format!("{n} {e:.2e}"))
        .collect();
    check(
        failing.is_empty(),
        format!("{} operations x {POINTS} points, worst rel err {worst:.2e} {failing:?}", results.len()),
    )
}

// ----------------------------------------------------------------- samplers

fn std_normal_2d() -> impl LogDensity {
    FnTarget::new(2, |w: &[f64], g: &mut [f64]| {
        g[0] = -w[0];
        g[1] = -w[1];
        -0.5 * (w[0] * w[0] + w[1] * w[1])
    })
}

fn mean_var(samples: &[Vec<f64>]) -> ([f64; 2], [f64; 2]) {
    let n = samples.len() as f64;
    let mean = [0, 1].map(|k| samples.iter().map(|s| s[k]).sum::<f64>() / n);
    let var = [0, 1].map(|k| samples.iter().map(|s| (s[k] - mean[k]).powi(2)).sum::<f64>() / n);
    (mean, var)
}

fn hmc_oracle() -> Outcome {
    let cfg = HmcConfig {
        step_size: 0.1,
        leapfrog_steps: 20,
        burn_in: 500,
        n_samples: 10_000,
        thin: 1,
        seed: None,
        target_accept: None,
    };
    let mut detail = Vec::new();
    let mut ok = true;
    for seed in [1u64, 2, 3] {
        let run = hmc_run(&mut std_normal_2d(), vec![0.5, -0.5], &cfg, RngSeed(seed)).unwrap();
        let (m, v) = mean_var(&run.samples);
        ok &= m.iter().all(|x| x.abs() <= 0.1) && v.iter().all(|x| (x - 1.0).abs() <= 0.1);
        detail.push(format!("seed {seed}: mean [{:.3}, {:.3}] var [{:.3}, {:.3}]", m[0], m[1], v[0], v[1]));
    }
    check(ok, detail.join("; "))
}

fn svgd_oracle() -> Outcome {
    let init: Vec<Vec<f64>> = (0..75)
        .map(|i| {
            let t = i as f64 / 75.0 * std::f64::consts::TAU;
            vec![1.0 + 3.0 * t.cos(), -1.0 + 3.0 * (2.0 * t).sin()]
        })
        .collect();
    let run = svgd_run(&mut std_normal_2d(), init, &SvgdConfig::new(75, 2000)).unwrap();
    let (m, v) = mean_var(&run.samples);
    let ok = m.iter().all(|x| x.abs() <= 0.1) && v.iter().all(|x| (x - 1.0).abs() <= 0.2);
    check(ok, format!("S=75: mean [{:.3}, {:.3}] var [{:.3}, {:.3}]", m[0], m[1], v[0], v[1]))
}

fn leapfrog_oracle() -> Outcome {
    // H = (w^2 + p^2) / 2 from (w, p) = (1, 0):
    // w' = 1 - eps^2 / 2, p' = -eps (1 - eps^2 / 4)
    let target = FnTarget::new(1, |w: &[f64], g: &mut [f64]| {
        g[0] = -w[0];
        -0.5 * w[0] * w[0]
    });
    let mut worst = 0.0f64;
    for eps in [0.01, 0.1, 0.3, 0.7, 1.2] {
        let (mut w, mut p, mut g) = (vec![1.0], vec![0.0], vec![-1.0]);
        leapfrog(&target, &mut w, &mut p, &mut g, eps, 1);
        worst = worst
            .max((w[0] - (1.0 - eps * eps / 2.0)).abs())
            .max((p[0] + eps * (1.0 - eps * eps / 4.0)).abs());
    }
    check(worst <= 1e-12, format!("max abs error {worst:.1e}"))
}

// -------------------------------------------------------------- experiments

fn metrics(dir: &Path, variant: &str, file: &str) -> Metrics {
    Metrics::load_json(dir.join(variant).join(file)).unwrap()
}

fn flat(v: Option<Option<f64>>) -> Option<f64> {
    v.flatten()
}

fn fig1_left(root: &Path) -> Outcome {
    let dir = root.join("fig1-left");
    run_experiment("fig1-left", &dir, 0, true).map_err(|e| e.to_string())?;
    let base = flat(metrics(&dir, "baseline", "metrics_grid.json").pp_viol).unwrap_or(f64::NAN);
    let oc = flat(metrics(&dir, "oc", "metrics_grid.json").pp_viol).unwrap_or(f64::NAN);
    let rb = metrics(&dir, "baseline", "metrics_train.json").rmse.unwrap();
    let ro = metrics(&dir, "oc", "metrics_train.json").rmse.unwrap();
    check(
        oc <= base / 5.0 && ro <= 2.0 * rb,
        format!("PP-VIOL oc {oc:.3}% vs baseline {base:.3}%; train RMSE oc {ro:.4} vs baseline {rb:.4}"),
    )
}

fn fig2_right(root: &Path) -> Outcome {
    let dir = root.join("fig2-right");
    run_experiment("fig2-right", &dir, 0, false).map_err(|e| e.to_string())?;
    let ens = PosteriorEnsemble::load_json(dir.join("oc/posterior.json")).unwrap();
    let summary = posterior_predictive(&ens, &[vec![0.0]]).unwrap();
    let ys: Vec<f64> = summary.points[0].samples.iter().map(|y| y[0]).collect();
    let above = ys.iter().filter(|&&y| y > 3.0).count();
    let below = ys.iter().filter(|&&y| y < -5.0).count();
    check(
        above > 0 && below > 0,
        format!("{} particles at x=0: {above} above 3, {below} below -5", ys.len()),
    )
}

fn fig1_right(root: &Path) -> Outcome {
    let dir = root.join("fig1-right");
    run_experiment("fig1-right", &dir, 0, false).map_err(|e| e.to_string())?;
    let rows = load_grid_csv(dir.join("oc/grid.csv")).unwrap();
    let inside: Vec<_> = rows
        .iter()
        .filter(|r| (1.0..=3.0).contains(&r.x[0]) && (-2.0..=0.0).contains(&r.x[1]))
        .collect();
    let frac = inside.iter().filter(|r| r.argmax == Some(1)).count() as f64 / inside.len() as f64;
    let ab = metrics(&dir, "baseline", "metrics_train.json").acc.unwrap();
    let ao = metrics(&dir, "oc", "metrics_train.json").acc.unwrap();
    check(
        frac >= 0.9 && (ao - ab).abs() <= 0.02,
        format!("{} in-box grid points, class-1 fraction {frac:.3}; train ACC oc {ao:.4} vs baseline {ab:.4}", inside.len()),
    )
}

fn clinical(root: &Path) -> Outcome {
    let dir = root.join("clinical");
    run_experiment("clinical-surrogate", &dir, 0, false).map_err(|e| e.to_string())?;
    let b = metrics(&dir, "baseline", "metrics_test.json");
    let o = metrics(&dir, "oc", "metrics_test.json");
    let (vb, vo) = (flat(b.viol).unwrap_or(f64::NAN), flat(o.viol).unwrap_or(f64::NAN));
    let (ab, ao) = (b.acc.unwrap(), o.acc.unwrap());
    check(
        vo <= vb / 2.0 && (ao - ab).abs() <= 0.02,
        format!("test VIOL oc {vo:.4} vs baseline {vb:.4}; test ACC oc {ao:.4} vs baseline {ab:.4}"),
    )
}

fn joint_limits(root: &Path) -> Outcome {
    let dir = root.join("joint-limits");
    run_experiment("joint-limits", &dir, 0, false).map_err(|e| e.to_string())?;
    let b = flat(metrics(&dir, "baseline", "metrics_test.json").pp_viol).unwrap_or(f64::NAN);
    let o = flat(metrics(&dir, "oc", "metrics_test.json").pp_viol).unwrap_or(f64::NAN);
    check(o == 0.0 && b > 0.0, format!("held-out PP-VIOL oc {o:.3}% vs baseline {b:.3}%"))
}

// ------------------------------------------------------------------- parser

const MALFORMED: [(&str, usize, usize); 22] = [
    ("negative: -1 <= x[0] <= 1 : y[0] >=", 1, 36),
    ("negative -1 <= x[0] <= 1 : y[0] >= 2", 1, 10),
    ("neutral: -1 <= x[0] <= 1 : y[0] >= 2", 1, 1),
    ("negative: -1 <= x[0] <= 1 y[0] >= 2", 1, 27),
    ("negative: -1 <= z[0] <= 1 : y[0] >= 2", 1, 17),
    ("negative: -1 <= x[0 <= 1 : y[0] >= 2", 1, 21),
    ("negative: -1 <= x[-1] <= 1 : y[0] >= 2", 1, 19),
    ("negative: -1 <= x[0] <= 1 : y[0] >= 2 +", 1, 40),
    ("negative: -1 <= x[0] <= 1 : y[0] >= 2 $", 1, 39),
    ("positive: -1 <= x[0] <= 1 : y[0] = 2", 1, 37),
    ("positive: -1 <= x[0] <= 1 : y[0] = 2 ~ gauss(-1)", 1, 46),
    ("positive: -1 <= x[0] <= 1 : y[0] = 2 ~ laplace(1)", 1, 40),
    ("positive: -1 <= x[0] <= 1 : y[0] = 1 ~ gauss(1) @ 0.5 | y[0] = 2 ~ gauss(1) @ 0.4", 1, 29),
    ("positive: -1 <= x[0] <= 1 : y[0] = y[0] ~ gauss(1)", 1, 36),
    ("positive: -1 <= x[0] <= 1 : class = ", 1, 37),
    ("positive: -1 <= x[0] <= 1 : class = 1.5", 1, 37),
    ("positive: -1 <= x[0] <= 1 : 2 = y[0] ~ gauss(1)", 1, 29),
    ("negative: 1 <= x[0] <= -1 : y[0] >= 2", 1, 11),
    ("negative: -1 <= x[0] <= 1 : y[0] >= 2\nnegative: -1 <= x[0] <= 1 :", 2, 28),
    ("# ok\nnegative: -1 <= x[0] <= 1 : y[0] >= 2\npositive: 0 <= x[0] <= 1 : class = 1 2", 3, 38),
    ("negative: -1 <= x[0] <= 1 : y[0] >= 2)", 1, 38),
    ("negative: -1 <= x[0] <= 1 : y[0]^ >= 2", 1, 35),
];

fn parser_corpus() -> Outcome {
    let mut problems = Vec::new();
    let corpus = [FIG1_LEFT, FIG1_RIGHT, FIG2_LEFT, FIG2_RIGHT, FIG5_LEFT, FIG5_RIGHT];
    for text in corpus {
        match parse_constraints(text) {
            Ok(set) => match parse_constraints(&set.to_string()) {
                Ok(again) if again == set => {}
                Ok(_) => problems.push(format!("round trip changed {text:?}")),
                Err(e) => problems.push(format!("pretty form of {text:?} fails: {e}")),
            },
            Err(e) => problems.push(format!("{text:?}: {e}")),
        }
    }
    for (text, line, column) in MALFORMED {
        match parse_constraints(text) {
            Ok(_) => problems.push(format!("accepted {text:?}")),
            Err(e) if (e.line, e.column) != (line, column) => {
                problems.push(format!("{text:?}: got {}:{}, want {line}:{column}", e.line, e.column))
            }
            Err(_) => {}
        }
    }
    check(
        problems.is_empty(),
        format!("{} sets round-trip, {} malformed inputs positioned {problems:?}", corpus.len(), MALFORMED.len()),
    )
}

// -------------------------------------------------------------- determinism

fn determinism(root: &Path) -> Outcome {
    let (a, b) = (root.join("det-a"), root.join("det-b"));
    let ma = run_experiment("fig1-left", &a, 7, true).map_err(|e| e.to_string())?;
    let mb = run_experiment("fig1-left", &b, 7, true).map_err(|e| e.to_string())?;
    if ma != mb {
        return Err("manifests differ".into());
    }
    let mut differing = Vec::new();
    for f in ma.files.iter().map(String::as_str).chain(["manifest.json"]) {
        if fs::read(a.join(f)).unwrap() != fs::read(b.join(f)).unwrap() {
            differing.push(f.to_string());
        }
    }
    let m = Manifest::load(&a.join("manifest.json")).unwrap();
    check(
        differing.is_empty(),
        format!("{} manifested files compared byte for byte, differing {differing:?}", m.files.len()),
    )
}

// --------------------------------------------------------------------- main

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: Box<dyn Fn(&Path) -> Outcome>,
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let root = tmp.path();
    let mins = |m: u64| Duration::from_secs(60 * m);
    let criteria = vec![
        Criterion { name: "gradient suite", limit: mins(1), run: Box::new(|_| gradient_suite()) },
        Criterion { name: "HMC oracle (3 seeds)", limit: mins(2), run: Box::new(|_| hmc_oracle()) },
        Criterion { name: "SVGD oracle (S=75)", limit: mins(2), run: Box::new(|_| svgd_oracle()) },
        Criterion { name: "leapfrog oracle", limit: mins(1), run: Box::new(|_| leapfrog_oracle()) },
        Criterion { name: "fig1-left ratio (fast HMC)", limit: mins(5), run: Box::new(fig1_left) },
        Criterion { name: "fig2-right multimodality", limit: mins(5), run: Box::new(fig2_right) },
        Criterion { name: "fig1-right classification", limit: mins(5), run: Box::new(fig1_right) },
        Criterion { name: "clinical surrogate", limit: mins(10), run: Box::new(clinical) },
        Criterion { name: "held-out joint limits", limit: mins(5), run: Box::new(joint_limits) },
        Criterion { name: "parser corpus", limit: mins(1), run: Box::new(|_| parser_corpus()) },
        Criterion { name: "determinism", limit: mins(5), run: Box::new(determinism) },
    ];

    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| (c.run)(root)))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(d) if elapsed > c.limit => Err(format!("{d}; over the {}s limit", c.limit.as_secs())),
            other => other,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failed += outcome.is_err() as usize;
        println!("{tag} {} [{:.1}s]: {detail}", c.name, elapsed.as_secs_f64());
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
