//! Dataset generators, noise perturbation, splitting and filtering.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::{streams, RngSeed};

/// The quartic `-x^4 + 3x^2 + 1`.
pub fn quartic(x: f64) -> f64 {
    -x.powi(4) + 3.0 * x * x + 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparsePoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// `y = -x^4 + 3x^2 + 1 + noise`, x uniform over the union of `x_ranges`.
    #[serde(rename = "QUARTIC_1D")]
    Quartic1d {
        n_points: usize,
        #[serde(default = "default_noise")]
        noise_sigma: f64,
        #[serde(default = "default_quartic_ranges")]
        x_ranges: Vec<[f64; 2]>,
    },
    /// Equal-size isotropic Gaussian classes; class `k` is centred on `means[k]`.
    #[serde(rename = "THREE_GAUSSIANS_2D")]
    ThreeGaussians2d {
        #[serde(default = "default_per_class")]
        n_per_class: usize,
        #[serde(default = "default_class_std")]
        class_std: f64,
        #[serde(default = "default_means")]
        means: Vec<[f64; 2]>,
    },
    /// Exactly the listed regression points.
    #[serde(rename = "SPARSE_POINTS")]
    SparsePoints { points: Vec<SparsePoint> },
    /// Nine features with a blood-pressure-like feature and a binary action
    /// label. Below `threshold` the label is 1 with probability
    /// `in_region_rate`; elsewhere it follows a logistic rule on the other
    /// features.
    #[serde(rename = "CLINICAL_SURROGATE")]
    ClinicalSurrogate {
        n_points: usize,
        #[serde(default)]
        params: ClinicalParams,
    },
    #[serde(rename = "CSV")]
    Csv { path: PathBuf },
}

fn default_noise() -> f64 {
    0.1
}

fn default_quartic_ranges() -> Vec<[f64; 2]> {
    vec![[-2.0, 2.0]]
}

fn default_per_class() -> usize {
    8
}

fn default_class_std() -> f64 {
    0.8
}

fn default_means() -> Vec<[f64; 2]> {
    vec![[-3.0, 1.0], [0.0, -3.0], [2.0, 3.0]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClinicalParams {
    /// Column holding the blood-pressure-like feature.
    pub bp_feature: usize,
    pub bp_mean: f64,
    pub bp_std: f64,
    pub threshold: f64,
    pub in_region_rate: f64,
    /// Correlation of feature 1 with low blood pressure.
    pub lactate_corr: f64,
    /// Logistic coefficients for the eight non-bp features.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl Default for ClinicalParams {
    fn default() -> Self {
        Self {
            bp_feature: 0,
            bp_mean: 78.0,
            bp_std: 8.0,
            threshold: 65.0,
            in_region_rate: 0.95,
            lactate_corr: 0.6,
            coefficients: vec![1.5, 1.0, -1.0, 0.5, 0.0, 0.0, 0.0, 0.0],
            intercept: 0.0,
        }
    }
}

pub const CLINICAL_FEATURES: usize = 9;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be non-negative")))
            }
        };
        match self {
            GeneratorSpec::Quartic1d {
                noise_sigma,
                x_ranges,
                ..
            } => {
                nonneg("noise_sigma", *noise_sigma)?;
                if x_ranges.is_empty() {
                    return Err(Error::config("x_ranges must be non-empty"));
                }
                if x_ranges.iter().any(|[a, b]| !(a <= b) || !a.is_finite() || !b.is_finite()) {
                    return Err(Error::config("each x range needs lower <= upper"));
                }
                if x_ranges.iter().all(|[a, b]| a == b) && x_ranges.len() > 1 {
                    return Err(Error::config("x ranges are all degenerate"));
                }
            }
            GeneratorSpec::ThreeGaussians2d {
                class_std, means, ..
            } => {
                nonneg("class_std", *class_std)?;
                if means.len() < 2 {
                    return Err(Error::config("need at least two class means"));
                }
            }
            GeneratorSpec::SparsePoints { points } => {
                if let Some(p) = points.first() {
                    if points.iter().any(|q| q.x.len() != p.x.len() || q.y.len() != p.y.len()) {
                        return Err(Error::config("sparse points have inconsistent dimensions"));
                    }
                }
            }
            GeneratorSpec::ClinicalSurrogate { params, .. } => {
                if params.bp_feature >= CLINICAL_FEATURES {
                    return Err(Error::config("bp_feature must index one of the 9 features"));
                }
                nonneg("bp_std", params.bp_std)?;
                if !(0.0..=1.0).contains(&params.in_region_rate) {
                    return Err(Error::config("in_region_rate must lie in [0, 1]"));
                }
                if !(-1.0..=1.0).contains(&params.lactate_corr) {
                    return Err(Error::config("lactate_corr must lie in [-1, 1]"));
                }
                if params.coefficients.len() != CLINICAL_FEATURES - 1 {
                    return Err(Error::config("clinical coefficients need 8 entries"));
                }
            }
            GeneratorSpec::Csv { .. } => {}
        }
        Ok(())
    }
}

/// Builds the dataset described by `spec`. Random generators draw from the
/// data stream of `seed`.
pub fn generate(spec: &GeneratorSpec, seed: RngSeed) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = seed.stream(streams::DATA);
    match spec {
        GeneratorSpec::Quartic1d {
            n_points,
            noise_sigma,
            x_ranges,
        } => {
            let widths: Vec<f64> = x_ranges.iter().map(|[a, b]| b - a).collect();
            let total: f64 = widths.iter().sum();
            let mut inputs = Vec::with_capacity(*n_points);
            let mut targets = Vec::with_capacity(*n_points);
            for _ in 0..*n_points {
                let x = if total == 0.0 {
                    x_ranges[rng.random_range(0..x_ranges.len())][0]
                } else {
                    // pick a range proportional to its width, then a point in it
                    let mut u = rng.random::<f64>() * total;
                    let mut k = 0;
                    while k + 1 < widths.len() && u >= widths[k] {
                        u -= widths[k];
                        k += 1;
                    }
                    (x_ranges[k][0] + u).min(x_ranges[k][1])
                };
                let noise: f64 = rng.sample::<f64, _>(StandardNormal) * noise_sigma;
                inputs.push(vec![x]);
                targets.push(vec![quartic(x) + noise]);
            }
            Dataset::regression(inputs, targets)
        }
        GeneratorSpec::ThreeGaussians2d {
            n_per_class,
            class_std,
            means,
        } => {
            let mut inputs = Vec::new();
            let mut labels = Vec::new();
            for (k, m) in means.iter().enumerate() {
                for _ in 0..*n_per_class {
                    let dx: f64 = rng.sample(StandardNormal);
                    let dy: f64 = rng.sample(StandardNormal);
                    inputs.push(vec![m[0] + class_std * dx, m[1] + class_std * dy]);
                    labels.push(k);
                }
            }
            Dataset::classification(inputs, labels)
        }
        GeneratorSpec::SparsePoints { points } => Dataset::regression(
            points.iter().map(|p| p.x.clone()).collect(),
            points.iter().map(|p| p.y.clone()).collect(),
        ),
        GeneratorSpec::ClinicalSurrogate { n_points, params } => {
            let mut inputs = Vec::with_capacity(*n_points);
            let mut labels = Vec::with_capacity(*n_points);
            let rho = params.lactate_corr;
            for _ in 0..*n_points {
                let bp = params.bp_mean + params.bp_std * rng.sample::<f64, _>(StandardNormal);
                let low = (params.bp_mean - bp) / params.bp_std.max(f64::MIN_POSITIVE);
                let mut others: Vec<f64> = (0..CLINICAL_FEATURES - 1)
                    .map(|_| rng.sample(StandardNormal))
                    .collect();
                others[0] = rho * low + (1.0 - rho * rho).sqrt() * others[0];
                let u: f64 = rng.random();
                let label = if bp < params.threshold {
                    u < params.in_region_rate
                } else {
                    let z = params.intercept
                        + params.coefficients.iter().zip(&others).map(|(c, v)| c * v).sum::<f64>();
                    u < sigmoid(z)
                };
                let mut row = others;
                row.insert(params.bp_feature, bp);
                inputs.push(row);
                labels.push(label as usize);
            }
            let mut ds = Dataset::classification(inputs, labels)?;
            let mut names: Vec<String> = (1..CLINICAL_FEATURES).map(|i| format!("f{i}")).collect();
            names.insert(params.bp_feature, "mean_bp".to_string());
            ds.feature_names = Some(names);
            Ok(ds)
        }
        GeneratorSpec::Csv { path } => Dataset::load_csv(path),
    }
}

/// Adds iid `N(0, sigma^2)` noise to the given input columns (all columns
/// when `columns` is `None`). Targets are untouched.
pub fn perturb(data: &Dataset, sigma: f64, columns: Option<&[usize]>, seed: RngSeed) -> Result<Dataset> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::config("perturbation sigma must be non-negative"));
    }
    let d = data.input_dim().unwrap_or(0);
    let cols: Vec<usize> = columns.map_or_else(|| (0..d).collect(), <[usize]>::to_vec);
    if let Some(c) = cols.iter().find(|&&c| c >= d && !data.is_empty()) {
        return Err(Error::config(format!("perturbation column {c} out of range")));
    }
    let mut out = data.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::config(e.to_string()))?;
    let mut rng = seed.stream(streams::PERTURB);
    for row in &mut out.inputs {
        for &c in &cols {
            row[c] += normal.sample(&mut rng);
        }
    }
    Ok(out)
}

/// Seeded shuffle split; the train side gets `round(N * fraction)` rows.
pub fn split(data: &Dataset, train_fraction: f64, seed: RngSeed) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config("train fraction must lie strictly between 0 and 1"));
    }
    let n = data.len();
    let n_train = (n as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::config(format!(
            "train fraction {train_fraction} leaves one side of a {n}-row split empty"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed.stream(streams::SPLIT));
    Ok((data.select(&idx[..n_train]), data.select(&idx[n_train..])))
}

/// Removes rows whose input lies inside any positive region's input box.
pub fn filter_constrained(data: &Dataset, set: &ConstraintSet) -> Dataset {
    let keep: Vec<usize> = (0..data.len())
        .filter(|&i| !set.positives().any(|r| r.input_box.contains(&data.inputs[i])))
        .collect();
    data.select(&keep)
}

/// Per-column affine standardization fitted on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population mean and std per input column; constant columns get std 1.
    pub fn fit(data: &Dataset) -> Result<Self> {
        let d = data
            .input_dim()
            .ok_or_else(|| Error::Data("cannot standardize an empty dataset".into()))?;
        let n = data.len() as f64;
        let mut mean = vec![0.0; d];
        let mut std = vec![0.0; d];
        for c in 0..d {
            let m = data.inputs.iter().map(|r| r[c]).sum::<f64>() / n;
            let v = data.inputs.iter().map(|r| (r[c] - m).powi(2)).sum::<f64>() / n;
            mean[c] = m;
            std[c] = if v > 0.0 { v.sqrt() } else { 1.0 };
        }
        Ok(Self { mean, std })
    }

    pub fn value(&self, column: usize, v: f64) -> f64 {
        (v - self.mean[column]) / self.std[column]
    }

    pub fn transform(&self, data: &Dataset) -> Dataset {
        let mut out = data.clone();
        for row in &mut out.inputs {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.value(c, *v);
            }
        }
        out
    }
}

/// Fraction of rows with the given label, over rows selected by `pred`.
pub fn conditional_rate(data: &Dataset, label: usize, pred: impl Fn(&[f64]) -> bool) -> Option<f64> {
    let labels = data.labels()?;
    let (mut hit, mut total) = (0usize, 0usize);
    for (x, &l) in data.inputs.iter().zip(labels) {
        if pred(x) {
            total += 1;
            hit += (l == label) as usize;
        }
    }
    (total > 0).then(|| hit as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::parse_constraints;

    fn quartic_spec(n: usize, noise: f64) -> GeneratorSpec {
        GeneratorSpec::Quartic1d {
            n_points: n,
            noise_sigma: noise,
            x_ranges: default_quartic_ranges(),
        }
    }

    #[test]
    fn quartic_values() {
        assert_eq!(quartic(0.0), 1.0);
        assert_eq!(quartic(1.0), 3.0);
    }

    #[test]
    fn noiseless_quartic_lies_on_the_curve() {
        let ds = generate(&quartic_spec(200, 0.0), RngSeed(1)).unwrap();
        let t = ds.regression_targets().unwrap();
        for (x, y) in ds.inputs.iter().zip(t) {
            assert!((-2.0..=2.0).contains(&x[0]));
            assert_eq!(y[0], quartic(x[0]));
        }
    }

    #[test]
    fn quartic_respects_range_union() {
        let spec = GeneratorSpec::Quartic1d {
            n_points: 500,
            noise_sigma: 0.1,
            x_ranges: vec![[-2.0, -0.8], [0.8, 2.0]],
        };
        let ds = generate(&spec, RngSeed(2)).unwrap();
        assert!(ds.inputs.iter().all(|x| x[0].abs() >= 0.8 && x[0].abs() <= 2.0));
        assert!(ds.inputs.iter().any(|x| x[0] < 0.0));
        assert!(ds.inputs.iter().any(|x| x[0] > 0.0));
    }

    #[test]
    fn degenerate_gaussians_collapse_to_means() {
        let spec = GeneratorSpec::ThreeGaussians2d {
            n_per_class: 8,
            class_std: 0.0,
            means: default_means(),
        };
        let ds = generate(&spec, RngSeed(3)).unwrap();
        assert_eq!(ds.len(), 24);
        let labels = ds.labels().unwrap();
        for (x, &l) in ds.inputs.iter().zip(labels) {
            if l == 0 {
                assert_eq!(x, &vec![-3.0, 1.0]);
            }
        }
        assert_eq!(labels.iter().filter(|&&l| l == 2).count(), 8);
    }

    #[test]
    fn sparse_points_are_exact() {
        let spec = GeneratorSpec::SparsePoints {
            points: vec![
                SparsePoint { x: vec![-1.0], y: vec![2.0] },
                SparsePoint { x: vec![0.5], y: vec![0.0] },
            ],
        };
        let ds = generate(&spec, RngSeed(0)).unwrap();
        assert_eq!(ds.inputs, vec![vec![-1.0], vec![0.5]]);
        assert_eq!(ds.regression_targets().unwrap(), &[vec![2.0], vec![0.0]]);
    }

    #[test]
    fn clinical_in_region_rate() {
        let spec = GeneratorSpec::ClinicalSurrogate {
            n_points: 10_000,
            params: ClinicalParams {
                bp_mean: 70.0,
                ..Default::default()
            },
        };
        let ds = generate(&spec, RngSeed(4)).unwrap();
        assert_eq!(ds.input_dim(), Some(9));
        let rate = conditional_rate(&ds, 1, |x| x[0] < 65.0).unwrap();
        assert!((rate - 0.95).abs() < 0.02, "rate {rate}");
    }

    #[test]
    fn generators_are_deterministic() {
        let spec = quartic_spec(30, 0.1);
        assert_eq!(generate(&spec, RngSeed(9)).unwrap(), generate(&spec, RngSeed(9)).unwrap());
        assert_ne!(generate(&spec, RngSeed(9)).unwrap(), generate(&spec, RngSeed(10)).unwrap());
    }

    #[test]
    fn spec_json_uses_kind_tag() {
        let spec: GeneratorSpec =
            serde_json::from_str(r#"{"kind": "QUARTIC_1D", "n_points": 5}"#).unwrap();
        assert_eq!(spec, quartic_spec(5, 0.1));
        let bad = serde_json::from_str::<GeneratorSpec>(r#"{"kind": "QUARTIC_1D", "n_points": 5, "nosie": 1}"#);
        assert!(bad.is_err());
        assert!(generate(&quartic_spec(3, -1.0), RngSeed(0)).is_err());
    }

    #[test]
    fn perturb_cases() {
        let ds = generate(&quartic_spec(50, 0.1), RngSeed(5)).unwrap();
        assert_eq!(perturb(&ds, 0.0, None, RngSeed(1)).unwrap(), ds);
        let a = perturb(&ds, 2.0, None, RngSeed(1)).unwrap();
        assert_eq!(a, perturb(&ds, 2.0, None, RngSeed(1)).unwrap());
        assert_eq!(a.targets, ds.targets);

        let big = generate(&quartic_spec(10_000, 0.0), RngSeed(6)).unwrap();
        let p = perturb(&big, 2.0, Some(&[0]), RngSeed(7)).unwrap();
        let noise: Vec<f64> = p.inputs.iter().zip(&big.inputs).map(|(a, b)| a[0] - b[0]).collect();
        let m = noise.iter().sum::<f64>() / noise.len() as f64;
        let sd = (noise.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (noise.len() - 1) as f64).sqrt();
        assert!((sd - 2.0).abs() < 0.06, "sd {sd}");
    }

    #[test]
    fn split_cases() {
        let ds = generate(&quartic_spec(10, 0.1), RngSeed(5)).unwrap();
        let (tr, te) = split(&ds, 0.5, RngSeed(3)).unwrap();
        assert_eq!((tr.len(), te.len()), (5, 5));
        let mut xs: Vec<f64> = tr.inputs.iter().chain(&te.inputs).map(|x| x[0]).collect();
        let mut orig: Vec<f64> = ds.inputs.iter().map(|x| x[0]).collect();
        xs.sort_by(f64::total_cmp);
        orig.sort_by(f64::total_cmp);
        assert_eq!(xs, orig);
        assert_eq!(split(&ds, 0.5, RngSeed(3)).unwrap(), (tr, te));
        assert!(split(&ds, 0.01, RngSeed(3)).is_err());
        assert!(split(&ds, 1.0, RngSeed(3)).is_err());
    }

    #[test]
    fn filter_cases() {
        let set = parse_constraints("positive: 0 <= x[0] <= 65, -10 <= x[1] <= 10 : class = 1").unwrap();
        let far = Dataset::classification(vec![vec![80.0, 0.0], vec![90.0, 1.0]], vec![0, 1]).unwrap();
        assert_eq!(filter_constrained(&far, &set), far);
        let near = Dataset::classification(vec![vec![60.0, 0.0], vec![50.0, 1.0]], vec![0, 1]).unwrap();
        assert!(filter_constrained(&near, &set).is_empty());

        let spec = GeneratorSpec::ClinicalSurrogate {
            n_points: 2000,
            params: ClinicalParams::default(),
        };
        let ds = generate(&spec, RngSeed(8)).unwrap();
        let set = parse_constraints(
            "positive: 0 <= x[0] <= 65, -100 <= x[1] <= 100, -100 <= x[2] <= 100 : class = 1",
        )
        .unwrap();
        let kept = filter_constrained(&ds, &set);
        assert!(kept.len() < ds.len());
        assert!(kept.inputs.iter().all(|x| x[0] > 65.0));
    }

    #[test]
    fn standardizer_centres_and_scales() {
        let ds = Dataset::classification(vec![vec![1.0, 5.0], vec![3.0, 5.0]], vec![0, 1]).unwrap();
        let s = Standardizer::fit(&ds).unwrap();
        let t = s.transform(&ds);
        assert_eq!(t.inputs, vec![vec![-1.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(s.value(0, 2.0), 0.0);
    }
}
