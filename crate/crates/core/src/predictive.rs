//! Posterior-predictive summaries, evaluation metrics and the grid/metrics
//! file formats.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::bnn::{forward, softmax};
use crate::constraints::{ConstraintSet, Region};
use crate::error::{Error, Result};
use crate::inference::PosteriorEnsemble;
use crate::weights::Task;

/// Added to the predictive variance in the held-out log likelihood.
pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PointSummary {
    /// One row per ensemble member: raw outputs for regression, class
    /// probabilities for classification.
    pub samples: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Population standard deviation across members.
    pub std: Vec<f64>,
    pub q05: Vec<f64>,
    pub q95: Vec<f64>,
    /// Argmax of the mean class probabilities; ties go to the lowest index.
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSummary {
    pub task: Task,
    pub inputs: Vec<Vec<f64>>,
    pub points: Vec<PointSummary>,
}

impl PredictiveSummary {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.points.iter().filter_map(|p| p.label).collect()
    }

    pub fn means(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| p.mean.clone()).collect()
    }
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn summarize(samples: Vec<Vec<f64>>, task: Task) -> PointSummary {
    let s = samples.len() as f64;
    let dim = samples[0].len();
    let mut mean = vec![0.0; dim];
    let mut std = vec![0.0; dim];
    let mut q05 = vec![0.0; dim];
    let mut q95 = vec![0.0; dim];
    for k in 0..dim {
        let mut col: Vec<f64> = samples.iter().map(|r| r[k]).collect();
        let m = col.iter().sum::<f64>() / s;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / s;
        col.sort_by(f64::total_cmp);
        mean[k] = m;
        std[k] = var.sqrt();
        q05[k] = quantile(&col, 0.05);
        q95[k] = quantile(&col, 0.95);
    }
    let label = (task == Task::Classification).then(|| argmax(&mean));
    PointSummary {
        samples,
        mean,
        std,
        q05,
        q95,
        label,
    }
}

pub fn posterior_predictive(
    ensemble: &PosteriorEnsemble,
    inputs: &[Vec<f64>],
) -> Result<PredictiveSummary> {
    if ensemble.is_empty() {
        return Err(Error::config("posterior ensemble is empty"));
    }
    let arch = &ensemble.architecture;
    if let Some(x) = inputs.iter().find(|x| x.len() != arch.input_dim) {
        return Err(Error::shape(format!(
            "query point has {} inputs, architecture expects {}",
            x.len(),
            arch.input_dim
        )));
    }
    let points = inputs
        .par_iter()
        .map(|x| {
            let samples: Vec<Vec<f64>> = ensemble
                .weights
                .iter()
                .map(|w| {
                    let out = forward(arch, w.as_slice(), x);
                    match arch.task {
                        Task::Regression => out,
                        Task::Classification => softmax(&out),
                    }
                })
                .collect();
            summarize(samples, arch.task)
        })
        .collect();
    Ok(PredictiveSummary {
        task: arch.task,
        inputs: inputs.to_vec(),
        points,
    })
}

fn classification_labels(summary: &PredictiveSummary, labels: &[usize]) -> Result<Vec<usize>> {
    if summary.task != Task::Classification {
        return Err(Error::config("accuracy needs a classification summary"));
    }
    if labels.len() != summary.len() {
        return Err(Error::shape("label count does not match the number of predictions"));
    }
    if labels.is_empty() {
        return Err(Error::NotApplicable("no labelled points".into()));
    }
    Ok(summary.labels())
}

/// Fraction of argmax predictions equal to the label.
pub fn accuracy(summary: &PredictiveSummary, labels: &[usize]) -> Result<f64> {
    let pred = classification_labels(summary, labels)?;
    let correct = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Binary accuracy and F1 with class 1 as the positive class.
pub fn accuracy_f1(summary: &PredictiveSummary, labels: &[usize]) -> Result<(f64, f64)> {
    let pred = classification_labels(summary, labels)?;
    if labels.iter().chain(&pred).any(|&l| l > 1) {
        return Err(Error::config("F1 needs binary labels"));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    let mut correct = 0usize;
    for (&p, &l) in pred.iter().zip(labels) {
        correct += (p == l) as usize;
        match (p, l) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fn_ += 1,
            _ => {}
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok((correct as f64 / labels.len() as f64, f1))
}

/// Fraction of in-region points whose point prediction violates a constraint.
///
/// Classification uses the argmax label against positive regions; regression
/// uses the predictive mean against negative regions. Points outside every
/// applicable input box are excluded.
pub fn violation_fraction(summary: &PredictiveSummary, set: &ConstraintSet) -> Result<f64> {
    let mut in_region = 0usize;
    let mut violating = 0usize;
    for (x, p) in summary.inputs.iter().zip(&summary.points) {
        let mut inside = false;
        let mut violates = false;
        for region in &set.regions {
            match (summary.task, region) {
                (Task::Classification, Region::Positive(r)) if r.input_box.contains(x) => {
                    inside = true;
                    violates |= !r.allows_class(p.label.unwrap_or(0));
                }
                (Task::Regression, Region::Negative(r)) if r.input_box.contains(x) => {
                    inside = true;
                    violates |= r.output_in_groups(x, &p.mean);
                }
                _ => {}
            }
        }
        in_region += inside as usize;
        violating += violates as usize;
    }
    if in_region == 0 {
        return Err(Error::NotApplicable(
            "no evaluation point lies in a constrained input region".into(),
        ));
    }
    Ok(violating as f64 / in_region as f64)
}

/// Percentage of ensemble outputs inside a forbidden region, averaged over
/// query points that lie in some negative input box.
pub fn pp_violation(summary: &PredictiveSummary, set: &ConstraintSet) -> Result<f64> {
    if summary.task != Task::Regression {
        return Err(Error::config("PP-VIOL needs a regression summary"));
    }
    let negatives: Vec<_> = set.negatives().collect();
    let mut total = 0.0;
    let mut count = 0usize;
    for (x, p) in summary.inputs.iter().zip(&summary.points) {
        let active: Vec<_> = negatives.iter().filter(|r| r.input_box.contains(x)).collect();
        if active.is_empty() {
            continue;
        }
        let bad = p
            .samples
            .iter()
            .filter(|y| active.iter().any(|r| r.output_in_groups(x, y)))
            .count();
        total += bad as f64 / p.samples.len() as f64;
        count += 1;
    }
    if count == 0 {
        return Err(Error::NotApplicable(
            "no query point lies in a negative input region".into(),
        ));
    }
    Ok(100.0 * total / count as f64)
}

/// RMSE of the predictive mean and the held-out log likelihood under
/// `N(mean, std^2 + SIGMA_FLOOR^2)`.
pub fn rmse_holl(summary: &PredictiveSummary, targets: &[Vec<f64>]) -> Result<(f64, f64)> {
    if summary.task != Task::Regression {
        return Err(Error::config("RMSE needs a regression summary"));
    }
    if targets.len() != summary.len() {
        return Err(Error::shape("target count does not match the number of predictions"));
    }
    let mut sq = 0.0;
    let mut holl = 0.0;
    let mut cells = 0usize;
    for (p, y) in summary.points.iter().zip(targets) {
        if y.len() != p.mean.len() {
            return Err(Error::shape("target dimension does not match the outputs"));
        }
        for k in 0..y.len() {
            let r = y[k] - p.mean[k];
            let var = p.std[k] * p.std[k] + SIGMA_FLOOR * SIGMA_FLOOR;
            sq += r * r;
            holl += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * r * r / var;
            cells += 1;
        }
    }
    if cells == 0 {
        return Err(Error::NotApplicable("no targets".into()));
    }
    Ok(((sq / cells as f64).sqrt(), holl))
}

/// Evaluation metrics; absent metrics are omitted from JSON and metrics that
/// do not apply to the evaluation points are written as `null`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metrics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "nullable")]
    pub viol: Option<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "nullable")]
    pub pp_viol: Option<Option<f64>>,
}

fn nullable<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Option<f64>>, D::Error> {
    Option::<f64>::deserialize(d).map(Some)
}

/// `Ok(None)` for a not-applicable metric, other errors pass through.
fn applicable(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::NotApplicable(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

impl Metrics {
    /// Classification: acc (plus f1 when binary) and viol when positive
    /// regions exist. Regression: rmse, holl, and viol/pp_viol when negative
    /// regions exist.
    pub fn evaluate(
        summary: &PredictiveSummary,
        set: &ConstraintSet,
        targets: &crate::dataset::Targets,
    ) -> Result<Metrics> {
        use crate::dataset::Targets;
        let mut m = Metrics::default();
        match targets {
            Targets::Classification(labels) => {
                let binary = summary.points.first().is_some_and(|p| p.mean.len() == 2);
                if binary {
                    let (acc, f1) = accuracy_f1(summary, labels)?;
                    m.acc = Some(acc);
                    m.f1 = Some(f1);
                } else {
                    m.acc = Some(accuracy(summary, labels)?);
                }
                if set.positives().next().is_some() {
                    m.viol = Some(applicable(violation_fraction(summary, set))?);
                }
            }
            Targets::Regression(ys) => {
                let (rmse, holl) = rmse_holl(summary, ys)?;
                m.rmse = Some(rmse);
                m.holl = Some(holl);
                if set.negatives().next().is_some() {
                    m.viol = Some(applicable(violation_fraction(summary, set))?);
                    m.pp_viol = Some(applicable(pp_violation(summary, set))?);
                }
            }
        }
        Ok(m)
    }

    /// Constraint metrics only, for unlabelled query points such as a grid.
    pub fn constraints_only(summary: &PredictiveSummary, set: &ConstraintSet) -> Result<Metrics> {
        let mut m = Metrics::default();
        match summary.task {
            Task::Classification => {
                if set.positives().next().is_some() {
                    m.viol = Some(applicable(violation_fraction(summary, set))?);
                }
            }
            Task::Regression => {
                if set.negatives().next().is_some() {
                    m.viol = Some(applicable(violation_fraction(summary, set))?);
                    m.pp_viol = Some(applicable(pp_violation(summary, set))?);
                }
            }
        }
        Ok(m)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::inference::write_json(path, self)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        crate::inference::read_json(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

/// Regular query grid; the last axis varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GridSpec {
    pub axes: Vec<GridAxis>,
}

impl GridSpec {
    pub fn new(axes: Vec<GridAxis>) -> Self {
        Self { axes }
    }

    pub fn validate(&self, input_dim: usize) -> Result<()> {
        if self.axes.len() != input_dim {
            return Err(Error::config(format!(
                "grid has {} axes, architecture has {} inputs",
                self.axes.len(),
                input_dim
            )));
        }
        for a in &self.axes {
            if a.count == 0 || !a.min.is_finite() || !a.max.is_finite() || a.min > a.max {
                return Err(Error::config("grid axes need count >= 1 and min <= max"));
            }
            if a.count == 1 && a.min != a.max {
                return Err(Error::config("a single-point grid axis needs min == max"));
            }
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        let values: Vec<Vec<f64>> = self
            .axes
            .iter()
            .map(|a| {
                if a.count == 1 {
                    vec![a.min]
                } else {
                    let step = (a.max - a.min) / (a.count - 1) as f64;
                    (0..a.count).map(|i| a.min + step * i as f64).collect()
                }
            })
            .collect();
        let mut out = vec![Vec::new()];
        for axis in &values {
            out = out
                .into_iter()
                .flat_map(|prefix: Vec<f64>| {
                    axis.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        out
    }
}

/// One row of a predictive grid file.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub q05: Vec<f64>,
    pub q95: Vec<f64>,
    pub argmax: Option<usize>,
}

/// Columns `x1..xD`, then `mean_k, std_k, q05_k, q95_k` for each output `k`
/// (1-based), then `argmax` for classification.
pub fn write_grid_csv<W: Write>(summary: &PredictiveSummary, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let d = summary.inputs.first().map_or(0, Vec::len);
    let k = summary.points.first().map_or(0, |p| p.mean.len());
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    for j in 1..=k {
        header.extend([
            format!("mean_{j}"),
            format!("std_{j}"),
            format!("q05_{j}"),
            format!("q95_{j}"),
        ]);
    }
    if summary.task == Task::Classification {
        header.push("argmax".into());
    }
    w.write_record(&header)?;
    for (x, p) in summary.inputs.iter().zip(&summary.points) {
        let mut row: Vec<String> = x.iter().map(f64::to_string).collect();
        for j in 0..k {
            row.extend([p.mean[j], p.std[j], p.q05[j], p.q95[j]].map(|v| v.to_string()));
        }
        if let Some(l) = p.label {
            row.push(l.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_grid_csv(summary: &PredictiveSummary, path: impl AsRef<Path>) -> Result<()> {
    write_grid_csv(summary, std::fs::File::create(path)?)
}

pub fn read_grid_csv<R: Read>(reader: R) -> Result<Vec<GridRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let d = header.iter().filter(|h| h.starts_with('x')).count();
    let has_argmax = header.last().is_some_and(|h| h == "argmax");
    let k = (header.len() - d - has_argmax as usize) / 4;
    if d + 4 * k + has_argmax as usize != header.len() {
        return Err(Error::Data("grid header has an unexpected column count".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let num = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Data(format!("row {line}: bad value in column {}", c + 1)))
        };
        let x = (0..d).map(num).collect::<Result<Vec<_>>>()?;
        let col = |off: usize| (0..k).map(|j| num(d + 4 * j + off)).collect::<Result<Vec<_>>>();
        let argmax = if has_argmax {
            Some(
                rec.get(d + 4 * k)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Data(format!("row {line}: bad argmax")))?,
            )
        } else {
            None
        };
        rows.push(GridRow {
            x,
            mean: col(0)?,
            std: col(1)?,
            q05: col(2)?,
            q95: col(3)?,
            argmax,
        });
    }
    Ok(rows)
}

pub fn load_grid_csv(path: impl AsRef<Path>) -> Result<Vec<GridRow>> {
    read_grid_csv(std::fs::File::open(path)?)
}
