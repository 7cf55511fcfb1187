use std::fmt;

use serde::{Deserialize, Serialize};

use super::poly::PolyExpr;
use crate::error::{Error, Result};
use crate::weights::{Architecture, Task};

/// Closed interval on one input dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub dim: usize,
    pub lower: f64,
    pub upper: f64,
}

/// The input part `C_x` of a constrained region. Dimensions without a bound
/// are unconstrained.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InputBox {
    pub bounds: Vec<Bound>,
}

impl InputBox {
    pub fn new(mut bounds: Vec<Bound>) -> Self {
        bounds.sort_by_key(|b| b.dim);
        Self { bounds }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.bounds
            .iter()
            .all(|b| x.get(b.dim).is_some_and(|&v| v >= b.lower && v <= b.upper))
    }

    pub fn bound(&self, dim: usize) -> Option<&Bound> {
        self.bounds.iter().find(|b| b.dim == dim)
    }

    pub fn center(&self, input_dim: usize) -> Option<Vec<f64>> {
        (0..input_dim)
            .map(|d| self.bound(d).map(|b| 0.5 * (b.lower + b.upper)))
            .collect()
    }
}

impl fmt::Display for InputBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, b) in self.bounds.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{} <= x[{}] <= {}", b.lower, b.dim, b.upper)?;
        }
        Ok(())
    }
}

/// Forbidden set: the union over groups of `{ (x, y) : f(x, y) <= 0 for all f in the group }`.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeRegion {
    pub input_box: InputBox,
    pub groups: Vec<Vec<PolyExpr>>,
}

impl NegativeRegion {
    /// Hard membership of `(x, y)`: inside the box and inside some group.
    pub fn contains(&self, x: &[f64], y: &[f64]) -> bool {
        self.input_box.contains(x) && self.output_in_groups(x, y)
    }

    /// Group membership only, ignoring the input box.
    pub fn output_in_groups(&self, x: &[f64], y: &[f64]) -> bool {
        self.groups
            .iter()
            .any(|g| g.iter().all(|f| f.eval(x, y) <= 0.0))
    }
}

/// One Gaussian component `N(phi_j(x); target(x), sigma^2)` with mixture weight.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetComponent {
    pub output: usize,
    pub target: PolyExpr,
    pub sigma: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PositiveTargets {
    Regression(Vec<TargetComponent>),
    /// Sorted, deduplicated allowed classes.
    Classification(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositiveRegion {
    pub input_box: InputBox,
    pub targets: PositiveTargets,
}

impl PositiveRegion {
    /// Whether the point prediction `y` (outputs or class probabilities) satisfies the region.
    pub fn allows_class(&self, class: usize) -> bool {
        match &self.targets {
            PositiveTargets::Classification(allowed) => allowed.contains(&class),
            PositiveTargets::Regression(_) => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Positive(PositiveRegion),
    Negative(NegativeRegion),
}

impl Region {
    pub fn input_box(&self) -> &InputBox {
        match self {
            Region::Positive(p) => &p.input_box,
            Region::Negative(n) => &n.input_box,
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::Negative(n) => {
                for (j, group) in n.groups.iter().enumerate() {
                    if j > 0 {
                        writeln!(f)?;
                    }
                    write!(f, "negative: {} : ", n.input_box)?;
                    for (k, ineq) in group.iter().enumerate() {
                        if k > 0 {
                            f.write_str(", ")?;
                        }
                        write!(f, "{ineq} <= 0")?;
                    }
                }
                Ok(())
            }
            Region::Positive(p) => {
                write!(f, "positive: {} : ", p.input_box)?;
                match &p.targets {
                    PositiveTargets::Classification(classes) => {
                        f.write_str("class = ")?;
                        for (k, c) in classes.iter().enumerate() {
                            if k > 0 {
                                f.write_str(", ")?;
                            }
                            write!(f, "{c}")?;
                        }
                        Ok(())
                    }
                    PositiveTargets::Regression(comps) => {
                        for (k, c) in comps.iter().enumerate() {
                            if k > 0 {
                                f.write_str(" | ")?;
                            }
                            write!(
                                f,
                                "y[{}] = {} ~ gauss({}) @ {}",
                                c.output, c.target, c.sigma, c.weight
                            )?;
                        }
                        Ok(())
                    }
                }
            }
        }
    }
}

/// A parsed constraint file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintSet {
    pub regions: Vec<Region>,
}

impl ConstraintSet {
    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn negatives(&self) -> impl Iterator<Item = &NegativeRegion> {
        self.regions.iter().filter_map(|r| match r {
            Region::Negative(n) => Some(n),
            Region::Positive(_) => None,
        })
    }

    pub fn positives(&self) -> impl Iterator<Item = &PositiveRegion> {
        self.regions.iter().filter_map(|r| match r {
            Region::Positive(p) => Some(p),
            Region::Negative(_) => None,
        })
    }

    /// Check indices and region kinds against the architecture.
    pub fn validate(&self, arch: &Architecture) -> Result<()> {
        let check_box = |b: &InputBox| -> Result<()> {
            match b.bounds.iter().find(|bd| bd.dim >= arch.input_dim) {
                Some(bd) => Err(Error::config(format!(
                    "constraint box references x[{}] but the input has {} dimensions",
                    bd.dim, arch.input_dim
                ))),
                None => Ok(()),
            }
        };
        let check_poly = |p: &PolyExpr| -> Result<()> {
            for v in p.vars() {
                let ok = match v {
                    super::Var::X(i) => i < arch.input_dim,
                    super::Var::Y(j) => j < arch.output_dim,
                };
                if !ok {
                    return Err(Error::config(format!(
                        "constraint references {v} outside the architecture's dimensions"
                    )));
                }
            }
            Ok(())
        };
        for region in &self.regions {
            check_box(region.input_box())?;
            match region {
                Region::Negative(n) => {
                    if arch.task == Task::Classification {
                        return Err(Error::config(
                            "negative constraints do not apply to classification; use a positive class constraint",
                        ));
                    }
                    n.groups.iter().flatten().try_for_each(check_poly)?;
                }
                Region::Positive(p) => match (&p.targets, arch.task) {
                    (PositiveTargets::Regression(comps), Task::Regression) => {
                        for c in comps {
                            if c.output >= arch.output_dim {
                                return Err(Error::config(format!(
                                    "positive target y[{}] outside {} outputs",
                                    c.output, arch.output_dim
                                )));
                            }
                            check_poly(&c.target)?;
                        }
                    }
                    (PositiveTargets::Classification(classes), Task::Classification) => {
                        if let Some(c) = classes.iter().find(|&&c| c >= arch.output_dim) {
                            return Err(Error::config(format!(
                                "class {c} outside {} classes",
                                arch.output_dim
                            )));
                        }
                        if classes.len() >= arch.output_dim {
                            return Err(Error::config(
                                "allowed class set must be a proper subset of the classes",
                            ));
                        }
                    }
                    (PositiveTargets::Regression(_), Task::Classification) => {
                        return Err(Error::config(
                            "regression target constraint used with a classification architecture",
                        ))
                    }
                    (PositiveTargets::Classification(_), Task::Regression) => {
                        return Err(Error::config(
                            "class constraint used with a regression architecture",
                        ))
                    }
                },
            }
        }
        Ok(())
    }
}

impl fmt::Display for ConstraintSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.regions {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoftIndicatorParams {
    pub tau0: f64,
    pub tau1: f64,
}

impl Default for SoftIndicatorParams {
    fn default() -> Self {
        Self {
            tau0: 15.0,
            tau1: 2.0,
        }
    }
}

/// `tanh(-tau z) + 1`, written as `2 / (1 + exp(2 tau z))` so the tail does not cancel.
#[inline]
fn half_step(tau: f64, z: f64) -> f64 {
    2.0 / (1.0 + (2.0 * tau * z).exp())
}

/// `(tanh(-tau0 z) + 1)(tanh(-tau1 z) + 1)`: soft indicator of `z <= 0`, in `(0, 4)`.
pub fn soft_indicator(z: f64, p: &SoftIndicatorParams) -> f64 {
    half_step(p.tau0, z) * half_step(p.tau1, z)
}

/// Derivative of [`soft_indicator`] in `z`.
pub fn soft_indicator_derivative(z: f64, p: &SoftIndicatorParams) -> f64 {
    let s0 = half_step(p.tau0, z);
    let s1 = half_step(p.tau1, z);
    // d/dz (1 + tanh(-tau z)) = -tau s (2 - s)
    let d0 = -p.tau0 * s0 * (2.0 - s0);
    let d1 = -p.tau1 * s1 * (2.0 - s1);
    d0 * s1 + s0 * d1
}

/// Soft membership of `(x, y)` in the forbidden set: sum over groups of the
/// product of soft indicators.
pub fn classifier_c(x: &[f64], y: &[f64], region: &NegativeRegion, p: &SoftIndicatorParams) -> f64 {
    region
        .groups
        .iter()
        .map(|g| g.iter().map(|f| soft_indicator(f.eval(x, y), p)).product::<f64>())
        .sum()
}

/// `dc/dy` via the product rule.
pub fn grad_classifier_c(
    x: &[f64],
    y: &[f64],
    region: &NegativeRegion,
    p: &SoftIndicatorParams,
) -> Vec<f64> {
    let mut grad = vec![0.0; y.len()];
    classifier_c_with_grad(x, y, region, p, 1.0, &mut grad);
    grad
}

/// Returns `c(x, y)` and accumulates `scale * dc/dy` into `grad`.
pub(crate) fn classifier_c_with_grad(
    x: &[f64],
    y: &[f64],
    region: &NegativeRegion,
    p: &SoftIndicatorParams,
    scale: f64,
    grad: &mut [f64],
) -> f64 {
    let mut total = 0.0;
    for group in &region.groups {
        let z: Vec<f64> = group.iter().map(|f| f.eval(x, y)).collect();
        let s: Vec<f64> = z.iter().map(|&zk| soft_indicator(zk, p)).collect();
        let k = s.len();
        // prefix/suffix products avoid dividing by saturated (zero) factors
        let mut prefix = vec![1.0; k + 1];
        for i in 0..k {
            prefix[i + 1] = prefix[i] * s[i];
        }
        let mut suffix = 1.0;
        for i in (0..k).rev() {
            let others = prefix[i] * suffix;
            if others != 0.0 {
                let ds = soft_indicator_derivative(z[i], p);
                if ds != 0.0 {
                    group[i].grad_y_into(x, y, scale * others * ds, grad);
                }
            }
            suffix *= s[i];
        }
        total += prefix[k];
    }
    total
}
