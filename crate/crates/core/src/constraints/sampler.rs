use rand::Rng;
use serde::{Deserialize, Serialize};

use super::region::InputBox;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SamplerMode {
    #[default]
    UniformBox,
    FixedPoints,
}

/// Sampling distribution over the input part of a constrained region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerPi {
    pub mode: SamplerMode,
    pub points: Option<Vec<Vec<f64>>>,
    pub sample_count: usize,
}

impl Default for SamplerPi {
    fn default() -> Self {
        Self {
            mode: SamplerMode::UniformBox,
            points: None,
            sample_count: 50,
        }
    }
}

impl SamplerPi {
    pub fn validate(&self) -> Result<()> {
        if self.sample_count == 0 {
            return Err(Error::config("pi.sample_count must be positive"));
        }
        if self.mode == SamplerMode::FixedPoints
            && self.points.as_ref().is_none_or(|p| p.is_empty())
        {
            return Err(Error::config("FIXED_POINTS sampling needs a non-empty point list"));
        }
        Ok(())
    }
}

/// Draw `pi.sample_count` inputs from `C_x`.
///
/// Uniform sampling needs every input dimension bounded. Fixed points are
/// filtered to those inside the box, then cycled to the requested count.
pub fn sample_pi<R: Rng + ?Sized>(
    input_box: &InputBox,
    input_dim: usize,
    pi: &SamplerPi,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    pi.validate()?;
    let m = pi.sample_count;
    match pi.mode {
        SamplerMode::UniformBox => {
            let bounds = (0..input_dim)
                .map(|d| {
                    input_box.bound(d).copied().ok_or_else(|| {
                        Error::config(format!(
                            "input dimension x[{d}] is unbounded; uniform sampling needs a bound for every input"
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((0..m)
                .map(|_| {
                    bounds
                        .iter()
                        .map(|b| rng.random_range(b.lower..=b.upper))
                        .collect()
                })
                .collect())
        }
        SamplerMode::FixedPoints => {
            let points: Vec<&Vec<f64>> = pi
                .points
                .iter()
                .flatten()
                .filter(|p| p.len() == input_dim && input_box.contains(p))
                .collect();
            if points.is_empty() {
                return Err(Error::config(
                    "none of the FIXED_POINTS lie inside the constrained input box",
                ));
            }
            Ok((0..m).map(|i| points[i % points.len()].clone()).collect())
        }
    }
}
