//! Network architecture and the flat weight layout shared by every module.
//!
//! Weights are stored layer-major. Within a layer the `fan_out x fan_in`
//! matrix comes first in row-major order (row `i` holds the weights feeding
//! output unit `i`), followed by the `fan_out` biases.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Activation {
    /// `exp(-z^2)`
    #[default]
    Rbf,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Rbf => (-z * z).exp(),
            Activation::Tanh => z.tanh(),
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Rbf => -2.0 * z * (-z * z).exp(),
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub output_dim: usize,
    #[serde(default)]
    pub activation: Activation,
    pub task: Task,
}

/// Offsets of one dense layer inside a flat weight vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
    pub offset: usize,
}

impl LayerShape {
    pub fn weight_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.fan_in * self.fan_out
    }

    pub fn bias_range(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.fan_in * self.fan_out;
        start..start + self.fan_out
    }

    pub fn len(&self) -> usize {
        self.fan_in * self.fan_out + self.fan_out
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Architecture {
    pub fn new(
        input_dim: usize,
        hidden_sizes: Vec<usize>,
        output_dim: usize,
        activation: Activation,
        task: Task,
    ) -> Result<Self> {
        let arch = Self {
            input_dim,
            hidden_sizes,
            output_dim,
            activation,
            task,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn regression(input_dim: usize, hidden_sizes: Vec<usize>, output_dim: usize) -> Self {
        Self::new(input_dim, hidden_sizes, output_dim, Activation::Rbf, Task::Regression)
            .expect("valid architecture")
    }

    pub fn classification(input_dim: usize, hidden_sizes: Vec<usize>, classes: usize) -> Self {
        Self::new(input_dim, hidden_sizes, classes, Activation::Rbf, Task::Classification)
            .expect("valid architecture")
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::config("input and output dimensions must be >= 1"));
        }
        if self.hidden_sizes.is_empty() {
            return Err(Error::config("at least one hidden layer is required"));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::config("hidden layer sizes must be >= 1"));
        }
        if self.task == Task::Classification && self.output_dim < 2 {
            return Err(Error::config("classification needs at least two classes"));
        }
        Ok(())
    }

    /// Layer widths from input to output.
    pub fn widths(&self) -> Vec<usize> {
        let mut widths = Vec::with_capacity(self.hidden_sizes.len() + 2);
        widths.push(self.input_dim);
        widths.extend_from_slice(&self.hidden_sizes);
        widths.push(self.output_dim);
        widths
    }

    pub fn layers(&self) -> Vec<LayerShape> {
        let mut offset = 0;
        self.widths()
            .windows(2)
            .map(|pair| {
                let shape = LayerShape {
                    fan_in: pair[0],
                    fan_out: pair[1],
                    offset,
                };
                offset += shape.len();
                shape
            })
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        parameter_count(self)
    }
}

/// Sum over consecutive layer pairs of `fan_in * fan_out + fan_out`.
pub fn parameter_count(arch: &Architecture) -> usize {
    arch.widths()
        .windows(2)
        .map(|pair| pair[0] * pair[1] + pair[1])
        .sum()
}

/// Dense layer parameters in matrix form.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// `fan_out x fan_in`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(arch: &Architecture, values: Vec<f64>) -> Result<Self> {
        let expected = arch.parameter_count();
        if values.len() != expected {
            return Err(Error::shape(format!(
                "weight vector has {} entries, architecture needs {expected}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::numerical(None, format!("weight {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn zeros(arch: &Architecture) -> Self {
        Self(vec![0.0; arch.parameter_count()])
    }

    /// Draw from the isotropic Gaussian weight prior.
    pub fn sample_prior<R: Rng + ?Sized>(arch: &Architecture, sigma_p: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, sigma_p).expect("sigma_p must be positive and finite");
        Self(
            (0..arch.parameter_count())
                .map(|_| normal.sample(rng))
                .collect(),
        )
    }

    pub fn from_layers(arch: &Architecture, layers: &[LayerParams]) -> Result<Self> {
        let shapes = arch.layers();
        if shapes.len() != layers.len() {
            return Err(Error::shape(format!(
                "expected {} layers, got {}",
                shapes.len(),
                layers.len()
            )));
        }
        let mut values = Vec::with_capacity(arch.parameter_count());
        for (shape, layer) in shapes.iter().zip(layers) {
            if layer.weights.len() != shape.fan_in * shape.fan_out
                || layer.bias.len() != shape.fan_out
            {
                return Err(Error::shape("layer parameter shape mismatch"));
            }
            values.extend_from_slice(&layer.weights);
            values.extend_from_slice(&layer.bias);
        }
        Self::new(arch, values)
    }

    pub fn to_layers(&self, arch: &Architecture) -> Vec<LayerParams> {
        arch.layers()
            .iter()
            .map(|shape| LayerParams {
                weights: self.0[shape.weight_range()].to_vec(),
                bias: self.0[shape.bias_range()].to_vec(),
            })
            .collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<[f64]> for WeightVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}
