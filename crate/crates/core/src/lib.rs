//! Output-constrained Bayesian neural networks.
//!
//! A small MLP with a Gaussian weight prior is combined with function-space
//! constraint terms (positive regions the function should pass through,
//! negative regions it must avoid) and sampled with HMC or SVGD.

pub mod bnn;
pub mod constraints;
pub mod data;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod inference;
pub mod predictive;
pub mod priors;
pub mod rng;
pub mod weights;

pub use constraints::{parse_constraints, ConstraintSet, ParseError};
pub use dataset::{Dataset, Targets};
pub use error::{Error, Result};
pub use inference::{Method, Model, PosteriorEnsemble};
pub use rng::RngSeed;
pub use weights::{Activation, Architecture, Task, WeightVector};
