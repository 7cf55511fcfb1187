//! Constraint language, compiled constrained regions, the soft indicator and
//! the sampling distribution over constrained inputs.

mod parser;
mod poly;
mod region;
mod sampler;

pub use parser::{parse_constraints, ParseError, ParseErrorKind};
pub use poly::{Monomial, PolyExpr, Term, Var};
pub use region::{
    classifier_c, grad_classifier_c, soft_indicator, soft_indicator_derivative, Bound,
    ConstraintSet, InputBox, NegativeRegion, PositiveRegion, PositiveTargets, Region,
    SoftIndicatorParams, TargetComponent,
};
pub(crate) use region::classifier_c_with_grad;
pub use sampler::{sample_pi, SamplerMode, SamplerPi};
