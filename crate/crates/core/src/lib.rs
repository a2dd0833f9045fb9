//! Ground-truth evaluation of feature-additive post hoc explainers.
//!
//! White-box additive models expose their exact per-effect contributions.
//! Explainers only see the model as a black box; their attributions are
//! aligned to the true effects by grouping effects that share features,
//! reconciled into the same units, and scored.

pub mod expr;
pub mod alignment;
pub mod explainers;
pub mod harness;
pub mod metrics;
pub mod model;

pub use expr::{EffectSignature, Expr, ExprError, GenerationConfig};
pub use model::{AdditiveModel, ContributionMatrix, ExpectationTable, ModelError};
