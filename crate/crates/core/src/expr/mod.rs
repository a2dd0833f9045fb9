//! Symbolic expression trees over 1-based feature variables.
//!
//! An [`Expr`] is the building block of every white-box model: it can be
//! evaluated on a dataset, expanded so that its top-level additive structure
//! is exposed, split into per-signature effects, serialized to text and
//! generated at random with controlled sparsity, interaction order and
//! nonlinearity.

mod eval;
mod expand;
mod generate;
mod ops;
mod signature;
mod text;

pub use eval::{evaluate, evaluate_point};
pub use expand::{decompose_additive, expand, sum_of};
pub use generate::{generate_model, GenerationConfig, DEFAULT_OUTPUT_BOUND};
pub use ops::{BinaryOp, OperatorTable, UnaryOp};
pub use signature::EffectSignature;
pub use text::{parse_text, to_text};

use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("domain violation in `{op}` at sample {sample} (argument {value})")]
    DomainViolation {
        op: &'static str,
        sample: usize,
        value: f64,
    },
    #[error("non-finite result from `{op}` at sample {sample}")]
    NonFinite { op: &'static str, sample: usize },
    #[error("variable x{index} is out of range for {n_features} features")]
    VariableOutOfRange { index: usize, n_features: usize },
    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("invalid generation config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("model generation exhausted after {attempts} rejected candidates")]
    GenerationExhausted { attempts: usize },
}

/// An immutable expression tree. Variables are 1-based feature indices.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(index: usize) -> Self {
        Expr::Var(index)
    }

    pub fn constant(value: f64) -> Self {
        Expr::Const(value)
    }

    pub fn unary(op: UnaryOp, child: Expr) -> Self {
        Expr::Unary(op, Box::new(child))
    }

    pub fn binary(op: BinaryOp, left: Expr, right: Expr) -> Self {
        Expr::Binary(op, Box::new(left), Box::new(right))
    }

    pub fn add(left: Expr, right: Expr) -> Self {
        Self::binary(BinaryOp::Add, left, right)
    }

    pub fn sub(left: Expr, right: Expr) -> Self {
        Self::binary(BinaryOp::Sub, left, right)
    }

    pub fn mul(left: Expr, right: Expr) -> Self {
        Self::binary(BinaryOp::Mul, left, right)
    }

    pub fn div(left: Expr, right: Expr) -> Self {
        Self::binary(BinaryOp::Div, left, right)
    }

    pub fn pow(base: Expr, exponent: Expr) -> Self {
        Self::binary(BinaryOp::Pow, base, exponent)
    }

    /// Sorted set of the variable indices referenced anywhere in the tree.
    pub fn variables(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.collect_variables(&mut out);
        out
    }

    fn collect_variables(&self, out: &mut BTreeSet<usize>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(i) => {
                out.insert(*i);
            }
            Expr::Unary(_, c) => c.collect_variables(out),
            Expr::Binary(_, l, r) => {
                l.collect_variables(out);
                r.collect_variables(out);
            }
        }
    }

    pub fn signature(&self) -> EffectSignature {
        EffectSignature::from_sorted_unchecked(self.variables().into_iter().collect())
    }

    pub fn max_variable(&self) -> Option<usize> {
        self.variables().into_iter().next_back()
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, c) => 1 + c.node_count(),
            Expr::Binary(_, l, r) => 1 + l.node_count() + r.node_count(),
        }
    }

    /// Number of nonlinear operator applications: every unary op except
    /// negation, plus division and power.
    pub fn nonlinear_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 0,
            Expr::Unary(op, c) => usize::from(op.is_nonlinear()) + c.nonlinear_count(),
            Expr::Binary(op, l, r) => {
                usize::from(op.is_nonlinear()) + l.nonlinear_count() + r.nonlinear_count()
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        self.variables().is_empty()
    }
}

impl std::fmt::Display for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&to_text(self))
    }
}

impl std::str::FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_text(s)
    }
}
