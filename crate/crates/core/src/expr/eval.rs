use ndarray::{Array1, ArrayView2};

use super::{Expr, ExprError};

/// Evaluates `expr` on every row of `x` (n samples × d features).
///
/// Evaluation is column-at-a-time: each node produces a length-n buffer.
/// The first sample whose argument falls outside an op's domain, or whose
/// result overflows to a non-finite value, aborts the whole call.
pub fn evaluate(expr: &Expr, x: ArrayView2<'_, f64>) -> Result<Array1<f64>, ExprError> {
    eval_node(expr, &x).map(Array1::from)
}

/// Single-point convenience wrapper around [`evaluate`].
pub fn evaluate_point(expr: &Expr, point: &[f64]) -> Result<f64, ExprError> {
    let view = ArrayView2::from_shape((1, point.len()), point).expect("1×d view of a slice");
    Ok(evaluate(expr, view)?[0])
}

fn eval_node(expr: &Expr, x: &ArrayView2<'_, f64>) -> Result<Vec<f64>, ExprError> {
    let n = x.nrows();
    match expr {
        Expr::Const(c) => Ok(vec![*c; n]),
        Expr::Var(i) => {
            if *i == 0 || *i > x.ncols() {
                return Err(ExprError::VariableOutOfRange {
                    index: *i,
                    n_features: x.ncols(),
                });
            }
            Ok(x.column(*i - 1).to_vec())
        }
        Expr::Unary(op, child) => {
            let mut values = eval_node(child, x)?;
            for (sample, v) in values.iter_mut().enumerate() {
                let out = op.apply(*v).ok_or(ExprError::DomainViolation {
                    op: op.name(),
                    sample,
                    value: *v,
                })?;
                if !out.is_finite() {
                    return Err(ExprError::NonFinite {
                        op: op.name(),
                        sample,
                    });
                }
                *v = out;
            }
            Ok(values)
        }
        Expr::Binary(op, left, right) => {
            let mut lhs = eval_node(left, x)?;
            let rhs = eval_node(right, x)?;
            for (sample, (a, b)) in lhs.iter_mut().zip(rhs).enumerate() {
                let out = op.apply(*a, b).ok_or(ExprError::DomainViolation {
                    op: op.name(),
                    sample,
                    value: b,
                })?;
                if !out.is_finite() {
                    return Err(ExprError::NonFinite {
                        op: op.name(),
                        sample,
                    });
                }
                *a = out;
            }
            Ok(lhs)
        }
    }
}
