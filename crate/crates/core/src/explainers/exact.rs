use ndarray::{ArrayView1, ArrayView2};

use super::{check_background, check_instance, check_outputs, BlackBox, ExplainError, Explanation};

pub const EXACT_SHAPLEY_MAX_FEATURES: usize = 12;

/// Brute-force Shapley values of the interventional game, straight from
/// the coalition-sum definition. Exponential in `d`; meant as an oracle.
pub fn exact_shapley(
    bb: &dyn BlackBox,
    x: ArrayView1<'_, f64>,
    background: ArrayView2<'_, f64>,
) -> Result<Explanation, ExplainError> {
    let d = check_instance(bb, x)?;
    check_background(d, background)?;
    if d > EXACT_SHAPLEY_MAX_FEATURES {
        return Err(ExplainError::BudgetExceeded {
            n_features: d,
            limit: EXACT_SHAPLEY_MAX_FEATURES,
        });
    }

    let n_coalitions = 1usize << d;
    let mut v = Vec::with_capacity(n_coalitions);
    for mask in 0..n_coalitions {
        let mut rows = background.to_owned();
        for i in 0..d {
            if mask & (1 << i) != 0 {
                rows.column_mut(i).fill(x[i]);
            }
        }
        let out = bb.predict(rows.view())?;
        check_outputs(&out, rows.nrows())?;
        v.push(out.iter().sum::<f64>() / rows.nrows() as f64);
    }

    let factorial = |k: usize| (1..=k).map(|j| j as f64).product::<f64>();
    let weight: Vec<f64> = (0..d)
        .map(|s| factorial(s) * factorial(d - s - 1) / factorial(d))
        .collect();
    let phi = (0..d)
        .map(|i| {
            (0..n_coalitions)
                .filter(|s| s & (1 << i) == 0)
                .map(|s| weight[s.count_ones() as usize] * (v[s | (1 << i)] - v[s]))
                .sum()
        })
        .collect();
    Ok(Explanation::singletons("exact-shapley", phi, v[0]))
}
