use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use ndarray::{ArrayView1, ArrayView2, Axis};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::game::Game;
use super::lime::solve_spd;
use super::{
    check_background, check_instance, predict_point, BlackBox, ExplainError, Explanation, ShapConfig, ShapMode,
    Summarization,
};

/// Largest feature count exact enumeration accepts.
pub const EXACT_SHAP_MAX_FEATURES: usize = 20;

/// Kernel SHAP with interventional coalition values.
///
/// The Shapley-kernel weighted least-squares problem is solved with the
/// efficiency constraint `Σφ = f(x) − v(∅)` eliminated through the last
/// feature. Exact mode uses every coalition; sampled mode draws
/// complementary coalition pairs by size in proportion to the kernel and
/// falls back to enumeration when the budget already covers every coalition.
pub fn kernel_shap_explain(
    bb: &dyn BlackBox,
    x: ArrayView1<'_, f64>,
    background: ArrayView2<'_, f64>,
    config: &ShapConfig,
) -> Result<Explanation, ExplainError> {
    let d = check_instance(bb, x)?;
    check_background(d, background)?;
    config.validate().map_err(ExplainError::InvalidInput)?;

    let summarized;
    let background = match config.summarization {
        Summarization::Full => background,
        Summarization::MeanPoint => {
            summarized = background.mean_axis(Axis(0)).expect("nonempty").insert_axis(Axis(0));
            summarized.view()
        }
    };

    let budget = config.n_coalitions.unwrap_or(2 * d + 2048);
    let enumerate = match config.mode {
        ShapMode::Exact => {
            if d > EXACT_SHAP_MAX_FEATURES {
                return Err(ExplainError::BudgetExceeded {
                    n_features: d,
                    limit: EXACT_SHAP_MAX_FEATURES,
                });
            }
            true
        }
        ShapMode::Sampled => d < 63 && (budget as u128) >= (1u128 << d) - 2,
    };
    if !enumerate && d >= 64 {
        return Err(ExplainError::BudgetExceeded { n_features: d, limit: 63 });
    }

    let game = Game::new(bb, x, background);
    let v_empty = game.values(&[0])?[0];
    let v_full = predict_point(bb, x)?;
    let total = v_full - v_empty;

    let coalitions = if enumerate {
        enumerate_coalitions(d)
    } else {
        sample_coalitions(d, budget, config.seed)
    };
    let masks: Vec<u64> = coalitions.iter().map(|(m, _)| *m).collect();
    let values = if d == 1 { Vec::new() } else { game.values(&masks)? };

    let phi = solve_constrained(d, &coalitions, &values, v_empty, total)?;
    let mut e = Explanation::singletons("shap", phi, v_empty);
    e.diagnostics.insert("n_coalitions".into(), coalitions.len() as f64);
    Ok(e)
}

/// Shapley kernel weight of a coalition of size `s` out of `d`.
fn kernel_weight(d: usize, s: usize) -> f64 {
    (d as f64 - 1.0) / (binomial(d, s) * s as f64 * (d - s) as f64)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// All proper nonempty coalitions with their kernel weights.
fn enumerate_coalitions(d: usize) -> Vec<(u64, f64)> {
    if d < 2 {
        return Vec::new();
    }
    let full = (1u64 << d) - 1;
    (1..full)
        .map(|m| (m, kernel_weight(d, m.count_ones() as usize)))
        .collect()
}

/// Paired sampling: a size is drawn with probability proportional to the
/// total kernel mass of that size, then a uniform subset of that size and
/// its complement are both added. Repeated draws accumulate as counts.
fn sample_coalitions(d: usize, budget: usize, seed: u64) -> Vec<(u64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<usize> = (1..d).collect();
    let size_weights: Vec<f64> = sizes.iter().map(|&s| 1.0 / (s as f64 * (d - s) as f64)).collect();
    let size_dist = WeightedIndex::new(&size_weights).expect("positive size weights");
    let full = (1u64 << d) - 1;

    let mut counts: BTreeMap<u64, f64> = BTreeMap::new();
    for _ in 0..budget.div_ceil(2) {
        let s = sizes[size_dist.sample(&mut rng)];
        let mask = rand::seq::index::sample(&mut rng, d, s)
            .into_iter()
            .fold(0u64, |m, i| m | (1 << i));
        *counts.entry(mask).or_default() += 1.0;
        *counts.entry(full ^ mask).or_default() += 1.0;
    }
    counts.into_iter().collect()
}

/// Weighted least squares for `v(S) − v(∅) ≈ Σ_{i∈S} φ_i` subject to
/// `Σφ = total`, solved by substituting `φ_d = total − Σ_{i<d} φ_i`.
fn solve_constrained(
    d: usize,
    coalitions: &[(u64, f64)],
    values: &[f64],
    v_empty: f64,
    total: f64,
) -> Result<Vec<f64>, ExplainError> {
    if d == 1 {
        return Ok(vec![total]);
    }
    let p = d - 1;
    let last = 1u64 << (d - 1);
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    for (&(mask, w), &value) in coalitions.iter().zip(values) {
        let z_last = if mask & last != 0 { 1.0 } else { 0.0 };
        for (i, r) in row.iter_mut().enumerate() {
            *r = (mask >> i & 1) as f64 - z_last;
        }
        let target = value - v_empty - z_last * total;
        for a in 0..p {
            if row[a] == 0.0 {
                continue;
            }
            let wa = w * row[a];
            rhs[a] += wa * target;
            for b in 0..p {
                gram[(a, b)] += wa * row[b];
            }
        }
    }
    let beta = solve_spd(gram, rhs)?;
    let mut phi: Vec<f64> = beta.iter().copied().collect();
    phi.push(total - phi.iter().sum::<f64>());
    Ok(phi)
}
