use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_instance, check_outputs, BlackBox, ExplainError, Explanation, FeatureStats, LimeConfig};

/// Local linear surrogate fitted on z-scored perturbations.
///
/// Perturbations are drawn from `N(0, I)` in z-space and mapped back to
/// feature space as `μ + σ·z` before querying; the first row is the instance
/// itself. Rows are weighted by `sqrt(exp(-dist²/width²))` where `dist` is
/// the z-space distance to the instance. The ridge fit (intercept not
/// penalized) is then rescaled to feature units, and each feature's
/// contribution is `x_i·θ'_i` with base value `θ'_0`.
pub fn lime_explain(
    bb: &dyn BlackBox,
    x: ArrayView1<'_, f64>,
    stats: &FeatureStats,
    config: &LimeConfig,
) -> Result<Explanation, ExplainError> {
    let d = check_instance(bb, x)?;
    config.validate().map_err(ExplainError::InvalidInput)?;
    if stats.mean.len() != d || stats.std.len() != d {
        return Err(ExplainError::InvalidInput(format!(
            "feature statistics cover {} features, expected {d}",
            stats.mean.len()
        )));
    }
    if let Some(i) = stats.std.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(ExplainError::InvalidInput(format!(
            "feature {} has non-positive spread {}",
            i + 1,
            stats.std[i]
        )));
    }

    let n = config.n_perturbations;
    let width = config.kernel_width.unwrap_or(0.75 * (d as f64).sqrt());
    let z_x: Vec<f64> = (0..d).map(|i| (x[i] - stats.mean[i]) / stats.std[i]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut z = Array2::<f64>::zeros((n, d));
    z.row_mut(0).assign(&ArrayView1::from(&z_x));
    for k in 1..n {
        for i in 0..d {
            z[[k, i]] = StandardNormal.sample(&mut rng);
        }
    }
    let mut query = Array2::<f64>::zeros((n, d));
    query.row_mut(0).assign(&x);
    for k in 1..n {
        for i in 0..d {
            query[[k, i]] = stats.mean[i] + stats.std[i] * z[[k, i]];
        }
    }
    let y = bb.predict(query.view())?;
    check_outputs(&y, n)?;

    let weights: Vec<f64> = z
        .rows()
        .into_iter()
        .map(|row| {
            let dist2: f64 = row.iter().zip(&z_x).map(|(a, b)| (a - b) * (a - b)).sum();
            (-dist2 / (width * width)).exp().sqrt()
        })
        .collect();

    let all: Vec<usize> = (0..d).collect();
    let mut fit = weighted_ridge(&z, y.as_slice().expect("contiguous"), &weights, &all, config.ridge_strength)?;
    if let Some(k) = config.top_k.filter(|k| *k < d) {
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| fit.coef[b].abs().total_cmp(&fit.coef[a].abs()).then(a.cmp(&b)));
        let mut keep = order[..k].to_vec();
        keep.sort_unstable();
        fit = weighted_ridge(&z, y.as_slice().expect("contiguous"), &weights, &keep, config.ridge_strength)?;
    }

    let (base, theta) = rescale_coefficients(fit.intercept, &fit.coef, &stats.mean, &stats.std);
    let contributions = (0..d).map(|i| x[i] * theta[i]).collect();
    let mut e = Explanation::singletons("lime", contributions, base);
    e.diagnostics.insert("r2".into(), fit.r2);
    e.diagnostics.insert("kernel_width".into(), width);
    Ok(e)
}

/// Maps z-space coefficients to feature units:
/// `θ'_i = θ_i/σ_i` and `θ'_0 = θ_0 − Σ μ_i·θ_i/σ_i`.
pub fn rescale_coefficients(intercept: f64, coef: &[f64], mean: &[f64], std: &[f64]) -> (f64, Vec<f64>) {
    let theta: Vec<f64> = coef.iter().zip(std).map(|(c, s)| c / s).collect();
    let shift: f64 = theta.iter().zip(mean).map(|(t, m)| t * m).sum();
    (intercept - shift, theta)
}

struct RidgeFit {
    intercept: f64,
    /// Length d; columns not in the fit are zero.
    coef: Vec<f64>,
    r2: f64,
}

fn weighted_ridge(
    z: &Array2<f64>,
    y: &[f64],
    w: &[f64],
    columns: &[usize],
    alpha: f64,
) -> Result<RidgeFit, ExplainError> {
    let n = z.nrows();
    let p = columns.len();
    let w_sum: f64 = w.iter().sum();
    if !(w_sum > 0.0) {
        return Err(ExplainError::SingularFit("all kernel weights vanish".into()));
    }
    let y_bar = w.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / w_sum;
    let x_bar: Vec<f64> = columns
        .iter()
        .map(|&c| (0..n).map(|k| w[k] * z[[k, c]]).sum::<f64>() / w_sum)
        .collect();

    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut centred = vec![0.0; p];
    for k in 0..n {
        for (a, &c) in columns.iter().enumerate() {
            centred[a] = z[[k, c]] - x_bar[a];
        }
        let yk = y[k] - y_bar;
        for a in 0..p {
            let wa = w[k] * centred[a];
            rhs[a] += wa * yk;
            for b in a..p {
                gram[(a, b)] += wa * centred[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
        gram[(a, a)] += alpha;
    }
    let beta = solve_spd(gram, rhs)?;

    let mut coef = vec![0.0; z.ncols()];
    for (a, &c) in columns.iter().enumerate() {
        coef[c] = beta[a];
    }
    let intercept = y_bar - x_bar.iter().zip(beta.iter()).map(|(m, b)| m * b).sum::<f64>();

    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for k in 0..n {
        let fitted = intercept + columns.iter().zip(beta.iter()).map(|(&c, b)| z[[k, c]] * b).sum::<f64>();
        ss_res += w[k] * (y[k] - fitted).powi(2);
        ss_tot += w[k] * (y[k] - y_bar).powi(2);
    }
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(RidgeFit { intercept, coef, r2 })
}

/// Solves a symmetric positive (semi)definite system, falling back from
/// Cholesky to LU.
pub(crate) fn solve_spd(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>, ExplainError> {
    if a.nrows() == 0 {
        return Ok(b);
    }
    if let Some(chol) = a.clone().cholesky() {
        let x = chol.solve(&b);
        if x.iter().all(|v| v.is_finite()) {
            return Ok(x);
        }
    }
    a.lu()
        .solve(&b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| ExplainError::SingularFit("normal equations are rank-deficient".into()))
}
