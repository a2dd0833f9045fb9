use ndarray::{s, Array2, ArrayView1, ArrayView2};

use super::{check_background, check_instance, check_outputs, BlackBox, ExplainError, Explanation};

/// Partial-dependence attribution: feature `i` gets the mean output over
/// the background with column `i` pinned to `x_i`, minus the mean
/// background output. The base value is that background mean.
pub fn pdp_explain(
    bb: &dyn BlackBox,
    x: ArrayView1<'_, f64>,
    background: ArrayView2<'_, f64>,
) -> Result<Explanation, ExplainError> {
    let d = check_instance(bb, x)?;
    check_background(d, background)?;
    let nb = background.nrows();

    let mut rows = Array2::zeros(((d + 1) * nb, d));
    for block in 0..=d {
        let mut view = rows.slice_mut(s![block * nb..(block + 1) * nb, ..]);
        view.assign(&background);
        if block > 0 {
            view.column_mut(block - 1).fill(x[block - 1]);
        }
    }
    let preds = bb.predict(rows.view())?;
    check_outputs(&preds, rows.nrows())?;
    let block_mean = |b: usize| preds.slice(s![b * nb..(b + 1) * nb]).sum() / nb as f64;

    let base = block_mean(0);
    let contributions = (1..=d).map(|b| block_mean(b) - base).collect();
    Ok(Explanation::singletons("pdp", contributions, base))
}
