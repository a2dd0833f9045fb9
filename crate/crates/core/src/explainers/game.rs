use ndarray::{Array2, ArrayView1, ArrayView2};

use super::{check_outputs, BlackBox, ExplainError};

/// Upper bound on rows sent to the black box in one query.
const MAX_BATCH_ROWS: usize = 1 << 18;

/// Interventional coalition game: `v(S)` is the mean black-box output over
/// background rows whose features in `S` are replaced by the instance's.
/// Coalitions are bitmasks with bit `i` standing for feature `i + 1`.
pub(crate) struct Game<'a> {
    bb: &'a dyn BlackBox,
    x: ArrayView1<'a, f64>,
    background: ArrayView2<'a, f64>,
}

impl<'a> Game<'a> {
    pub(crate) fn new(bb: &'a dyn BlackBox, x: ArrayView1<'a, f64>, background: ArrayView2<'a, f64>) -> Self {
        Self { bb, x, background }
    }

    pub(crate) fn values(&self, masks: &[u64]) -> Result<Vec<f64>, ExplainError> {
        let nb = self.background.nrows();
        let d = self.x.len();
        let per_batch = (MAX_BATCH_ROWS / nb).max(1);
        let mut out = Vec::with_capacity(masks.len());
        for chunk in masks.chunks(per_batch) {
            let mut rows = Array2::zeros((chunk.len() * nb, d));
            for (k, &mask) in chunk.iter().enumerate() {
                let mut block = rows.slice_mut(ndarray::s![k * nb..(k + 1) * nb, ..]);
                block.assign(&self.background);
                for i in (0..d).filter(|i| mask >> i & 1 == 1) {
                    block.column_mut(i).fill(self.x[i]);
                }
            }
            let preds = self.bb.predict(rows.view())?;
            check_outputs(&preds, rows.nrows())?;
            for k in 0..chunk.len() {
                let slice = preds.slice(ndarray::s![k * nb..(k + 1) * nb]);
                out.push(slice.sum() / nb as f64);
            }
        }
        Ok(out)
    }
}
