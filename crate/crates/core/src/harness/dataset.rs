use std::io::{Read, Write};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HarnessError;

/// Number of rows sampled for `d` features: `ceil(500·√d)`.
pub fn dataset_size(d: usize) -> usize {
    (500.0 * (d as f64).sqrt()).ceil() as usize
}

/// `dataset_size(d)` rows of independent features, uniform on the open
/// interval (−1, 1).
pub fn sample_dataset(d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((dataset_size(d), d), || loop {
        let v: f64 = rng.random_range(-1.0..1.0);
        if v != -1.0 {
            break v;
        }
    })
}

/// CSV with a `x1,…,xd` header and one row per sample.
pub fn write_matrix_csv(data: &Array2<f64>, writer: impl Write) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record((1..=data.ncols()).map(|i| format!("x{i}")))?;
    for row in data.rows() {
        w.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(reader: impl Read) -> Result<Array2<f64>, HarnessError> {
    let mut r = csv::Reader::from_reader(reader);
    let d = r.headers()?.len();
    let mut flat = Vec::new();
    let mut n = 0;
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        for field in rec.iter() {
            let v: f64 = field.trim().parse().map_err(|_| HarnessError::Data {
                line: k + 2,
                message: format!("bad number `{field}`"),
            })?;
            flat.push(v);
        }
        n += 1;
    }
    Array2::from_shape_vec((n, d), flat).map_err(|e| HarnessError::Data {
        line: 0,
        message: e.to_string(),
    })
}
