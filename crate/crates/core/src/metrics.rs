//! Error metrics between reconciled true and explained contributions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::ReconciledPair;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
}

fn same_length(a: &[f64], b: &[f64]) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    Ok(())
}

/// `1 − cos(a, b)`, in `[0, 2]`. One zero vector gives 1 and two zero
/// vectors give 0.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    same_length(a, b)?;
    let na: f64 = a.iter().map(|v| v * v).sum();
    let nb: f64 = b.iter().map(|v| v * v).sum();
    Ok(match (na == 0.0, nb == 0.0) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        (false, false) => {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            (1.0 - dot / (na * nb).sqrt()).clamp(0.0, 2.0)
        }
    })
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    same_length(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

pub fn rmse(truth: &[f64], est: &[f64]) -> Result<f64, MetricError> {
    same_length(truth, est)?;
    if truth.is_empty() {
        return Err(MetricError::Empty);
    }
    let mse = truth.iter().zip(est).map(|(t, e)| (t - e) * (t - e)).sum::<f64>() / truth.len() as f64;
    Ok(mse.sqrt())
}

/// Quantile by linear interpolation between order statistics (type 7).
/// `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(quantile_sorted(&sorted, q))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    Iqr,
    Range,
    /// Both the IQR and the range of the truth vanish; the value is the
    /// raw RMSE.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nrmse {
    pub value: f64,
    pub normalization: Normalization,
}

const DEGENERATE_SPREAD: f64 = 1e-12;

/// RMSE divided by the interquartile range of `truth`, falling back to its
/// range and then to no normalization when the spread vanishes.
pub fn nrmse(truth: &[f64], est: &[f64]) -> Result<Nrmse, MetricError> {
    let raw = rmse(truth, est)?;
    let mut sorted = truth.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let range = sorted[sorted.len() - 1] - sorted[0];
    Ok(if iqr >= DEGENERATE_SPREAD {
        Nrmse {
            value: raw / iqr,
            normalization: Normalization::Iqr,
        }
    } else if range >= DEGENERATE_SPREAD {
        Nrmse {
            value: raw / range,
            normalization: Normalization::Range,
        }
    } else {
        Nrmse {
            value: raw,
            normalization: Normalization::None,
        }
    })
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    same_length(a, b)?;
    if a.len() < 2 {
        return Err(MetricError::DegenerateInput("fewer than two observations"));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(MetricError::DegenerateInput("constant input"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation: Pearson correlation of average ranks.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    same_length(a, b)?;
    pearson(&average_ranks(a), &average_ranks(b))
}

/// RMSE between an explainer's implied predictions (base value plus
/// contributions) and the black-box outputs.
pub fn explainer_accuracy(implied: &[f64], outputs: &[f64]) -> Result<f64, MetricError> {
    rmse(outputs, implied)
}

/// Distances for one sample, over the vector of components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleScore {
    pub sample: usize,
    pub cosine: f64,
    pub euclidean: f64,
}

/// Error of one matched component across samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectScore {
    pub component: usize,
    pub nrmse: Nrmse,
    pub mean_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairScores {
    pub samples: Vec<SampleScore>,
    pub effects: Vec<EffectScore>,
}

/// Per-sample distances over the stacked component vector and per-component
/// NRMSE.
pub fn score_pairs(pairs: &[ReconciledPair]) -> Result<PairScores, MetricError> {
    let Some(first) = pairs.first() else {
        return Err(MetricError::Empty);
    };
    let n = first.truth.len();
    if let Some(p) = pairs.iter().find(|p| p.truth.len() != n || p.explained.len() != n) {
        return Err(MetricError::LengthMismatch(n, p.truth.len().max(p.explained.len())));
    }
    let mut samples = Vec::with_capacity(n);
    let mut t = vec![0.0; pairs.len()];
    let mut e = vec![0.0; pairs.len()];
    for k in 0..n {
        for (c, p) in pairs.iter().enumerate() {
            t[c] = p.truth[k];
            e[c] = p.explained[k];
        }
        samples.push(SampleScore {
            sample: k,
            cosine: cosine_distance(&t, &e)?,
            euclidean: euclidean_distance(&t, &e)?,
        });
    }
    let effects = pairs
        .iter()
        .map(|p| {
            let truth = p.truth.as_slice().expect("contiguous");
            let est = p.explained.as_slice().expect("contiguous");
            Ok(EffectScore {
                component: p.component,
                nrmse: nrmse(truth, est)?,
                mean_abs_error: truth.iter().zip(est).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64,
            })
        })
        .collect::<Result<_, MetricError>>()?;
    Ok(PairScores { samples, effects })
}

/// Mean and 50/95/99th percentiles of a sample of distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            p50: quantile_sorted(&sorted, 0.50),
            p95: quantile_sorted(&sorted, 0.95),
            p99: quantile_sorted(&sorted, 0.99),
        })
    }
}
