use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sweep::{BenchmarkOutput, ComponentRecord, EvaluationRecord, Status};
use super::HarnessError;
use crate::metrics::{spearman_rho, Summary};

/// Per-explainer aggregate over a sweep. Means are taken over successful
/// attempts; percentiles are over their per-model mean cosine distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainerSummary {
    pub explainer: String,
    pub attempts: usize,
    pub ok: usize,
    pub success_rate: f64,
    pub cos_mean: Option<f64>,
    pub cos_p50: Option<f64>,
    pub cos_p95: Option<f64>,
    pub cos_p99: Option<f64>,
    pub euc_mean: Option<f64>,
    pub nrmse_mean: Option<f64>,
    pub maiou_mean: Option<f64>,
    pub acc_rmse_mean: Option<f64>,
    /// Rank correlation between per-model cosine distance and prediction
    /// RMSE; absent with fewer than two usable models or constant input.
    pub rho_perf: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Groups records by explainer, in order of first appearance.
pub fn summarize(records: &[EvaluationRecord]) -> Result<Vec<ExplainerSummary>, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::Invalid("no evaluation records to summarize".into()));
    }
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.contains(&r.explainer.as_str()) {
            order.push(&r.explainer);
        }
    }
    Ok(order
        .into_iter()
        .map(|tag| {
            let all: Vec<&EvaluationRecord> = records.iter().filter(|r| r.explainer == tag).collect();
            let ok: Vec<&EvaluationRecord> = all.iter().copied().filter(|r| r.status == Status::Ok).collect();
            let cos: Vec<f64> = ok.iter().filter_map(|r| r.cos_mean).collect();
            let spread = Summary::of(&cos);
            let (paired_cos, paired_acc): (Vec<f64>, Vec<f64>) = ok
                .iter()
                .filter_map(|r| Some((r.cos_mean?, r.acc_rmse?)))
                .unzip();
            let rho_perf = if paired_cos.len() >= 2 {
                spearman_rho(&paired_cos, &paired_acc).ok()
            } else {
                None
            };
            ExplainerSummary {
                explainer: tag.to_string(),
                attempts: all.len(),
                ok: ok.len(),
                success_rate: ok.len() as f64 / all.len() as f64,
                cos_mean: spread.map(|s| s.mean),
                cos_p50: spread.map(|s| s.p50),
                cos_p95: spread.map(|s| s.p95),
                cos_p99: spread.map(|s| s.p99),
                euc_mean: mean(ok.iter().filter_map(|r| r.euc_mean)),
                nrmse_mean: mean(ok.iter().filter_map(|r| r.nrmse_mean)),
                maiou_mean: mean(ok.iter().filter_map(|r| r.maiou)),
                acc_rmse_mean: mean(ok.iter().filter_map(|r| r.acc_rmse)),
                rho_perf,
            }
        })
        .collect())
}

fn write_rows<T: Serialize>(rows: &[T], writer: impl Write) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records_csv(records: &[EvaluationRecord], writer: impl Write) -> Result<(), HarnessError> {
    write_rows(records, writer)
}

pub fn write_components_csv(components: &[ComponentRecord], writer: impl Write) -> Result<(), HarnessError> {
    write_rows(components, writer)
}

pub fn write_summary_csv(summary: &[ExplainerSummary], writer: impl Write) -> Result<(), HarnessError> {
    write_rows(summary, writer)
}

pub fn read_records_csv(reader: impl Read) -> Result<Vec<EvaluationRecord>, HarnessError> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in r.deserialize().enumerate() {
        out.push(row.map_err(|e: csv::Error| HarnessError::Data {
            line: i + 2,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Writes `records.csv`, `components.csv`, `summary.csv` and
/// `manifest.json` into `dir`.
pub fn emit_report(output: &BenchmarkOutput, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    let create = |name: &str| -> Result<BufWriter<File>, HarnessError> { Ok(BufWriter::new(File::create(dir.join(name))?)) };
    write_records_csv(&output.records, create("records.csv")?)?;
    write_components_csv(&output.components, create("components.csv")?)?;
    write_summary_csv(&summarize(&output.records)?, create("summary.csv")?)?;
    let mut manifest = create("manifest.json")?;
    serde_json::to_writer_pretty(&mut manifest, &output.manifest)?;
    manifest.write_all(b"\n")?;
    manifest.flush()?;
    Ok(())
}
