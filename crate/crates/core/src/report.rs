//! Run report types, CSV tables and plot-ready data.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::drift::{MetricSample, Variant};
use crate::error::{Error, Result};
use crate::ingest::DropCounts;
use crate::trust::{Importance, TrustTimeline};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub fairtrust: String,
    pub report_format: u32,
    pub model_format: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    /// File name only, so reports do not depend on where the data lives.
    pub file: String,
    pub sha256: String,
    /// Generated by the bundled synthetic generator, not a real corpus.
    pub synthetic: bool,
    pub records: usize,
    pub dropped: DropCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    /// 1-based.
    pub batch: usize,
    pub records: usize,
    pub injected: bool,
    pub accuracy: f64,
    /// Mutation counts by injection kind.
    pub mutations: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub batch: usize,
    pub psi: f64,
    pub jsd: f64,
    pub ae_delta: f64,
    pub tae_loss: f64,
    pub drift_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub trees: usize,
    pub best_round: usize,
    pub temperature: f64,
    pub n_train: usize,
    pub n_valid: usize,
    pub final_train_loss: f64,
    pub best_valid_loss: f64,
    pub repeat_valid_loss: Vec<f64>,
    pub schema_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderSummary {
    pub variant: Variant,
    pub input_dim: usize,
    pub epochs: usize,
    pub first_epoch_loss: f64,
    pub final_epoch_loss: f64,
    /// Mean reconstruction error on the clean prefix.
    pub reference_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizerSummary {
    pub clean_min: MetricSample,
    pub clean_mean: MetricSample,
    pub running_max: MetricSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub method: String,
    pub ranking: Vec<Importance>,
}

/// Everything a run produces, minus wall-clock timings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub versions: Versions,
    pub seed: u64,
    pub dataset: DatasetInfo,
    pub k: usize,
    pub clean_prefix: usize,
    pub batches: Vec<BatchSummary>,
    pub drift: Vec<DriftRow>,
    pub normalizer: NormalizerSummary,
    pub trust: TrustTimeline,
    pub alert_threshold: f64,
    pub alerts: Vec<usize>,
    pub feature_importance: ImportanceReport,
    pub model: ModelSummary,
    pub autoencoders: Vec<AutoencoderSummary>,
    /// The configuration file exactly as read.
    pub config_echo: String,
}

impl RunReport {
    /// Batch numbering is 1..=k in every table and all trust values lie in [0, 1].
    pub fn check(&self) -> Result<()> {
        let expected: Vec<usize> = (1..=self.k).collect();
        let tables = [
            ("batches", self.batches.iter().map(|b| b.batch).collect::<Vec<_>>()),
            ("drift", self.drift.iter().map(|d| d.batch).collect()),
            ("trust", self.trust.rows.iter().map(|r| r.batch).collect()),
        ];
        for (name, got) in tables {
            if got != expected {
                return Err(Error::invalid(format!(
                    "{name} table has batches {got:?}, expected 1..={}",
                    self.k
                )));
            }
        }
        self.trust.check_ranges()?;
        if self.drift.iter().any(|d| !(0.0..=1.0).contains(&d.drift_score)) {
            return Err(Error::Divergence("drift score outside [0, 1]".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: RunReport = serde_json::from_str(text).map_err(|e| Error::data(format!("unreadable report: {e}")))?;
        if r.versions.report_format != REPORT_FORMAT_VERSION {
            return Err(Error::data(format!(
                "report format {} is not supported (expected {REPORT_FORMAT_VERSION})",
                r.versions.report_format
            )));
        }
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::data(format!("cannot read report {}: {e}", path.display())))?;
        RunReport::from_json(&text)
    }
}

#[derive(Serialize)]
struct TrustCsvRow {
    batch: usize,
    drift: f64,
    uncertainty: f64,
    fairness: f64,
    error: f64,
    consistency: f64,
    trust: f64,
    smoothed: f64,
    alert: bool,
}

pub fn write_trust_csv(report: &RunReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in &report.trust.rows {
        let c = &r.components;
        w.serialize(TrustCsvRow {
            batch: r.batch,
            drift: c.drift,
            uncertainty: c.uncertainty,
            fairness: c.fairness,
            error: c.error,
            consistency: c.consistency,
            trust: r.trust,
            smoothed: r.smoothed,
            alert: report.alerts.contains(&r.batch),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_drift_csv(report: &RunReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in &report.drift {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Pearson correlation matrix of the columns; a constant column correlates
/// 0 with everything else and 1 with itself.
pub fn correlation_matrix(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = columns.len();
    let centered: Vec<(Vec<f64>, f64)> = columns
        .iter()
        .map(|c| {
            let mean = c.iter().sum::<f64>() / c.len().max(1) as f64;
            let d: Vec<f64> = c.iter().map(|v| v - mean).collect();
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            (d, norm)
        })
        .collect();
    let mut out = vec![vec![0.0; m]; m];
    for i in 0..m {
        out[i][i] = 1.0;
        for j in i + 1..m {
            let (a, na) = &centered[i];
            let (b, nb) = &centered[j];
            let r = if *na > 0.0 && *nb > 0.0 {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                (dot / (na * nb)).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            out[i][j] = r;
            out[j][i] = r;
        }
    }
    out
}

pub const CORRELATION_VARIABLES: [&str; 8] = [
    "psi",
    "jsd",
    "ae_delta",
    "uncertainty",
    "fairness",
    "consistency",
    "error",
    "trust",
];

/// Columns of the correlation plot, in [`CORRELATION_VARIABLES`] order.
pub fn correlation_columns(report: &RunReport) -> Vec<Vec<f64>> {
    let d = &report.drift;
    let t = &report.trust.rows;
    vec![
        d.iter().map(|r| r.psi).collect(),
        d.iter().map(|r| r.jsd).collect(),
        d.iter().map(|r| r.ae_delta).collect(),
        t.iter().map(|r| r.components.uncertainty).collect(),
        t.iter().map(|r| r.components.fairness).collect(),
        t.iter().map(|r| r.components.consistency).collect(),
        t.iter().map(|r| r.components.error).collect(),
        t.iter().map(|r| r.trust).collect(),
    ]
}

/// Write the four plot tables under `dir`: drift score against error rate,
/// smoothed trust, feature importances and the metric correlation matrix.
pub fn emit_plots(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let paths = [
        dir.join("drift_vs_error.csv"),
        dir.join("trust.csv"),
        dir.join("feature_importance.csv"),
        dir.join("correlation.csv"),
    ];

    let mut w = csv::Writer::from_path(&paths[0])?;
    w.write_record(["batch", "drift_score", "error_rate"])?;
    for (d, t) in report.drift.iter().zip(&report.trust.rows) {
        w.write_record([
            d.batch.to_string(),
            d.drift_score.to_string(),
            t.components.error.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(&paths[1])?;
    w.write_record(["batch", "trust", "smoothed_trust"])?;
    for r in &report.trust.rows {
        w.write_record([r.batch.to_string(), r.trust.to_string(), r.smoothed.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(&paths[2])?;
    w.write_record(["group", "importance"])?;
    for imp in &report.feature_importance.ranking {
        w.write_record([imp.group.name().to_string(), imp.importance.to_string()])?;
    }
    w.flush()?;

    let corr = correlation_matrix(&correlation_columns(report));
    let mut w = csv::Writer::from_path(&paths[3])?;
    let mut header = vec![String::from("variable")];
    header.extend(CORRELATION_VARIABLES.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for (name, row) in CORRELATION_VARIABLES.iter().zip(&corr) {
        let mut rec = vec![name.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(paths.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correlation_basics() {
        let cols = vec![
            vec![1.0, 2.0, 3.0],
            vec![2.0, 4.0, 6.0],
            vec![3.0, 2.0, 1.0],
            vec![5.0, 5.0, 5.0],
        ];
        let c = correlation_matrix(&cols);
        assert!((c[0][1] - 1.0).abs() < 1e-12);
        assert!((c[0][2] + 1.0).abs() < 1e-12);
        assert_eq!(c[0][3], 0.0);
        for (i, row) in c.iter().enumerate() {
            assert_eq!(row[i], 1.0);
            for (j, v) in row.iter().enumerate() {
                assert_eq!(*v, c[j][i]);
            }
        }
    }
}
