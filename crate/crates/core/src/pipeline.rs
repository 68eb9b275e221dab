//! End-to-end run: ingest, inject, featurize, train, score every batch and
//! write the report.
//!
//! Outputs are assembled in a staging directory and moved into place only
//! after every stage succeeded. On failure the staging directory becomes
//! `quarantine/` next to the outputs, with the error in `error.txt`, and any
//! earlier successful report stays untouched.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bias::{apply_plan, AuditEntry};
use crate::config::LoadedConfig;
use crate::drift::{
    drift_score, reconstruction_drift, train_autoencoder, AeConfig, DriftNormalizer, DriftReference, MetricSample,
    TrainedAutoencoder,
};
use crate::error::{Error, Result};
use crate::ingest::features::{protected_column, FeatureGroup, Featurizer};
use crate::ingest::{clean_normalize, load_records, partition_batches, Record};
use crate::report::{
    emit_plots, write_drift_csv, write_trust_csv, AutoencoderSummary, BatchSummary, DatasetInfo, DriftRow,
    ImportanceReport, ModelSummary, NormalizerSummary, RunReport, Versions, REPORT_FORMAT_VERSION,
};
use crate::reward::{batch_uncertainty, calibrate_temperature, train, train_split, RewardModel, MODEL_FORMAT_VERSION};
use crate::rng::{derive_seed, stage_seed, Stage};
use crate::trust::{
    accuracy, counterfactual_consistency, fairness_violation_rate, feature_importance, TrustComponents, TrustTimeline,
};

pub const STAGING_DIR: &str = ".staging";
pub const QUARANTINE_DIR: &str = "quarantine";
const SYNTHETIC_MARKER: &str = "# synthetic news corpus";

/// Overrides from the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    /// Print stage progress to stderr.
    pub verbose: bool,
}

#[derive(Debug, thiserror::Error)]
#[error("stage `{stage}` failed: {source}")]
pub struct PipelineError {
    pub stage: &'static str,
    #[source]
    pub source: Error,
    /// Where partial outputs were moved, if any.
    pub quarantine: Option<PathBuf>,
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        self.source.exit_code()
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub output_dir: PathBuf,
    pub timings: Vec<(String, f64)>,
}

/// Columns watched by the autoencoders: text plus subject and source codes
/// scaled into [0, 1]. Date and the protected bit are left out.
pub fn drift_view(featurizer: &Featurizer, row: &[f64]) -> Vec<f64> {
    let dim = featurizer.dim;
    let mut v = Vec::with_capacity(dim + 2);
    v.extend_from_slice(&row[..dim]);
    v.push(row[FeatureGroup::Subject.columns(dim).start] / (featurizer.subjects.len() + 1) as f64);
    v.push(row[FeatureGroup::Source.columns(dim).start] / (featurizer.sources.len() + 1) as f64);
    v
}

struct Stager {
    staging: PathBuf,
    verbose: bool,
    timings: Vec<(String, f64)>,
    clock: Instant,
}

impl Stager {
    fn stage<T>(&mut self, name: &'static str, f: impl FnOnce(&Path) -> Result<T>) -> Result<T, (&'static str, Error)> {
        if self.verbose {
            eprintln!("[{name}]");
        }
        let start = Instant::now();
        let out = f(&self.staging).map_err(|e| (name, e))?;
        self.timings.push((name.to_string(), start.elapsed().as_secs_f64()));
        Ok(out)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn rows_of(featurizer: &Featurizer, records: &[Record]) -> Vec<Vec<f64>> {
    records.iter().map(|r| featurizer.transform(r).to_row()).collect()
}

fn labels_of(records: &[Record]) -> Vec<u8> {
    records.iter().map(|r| r.label).collect()
}

fn ae_summary(t: &TrainedAutoencoder, reference_error: f64) -> AutoencoderSummary {
    AutoencoderSummary {
        variant: t.model.variant,
        input_dim: t.model.input_dim,
        epochs: t.epoch_loss.len(),
        first_epoch_loss: t.epoch_loss.first().copied().unwrap_or(f64::NAN),
        final_epoch_loss: t.epoch_loss.last().copied().unwrap_or(f64::NAN),
        reference_error,
    }
}

/// Train both autoencoders concurrently; each run is single-threaded and seeded.
fn train_pair(
    rows: &[Vec<f64>],
    plain: &AeConfig,
    attention: &AeConfig,
    seed: u64,
) -> Result<(TrainedAutoencoder, TrainedAutoencoder)> {
    std::thread::scope(|s| {
        let a = s.spawn(|| train_autoencoder(rows, plain, derive_seed(seed, 0)));
        let b = s.spawn(|| train_autoencoder(rows, attention, derive_seed(seed, 1)));
        let a = a.join().expect("autoencoder thread panicked")?;
        let b = b.join().expect("autoencoder thread panicked")?;
        Ok((a, b))
    })
}

struct BatchMetrics {
    accuracy: f64,
    sample: MetricSample,
    uncertainty: f64,
    fairness: f64,
    consistency: f64,
}

struct Scorers<'a> {
    featurizer: &'a Featurizer,
    model: &'a RewardModel,
    reference: &'a DriftReference,
    ae: &'a TrainedAutoencoder,
    ae_reference: f64,
    tae: &'a TrainedAutoencoder,
}

impl Scorers<'_> {
    fn measure(&self, records: &[Record]) -> Result<BatchMetrics> {
        let rows = rows_of(self.featurizer, records);
        let labels = labels_of(records);
        let view: Vec<Vec<f64>> = rows.iter().map(|r| drift_view(self.featurizer, r)).collect();
        let div = self.reference.divergences(&rows, &labels)?;
        let pcol = protected_column(self.featurizer.dim);
        Ok(BatchMetrics {
            accuracy: accuracy(self.model, &rows, &labels)?,
            sample: MetricSample {
                psi: div.psi,
                jsd: div.jsd,
                ae_delta: reconstruction_drift(&self.ae.model, &view, self.ae_reference)?,
                tae_loss: self.tae.model.batch_objective(&view)?,
            },
            uncertainty: batch_uncertainty(self.model, &rows)?,
            fairness: fairness_violation_rate(self.model, &rows, pcol)?,
            consistency: counterfactual_consistency(self.model, &rows, pcol)?,
        })
    }
}

fn file_sha256(path: &Path) -> Result<(String, bool)> {
    let bytes = fs::read(path).map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    let synthetic = bytes.starts_with(SYNTHETIC_MARKER.as_bytes());
    Ok((hex::encode(Sha256::digest(&bytes)), synthetic))
}

/// Execute every stage and write outputs into the output directory.
pub fn run_pipeline(loaded: &LoadedConfig, opts: &RunOptions) -> Result<RunOutcome, PipelineError> {
    let cfg = &loaded.config;
    let out_dir = opts
        .output_dir
        .clone()
        .unwrap_or_else(|| cfg.output_path(&loaded.base_dir));
    let fail_early = |source: Error| PipelineError {
        stage: "setup",
        source,
        quarantine: None,
    };
    cfg.validate(&loaded.base_dir).map_err(|source| PipelineError {
        stage: "config",
        source,
        quarantine: None,
    })?;
    fs::create_dir_all(&out_dir).map_err(|e| fail_early(e.into()))?;
    let staging = out_dir.join(STAGING_DIR);
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| fail_early(e.into()))?;
    }
    fs::create_dir_all(&staging).map_err(|e| fail_early(e.into()))?;

    let mut stager = Stager {
        staging: staging.clone(),
        verbose: opts.verbose,
        timings: Vec::new(),
        clock: Instant::now(),
    };
    match execute(loaded, opts, &mut stager) {
        Ok(report) => {
            let publish = (|| -> Result<()> {
                let total = stager.clock.elapsed().as_secs_f64();
                let mut timings: BTreeMap<String, f64> = stager.timings.iter().cloned().collect();
                timings.insert("total".into(), total);
                write_json(&staging.join("timings.json"), &timings)?;
                publish_staging(&staging, &out_dir)
            })();
            publish.map_err(|source| PipelineError {
                stage: "publish",
                source,
                quarantine: None,
            })?;
            Ok(RunOutcome {
                report,
                output_dir: out_dir,
                timings: stager.timings,
            })
        }
        Err((stage, source)) => {
            let quarantine = quarantine(&staging, &out_dir, stage, &source).ok();
            Err(PipelineError {
                stage,
                source,
                quarantine,
            })
        }
    }
}

fn publish_staging(staging: &Path, out_dir: &Path) -> Result<()> {
    for entry in fs::read_dir(staging)? {
        let entry = entry?;
        let target = out_dir.join(entry.file_name());
        if target.is_dir() {
            fs::remove_dir_all(&target)?;
        }
        fs::rename(entry.path(), &target)?;
    }
    fs::remove_dir_all(staging)?;
    Ok(())
}

fn quarantine(staging: &Path, out_dir: &Path, stage: &str, err: &Error) -> Result<PathBuf> {
    fs::write(staging.join("error.txt"), format!("stage: {stage}\nerror: {err}\n"))?;
    let q = out_dir.join(QUARANTINE_DIR);
    if q.exists() {
        fs::remove_dir_all(&q)?;
    }
    fs::rename(staging, &q)?;
    Ok(q)
}

fn execute(loaded: &LoadedConfig, opts: &RunOptions, st: &mut Stager) -> Result<RunReport, (&'static str, Error)> {
    let cfg = &loaded.config;
    let seed = opts.seed.unwrap_or(cfg.seed);
    let k = cfg.batching.k;
    let clean_prefix = cfg.batching.clean_prefix();
    let dim = cfg.features.dim;

    let (series, dataset) = st.stage("ingest", |_| {
        let input = cfg.input_path(&loaded.base_dir);
        let (sha256, synthetic) = file_sha256(&input)?;
        let set = clean_normalize(load_records(
            &input,
            &cfg.input.schema,
            stage_seed(seed, Stage::Ingest),
        )?);
        let dataset = DatasetInfo {
            file: input
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            sha256,
            synthetic,
            records: set.len(),
            dropped: set.dropped,
        };
        if set.len() < k * 2 {
            return Err(Error::data(format!(
                "{} records are too few for {k} batches",
                set.len()
            )));
        }
        let series = partition_batches(set.records, k)?.with_clean_prefix(clean_prefix)?;
        Ok((series, dataset))
    })?;

    let (series, audit) = st.stage("injection", |dir| {
        let plan = cfg.injection_plan(&loaded.base_dir)?;
        let (series, audit) = apply_plan(&series, &plan, stage_seed(seed, Stage::Injection))?;
        let mut lines = String::new();
        for entry in &audit {
            lines.push_str(&serde_json::to_string(entry)?);
            lines.push('\n');
        }
        fs::write(dir.join("audit.jsonl"), lines)?;
        Ok((series, audit))
    })?;
    let injected: Vec<bool> = {
        let plan = cfg.injection_plan(&loaded.base_dir).map_err(|e| ("injection", e))?;
        (0..k).map(|t| plan.target_batches.contains(&t)).collect()
    };

    let clean: Vec<Record> = series.clean_records().cloned().collect();
    let n_fit = train_split(clean.len(), cfg.model.train_fraction);
    let featurizer = st.stage("featurize", |_| {
        let all: Vec<Record> = series.batches.iter().flatten().cloned().collect();
        Featurizer::fit(&clean[..n_fit], &all, dim, cfg.features.hash_seed)
    })?;
    let clean_rows = rows_of(&featurizer, &clean);
    let clean_labels = labels_of(&clean);

    let (model, train_report) = st.stage("reward_model", |dir| {
        let (mut model, report) = train(&clean_rows, &clean_labels, &cfg.model)?;
        model = calibrate_temperature(&model, &clean_rows[n_fit..], &clean_labels[n_fit..])?;
        model.schema_hash = Some(featurizer.schema_hash());
        fs::write(dir.join("model.json"), model.to_json()?)?;
        write_json(&dir.join("featurizer.json"), &featurizer)?;
        Ok((model, report))
    })?;

    let view: Vec<Vec<f64>> = clean_rows.iter().map(|r| drift_view(&featurizer, r)).collect();
    let (ae, tae) = st.stage("autoencoders", |_| {
        train_pair(
            &view,
            &cfg.plain_autoencoder(),
            &cfg.attention_autoencoder(),
            stage_seed(seed, Stage::Autoencoder),
        )
    })?;
    let ae_reference = ae
        .model
        .mean_reconstruction_error(&view)
        .map_err(|e| ("autoencoders", e))?;
    let tae_reference = tae
        .model
        .mean_reconstruction_error(&view)
        .map_err(|e| ("autoencoders", e))?;

    let metrics = st.stage("metrics", |_| {
        let reference = DriftReference::fit(&clean_rows, &clean_labels, dim)?;
        let scorers = Scorers {
            featurizer: &featurizer,
            model: &model,
            reference: &reference,
            ae: &ae,
            ae_reference,
            tae: &tae,
        };
        std::thread::scope(|s| {
            let handles: Vec<_> = series
                .batches
                .iter()
                .map(|b| {
                    let scorers = &scorers;
                    s.spawn(move || scorers.measure(b))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("metric thread panicked"))
                .collect::<Result<Vec<_>>>()
        })
    })?;

    let (drift_rows, normalizer, timeline) = st.stage("trust", |_| {
        let clean_samples: Vec<MetricSample> = metrics[..clean_prefix].iter().map(|m| m.sample).collect();
        let mut normalizer = DriftNormalizer::fit(&clean_samples, &cfg.drift.floors, ae_reference)?;
        let mut drift_rows = Vec::with_capacity(k);
        let mut components = Vec::with_capacity(k);
        for (t, m) in metrics.iter().enumerate() {
            normalizer.observe(&m.sample)?;
            let d = drift_score(&m.sample, &normalizer, &cfg.drift.weights)?;
            drift_rows.push(DriftRow {
                batch: t + 1,
                psi: m.sample.psi,
                jsd: m.sample.jsd,
                ae_delta: m.sample.ae_delta,
                tae_loss: m.sample.tae_loss,
                drift_score: d,
            });
            components.push(TrustComponents {
                drift: d,
                uncertainty: m.uncertainty,
                fairness: m.fairness,
                error: (1.0 - m.accuracy).clamp(0.0, 1.0),
                consistency: m.consistency,
            });
        }
        let timeline = TrustTimeline::build(&components, &cfg.trust.weights, cfg.trust.lambda)?;
        Ok((drift_rows, normalizer, timeline))
    })?;

    let importance = st.stage("attribution", |_| {
        let all: Vec<Record> = series.batches.iter().flatten().cloned().collect();
        let rows = rows_of(&featurizer, &all);
        feature_importance(
            &model,
            &rows,
            &labels_of(&all),
            dim,
            stage_seed(seed, Stage::Attribution),
        )
    })?;

    st.stage("report", |dir| {
        let mut counts: Vec<BTreeMap<String, usize>> = vec![BTreeMap::new(); k];
        for AuditEntry { batch, mutation } in &audit {
            let kind = serde_json::to_value(mutation.kind)?
                .as_str()
                .unwrap_or("unknown")
                .to_string();
            *counts[batch - 1].entry(kind).or_default() += 1;
        }
        let batches = series
            .batches
            .iter()
            .enumerate()
            .map(|(t, b)| BatchSummary {
                batch: t + 1,
                records: b.len(),
                injected: injected[t],
                accuracy: metrics[t].accuracy,
                mutations: counts[t].clone(),
            })
            .collect();
        let report = RunReport {
            versions: Versions {
                fairtrust: env!("CARGO_PKG_VERSION").to_string(),
                report_format: REPORT_FORMAT_VERSION,
                model_format: MODEL_FORMAT_VERSION,
            },
            seed,
            dataset: dataset.clone(),
            k,
            clean_prefix,
            batches,
            drift: drift_rows.clone(),
            normalizer: NormalizerSummary {
                clean_min: normalizer.clean_min()?,
                clean_mean: normalizer.clean_mean()?,
                running_max: normalizer.running_max()?,
            },
            alerts: timeline.alerts(cfg.trust.alert_threshold),
            trust: timeline.clone(),
            alert_threshold: cfg.trust.alert_threshold,
            feature_importance: ImportanceReport {
                method: "permutation importance (SHAP proxy), 5 shuffles per group".into(),
                ranking: importance.clone(),
            },
            model: ModelSummary {
                trees: model.trees.len(),
                best_round: train_report.best_round,
                temperature: model.temperature,
                n_train: train_report.n_train,
                n_valid: train_report.n_valid,
                final_train_loss: train_report
                    .train_loss
                    .get(train_report.best_round)
                    .copied()
                    .unwrap_or(f64::NAN),
                best_valid_loss: train_report
                    .valid_loss
                    .get(train_report.best_round)
                    .copied()
                    .unwrap_or(f64::NAN),
                repeat_valid_loss: train_report.repeat_valid_loss.clone(),
                schema_hash: featurizer.schema_hash(),
            },
            autoencoders: vec![ae_summary(&ae, ae_reference), ae_summary(&tae, tae_reference)],
            config_echo: loaded.raw.clone(),
        };
        report.check()?;
        fs::write(dir.join("report.json"), report.to_json()?)?;
        write_trust_csv(&report, &dir.join("trust_timeline.csv"))?;
        write_drift_csv(&report, &dir.join("drift_report.csv"))?;
        emit_plots(&report, &dir.join("plots"))?;
        Ok(report)
    })
}
