//! Per-feature PSI/JSD against clean-prefix bins, and the normalized drift
//! score combining PSI, JSD, the AE reconstruction delta and the TAE loss.

use serde::{Deserialize, Serialize};

use super::histogram::{build_histogram, category_edges, jsd, psi, quantile_edges, Histogram, DEFAULT_BINS};
use crate::error::{Error, Result};
use crate::ingest::features::FeatureGroup;

/// Raw drift metrics for one batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub psi: f64,
    pub jsd: f64,
    pub ae_delta: f64,
    pub tae_loss: f64,
}

impl MetricSample {
    fn to_array(self) -> [f64; 4] {
        [self.psi, self.jsd, self.ae_delta, self.tae_loss]
    }

    fn from_array(a: [f64; 4]) -> Self {
        MetricSample {
            psi: a[0],
            jsd: a[1],
            ae_delta: a[2],
            tae_loss: a[3],
        }
    }
}

/// Relative weights of the four metrics inside the drift score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreWeights {
    pub psi: f64,
    pub jsd: f64,
    pub ae: f64,
    pub tae: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights {
            psi: 0.25,
            jsd: 0.25,
            ae: 0.25,
            tae: 0.25,
        }
    }
}

impl ScoreWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.psi, self.jsd, self.ae, self.tae];
        if w.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::config(format!("drift weights {w:?} must lie in [0, 1]")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("drift weights sum to {sum}, expected 1")));
        }
        Ok(())
    }

    fn to_array(self) -> [f64; 4] {
        [self.psi, self.jsd, self.ae, self.tae]
    }
}

/// Smallest span used when min-max scaling each metric.
///
/// A metric whose clean-prefix spread is pure sampling noise would otherwise
/// be stretched to the full unit interval by its first noisy batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreFloors {
    pub psi: f64,
    pub jsd: f64,
    /// Fraction of the clean reference reconstruction error.
    pub ae_relative: f64,
    /// Fraction of the clean mean TAE loss.
    pub tae_relative: f64,
}

impl Default for ScoreFloors {
    fn default() -> Self {
        ScoreFloors {
            psi: 0.1,
            jsd: 0.02,
            ae_relative: 0.1,
            tae_relative: 0.1,
        }
    }
}

impl ScoreFloors {
    pub fn zero() -> Self {
        ScoreFloors {
            psi: 0.0,
            jsd: 0.0,
            ae_relative: 0.0,
            tae_relative: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = [self.psi, self.jsd, self.ae_relative, self.tae_relative];
        if f.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::config(format!(
                "drift score floors {f:?} must be finite and >= 0"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NormalizerState {
    clean_min: [f64; 4],
    clean_mean: [f64; 4],
    running_max: [f64; 4],
    span_floor: [f64; 4],
}

/// Min-max scaler anchored on the clean prefix with a running maximum.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DriftNormalizer {
    state: Option<NormalizerState>,
}

impl DriftNormalizer {
    /// Not yet fitted; [`drift_score`] rejects it.
    pub fn uninitialized() -> Self {
        DriftNormalizer { state: None }
    }

    /// Fit on clean-prefix metrics. `ae_reference` is the autoencoder's
    /// training reconstruction error, which sets the scale of its floor.
    pub fn fit(clean: &[MetricSample], floors: &ScoreFloors, ae_reference: f64) -> Result<Self> {
        floors.validate()?;
        if clean.is_empty() {
            return Err(Error::invalid("drift normalizer needs at least one clean batch"));
        }
        if clean.iter().any(|s| s.to_array().iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid("non-finite drift metric in the clean prefix"));
        }
        let mut min = [f64::INFINITY; 4];
        let mut max = [f64::NEG_INFINITY; 4];
        let mut mean = [0.0; 4];
        for s in clean {
            for (i, v) in s.to_array().into_iter().enumerate() {
                min[i] = min[i].min(v);
                max[i] = max[i].max(v);
                mean[i] += v / clean.len() as f64;
            }
        }
        let span_floor = [
            floors.psi,
            floors.jsd,
            floors.ae_relative * ae_reference.abs(),
            floors.tae_relative * mean[3].abs(),
        ];
        Ok(DriftNormalizer {
            state: Some(NormalizerState {
                clean_min: min,
                clean_mean: mean,
                running_max: max,
                span_floor,
            }),
        })
    }

    pub fn is_initialized(&self) -> bool {
        self.state.is_some()
    }

    fn state(&self) -> Result<&NormalizerState> {
        self.state
            .as_ref()
            .ok_or_else(|| Error::invalid("drift normalizer has not been fitted"))
    }

    pub fn clean_min(&self) -> Result<MetricSample> {
        Ok(MetricSample::from_array(self.state()?.clean_min))
    }

    pub fn clean_mean(&self) -> Result<MetricSample> {
        Ok(MetricSample::from_array(self.state()?.clean_mean))
    }

    pub fn running_max(&self) -> Result<MetricSample> {
        Ok(MetricSample::from_array(self.state()?.running_max))
    }

    /// Extend the running maxima with a new batch.
    pub fn observe(&mut self, sample: &MetricSample) -> Result<()> {
        let st = self
            .state
            .as_mut()
            .ok_or_else(|| Error::invalid("drift normalizer has not been fitted"))?;
        for (m, v) in st.running_max.iter_mut().zip(sample.to_array()) {
            if v.is_finite() {
                *m = m.max(v);
            }
        }
        Ok(())
    }

    /// Each metric scaled to [0, 1].
    pub fn scaled(&self, sample: &MetricSample) -> Result<MetricSample> {
        let st = self.state()?;
        let raw = sample.to_array();
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite drift metric {sample:?}")));
        }
        let mut out = [0.0; 4];
        for i in 0..4 {
            let span = (st.running_max[i] - st.clean_min[i]).max(st.span_floor[i]);
            let x = raw[i] - st.clean_min[i];
            out[i] = if span > 0.0 {
                (x / span).clamp(0.0, 1.0)
            } else if x > 0.0 {
                1.0
            } else {
                0.0
            };
        }
        Ok(MetricSample::from_array(out))
    }
}

/// Weighted mean of the scaled metrics, clamped to [0, 1].
pub fn drift_score(sample: &MetricSample, normalizer: &DriftNormalizer, weights: &ScoreWeights) -> Result<f64> {
    weights.validate()?;
    let scaled = normalizer.scaled(sample)?.to_array();
    let d: f64 = scaled.iter().zip(weights.to_array()).map(|(s, w)| s * w).sum();
    Ok(d.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FeatureReference {
    column: usize,
    edges: Vec<f64>,
    expected: Histogram,
}

/// Clean-prefix histograms for every monitored variable.
///
/// Text columns contribute the mean of their per-column divergences, so the
/// text block, subject, source and label weigh equally in the average.
/// Protected and date columns are not monitored: the former is synthetic
/// and the latter drifts by construction of temporal batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReference {
    text: Vec<FeatureReference>,
    subject: FeatureReference,
    source: FeatureReference,
    label_edges: Vec<f64>,
    label_expected: Histogram,
    row_len: usize,
}

/// PSI and JSD of one batch, before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Divergences {
    pub psi: f64,
    pub jsd: f64,
}

fn labels_as_f64(labels: &[u8]) -> Vec<f64> {
    labels.iter().map(|&l| f64::from(l)).collect()
}

fn column<R: AsRef<[f64]>>(rows: &[R], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r.as_ref()[j]).collect()
}

impl DriftReference {
    /// `rows` use the featurizer layout with `dim` text columns.
    pub fn fit<R: AsRef<[f64]>>(rows: &[R], labels: &[u8], dim: usize) -> Result<Self> {
        if rows.is_empty() || rows.len() != labels.len() {
            return Err(Error::invalid("drift reference needs equally many rows and labels"));
        }
        let row_len = rows[0].as_ref().len();
        if row_len < dim + 2 || rows.iter().any(|r| r.as_ref().len() != row_len) {
            return Err(Error::invalid("inconsistent feature rows for the drift reference"));
        }
        let reference = |j: usize, categorical: bool| -> Result<FeatureReference> {
            let values = column(rows, j);
            let edges = if categorical {
                category_edges(&values)?
            } else {
                quantile_edges(&values, DEFAULT_BINS)?
            };
            let expected = build_histogram(&values, Some(&edges))?;
            Ok(FeatureReference {
                column: j,
                edges,
                expected,
            })
        };
        let text = (0..dim).map(|j| reference(j, false)).collect::<Result<Vec<_>>>()?;
        let subject = reference(FeatureGroup::Subject.columns(dim).start, true)?;
        let source = reference(FeatureGroup::Source.columns(dim).start, true)?;
        let label_values = labels_as_f64(labels);
        let label_edges = category_edges(&label_values)?;
        let label_expected = build_histogram(&label_values, Some(&label_edges))?;
        Ok(DriftReference {
            text,
            subject,
            source,
            label_edges,
            label_expected,
            row_len,
        })
    }

    pub fn divergences<R: AsRef<[f64]>>(&self, rows: &[R], labels: &[u8]) -> Result<Divergences> {
        if rows.is_empty() || rows.len() != labels.len() {
            return Err(Error::invalid("batch needs equally many rows and labels"));
        }
        if rows.iter().any(|r| r.as_ref().len() != self.row_len) {
            return Err(Error::invalid("batch rows do not match the reference layout"));
        }
        let one = |f: &FeatureReference| -> Result<(f64, f64)> {
            let actual = build_histogram(&column(rows, f.column), Some(&f.edges))?;
            Ok((psi(&f.expected, &actual)?, jsd(&f.expected, &actual)?))
        };
        let mut text = (0.0, 0.0);
        for f in &self.text {
            let (p, j) = one(f)?;
            text.0 += p;
            text.1 += j;
        }
        let n_text = self.text.len().max(1) as f64;
        let text = (text.0 / n_text, text.1 / n_text);
        let subject = one(&self.subject)?;
        let source = one(&self.source)?;
        let actual = build_histogram(&labels_as_f64(labels), Some(&self.label_edges))?;
        let label = (psi(&self.label_expected, &actual)?, jsd(&self.label_expected, &actual)?);
        let parts = [text, subject, source, label];
        Ok(Divergences {
            psi: parts.iter().map(|p| p.0).sum::<f64>() / 4.0,
            jsd: parts.iter().map(|p| p.1).sum::<f64>() / 4.0,
        })
    }
}
