//! Boosted-tree reward classifier with temperature calibration and
//! margin-based uncertainty.

pub mod boost;
pub mod calibration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use boost::{train, train_split, BoostConfig, Node, TrainReport, Tree};
pub use calibration::{calibrate_temperature, fit_temperature};

pub const MODEL_FORMAT_VERSION: u32 = 1;

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Class probabilities `[p(fake), p(true)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbOutput {
    pub probs: [f64; 2],
}

impl ProbOutput {
    pub fn from_positive(p: f64) -> Self {
        ProbOutput { probs: [1.0 - p, p] }
    }

    pub fn positive(&self) -> f64 {
        self.probs[1]
    }

    /// Index of the largest probability; ties go to class 0.
    pub fn argmax(&self) -> u8 {
        u8::from(self.probs[1] > self.probs[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    pub trees: Vec<Tree>,
    pub learning_rate: f64,
    /// 1.0 means uncalibrated.
    pub temperature: f64,
    pub n_features: usize,
    /// Hash of the featurizer the model was trained against.
    pub schema_hash: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    #[serde(flatten)]
    model: RewardModel,
}

impl RewardModel {
    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::invalid(format!(
                "feature row has {} columns, model expects {}",
                x.len(),
                self.n_features
            )));
        }
        Ok(())
    }

    /// Ensemble logit before temperature scaling.
    pub fn raw_logit(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.trees.iter().map(|t| self.learning_rate * t.predict(x)).sum())
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<ProbOutput> {
        let z = self.raw_logit(x)?;
        Ok(ProbOutput::from_positive(logistic(z / self.temperature)))
    }

    /// Hard prediction from the logit sign, so it cannot depend on temperature.
    pub fn predict_class(&self, x: &[f64]) -> Result<u8> {
        Ok(u8::from(self.raw_logit(x)? > 0.0))
    }

    pub fn with_temperature(mut self, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::invalid(format!("temperature {temperature} must be > 0")));
        }
        self.temperature = temperature;
        Ok(self)
    }

    /// Features used by at least one split.
    pub fn used_features(&self) -> std::collections::BTreeSet<usize> {
        self.trees.iter().flat_map(Tree::split_features).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        })?)
    }

    /// Load a model, rejecting unknown versions and schema mismatches.
    pub fn from_json(text: &str, expected_schema_hash: Option<&str>) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::data(format!(
                "model format version {} is not supported",
                file.format_version
            )));
        }
        if let Some(expected) = expected_schema_hash {
            if file.model.schema_hash.as_deref() != Some(expected) {
                return Err(Error::data(format!(
                    "model schema hash {:?} does not match featurizer {expected}",
                    file.model.schema_hash
                )));
            }
        }
        if !(file.model.temperature > 0.0) {
            return Err(Error::data("model temperature must be > 0"));
        }
        Ok(file.model)
    }
}

/// `1 - (p_max - p_second)`; 0 when fully confident, 1 at a tie.
pub fn uncertainty_margin(probs: &[f64]) -> f64 {
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &p in probs {
        if p > first {
            second = first;
            first = p;
        } else if p > second {
            second = p;
        }
    }
    if second == f64::NEG_INFINITY {
        return 0.0;
    }
    (1.0 - (first - second)).clamp(0.0, 1.0)
}

/// Mean uncertainty margin over a batch of model rows.
pub fn batch_uncertainty<R: AsRef<[f64]>>(model: &RewardModel, batch: &[R]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("uncertainty of an empty batch"));
    }
    let mut sum = 0.0;
    for x in batch {
        sum += uncertainty_margin(&model.predict_proba(x.as_ref())?.probs);
    }
    Ok(sum / batch.len() as f64)
}
