//! Run configuration: a TOML file validated in full before any work starts.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bias::{Framing, InjectionPlan, Lexicon, SubjectSkew};
use crate::drift::{AeConfig, ScoreFloors, ScoreWeights};
use crate::error::{Error, Result};
use crate::ingest::features::{DEFAULT_DIM, DEFAULT_HASH_SEED, MIN_DIM};
use crate::ingest::Schema;
use crate::reward::BoostConfig;
use crate::trust::{TrustWeights, DEFAULT_ALERT_THRESHOLD, DEFAULT_LAMBDA};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    /// CSV or JSON-lines file; relative paths resolve against the config file.
    pub path: PathBuf,
    #[serde(default)]
    pub schema: Schema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchingConfig {
    pub k: usize,
    /// Defaults to `k / 2`.
    pub clean_prefix: Option<usize>,
}

impl Default for BatchingConfig {
    fn default() -> Self {
        BatchingConfig {
            k: 10,
            clean_prefix: None,
        }
    }
}

impl BatchingConfig {
    pub fn clean_prefix(&self) -> usize {
        self.clean_prefix.unwrap_or(self.k / 2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FramingConfig {
    pub rate: f64,
    /// Custom lexicon file; the bundled one when absent.
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InjectionConfig {
    /// 1-based batch numbers.
    pub batches: Vec<usize>,
    pub subject_skew: Option<SubjectSkew>,
    pub framing: Option<FramingConfig>,
    /// Target positive-label rate, one per batch or a single value.
    pub label_drift: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub dim: usize,
    pub hash_seed: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            dim: DEFAULT_DIM,
            hash_seed: DEFAULT_HASH_SEED,
        }
    }
}

/// Autoencoder settings; unset fields keep the variant's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeSection {
    pub bottleneck_dim: Option<usize>,
    pub noise_std: Option<f64>,
    pub dropout: Option<f64>,
    pub epochs: Option<usize>,
    pub step_size: Option<f64>,
    pub batch_size: Option<usize>,
    pub eta: Option<f64>,
    pub chunk: Option<usize>,
}

impl AeSection {
    pub fn apply(&self, base: AeConfig) -> AeConfig {
        AeConfig {
            variant: base.variant,
            bottleneck_dim: self.bottleneck_dim.unwrap_or(base.bottleneck_dim),
            noise_std: self.noise_std.unwrap_or(base.noise_std),
            dropout: self.dropout.unwrap_or(base.dropout),
            epochs: self.epochs.unwrap_or(base.epochs),
            step_size: self.step_size.unwrap_or(base.step_size),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            eta: self.eta.unwrap_or(base.eta),
            chunk: self.chunk.unwrap_or(base.chunk),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftConfig {
    pub weights: ScoreWeights,
    pub floors: ScoreFloors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrustConfig {
    pub weights: TrustWeights,
    pub lambda: f64,
    pub alert_threshold: f64,
}

impl Default for TrustConfig {
    fn default() -> Self {
        TrustConfig {
            weights: TrustWeights::default(),
            lambda: DEFAULT_LAMBDA,
            alert_threshold: DEFAULT_ALERT_THRESHOLD,
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("fairtrust-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub input: InputConfig,
    #[serde(default)]
    pub batching: BatchingConfig,
    #[serde(default)]
    pub injection: InjectionConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub model: BoostConfig,
    #[serde(default)]
    pub autoencoder: AeSection,
    #[serde(default)]
    pub transformer: AeSection,
    #[serde(default)]
    pub drift: DriftConfig,
    #[serde(default)]
    pub trust: TrustConfig,
}

/// A parsed configuration together with the exact text it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub raw: String,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("invalid configuration: {e}")))
    }

    pub fn plain_autoencoder(&self) -> AeConfig {
        self.autoencoder.apply(AeConfig::plain())
    }

    pub fn attention_autoencoder(&self) -> AeConfig {
        self.transformer.apply(AeConfig::attention())
    }

    /// Lexicon and target batches resolved into an executable plan.
    pub fn injection_plan(&self, base_dir: &Path) -> Result<InjectionPlan> {
        let inj = &self.injection;
        let framing = match &inj.framing {
            None => None,
            Some(f) => {
                let lexicon = match &f.lexicon {
                    None => Lexicon::default(),
                    Some(p) => Lexicon::load(&resolve(base_dir, p))
                        .map_err(|e| Error::config(format!("framing lexicon: {e}")))?,
                };
                Some(Framing { lexicon, rate: f.rate })
            }
        };
        Ok(InjectionPlan {
            target_batches: inj.batches.iter().map(|b| b.saturating_sub(1)).collect(),
            subject_skew: inj.subject_skew.clone(),
            framing,
            label_drift: inj.label_drift.clone(),
        })
    }

    /// Check every field against its invariants; also checks referenced
    /// files exist.
    pub fn validate(&self, base_dir: &Path) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        self.input.schema.validate()?;
        let input = resolve(base_dir, &self.input.path);
        if !input.is_file() {
            return bad(format!("input file {} does not exist", input.display()));
        }
        let k = self.batching.k;
        let prefix = self.batching.clean_prefix();
        if k < 2 {
            return bad(format!("need at least 2 batches, got k = {k}"));
        }
        if prefix == 0 || prefix > k {
            return bad(format!("clean prefix {prefix} outside [1, {k}]"));
        }
        let inj = &self.injection;
        if inj.batches.contains(&0) {
            return bad("injection batches are numbered from 1".into());
        }
        if inj.batches.iter().collect::<BTreeSet<_>>().len() != inj.batches.len() {
            return bad("injection batches contain duplicates".into());
        }
        let any_kind = inj.subject_skew.is_some() || inj.framing.is_some() || inj.label_drift.is_some();
        if inj.batches.is_empty() && any_kind {
            return bad("injection kinds given but no target batches".into());
        }
        self.injection_plan(base_dir)?.validate(k, prefix)?;
        if self.features.dim < MIN_DIM {
            return bad(format!("feature dim {} below {MIN_DIM}", self.features.dim));
        }
        self.model.validate()?;
        for ae in [self.plain_autoencoder(), self.attention_autoencoder()] {
            ae.validate()?;
            if ae.bottleneck_dim >= self.features.dim + 4 {
                return bad(format!(
                    "autoencoder bottleneck {} must be below the row width {}",
                    ae.bottleneck_dim,
                    self.features.dim + 4
                ));
            }
        }
        self.drift.weights.validate()?;
        self.drift.floors.validate()?;
        self.trust.weights.validate()?;
        let lambda = self.trust.lambda;
        if !(lambda > 0.0 && lambda <= 1.0) {
            return bad(format!("lambda {lambda} outside (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.trust.alert_threshold) {
            return bad(format!("alert threshold {} outside [0, 1]", self.trust.alert_threshold));
        }
        Ok(())
    }

    pub fn input_path(&self, base_dir: &Path) -> PathBuf {
        resolve(base_dir, &self.input.path)
    }

    pub fn output_path(&self, base_dir: &Path) -> PathBuf {
        resolve(base_dir, &self.output_dir)
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Read, parse and validate a configuration file.
pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
    let config = RunConfig::parse(&raw)?;
    let base_dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    config.validate(&base_dir)?;
    Ok(LoadedConfig { config, raw, base_dir })
}

/// Commented configuration listing every setting at its default, with the
/// standard injection plan (second half of the batches) enabled.
pub fn template(input: &str) -> String {
    format!(
        r#"# fairtrust run configuration. Every value shown is the default unless
# noted; delete a line to fall back to it.

# Global seed; every stage draws from its own stream derived from it.
seed = 0
# Relative paths resolve against this file's directory.
output_dir = "fairtrust-out"

[input]
path = "{input}"

[input.schema]
title = "title"
subject = "subject"
source = "source"
date = "date"
label = "label"          # values "fake" / "true"
# Without a protected column a seeded Bernoulli(0.5) attribute is synthesized.
protected = "protected"  # default: unset
id = "id"                # default: unset, ids become r<row>

[batching]
k = 10
# clean_prefix = 5       # default k / 2

# Not a default: without this section no bias is injected.
[injection]
batches = [6, 7, 8, 9, 10]
label_drift = [0.8]      # target positive rate, one per batch or one for all

[injection.subject_skew]
subject = "politics"
factor = 2.0

[injection.framing]
rate = 0.5
# lexicon = "lexicon.txt"  # default: bundled positive -> negative pairs

[features]
dim = 256
hash_seed = 42

[model]
n_trees = 200
max_depth = 4
learning_rate = 0.1
early_stop_patience = 20
train_fraction = 0.8
l2 = 1.0
min_child_weight = 0.001
max_bins = 32
validation_repeats = 1

[autoencoder]
bottleneck_dim = 32
noise_std = 0.1
dropout = 0.1
epochs = 200
step_size = 0.01
batch_size = 32
eta = 0.0

[transformer]
bottleneck_dim = 32
noise_std = 0.1
dropout = 0.1
epochs = 200
step_size = 0.01
batch_size = 32
eta = 0.1
chunk = 16

[drift.weights]
psi = 0.25
jsd = 0.25
ae = 0.25
tae = 0.25

# Smallest span used when scaling each metric against the clean prefix.
[drift.floors]
psi = 0.1
jsd = 0.02
ae_relative = 0.1
tae_relative = 0.1

[trust]
lambda = 0.5
alert_threshold = 0.7

[trust.weights]
alpha = 0.2   # drift
beta = 0.2    # uncertainty
gamma = 0.2   # fairness violations
delta = 0.2   # error
zeta = 0.2    # counterfactual consistency
"#
    )
}
