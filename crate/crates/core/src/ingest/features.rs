//! Hashed bag-of-tokens text features plus ordinal categorical codes.
//!
//! Token index = FNV-1a-64(hash seed as 8 little-endian bytes ‖ token UTF-8)
//! mod `dim`. The layout of a model input row is
//! `[text_0 .. text_{dim-1}, subject, source, protected, date]`.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Record;
use crate::error::{Error, Result};

pub const MIN_DIM: usize = 8;
pub const DEFAULT_DIM: usize = 256;
pub const DEFAULT_HASH_SEED: u64 = 42;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(seed: u64, token: &str) -> u64 {
    seed.to_le_bytes()
        .iter()
        .chain(token.as_bytes())
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

pub fn token_index(seed: u64, token: &str, dim: usize) -> usize {
    (fnv1a64(seed, token) % dim as u64) as usize
}

/// Ordinal codes of a record's categorical columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalCodes {
    /// 0 = empty, 1..=n known values in sorted order, n+1 = unseen.
    pub subject: u32,
    pub source: u32,
    pub protected: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub text: Vec<f64>,
    pub codes: CategoricalCodes,
    /// Date scaled to [0, 1] over the full date range.
    pub date: f64,
}

impl FeatureVector {
    /// Dense row in the model's column layout.
    pub fn to_row(&self) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.text.len() + 4);
        row.extend_from_slice(&self.text);
        row.push(f64::from(self.codes.subject));
        row.push(f64::from(self.codes.source));
        row.push(f64::from(self.codes.protected));
        row.push(self.date);
        row
    }
}

/// Column groups used for attribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Text,
    Subject,
    Source,
    Protected,
    Date,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 5] = [
        FeatureGroup::Text,
        FeatureGroup::Subject,
        FeatureGroup::Source,
        FeatureGroup::Protected,
        FeatureGroup::Date,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureGroup::Text => "text",
            FeatureGroup::Subject => "subject",
            FeatureGroup::Source => "source",
            FeatureGroup::Protected => "protected",
            FeatureGroup::Date => "date",
        }
    }

    /// Columns of this group in a row for text dimension `dim`.
    pub fn columns(self, dim: usize) -> Range<usize> {
        match self {
            FeatureGroup::Text => 0..dim,
            FeatureGroup::Subject => dim..dim + 1,
            FeatureGroup::Source => dim + 1..dim + 2,
            FeatureGroup::Protected => dim + 2..dim + 3,
            FeatureGroup::Date => dim + 3..dim + 4,
        }
    }
}

/// Index of the protected code in a model row.
pub fn protected_column(dim: usize) -> usize {
    FeatureGroup::Protected.columns(dim).start
}

/// Fitted featurization state; doubles as the model's feature schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub dim: usize,
    pub hash_seed: u64,
    /// Per text dimension, the largest raw count seen on the training split.
    pub text_scale: Vec<f64>,
    pub subjects: Vec<String>,
    pub sources: Vec<String>,
    /// Date range as days since the common era.
    pub date_range: (i32, i32),
}

fn vocabulary<'a>(values: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut v: Vec<String> = values.filter(|s| !s.is_empty()).map(str::to_string).collect();
    v.sort();
    v.dedup();
    v
}

fn code_of(vocab: &[String], value: &str) -> u32 {
    if value.is_empty() {
        return 0;
    }
    match vocab.binary_search_by(|v| v.as_str().cmp(value)) {
        Ok(i) => i as u32 + 1,
        Err(_) => vocab.len() as u32 + 1,
    }
}

fn day_number(r: &Record) -> i32 {
    use chrono::Datelike;
    r.date.num_days_from_ce()
}

impl Featurizer {
    /// Fit text scaling and categorical vocabularies on `train`, and the date
    /// range on `all`.
    pub fn fit(train: &[Record], all: &[Record], dim: usize, hash_seed: u64) -> Result<Self> {
        if dim < MIN_DIM {
            return Err(Error::invalid(format!(
                "feature dimension {dim} is below the minimum of {MIN_DIM}"
            )));
        }
        if train.is_empty() || all.is_empty() {
            return Err(Error::invalid("cannot fit a featurizer on no records"));
        }
        let mut text_scale = vec![0.0_f64; dim];
        for r in train {
            for (i, &c) in raw_counts(&r.title, dim, hash_seed).iter().enumerate() {
                text_scale[i] = text_scale[i].max(c);
            }
        }
        let lo = all.iter().map(day_number).min().unwrap_or(0);
        let hi = all.iter().map(day_number).max().unwrap_or(0);
        Ok(Featurizer {
            dim,
            hash_seed,
            text_scale,
            subjects: vocabulary(train.iter().map(|r| r.subject.as_str())),
            sources: vocabulary(train.iter().map(|r| r.source.as_str())),
            date_range: (lo, hi),
        })
    }

    pub fn row_len(&self) -> usize {
        self.dim + 4
    }

    pub fn transform(&self, r: &Record) -> FeatureVector {
        let text = raw_counts(&r.title, self.dim, self.hash_seed)
            .into_iter()
            .zip(&self.text_scale)
            .map(|(c, &s)| if s > 0.0 { c / s } else { c })
            .collect();
        let (lo, hi) = self.date_range;
        let date = if hi > lo {
            (f64::from(day_number(r) - lo) / f64::from(hi - lo)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        FeatureVector {
            text,
            codes: CategoricalCodes {
                subject: code_of(&self.subjects, &r.subject),
                source: code_of(&self.sources, &r.source),
                protected: u32::from(r.protected),
            },
            date,
        }
    }

    pub fn transform_all(&self, records: &[Record]) -> Vec<FeatureVector> {
        records.iter().map(|r| self.transform(r)).collect()
    }

    /// Hex SHA-256 of the canonical JSON form; guards model/featurizer pairing.
    pub fn schema_hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("featurizer serializes");
        hex::encode(Sha256::digest(canonical))
    }

    /// Code lookup tables, for reports.
    pub fn code_map(&self) -> BTreeMap<&'static str, Vec<String>> {
        BTreeMap::from([("subject", self.subjects.clone()), ("source", self.sources.clone())])
    }
}

fn raw_counts(title: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut counts = vec![0.0; dim];
    for tok in title.split_whitespace() {
        counts[token_index(seed, tok, dim)] += 1.0;
    }
    counts
}

/// Fit on `records` and transform them in one go.
pub fn featurize(records: &[Record], dim: usize, hash_seed: u64) -> Result<Vec<FeatureVector>> {
    let f = Featurizer::fit(records, records, dim, hash_seed)?;
    Ok(f.transform_all(records))
}
