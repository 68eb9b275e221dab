//! Synthetic bias injection: subject skew, framing swaps and label drift,
//! plus protected-attribute counterfactuals.
//!
//! Every injector works on a private copy of a batch and returns the list of
//! mutations it made, so the clean [`BatchSeries`] is never touched.

mod lexicon;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{BatchSeries, Record};
use crate::rng;

pub use lexicon::Lexicon;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionKind {
    SubjectSkew,
    Framing,
    LabelDrift,
}

/// One field-level change made by an injector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mutation {
    pub kind: InjectionKind,
    pub record_id: String,
    pub field: String,
    pub before: Option<String>,
    pub after: Option<String>,
}

/// A mutation tagged with its (1-based) batch number, as written to the audit log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub batch: usize,
    #[serde(flatten)]
    pub mutation: Mutation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Injected {
    pub records: Vec<Record>,
    pub mutations: Vec<Mutation>,
}

/// Oversample `subject` by duplicating its records (fresh ids) until its
/// share reaches `min(1, factor × current share)`, within one record.
pub fn inject_subject_skew(batch: &[Record], subject: &str, factor: f64, seed: u64) -> Result<Injected> {
    if !(factor >= 1.0) || !factor.is_finite() {
        return Err(Error::invalid(format!("skew factor must be >= 1, got {factor}")));
    }
    let members: Vec<usize> = batch
        .iter()
        .enumerate()
        .filter(|(_, r)| r.subject == subject)
        .map(|(i, _)| i)
        .collect();
    if members.is_empty() {
        return Err(Error::invalid(format!("subject `{subject}` is absent from the batch")));
    }
    let n = batch.len() as f64;
    let s = members.len() as f64;
    let target = (factor * s / n).min(1.0);
    let duplicates = if members.len() == batch.len() {
        0
    } else if target >= 1.0 {
        return Err(Error::invalid(format!(
            "a share of 1 for `{subject}` is unreachable by duplication"
        )));
    } else {
        // (s + d) / (n + d) = target
        ((target * n - s) / (1.0 - target)).round().max(0.0) as usize
    };

    let mut rng = rng::rng_from_seed(seed);
    let mut copies = vec![0usize; batch.len()];
    for _ in 0..duplicates {
        copies[members[rng.random_range(0..members.len())]] += 1;
    }

    let mut records = Vec::with_capacity(batch.len() + duplicates);
    let mut mutations = Vec::with_capacity(duplicates);
    for (r, &c) in batch.iter().zip(&copies) {
        records.push(r.clone());
        // Copies sit right after their original so temporal order holds.
        for j in 0..c {
            let mut dup = r.clone();
            dup.id = format!("{}~dup{j}", r.id);
            mutations.push(Mutation {
                kind: InjectionKind::SubjectSkew,
                record_id: dup.id.clone(),
                field: "record".into(),
                before: None,
                after: Some(format!("duplicate of {}", r.id)),
            });
            records.push(dup);
        }
    }
    Ok(Injected { records, mutations })
}

/// Replace each occurrence of a lexicon term with its pair, independently
/// with probability `rate`.
pub fn inject_framing(batch: &[Record], lexicon: &Lexicon, rate: f64, seed: u64) -> Result<Injected> {
    if lexicon.is_empty() {
        return Err(Error::invalid("framing lexicon is empty"));
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::invalid(format!("swap rate {rate} outside [0, 1]")));
    }
    let table = lexicon.lookup();
    let mut rng = rng::rng_from_seed(seed);
    let mut records = batch.to_vec();
    let mut mutations = Vec::new();
    for r in &mut records {
        let mut changed = false;
        let tokens: Vec<&str> = r
            .title
            .split(' ')
            .map(|tok| match table.get(tok) {
                Some(&rep) if rate > 0.0 && rng.random_bool(rate) => {
                    changed = true;
                    rep
                }
                _ => tok,
            })
            .collect();
        if changed {
            let after = tokens.join(" ");
            mutations.push(Mutation {
                kind: InjectionKind::Framing,
                record_id: r.id.clone(),
                field: "title".into(),
                before: Some(std::mem::replace(&mut r.title, after.clone())),
                after: Some(after),
            });
        }
    }
    Ok(Injected { records, mutations })
}

/// Flip uniformly chosen labels (without replacement) until the positive
/// rate equals `target_pos_rate` within one record.
pub fn inject_label_drift(batch: &[Record], target_pos_rate: f64, seed: u64) -> Result<Injected> {
    if batch.is_empty() {
        return Err(Error::invalid("label drift on an empty batch"));
    }
    if !(0.0..=1.0).contains(&target_pos_rate) {
        return Err(Error::invalid(format!(
            "target positive rate {target_pos_rate} outside [0, 1]"
        )));
    }
    let positives = batch.iter().filter(|r| r.label == 1).count();
    let wanted = (target_pos_rate * batch.len() as f64).round() as usize;
    let (from, flips) = if wanted >= positives {
        (0u8, wanted - positives)
    } else {
        (1u8, positives - wanted)
    };
    let candidates: Vec<usize> = batch
        .iter()
        .enumerate()
        .filter(|(_, r)| r.label == from)
        .map(|(i, _)| i)
        .collect();

    let mut rng = rng::rng_from_seed(seed);
    let mut chosen: Vec<usize> = index::sample(&mut rng, candidates.len(), flips)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    chosen.sort_unstable();

    let mut records = batch.to_vec();
    let mut mutations = Vec::with_capacity(chosen.len());
    for i in chosen {
        let r = &mut records[i];
        r.label = 1 - from;
        mutations.push(Mutation {
            kind: InjectionKind::LabelDrift,
            record_id: r.id.clone(),
            field: "label".into(),
            before: Some(from.to_string()),
            after: Some(r.label.to_string()),
        });
    }
    Ok(Injected { records, mutations })
}

/// A record and its protected-attribute counterfactual.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterfactualPair {
    pub original: Record,
    pub flipped: Record,
}

pub fn make_counterfactual(record: &Record) -> Result<CounterfactualPair> {
    if record.protected > 1 {
        return Err(Error::invalid(format!(
            "record {} has non-binary protected value {}",
            record.id, record.protected
        )));
    }
    let mut flipped = record.clone();
    flipped.protected = 1 - record.protected;
    Ok(CounterfactualPair {
        original: record.clone(),
        flipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSkew {
    pub subject: String,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Framing {
    pub lexicon: Lexicon,
    pub rate: f64,
}

/// Which batches to inject and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionPlan {
    /// 0-based batch indices.
    pub target_batches: Vec<usize>,
    pub subject_skew: Option<SubjectSkew>,
    pub framing: Option<Framing>,
    /// One target positive rate per target batch, or a single rate for all.
    pub label_drift: Option<Vec<f64>>,
}

impl InjectionPlan {
    pub fn none() -> Self {
        InjectionPlan {
            target_batches: Vec::new(),
            subject_skew: None,
            framing: None,
            label_drift: None,
        }
    }

    /// Second half of `k` batches: subject "politics" ×2, framing at 0.5 with
    /// the bundled lexicon, positive rate driven to 0.8.
    pub fn second_half(k: usize) -> Self {
        InjectionPlan {
            target_batches: (k / 2..k).collect(),
            subject_skew: Some(SubjectSkew {
                subject: "politics".into(),
                factor: 2.0,
            }),
            framing: Some(Framing {
                lexicon: Lexicon::default(),
                rate: 0.5,
            }),
            label_drift: Some(vec![0.8]),
        }
    }

    pub fn validate(&self, k: usize, clean_prefix: usize) -> Result<()> {
        for &t in &self.target_batches {
            if t < clean_prefix || t >= k {
                return Err(Error::config(format!(
                    "injection target batch {} outside [{}, {k}]",
                    t + 1,
                    clean_prefix + 1
                )));
            }
        }
        if let Some(s) = &self.subject_skew {
            if !(s.factor >= 1.0) || !s.factor.is_finite() {
                return Err(Error::config(format!("skew factor {} must be >= 1", s.factor)));
            }
        }
        if let Some(f) = &self.framing {
            if !(0.0..=1.0).contains(&f.rate) {
                return Err(Error::config(format!("framing rate {} outside [0, 1]", f.rate)));
            }
        }
        if let Some(rates) = &self.label_drift {
            if rates.len() != 1 && rates.len() != self.target_batches.len() {
                return Err(Error::config(format!(
                    "label drift schedule has {} rates for {} target batches",
                    rates.len(),
                    self.target_batches.len()
                )));
            }
            if let Some(r) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
                return Err(Error::config(format!("label drift rate {r} outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn label_rate(&self, position: usize) -> Option<f64> {
        self.label_drift
            .as_ref()
            .map(|rates| if rates.len() == 1 { rates[0] } else { rates[position] })
    }
}

/// Apply `plan` to a copy of `series`. Within a batch the order is subject
/// skew, then framing, then label drift.
pub fn apply_plan(series: &BatchSeries, plan: &InjectionPlan, seed: u64) -> Result<(BatchSeries, Vec<AuditEntry>)> {
    plan.validate(series.k(), series.clean_prefix)?;
    let mut out = series.clone();
    let mut audit = Vec::new();
    for (position, &t) in plan.target_batches.iter().enumerate() {
        let batch_seed = rng::derive_seed(seed, t as u64);
        let mut records = std::mem::take(&mut out.batches[t]);
        let mut steps: Vec<Injected> = Vec::new();
        if let Some(s) = &plan.subject_skew {
            let step = inject_subject_skew(&records, &s.subject, s.factor, rng::derive_seed(batch_seed, 1))?;
            records = step.records.clone();
            steps.push(step);
        }
        if let Some(f) = &plan.framing {
            let step = inject_framing(&records, &f.lexicon, f.rate, rng::derive_seed(batch_seed, 2))?;
            records = step.records.clone();
            steps.push(step);
        }
        if let Some(rate) = plan.label_rate(position) {
            let step = inject_label_drift(&records, rate, rng::derive_seed(batch_seed, 3))?;
            records = step.records.clone();
            steps.push(step);
        }
        for step in steps {
            audit.extend(
                step.mutations
                    .into_iter()
                    .map(|mutation| AuditEntry { batch: t + 1, mutation }),
            );
        }
        out.batches[t] = records;
    }
    Ok((out, audit))
}
