//! Fairness violations, counterfactual consistency, the composite trust
//! score, EMA smoothing and permutation feature importance.

use std::ops::Range;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::features::FeatureGroup;
use crate::reward::RewardModel;
use crate::rng;

pub const DEFAULT_LAMBDA: f64 = 0.5;
pub const DEFAULT_ALERT_THRESHOLD: f64 = 0.7;
pub const IMPORTANCE_SHUFFLES: usize = 5;

/// Weights of D, ū, R, E and C in the trust score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrustWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub zeta: f64,
}

impl Default for TrustWeights {
    fn default() -> Self {
        TrustWeights {
            alpha: 0.2,
            beta: 0.2,
            gamma: 0.2,
            delta: 0.2,
            zeta: 0.2,
        }
    }
}

impl TrustWeights {
    pub fn as_array(&self) -> [f64; 5] {
        [self.alpha, self.beta, self.gamma, self.delta, self.zeta]
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.as_array();
        if w.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::config(format!("trust weights {w:?} must lie in [0, 1]")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("trust weights sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Per-batch trust inputs, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustComponents {
    /// Normalized drift score D.
    pub drift: f64,
    /// Mean uncertainty margin ū.
    pub uncertainty: f64,
    /// Fairness violation rate R.
    pub fairness: f64,
    /// Classification error E = 1 − accuracy.
    pub error: f64,
    /// Counterfactual consistency penalty C.
    pub consistency: f64,
}

impl TrustComponents {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.drift,
            self.uncertainty,
            self.fairness,
            self.error,
            self.consistency,
        ]
    }
}

/// `1 − (α·D + β·ū + γ·R + δ·E + ζ·C)`, clamped to [0, 1].
pub fn trust_score(c: &TrustComponents, w: &TrustWeights) -> Result<f64> {
    w.validate()?;
    let comps = c.as_array();
    const NAMES: [&str; 5] = ["drift", "uncertainty", "fairness", "error", "consistency"];
    for (name, v) in NAMES.iter().zip(comps) {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("{name} component {v} outside [0, 1]")));
        }
    }
    let penalty: f64 = comps.iter().zip(w.as_array()).map(|(c, w)| c * w).sum();
    Ok((1.0 - penalty).clamp(0.0, 1.0))
}

/// `T̃_1 = T_1`, `T̃_i = λ·T_i + (1 − λ)·T̃_{i−1}`.
pub fn ema_smooth(values: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::invalid(format!("EMA lambda {lambda} outside (0, 1]")));
    }
    if values.is_empty() {
        return Err(Error::invalid("EMA of an empty sequence"));
    }
    if lambda == 1.0 {
        return Ok(values.to_vec());
    }
    let mut out = Vec::with_capacity(values.len());
    let mut prev = values[0];
    out.push(prev);
    for &v in &values[1..] {
        prev += lambda * (v - prev);
        out.push(prev);
    }
    Ok(out)
}

fn flipped(row: &[f64], protected_col: usize) -> Result<Vec<f64>> {
    let v = *row
        .get(protected_col)
        .ok_or_else(|| Error::invalid(format!("row has no column {protected_col}")))?;
    if v != 0.0 && v != 1.0 {
        return Err(Error::invalid(format!("protected value {v} is not binary")));
    }
    let mut out = row.to_vec();
    out[protected_col] = 1.0 - v;
    Ok(out)
}

/// Fraction of rows whose predicted class changes when the protected column
/// is flipped.
pub fn fairness_violation_rate<R: AsRef<[f64]>>(model: &RewardModel, batch: &[R], protected_col: usize) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("fairness violation rate of an empty batch"));
    }
    let mut flips = 0usize;
    for x in batch {
        let x = x.as_ref();
        let cf = flipped(x, protected_col)?;
        if model.predict_class(x)? != model.predict_class(&cf)? {
            flips += 1;
        }
    }
    Ok(flips as f64 / batch.len() as f64)
}

/// Mean `|f(x) − f(x^cf)|` of the calibrated positive-class probability.
pub fn counterfactual_consistency<R: AsRef<[f64]>>(
    model: &RewardModel,
    batch: &[R],
    protected_col: usize,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("counterfactual consistency of an empty batch"));
    }
    let mut sum = 0.0;
    for x in batch {
        let x = x.as_ref();
        let cf = flipped(x, protected_col)?;
        let p = model.predict_proba(x)?.positive();
        let q = model.predict_proba(&cf)?.positive();
        sum += (p - q).abs();
    }
    Ok((sum / batch.len() as f64).clamp(0.0, 1.0))
}

/// Fraction of rows the model classifies correctly.
pub fn accuracy<R: AsRef<[f64]>>(model: &RewardModel, rows: &[R], labels: &[u8]) -> Result<f64> {
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(Error::invalid("accuracy needs equally many rows and labels"));
    }
    let mut correct = 0usize;
    for (x, &y) in rows.iter().zip(labels) {
        if model.predict_class(x.as_ref())? == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / rows.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustRow {
    /// 1-based batch number.
    pub batch: usize,
    #[serde(flatten)]
    pub components: TrustComponents,
    pub trust: f64,
    pub smoothed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustTimeline {
    pub lambda: f64,
    pub rows: Vec<TrustRow>,
}

impl TrustTimeline {
    pub fn build(components: &[TrustComponents], weights: &TrustWeights, lambda: f64) -> Result<Self> {
        let raw = components
            .iter()
            .map(|c| trust_score(c, weights))
            .collect::<Result<Vec<_>>>()?;
        let smoothed = ema_smooth(&raw, lambda)?;
        let rows = components
            .iter()
            .zip(raw)
            .zip(smoothed)
            .enumerate()
            .map(|(i, ((c, t), s))| TrustRow {
                batch: i + 1,
                components: *c,
                trust: t,
                smoothed: s,
            })
            .collect();
        Ok(TrustTimeline { lambda, rows })
    }

    /// Batches whose smoothed trust falls below `threshold`.
    pub fn alerts(&self, threshold: f64) -> Vec<usize> {
        self.rows
            .iter()
            .filter(|r| r.smoothed < threshold)
            .map(|r| r.batch)
            .collect()
    }

    /// Every component and score lies in [0, 1].
    pub fn check_ranges(&self) -> Result<()> {
        for r in &self.rows {
            let vals = r.components.as_array().into_iter().chain([r.trust, r.smoothed]);
            if vals.into_iter().any(|v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::Divergence(format!(
                    "batch {} has a trust value outside [0, 1]: {r:?}",
                    r.batch
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub group: FeatureGroup,
    pub importance: f64,
}

/// Mean accuracy drop when each column group is shuffled jointly across rows.
pub fn permutation_importance<R: AsRef<[f64]>>(
    model: &RewardModel,
    rows: &[R],
    labels: &[u8],
    groups: &[Range<usize>],
    n_shuffles: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(Error::invalid("feature importance on an empty evaluation set"));
    }
    if n_shuffles == 0 {
        return Err(Error::invalid("feature importance needs at least one shuffle"));
    }
    let base = accuracy(model, rows, labels)?;
    let mut rng = rng::rng_from_seed(seed);
    let mut perm: Vec<usize> = (0..rows.len()).collect();
    let mut out = Vec::with_capacity(groups.len());
    for cols in groups {
        let mut drop = 0.0;
        for _ in 0..n_shuffles {
            perm.shuffle(&mut rng);
            let shuffled: Vec<Vec<f64>> = rows
                .iter()
                .zip(&perm)
                .map(|(r, &src)| {
                    let mut row = r.as_ref().to_vec();
                    row[cols.clone()].copy_from_slice(&rows[src].as_ref()[cols.clone()]);
                    row
                })
                .collect();
            drop += base - accuracy(model, &shuffled, labels)?;
        }
        out.push(drop / n_shuffles as f64);
    }
    Ok(out)
}

/// Permutation importance of every feature group, sorted descending.
pub fn feature_importance<R: AsRef<[f64]>>(
    model: &RewardModel,
    rows: &[R],
    labels: &[u8],
    dim: usize,
    seed: u64,
) -> Result<Vec<Importance>> {
    let groups: Vec<Range<usize>> = FeatureGroup::ALL.iter().map(|g| g.columns(dim)).collect();
    let values = permutation_importance(model, rows, labels, &groups, IMPORTANCE_SHUFFLES, seed)?;
    let mut ranked: Vec<Importance> = FeatureGroup::ALL
        .iter()
        .zip(values)
        .map(|(&group, importance)| Importance { group, importance })
        .collect();
    ranked.sort_by(|a, b| b.importance.total_cmp(&a.importance));
    Ok(ranked)
}
