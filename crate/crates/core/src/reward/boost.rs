//! Gradient boosting with depth-limited regression trees on logistic loss.
//!
//! Split finding works on pre-binned features (quantile thresholds computed
//! once on the training split); leaves take a regularized Newton step
//! `-G / (H + l2)`.

use serde::{Deserialize, Serialize};

use super::{logistic, RewardModel};
use crate::error::{Error, Result};

pub const MIN_TRAIN_SAMPLES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// Stop after this many rounds without a validation improvement.
    pub early_stop_patience: usize,
    /// Leading (temporal) share of the data used for fitting; the rest validates.
    pub train_fraction: f64,
    pub l2: f64,
    pub min_child_weight: f64,
    pub max_bins: usize,
    /// Extra rolling-origin validation folds reported alongside the main split.
    pub validation_repeats: usize,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            n_trees: 200,
            max_depth: 4,
            learning_rate: 0.1,
            early_stop_patience: 20,
            train_fraction: 0.8,
            l2: 1.0,
            min_child_weight: 1e-3,
            max_bins: 32,
            validation_repeats: 1,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if self.n_trees == 0 {
            return bad("n_trees must be >= 1".into());
        }
        if self.max_depth == 0 || self.max_depth > 16 {
            return bad(format!("tree depth {} outside [1, 16]", self.max_depth));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning rate {} outside (0, 1]", self.learning_rate));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train fraction {} outside (0, 1)", self.train_fraction));
        }
        if !(self.l2 >= 0.0) || !(self.min_child_weight >= 0.0) {
            return bad("l2 and min_child_weight must be >= 0".into());
        }
        if self.max_bins < 2 || self.max_bins > 256 {
            return bad(format!("max_bins {} outside [2, 256]", self.max_bins));
        }
        if self.validation_repeats == 0 {
            return bad("validation_repeats must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    /// Single split on `feature` at `threshold`.
    pub fn stump(feature: usize, threshold: f64, left: f64, right: f64) -> Self {
        Tree {
            nodes: vec![
                Node::Split {
                    feature,
                    threshold,
                    left: 1,
                    right: 2,
                },
                Node::Leaf { value: left },
                Node::Leaf { value: right },
            ],
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right } as usize,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left as usize).max(walk(nodes, right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.nodes.iter().all(|n| match n {
            Node::Split { threshold, .. } => !threshold.is_nan(),
            Node::Leaf { value } => value.is_finite(),
        })
    }
}

/// Per-round diagnostics of a boosting run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training log-loss; entry 0 is the zero-tree model.
    pub train_loss: Vec<f64>,
    pub valid_loss: Vec<f64>,
    /// Number of trees kept.
    pub best_round: usize,
    pub n_train: usize,
    pub n_valid: usize,
    /// Best validation loss of each rolling-origin fold (first entry is the main split).
    pub repeat_valid_loss: Vec<f64>,
}

pub fn log_loss(logit: f64, label: u8) -> f64 {
    // log(1 + e^-z) for y = 1, log(1 + e^z) for y = 0, computed stably
    let z = if label == 1 { -logit } else { logit };
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn mean_loss(logits: &[f64], labels: &[u8]) -> f64 {
    logits.iter().zip(labels).map(|(&z, &y)| log_loss(z, y)).sum::<f64>() / logits.len() as f64
}

/// Thresholds per feature plus the binned training matrix (column-major).
struct Binned {
    thresholds: Vec<Vec<f64>>,
    bins: Vec<Vec<u8>>,
}

impl Binned {
    fn new(rows: &[&[f64]], n_features: usize, max_bins: usize) -> Self {
        let mut thresholds = Vec::with_capacity(n_features);
        let mut bins = Vec::with_capacity(n_features);
        let mut column = vec![0.0; rows.len()];
        for f in 0..n_features {
            for (c, r) in column.iter_mut().zip(rows) {
                *c = r[f];
            }
            let t = candidate_thresholds(&column, max_bins);
            bins.push(column.iter().map(|&x| t.partition_point(|&th| th < x) as u8).collect());
            thresholds.push(t);
        }
        Binned { thresholds, bins }
    }
}

/// Midpoints between distinct values, thinned to at most `max_bins - 1`
/// cut points by quantile position.
fn candidate_thresholds(values: &[f64], max_bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() < 2 {
        return Vec::new();
    }
    let mids: Vec<f64> = sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    if mids.len() < max_bins {
        return mids;
    }
    let mut picked: Vec<f64> = (1..max_bins).map(|i| mids[i * mids.len() / max_bins]).collect();
    picked.dedup();
    picked
}

struct SplitCandidate {
    gain: f64,
    feature: usize,
    bin: usize,
}

struct Grower<'a> {
    binned: &'a Binned,
    grad: &'a [f64],
    hess: &'a [f64],
    cfg: &'a BoostConfig,
}

impl Grower<'_> {
    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        -g / (h + self.cfg.l2)
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.cfg.l2)
    }

    fn best_split(&self, samples: &[u32], g_total: f64, h_total: f64) -> Option<SplitCandidate> {
        let parent = self.score(g_total, h_total);
        let mut best: Option<SplitCandidate> = None;
        let mut hist_g = [0.0f64; 256];
        let mut hist_h = [0.0f64; 256];
        for (f, thresholds) in self.binned.thresholds.iter().enumerate() {
            if thresholds.is_empty() {
                continue;
            }
            let n_bins = thresholds.len() + 1;
            hist_g[..n_bins].fill(0.0);
            hist_h[..n_bins].fill(0.0);
            let col = &self.binned.bins[f];
            for &s in samples {
                let b = col[s as usize] as usize;
                hist_g[b] += self.grad[s as usize];
                hist_h[b] += self.hess[s as usize];
            }
            let (mut gl, mut hl) = (0.0, 0.0);
            for b in 0..n_bins - 1 {
                gl += hist_g[b];
                hl += hist_h[b];
                let (gr, hr) = (g_total - gl, h_total - hl);
                if hl < self.cfg.min_child_weight || hr < self.cfg.min_child_weight {
                    continue;
                }
                let gain = self.score(gl, hl) + self.score(gr, hr) - parent;
                if gain > 1e-12 && best.as_ref().is_none_or(|c| gain > c.gain) {
                    best = Some(SplitCandidate {
                        gain,
                        feature: f,
                        bin: b,
                    });
                }
            }
        }
        best
    }

    fn grow(&self, samples: Vec<u32>) -> Tree {
        let mut nodes = Vec::new();
        self.grow_node(&mut nodes, samples, 0);
        Tree { nodes }
    }

    fn grow_node(&self, nodes: &mut Vec<Node>, samples: Vec<u32>, depth: usize) -> u32 {
        let (g, h) = samples.iter().fold((0.0, 0.0), |(g, h), &s| {
            (g + self.grad[s as usize], h + self.hess[s as usize])
        });
        let id = nodes.len() as u32;
        nodes.push(Node::Leaf {
            value: self.leaf_value(g, h),
        });
        if depth >= self.cfg.max_depth || samples.len() < 2 {
            return id;
        }
        let Some(split) = self.best_split(&samples, g, h) else {
            return id;
        };
        let col = &self.binned.bins[split.feature];
        let (left, right): (Vec<u32>, Vec<u32>) = samples
            .into_iter()
            .partition(|&s| (col[s as usize] as usize) <= split.bin);
        let l = self.grow_node(nodes, left, depth + 1);
        let r = self.grow_node(nodes, right, depth + 1);
        nodes[id as usize] = Node::Split {
            feature: split.feature,
            threshold: self.binned.thresholds[split.feature][split.bin],
            left: l,
            right: r,
        };
        id
    }
}

/// Fit a boosted ensemble on `train`, early-stopping on `valid`.
fn boost(
    train: (&[&[f64]], &[u8]),
    valid: (&[&[f64]], &[u8]),
    n_features: usize,
    cfg: &BoostConfig,
) -> Result<(Vec<Tree>, TrainReport)> {
    let (x_tr, y_tr) = train;
    let (x_va, y_va) = valid;
    let binned = Binned::new(x_tr, n_features, cfg.max_bins);
    let mut f_tr = vec![0.0; x_tr.len()];
    let mut f_va = vec![0.0; x_va.len()];
    let mut grad = vec![0.0; x_tr.len()];
    let mut hess = vec![0.0; x_tr.len()];
    let mut trees = Vec::new();
    let mut train_loss = vec![mean_loss(&f_tr, y_tr)];
    let mut valid_loss = vec![mean_loss(&f_va, y_va)];
    let mut best_round = 0;
    let all: Vec<u32> = (0..x_tr.len() as u32).collect();

    for round in 1..=cfg.n_trees {
        for i in 0..x_tr.len() {
            let p = logistic(f_tr[i]);
            grad[i] = p - f64::from(y_tr[i]);
            hess[i] = (p * (1.0 - p)).max(1e-16);
        }
        let tree = Grower {
            binned: &binned,
            grad: &grad,
            hess: &hess,
            cfg,
        }
        .grow(all.clone());
        if !tree.is_finite() {
            return Err(Error::Divergence(format!("non-finite tree at round {round}")));
        }
        for (f, x) in f_tr.iter_mut().zip(x_tr) {
            *f += cfg.learning_rate * tree.predict(x);
        }
        for (f, x) in f_va.iter_mut().zip(x_va) {
            *f += cfg.learning_rate * tree.predict(x);
        }
        trees.push(tree);
        let tl = mean_loss(&f_tr, y_tr);
        let vl = mean_loss(&f_va, y_va);
        if !tl.is_finite() || !vl.is_finite() {
            return Err(Error::Divergence(format!("non-finite loss at round {round}")));
        }
        train_loss.push(tl);
        valid_loss.push(vl);
        if vl < valid_loss[best_round] {
            best_round = round;
        } else if round - best_round >= cfg.early_stop_patience {
            break;
        }
    }
    trees.truncate(best_round);
    let best = valid_loss[best_round];
    Ok((
        trees,
        TrainReport {
            train_loss,
            valid_loss,
            best_round,
            n_train: x_tr.len(),
            n_valid: x_va.len(),
            repeat_valid_loss: vec![best],
        },
    ))
}

fn has_both_classes(labels: &[u8]) -> bool {
    labels.contains(&0) && labels.contains(&1)
}

/// Number of leading rows used for fitting; the rest validates.
pub fn train_split(n: usize, train_fraction: f64) -> usize {
    let n_train = ((n as f64) * train_fraction).floor() as usize;
    n_train.clamp(1, n.saturating_sub(1).max(1))
}

/// Train on the leading `train_fraction` of `(features, labels)` (which must
/// be in temporal order) and validate on the remainder.
pub fn train<R: AsRef<[f64]>>(features: &[R], labels: &[u8], cfg: &BoostConfig) -> Result<(RewardModel, TrainReport)> {
    cfg.validate()?;
    if features.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if features.len() < MIN_TRAIN_SAMPLES {
        return Err(Error::invalid(format!(
            "need at least {MIN_TRAIN_SAMPLES} samples, got {}",
            features.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::invalid(format!("label {bad} is not binary")));
    }
    let n_features = features[0].as_ref().len();
    if features.iter().any(|r| r.as_ref().len() != n_features) {
        return Err(Error::invalid("feature rows differ in length"));
    }
    if features.iter().flat_map(|r| r.as_ref()).any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite feature value"));
    }
    let rows: Vec<&[f64]> = features.iter().map(AsRef::as_ref).collect();
    let n_train = train_split(rows.len(), cfg.train_fraction);
    if !has_both_classes(&labels[..n_train]) {
        return Err(Error::invalid("training split holds a single class"));
    }

    let (trees, mut report) = boost(
        (&rows[..n_train], &labels[..n_train]),
        (&rows[n_train..], &labels[n_train..]),
        n_features,
        cfg,
    )?;

    // Rolling-origin folds: each moves the cut point back by a fraction of
    // the validation window length.
    let n_valid = rows.len() - n_train;
    for j in 1..cfg.validation_repeats {
        let shift = j * n_valid / cfg.validation_repeats;
        let cut = n_train.saturating_sub(shift);
        let end = (cut + n_valid).min(rows.len());
        if cut < 2 || !has_both_classes(&labels[..cut]) {
            continue;
        }
        let (_, fold) = boost(
            (&rows[..cut], &labels[..cut]),
            (&rows[cut..end], &labels[cut..end]),
            n_features,
            cfg,
        )?;
        report.repeat_valid_loss.push(fold.valid_loss[fold.best_round]);
    }

    Ok((
        RewardModel {
            trees,
            learning_rate: cfg.learning_rate,
            temperature: 1.0,
            n_features,
            schema_hash: None,
        },
        report,
    ))
}
