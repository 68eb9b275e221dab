//! Temperature scaling fit by golden-section search on validation NLL.

use super::{boost::log_loss, RewardModel};
use crate::error::{Error, Result};

pub const TEMPERATURE_BRACKET: (f64, f64) = (0.05, 20.0);
pub const TEMPERATURE_TOL: f64 = 1e-4;

/// Mean negative log-likelihood of `labels` under `logistic(logit / t)`.
pub fn nll(logits: &[f64], labels: &[u8], t: f64) -> f64 {
    logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| log_loss(z / t, y))
        .sum::<f64>()
        / logits.len() as f64
}

/// Minimize `f` on `[lo, hi]` until the bracket is narrower than `tol`.
pub fn golden_section(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Temperature minimizing validation NLL of raw logits.
pub fn fit_temperature(logits: &[f64], labels: &[u8]) -> Result<f64> {
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(Error::invalid(
            "calibration needs matching, non-empty logits and labels",
        ));
    }
    if !(labels.contains(&0) && labels.contains(&1)) {
        return Err(Error::invalid("calibration set holds a single class"));
    }
    let (lo, hi) = TEMPERATURE_BRACKET;
    Ok(golden_section(|t| nll(logits, labels, t), lo, hi, TEMPERATURE_TOL))
}

/// Return a copy of `model` with its temperature fit on the validation set.
pub fn calibrate_temperature<R: AsRef<[f64]>>(
    model: &RewardModel,
    val_features: &[R],
    val_labels: &[u8],
) -> Result<RewardModel> {
    if val_features.len() != val_labels.len() {
        return Err(Error::invalid("validation features and labels differ in length"));
    }
    let logits = val_features
        .iter()
        .map(|x| model.raw_logit(x.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let t = fit_temperature(&logits, val_labels)?;
    let mut out = model.clone();
    out.temperature = t;
    Ok(out)
}
