//! Scaled dot-product attention.

use super::linalg::Matrix;
use crate::error::{Error, Result};

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Attention weights `softmax(Q Kᵀ / √d_k)`.
pub fn attention_weights(q: &Matrix, k: &Matrix, d_k: usize) -> Result<Matrix> {
    if q.cols != k.cols {
        return Err(Error::invalid(format!(
            "query width {} differs from key width {}",
            q.cols, k.cols
        )));
    }
    if d_k == 0 {
        return Err(Error::invalid("key dimension must be positive"));
    }
    let mut scores = q.matmul_t(k);
    let scale = 1.0 / (d_k as f64).sqrt();
    scores.data.iter_mut().for_each(|s| *s *= scale);
    Ok(softmax_rows(&scores))
}

/// `softmax(Q Kᵀ / √d_k) V`.
pub fn attention(q: &Matrix, k: &Matrix, v: &Matrix, d_k: usize) -> Result<Matrix> {
    if k.rows != v.rows {
        return Err(Error::invalid(format!("{} keys but {} values", k.rows, v.rows)));
    }
    Ok(attention_weights(q, k, d_k)?.matmul(v))
}
