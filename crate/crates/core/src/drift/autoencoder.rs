//! Denoising autoencoders used as drift detectors.
//!
//! * `Plain`: `x̂ = W_dec · tanh(W_enc · x + b_enc) + b_dec`.
//! * `Attention`: the input is cut into `chunk`-wide tokens, passed through
//!   one single-head self-attention layer with a residual connection
//!   (`H = X + softmax(X Wq (X Wk)ᵀ / √chunk) X Wv`), flattened, and then fed
//!   to the same dense bottleneck.
//!
//! The mini-batch objective is
//! `mean_i ‖t_i − x̂_i‖² + η · mean_j Var_i(x̂_ij)`, with the population
//! variance taken across the samples of the batch. Training feeds corrupted
//! inputs (dropout, then Gaussian noise on the kept entries) and reconstructs
//! the clean targets.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::attention::attention_weights;
use super::linalg::Matrix;
use crate::error::{Error, Result};
use crate::rng::{self, StageRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Plain,
    Attention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeConfig {
    pub variant: Variant,
    pub bottleneck_dim: usize,
    pub noise_std: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub step_size: f64,
    pub batch_size: usize,
    /// Weight of the reconstruction-variance penalty.
    pub eta: f64,
    /// Token width for the attention variant.
    pub chunk: usize,
}

impl Default for AeConfig {
    fn default() -> Self {
        AeConfig::plain()
    }
}

impl AeConfig {
    pub fn plain() -> Self {
        AeConfig {
            variant: Variant::Plain,
            bottleneck_dim: 32,
            noise_std: 0.1,
            dropout: 0.1,
            epochs: 200,
            step_size: 1e-2,
            batch_size: 32,
            eta: 0.0,
            chunk: 16,
        }
    }

    pub fn attention() -> Self {
        AeConfig {
            variant: Variant::Attention,
            eta: 0.1,
            ..AeConfig::plain()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if self.bottleneck_dim == 0 {
            return bad("bottleneck dimension must be positive".into());
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return bad(format!("noise std {} must be >= 0", self.noise_std));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return bad(format!("step size {} must be > 0", self.step_size));
        }
        if self.batch_size == 0 || self.chunk == 0 {
            return bad("batch size and chunk must be positive".into());
        }
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return bad(format!("eta {} must be >= 0", self.eta));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub std: f64,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderModel {
    pub variant: Variant,
    pub input_dim: usize,
    pub chunk: usize,
    pub attention: Option<AttentionParams>,
    /// bottleneck × encoder input
    pub w_enc: Matrix,
    pub b_enc: Matrix,
    /// input × bottleneck
    pub w_dec: Matrix,
    pub b_dec: Matrix,
    pub noise: NoiseConfig,
    pub eta: f64,
}

/// Forward activations of a mini-batch, one row per sample.
struct BatchCache {
    /// Encoder input (attention output, or the raw input).
    h: Matrix,
    z: Matrix,
    out: Matrix,
    /// Padded tokens of every sample stacked (attention variant only).
    tokens: Matrix,
    attn: Vec<AttnCache>,
}

struct AttnCache {
    /// This sample's padded tokens `X`.
    x: Matrix,
    v: Matrix,
    a: Matrix,
}

fn uniform(rng: &mut StageRng, rows: usize, cols: usize, limit: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-limit..=limit)).collect();
    Matrix::from_vec(rows, cols, data)
}

impl AutoencoderModel {
    /// Fresh, randomly initialized network for `input_dim` features.
    pub fn init(input_dim: usize, cfg: &AeConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if cfg.bottleneck_dim >= input_dim {
            return Err(Error::invalid(format!(
                "bottleneck {} must be smaller than input dimension {input_dim}",
                cfg.bottleneck_dim
            )));
        }
        let mut rng = rng::rng_from_seed(seed);
        let (enc_in, attention) = match cfg.variant {
            Variant::Plain => (input_dim, None),
            Variant::Attention => {
                let c = cfg.chunk;
                let padded = input_dim.div_ceil(c) * c;
                let limit = 0.5 / (c as f64).sqrt();
                let attention = AttentionParams {
                    wq: uniform(&mut rng, c, c, limit),
                    wk: uniform(&mut rng, c, c, limit),
                    wv: uniform(&mut rng, c, c, limit),
                };
                (padded, Some(attention))
            }
        };
        let b = cfg.bottleneck_dim;
        let limit = (6.0 / (enc_in + b) as f64).sqrt();
        let w_enc = uniform(&mut rng, b, enc_in, limit);
        let limit = (6.0 / (input_dim + b) as f64).sqrt();
        let w_dec = uniform(&mut rng, input_dim, b, limit);
        Ok(AutoencoderModel {
            variant: cfg.variant,
            input_dim,
            chunk: cfg.chunk,
            attention,
            w_enc,
            b_enc: Matrix::zeros(1, b),
            w_dec,
            b_dec: Matrix::zeros(1, input_dim),
            noise: NoiseConfig {
                std: cfg.noise_std,
                dropout: cfg.dropout,
            },
            eta: cfg.eta,
        })
    }

    fn blocks(&self) -> Vec<&Matrix> {
        let mut v = Vec::with_capacity(7);
        if let Some(a) = &self.attention {
            v.extend([&a.wq, &a.wk, &a.wv]);
        }
        v.extend([&self.w_enc, &self.b_enc, &self.w_dec, &self.b_dec]);
        v
    }

    fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = Vec::with_capacity(7);
        if let Some(a) = &mut self.attention {
            v.extend([&mut a.wq, &mut a.wk, &mut a.wv]);
        }
        v.extend([&mut self.w_enc, &mut self.b_enc, &mut self.w_dec, &mut self.b_dec]);
        v
    }

    /// All trainable parameters, flattened in a fixed block order.
    pub fn params(&self) -> Vec<f64> {
        self.blocks().iter().flat_map(|m| m.data.iter().copied()).collect()
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for m in self.blocks_mut() {
            let n = m.data.len();
            m.data.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, flat.len(), "parameter vector length mismatch");
    }

    pub fn n_params(&self) -> usize {
        self.blocks().iter().map(|m| m.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|m| m.is_finite())
    }

    /// Residual self-attention over `chunk`-wide tokens of each padded input.
    ///
    /// Scores only depend on `M = Wq Wkᵀ`, so they are formed as `(X M) Xᵀ`.
    /// Tokens of the whole batch are stacked so the projections are one product.
    fn attend_batch(&self, p: &AttentionParams, inputs: &[&[f64]], h: &mut Matrix) -> (Matrix, Vec<AttnCache>) {
        let c = self.chunk;
        let width = self.w_enc.cols;
        let n_tok = width / c;
        let mut tokens = Matrix::zeros(inputs.len() * n_tok, c);
        for (i, x) in inputs.iter().enumerate() {
            tokens.data[i * width..i * width + x.len()].copy_from_slice(x);
        }
        let m = p.wq.matmul_t(&p.wk);
        let mut w = Matrix::zeros(c, 2 * c);
        for r in 0..c {
            let row = w.row_mut(r);
            row[..c].copy_from_slice(m.row(r));
            row[c..].copy_from_slice(p.wv.row(r));
        }
        let pv = tokens.matmul(&w);
        let caches = (0..inputs.len())
            .map(|i| {
                let (mut proj, mut v) = (Matrix::zeros(n_tok, c), Matrix::zeros(n_tok, c));
                for t in 0..n_tok {
                    let row = pv.row(i * n_tok + t);
                    proj.row_mut(t).copy_from_slice(&row[..c]);
                    v.row_mut(t).copy_from_slice(&row[c..]);
                }
                let x = Matrix::from_vec(n_tok, c, tokens.data[i * width..(i + 1) * width].to_vec());
                let a = attention_weights(&proj, &x, c).expect("token shapes agree");
                let o = a.matmul(&v);
                for ((hv, xv), ov) in h.row_mut(i).iter_mut().zip(&x.data).zip(&o.data) {
                    *hv = xv + ov;
                }
                AttnCache { x, v, a }
            })
            .collect();
        (tokens, caches)
    }

    fn forward_batch(&self, inputs: &[&[f64]]) -> BatchCache {
        for x in inputs {
            assert_eq!(x.len(), self.input_dim, "input dimension mismatch");
        }
        let mut h = Matrix::zeros(inputs.len(), self.w_enc.cols);
        let (tokens, attn) = match &self.attention {
            None => {
                for (i, x) in inputs.iter().enumerate() {
                    h.row_mut(i).copy_from_slice(x);
                }
                (Matrix::zeros(0, 0), Vec::new())
            }
            Some(p) => self.attend_batch(p, inputs, &mut h),
        };
        let mut z = h.matmul_t(&self.w_enc);
        for i in 0..z.rows {
            for (v, b) in z.row_mut(i).iter_mut().zip(&self.b_enc.data) {
                *v = (*v + b).tanh();
            }
        }
        let mut out = z.matmul_t(&self.w_dec);
        for i in 0..out.rows {
            for (v, b) in out.row_mut(i).iter_mut().zip(&self.b_dec.data) {
                *v += b;
            }
        }
        BatchCache {
            h,
            z,
            out,
            tokens,
            attn,
        }
    }

    /// Write `G_S X` and `∂L/∂V` of one sample into its rows of `g_uv`
    /// given `∂L/∂H`; `Xᵀ G_S X` summed over samples is `∂L/∂M`.
    fn attention_backward(&self, ac: &AttnCache, g_h: &[f64], g_uv: &mut [f64]) {
        let c = self.chunk;
        let g_o = Matrix::from_vec(ac.a.rows, c, g_h.to_vec());
        // O = A V
        let g_a = g_o.matmul_t(&ac.v);
        let g_v = ac.a.t_matmul(&g_o);
        // A = softmax(S), S = X M Xᵀ / √c
        let scale = 1.0 / (c as f64).sqrt();
        let mut g_s = Matrix::zeros(ac.a.rows, ac.a.cols);
        for r in 0..ac.a.rows {
            let a_row = ac.a.row(r);
            let ga_row = g_a.row(r);
            let inner: f64 = a_row.iter().zip(ga_row).map(|(a, g)| a * g).sum();
            for (j, gs) in g_s.row_mut(r).iter_mut().enumerate() {
                *gs = a_row[j] * (ga_row[j] - inner) * scale;
            }
        }
        let u = g_s.matmul(&ac.x);
        for (r, dst) in g_uv.chunks_exact_mut(2 * c).enumerate() {
            dst[..c].copy_from_slice(u.row(r));
            dst[c..].copy_from_slice(g_v.row(r));
        }
    }

    /// Mini-batch objective and its gradient (flattened like [`Self::params`]).
    pub fn objective_and_gradient(&self, inputs: &[&[f64]], targets: &[&[f64]]) -> (f64, Vec<f64>) {
        assert_eq!(inputs.len(), targets.len());
        let cache = self.forward_batch(inputs);
        let n = inputs.len();
        let outs: Vec<&[f64]> = (0..n).map(|i| cache.out.row(i)).collect();
        let loss = objective_from_outputs(&outs, targets, self.eta);

        let (nf, df) = (n as f64, self.input_dim as f64);
        let means = column_means(&outs);
        let mut g_out = Matrix::zeros(n, self.input_dim);
        for (i, t) in targets.iter().enumerate() {
            for (j, g) in g_out.row_mut(i).iter_mut().enumerate() {
                let xh = outs[i][j];
                *g = 2.0 / nf * (xh - t[j]) + self.eta * 2.0 / (nf * df) * (xh - means[j]);
            }
        }
        let g_w_dec = g_out.t_matmul(&cache.z);
        let g_b_dec = column_sums(&g_out);
        let mut g_pre = g_out.matmul(&self.w_dec);
        for (g, z) in g_pre.data.iter_mut().zip(&cache.z.data) {
            *g *= 1.0 - z * z;
        }
        let g_w_enc = g_pre.t_matmul(&cache.h);
        let g_b_enc = column_sums(&g_pre);

        let mut flat = Vec::with_capacity(self.n_params());
        if let Some(p) = &self.attention {
            let c = self.chunk;
            let g_h = g_pre.matmul(&self.w_enc);
            let mut g_uv = Matrix::zeros(cache.tokens.rows, 2 * c);
            let span = g_h.cols / c * 2 * c;
            for (i, ac) in cache.attn.iter().enumerate() {
                self.attention_backward(ac, g_h.row(i), &mut g_uv.data[i * span..(i + 1) * span]);
            }
            // [∂L/∂M | ∂L/∂Wv], then M = Wq Wkᵀ
            let g = cache.tokens.t_matmul(&g_uv);
            let mut g_m = Matrix::zeros(c, c);
            let mut g_wv = Matrix::zeros(c, c);
            for r in 0..c {
                g_m.row_mut(r).copy_from_slice(&g.row(r)[..c]);
                g_wv.row_mut(r).copy_from_slice(&g.row(r)[c..]);
            }
            flat.extend(g_m.matmul(&p.wk).data);
            flat.extend(g_m.t_matmul(&p.wq).data);
            flat.extend(g_wv.data);
        }
        flat.extend(g_w_enc.data);
        flat.extend(g_b_enc);
        flat.extend(g_w_dec.data);
        flat.extend(g_b_dec);
        (loss, flat)
    }

    /// Mini-batch objective only.
    pub fn objective(&self, inputs: &[&[f64]], targets: &[&[f64]]) -> f64 {
        let outs: Vec<Vec<f64>> = inputs.iter().map(|x| self.reconstruct(x)).collect();
        let outs: Vec<&[f64]> = outs.iter().map(Vec::as_slice).collect();
        objective_from_outputs(&outs, targets, self.eta)
    }

    pub fn reconstruct(&self, x: &[f64]) -> Vec<f64> {
        self.forward_batch(&[x]).out.data
    }

    /// `‖x − f(x)‖²` on the clean input.
    pub fn reconstruction_error(&self, x: &[f64]) -> f64 {
        let out = self.reconstruct(x);
        x.iter().zip(&out).map(|(a, b)| (a - b).powi(2)).sum()
    }

    pub fn mean_reconstruction_error<R: AsRef<[f64]>>(&self, rows: &[R]) -> Result<f64> {
        if rows.is_empty() {
            return Err(Error::invalid("reconstruction error of an empty batch"));
        }
        self.check_rows(rows)?;
        Ok(rows.iter().map(|r| self.reconstruction_error(r.as_ref())).sum::<f64>() / rows.len() as f64)
    }

    /// Variance-penalized objective over a whole evaluation batch, no noise.
    pub fn batch_objective<R: AsRef<[f64]>>(&self, rows: &[R]) -> Result<f64> {
        if rows.is_empty() {
            return Err(Error::invalid("objective of an empty batch"));
        }
        self.check_rows(rows)?;
        let refs: Vec<&[f64]> = rows.iter().map(AsRef::as_ref).collect();
        Ok(self.objective(&refs, &refs))
    }

    fn check_rows<R: AsRef<[f64]>>(&self, rows: &[R]) -> Result<()> {
        if let Some(r) = rows.iter().find(|r| r.as_ref().len() != self.input_dim) {
            return Err(Error::invalid(format!(
                "row has {} features, autoencoder expects {}",
                r.as_ref().len(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Dropout first, then Gaussian noise on the surviving entries, written
    /// into `out` (one draw decides the mask, a second only if kept).
    fn corrupt_into(&self, x: &[f64], out: &mut [f64], rng: &mut StageRng) {
        let NoiseConfig { std, dropout } = self.noise;
        for (o, &v) in out.iter_mut().zip(x) {
            *o = if dropout > 0.0 && rng.random::<f64>() < dropout {
                0.0
            } else if std > 0.0 {
                v + std * rng.sample::<f64, _>(StandardNormal)
            } else {
                v
            };
        }
    }
}

fn column_means(rows: &[&[f64]]) -> Vec<f64> {
    let d = rows.first().map_or(0, |r| r.len());
    let mut means = vec![0.0; d];
    for r in rows {
        for (m, v) in means.iter_mut().zip(r.iter()) {
            *m += v;
        }
    }
    let n = rows.len() as f64;
    means.iter_mut().for_each(|m| *m /= n);
    means
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut sums = vec![0.0; m.cols];
    for i in 0..m.rows {
        for (s, v) in sums.iter_mut().zip(m.row(i)) {
            *s += v;
        }
    }
    sums
}

/// Mean over features of the population variance across samples.
pub fn reconstruction_variance(outs: &[&[f64]]) -> f64 {
    if outs.is_empty() {
        return 0.0;
    }
    let means = column_means(outs);
    let n = outs.len() as f64;
    let mut total = 0.0;
    for (j, m) in means.iter().enumerate() {
        total += outs.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n;
    }
    total / means.len() as f64
}

fn objective_from_outputs(outs: &[&[f64]], targets: &[&[f64]], eta: f64) -> f64 {
    let n = outs.len() as f64;
    let recon: f64 = outs
        .iter()
        .zip(targets)
        .map(|(o, t)| o.iter().zip(t.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum::<f64>()
        / n;
    if eta == 0.0 {
        recon
    } else {
        recon + eta * reconstruction_variance(outs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedAutoencoder {
    pub model: AutoencoderModel,
    /// Mean denoising objective per epoch.
    pub epoch_loss: Vec<f64>,
}

/// Train on clean-prefix rows with corrupted inputs and clean targets.
pub fn train_autoencoder<R: AsRef<[f64]>>(
    clean_features: &[R],
    cfg: &AeConfig,
    seed: u64,
) -> Result<TrainedAutoencoder> {
    if clean_features.is_empty() {
        return Err(Error::invalid("no clean rows to train the autoencoder on"));
    }
    let dim = clean_features[0].as_ref().len();
    let mut model = AutoencoderModel::init(dim, cfg, rng::derive_seed(seed, 0))?;
    model.check_rows(clean_features)?;
    let mut rng = rng::rng_from_seed(rng::derive_seed(seed, 1));
    let mut order: Vec<usize> = (0..clean_features.len()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut noisy = vec![0.0; cfg.batch_size * dim];

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let targets: Vec<&[f64]> = chunk.iter().map(|&i| clean_features[i].as_ref()).collect();
            let noisy = &mut noisy[..targets.len() * dim];
            for (t, row) in targets.iter().zip(noisy.chunks_exact_mut(dim)) {
                model.corrupt_into(t, row, &mut rng);
            }
            let inputs: Vec<&[f64]> = noisy.chunks_exact(dim).collect();
            let (loss, grad) = model.objective_and_gradient(&inputs, &targets);
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "{:?} autoencoder loss became {loss} in epoch {epoch} (last epoch loss {:?}, step size {})",
                    cfg.variant,
                    epoch_loss.last(),
                    cfg.step_size
                )));
            }
            total += loss * chunk.len() as f64;
            let mut offset = 0;
            for m in model.blocks_mut() {
                let n = m.data.len();
                for (w, g) in m.data.iter_mut().zip(&grad[offset..offset + n]) {
                    *w -= cfg.step_size * g;
                }
                offset += n;
            }
        }
        epoch_loss.push(total / clean_features.len() as f64);
    }
    if !model.is_finite() {
        return Err(Error::Divergence(format!(
            "{:?} autoencoder weights are not finite after training",
            cfg.variant
        )));
    }
    Ok(TrainedAutoencoder { model, epoch_loss })
}

/// `mean batch reconstruction error − train_reference_error`; may be negative.
pub fn reconstruction_drift<R: AsRef<[f64]>>(
    model: &AutoencoderModel,
    batch_features: &[R],
    train_reference_error: f64,
) -> Result<f64> {
    Ok(model.mean_reconstruction_error(batch_features)? - train_reference_error)
}
