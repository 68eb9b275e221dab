//! Distributional drift per batch: PSI and JSD on shared-bin histograms,
//! denoising and attention autoencoder reconstruction, and the normalized
//! drift score.

pub mod attention;
pub mod autoencoder;
pub mod histogram;
pub mod linalg;
mod score;

pub use attention::attention;
pub use autoencoder::{
    reconstruction_drift, train_autoencoder, AeConfig, AutoencoderModel, TrainedAutoencoder, Variant,
};
pub use histogram::{build_histogram, jsd, psi, Histogram};
pub use linalg::Matrix;
pub use score::{drift_score, Divergences, DriftNormalizer, DriftReference, MetricSample, ScoreFloors, ScoreWeights};
