//! Learnable local-feature aggregation.
//!
//! A sample is a bag of local descriptors. An aggregation function maps each
//! descriptor through a differentiable encoder (soft bag-of-words, Mahalanobis
//! soft assignment, or soft VLAD) and averages the encodings into one global
//! vector. The encoder parameters (codebook and per-codeword diagonal
//! precisions) are trained jointly with a softmax classifier by backpropagating
//! the classification loss through the mean, using a random subsample of each
//! bag's descriptors per step.
//!
//! Module map:
//!
//! * [`encoders`]: forward evaluation of the encoders and the bag-level mean.
//! * [`gradients`]: analytic backward pass to codebook and log-precisions.
//! * [`init`]: random, K-Means and diagonal GMM initialization.
//! * [`classifier`]: softmax cross-entropy, the explicit chi-squared map, SGD fitting.
//! * [`trainer`]: the three-phase training loop and evaluation.
//! * [`data`]: synthetic generators, the bag container and model file formats, splits.
//! * [`plot`]: SVG/CSV exports of codebooks and training curves.
//! * [`gradcheck`]: finite-difference verification harness for the whole chain.

pub mod classifier;
pub mod data;
pub mod encoders;
mod error;
pub mod gradcheck;
pub mod gradients;
pub mod init;
mod linalg;
pub mod plot;
pub mod rng;
pub mod trainer;

pub use classifier::{ClassifierParams, FeatureMapConfig};
pub use encoders::{AggregatorParams, Codebook, EncodedVector, EncoderKind, FeatureBag, PrecisionBank};
pub use error::{Error, Result};
pub use gradients::{ParamGradients, Subsample, SubsampleSpec};
pub use init::InitMode;
pub use linalg::Matrix;
pub use trainer::{EpochMetrics, TrainedModel, TrainingConfig};
