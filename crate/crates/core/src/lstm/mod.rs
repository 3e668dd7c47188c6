//! From-scratch LSTM binary classifier for fixed-length feature sequences.

pub mod activation;
mod checkpoint;
mod config;
mod gemm;
mod network;
mod params;
mod train;

use thiserror::Error;

pub use checkpoint::{decode, encode, load_checkpoint, load_checkpoint_as, save_checkpoint};
pub use config::{dense_layer_params, lstm_layer_params, param_breakdown, param_count, LstmConfig};
pub use network::{backward, forward, gradient_check, loss, predict_proba, sigmoid, ForwardCache, Mode, LOSS_EPS};
pub use params::{Block, Layout, LstmParams};
pub use train::{
    cross_validate, derive_seed, fit, label_for, predict, stratified_split, Adam, Classifier,
    CvOutcome, CvSplit, EpochStats, FitOutcome, FoldOutcome, Prediction, TrainConfig, THRESHOLD,
};

#[derive(Debug, Error)]
pub enum LstmError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("backward pass needs a train-mode forward cache")]
    CacheMode,
    #[error("training data contains a single class")]
    SingleClass,
    #[error("need at least {need} samples, have {have}")]
    InsufficientSamples { have: usize, need: usize },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
