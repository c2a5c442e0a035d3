//! Desk-scale classification: train a softmax ensemble on Gaussian blobs,
//! distil it into single students, and compare prediction quality and OOD
//! detection.

pub mod checkpoint;
pub mod data;
pub mod pipeline;

pub use data::{gen_synthetic, DataConfig, SyntheticDataset};
pub use pipeline::{
    distill, evaluate, run_pipeline, train_ensemble, ClassifyConfig, ClassifyReport, DistillConfig,
    DistillMode, EvalMetrics, Evaluated,
};
