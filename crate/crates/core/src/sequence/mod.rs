//! Token-level distribution distillation for autoregressive models.
//!
//! A toy task of tag-conditioned Markov chains stands in for a translation
//! corpus. Teachers are softmax next-token models; their product of
//! expectations drives beam search, and every member's per-step
//! distribution becomes a transfer record. The student is an autoregressive
//! Dirichlet model, evaluated with Monte-Carlo sequence-level measures.

pub mod beam;
pub mod distill;
pub mod mc;
pub mod model;
pub mod pipeline;
pub mod task;
pub mod transfer;

pub use beam::{beam_search, greedy, Hypothesis};
pub use distill::{seq_distill, train_teachers, StudentSpec};
pub use mc::{seq_uncertainty_mc, uncertainty_csv, SeqUncertainty};
pub use model::{
    combine_product_of_expectations, ArModel, ArShape, ConstantDirichlet, StepDirichlet,
};
pub use pipeline::{
    run_seq_pipeline, seq_loss_trace_csv, SeqConfig, SeqMetrics, SeqModels, SeqReport,
    TransferConfig,
};
pub use task::{gen_toy_seq_task, MarkovChain, SeqExample, SeqTask, SeqTaskConfig};
pub use transfer::{build_transfer_set, TransferRecord, TransferSet, TransferSource};
