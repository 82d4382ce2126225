//! Reverse-mode differentiation, finite-difference checks, Adam and the
//! offset-predictor training loop.

mod checkpoint;
mod fd;
mod model;
mod optim;
pub mod suite;
mod tape;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointEntry, CHECKPOINT_MANIFEST};
pub use fd::{directional_check, fd_check, graph_gradients, numeric_gradient, relative_error, GraphCheck};
pub use model::{
    collect_grads, distribution_graph, dsm_graph, extractor_graph, ssm_graph, DsmGraph, ExtractorVars, PredictorVars,
};
pub use optim::{Adam, AdamConfig, LrSchedule};
pub use tape::{DiffNode, Gradients, Tape, Var};
pub use train::{
    evaluate_lag_accuracy, evaluate_ssm_loss, train_offset_predictor, LagSummary, SyncModel, TrainConfig,
    TrainLogRecord, TrainingSample,
};
