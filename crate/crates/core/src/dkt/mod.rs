//! Deep knowledge tracing: an LSTM over one-hot interactions whose sigmoid
//! outputs estimate per-skill correctness, trained on the next-step
//! cross-entropy plus optional reconstruction and waviness regularizers
//! (DKT+).

pub mod checkpoint;
mod gradcheck;
pub mod loss;
mod network;
mod params;
mod train;

pub use gradcheck::{gradient_check, GradientCheck};
pub use loss::{
    cross_entropy, loss_prediction, loss_total, regularizer_r, regularizer_w, Lambdas, LossBatch,
    LossTerms,
};
pub use network::{backward, forward, forward_trace, Dropout, ForwardTrace};
pub use params::{DktParams, ARRAY_NAMES};
pub use train::{
    batch_gradient, evaluate_terms, next_step_auc, next_step_predictions, split_validation,
    train, DktModel, EpochRecord, Optimizer, TrainConfig, TrainingLog,
};
