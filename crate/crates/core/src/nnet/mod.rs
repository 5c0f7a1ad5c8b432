//! Two-head row-anchor network.
//!
//! A small convolutional backbone produces a `D`-dimensional feature vector.
//! The location head maps it to `((w+1), h, C, n)` logits (one cell
//! classification per track, anchor row and anchor group); the perspective
//! head maps it to `n` group logits. Gradients are written out by hand for
//! each layer and checked against central differences in [`gradcheck`].

mod gradcheck;
mod layers;
mod loss;
mod model;
mod optim;
mod tensor;
pub mod train;

pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use layers::ConvGeom;
pub use loss::{hcl_loss, pi_loss, softmax, total_loss, LossBreakdown};
pub use model::{
    forward, infer, loss_and_gradients, Activation, BatchPrediction, ForwardCache, Gradients,
    ModelConfig, ModelParams, Param, ParamGroup, StageConfig,
};
pub use optim::{adam_step, cosine_lr, AdamConfig, AdamState};
pub use tensor::Tensor;
pub use train::{
    evaluate, predict, preprocess, train, EpochMetrics, EvalContext, TrainObserver, TrainOutcome,
    TrainSample, TrainSchedule, INPUT_MEAN, INPUT_STD,
};
