//! Layerwise gradient descent, hyperparameters and recovery checks.

mod hyper;
mod recovery;
mod trainer;

pub use hyper::{derive_hyperparams, max_eta, min_width, GradientSource, TrainConfig, Variant, DEFAULT_STEP_CAP};
pub use recovery::{sign_map_from_correlations, verify_recovery, GateCheck, LevelCheck, RecoveryReport, SignMap};
pub use trainer::{
    train_layerwise, train_on_samples, AlignmentReport, AlignmentTarget, LayerTrace, StopReason, TrainOutcome,
};
