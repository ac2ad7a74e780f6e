//! Losses, optimizer, metrics and the training loops.

pub mod early_stop;
pub mod loss;
pub mod metrics;
pub mod optim;
pub mod repeats;
pub mod trainer;

pub use early_stop::EarlyStop;
pub use loss::{masked_cross_entropy, multilabel_bce, penalty, penalty_value, PenaltyCoefs};
pub use metrics::{accuracy, argmax, micro_f1, F1Counts};
pub use optim::{adam_step, OptimConfig, OptimState};
pub use repeats::{mean_std, run_repeats, sweep_csv, sweep_depth, RepeatSummary, SweepRow};
pub use trainer::{
    evaluate, prepare_bundle, train, train_inductive, train_transductive, weight_norm_sq, EpochRecord,
    GraphAccess, Phase, SplitMetrics, TrainOutcome, TrainReport,
};
