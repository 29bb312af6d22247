//! Desk-scale training and validation harness.

pub mod adam;
pub mod augment;
pub mod inference;
pub mod net;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use augment::{augment, flip_axis, random_crop, AugmentFlags};
pub use inference::{coverage_counts, sliding_window_infer, sliding_window_with, window_starts};
pub use net::{ForwardCache, TinyConvNet, DEFAULT_HIDDEN};
pub use train::{segment, step_loss, train, validate, EpochRecord, History, LossMode, StepRecord, TrainConfig, TrainOutcome};
