//! Focal loss, Adadelta, F1 metrics and the fold / cross-validation loops.

pub mod cv;
pub mod data;
pub mod fold;
pub mod loss;
pub mod metrics;
pub mod optim;

pub use cv::{cross_validate, default_grid, select, CvReport, GridPoint, GridScore};
pub use data::{class_list, Dataset, ParcelSeason, Samples};
pub use fold::{check_disjoint, evaluate, model_config, predict, prepare, train_fold, write_run, EpochRecord, Evaluation, FoldOutcome, Monitor, TrainConfig};
pub use loss::{focal_loss, inverse_frequency_alpha, AlphaPolicy, FocalConfig};
pub use metrics::{binary_f1, macro_f1, F1Report, Metric};
pub use optim::{adadelta_step, AdadeltaConfig, AdadeltaState};
