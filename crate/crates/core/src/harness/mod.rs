//! Training, evaluation and ablation around [`crate::model::FusionModel`].

pub mod ablation;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod eval;
pub mod metrics;
pub mod optim;
pub mod plot;
pub mod schedule;
pub mod train;

pub use ablation::{run_ablation, AblationTable};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{EvalMaskMode, TrainConfig};
pub use eval::{evaluate, evaluate_prepared, EvalResult};
pub use metrics::{auc, roc_points, trapezoid_area, AucValue};
pub use schedule::cosine_lr;
pub use train::{train, train_from_manifest, LogRecord, TrainOutcome};
