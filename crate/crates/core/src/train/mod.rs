//! Teacher pretraining, prosody-distillation student training and the
//! baselines, with the ablation switches exposed through [`TrainConfig`].

mod config;
mod log;
mod loss;
mod trainer;

pub use config::{DistillLevel, DistillParts, MtlScheme, TeacherSource, TrainConfig};
pub use log::{early_stop, EpochRecord, TrainLog};
pub use loss::{distillation_loss, mtl_weights, LossBreakdown, TeacherTargets};
pub use trainer::{
    accuracy, fit, resolve_teacher, train, train_baseline, train_student, train_teacher, Observer, StepInfo,
    Teacher, TrainOutput,
};
