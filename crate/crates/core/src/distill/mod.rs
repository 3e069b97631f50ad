//! Distillation losses, tempered soft targets, rank-aware sampling, the
//! teacher-/student-guided tactics and the training loops built on them.

pub mod config;
pub mod loss;
pub mod sampling;
pub mod select;
pub mod train;

pub use config::{DistillConfig, Objective, ResamplePeriod, Sampling, SoftTargetMode, Tactic, Variant};
pub use loss::{
    cf_loss_cd, kd_loss_cd, kd_loss_rd, pointwise_bce, tempered_logistic, total_loss_cd, total_loss_rd, uniform_weights,
    Loss,
    PROB_EPS,
};
pub use sampling::{
    rank_unrated, sample_exponential, sample_linear, sample_random, sample_rank_aware, top_k, AcceptStream, RankScheme, RankedItemList, SampleSize,
};
pub use select::{select_student_guided, select_teacher_guided, Selector, SoftTargetSet, UserTargets};
pub use train::{
    student_objective, teacher_objective, train_student, train_teacher, StudentConfig, TeacherConfig, TraceRecord,
    UserObjective,
};
