//! Collaborative distillation for top-N recommendation with implicit feedback.
//!
//! A large teacher CF model is trained on hard binary labels, then a small
//! student learns from a positive-only CF loss plus a sampled soft-target KD
//! loss. Soft-target items are drawn by rank-aware rejection sampling over the
//! user's unrated items, either from the teacher's ranking (teacher-guided) or
//! the student's own current ranking (student-guided). A rank-distillation
//! baseline, leave-one-out HR/NDCG evaluation and a latency benchmark are
//! included.
//!
//! All numeric code is generic over [`Scalar`]; the aliases below fix the
//! precision used by the CLI.

pub mod config;
pub mod data;
pub mod distill;
pub mod error;
pub mod eval;
pub mod models;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default working precision.
pub type Real = f64;

pub type MfModel = models::MfLogistic<f64>;
pub type MfModel32 = models::MfLogistic<f32>;
pub type CdaeModel = models::CdaeStyle<f64>;
pub type CdaeModel32 = models::CdaeStyle<f32>;
pub type Model = models::AnyModel<f64>;
pub type Model32 = models::AnyModel<f32>;
pub type Optimizer = models::Optimizer<f64>;
pub type SoftTargets = distill::SoftTargetSet<f64>;
