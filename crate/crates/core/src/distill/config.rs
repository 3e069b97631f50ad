use serde::{Deserialize, Serialize};

use super::sampling::{RankScheme, SampleSize};
use crate::error::{Error, Result};

/// Which combined objective the student minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Positive-only CF loss plus `lambda` x soft-target KD loss.
    Cd,
    /// `(1 - rho)` x sampled-negative BCE plus `rho` x weighted top-K log loss.
    Rd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    Linear,
    Exponential { gamma: f64 },
    Random,
    TopK,
}

impl Sampling {
    pub fn rank_scheme(&self) -> Option<RankScheme> {
        match *self {
            Sampling::Linear => Some(RankScheme::Linear),
            Sampling::Exponential { gamma } => Some(RankScheme::Exponential { gamma }),
            Sampling::Random | Sampling::TopK => None,
        }
    }

    pub fn is_rank_aware(&self) -> bool {
        self.rank_scheme().is_some()
    }
}

/// Whose ranking decides the sampled items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tactic {
    TeacherGuided,
    StudentGuided,
}

/// How teacher logits become targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SoftTargetMode {
    /// Tempered logistic `q = sigmoid((z + t2) / t1)`.
    Tempered,
    /// Every selected item becomes a positive (`q = 1`).
    Quantized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResamplePeriod {
    /// Re-select once per user per epoch.
    Epoch,
    /// Re-select when at least this many optimizer steps have passed.
    Steps(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillConfig {
    pub objective: Objective,
    pub lambda: f64,
    pub rho: f64,
    pub t1: f64,
    pub t2: f64,
    pub sample_size: SampleSize,
    pub sampling: Sampling,
    pub tactic: Tactic,
    pub soft_target: SoftTargetMode,
    pub resample: ResamplePeriod,
    pub max_passes: usize,
    /// Hard-label negatives per user per epoch, as a fraction of `|I_u^+|`
    /// (RD objective only).
    pub negative_ratio: f64,
    /// Soft-target list length for the RD variants.
    pub rd_top_k: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            objective: Objective::Cd,
            lambda: 0.5,
            rho: 0.5,
            t1: 2.0,
            t2: 1.0,
            sample_size: SampleSize::FractionOfUnrated(0.5),
            sampling: Sampling::Linear,
            tactic: Tactic::TeacherGuided,
            soft_target: SoftTargetMode::Tempered,
            resample: ResamplePeriod::Epoch,
            max_passes: 10,
            negative_ratio: 0.5,
            rd_top_k: 15,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0, 1], got {}", self.rho));
        }
        if !(self.t1 > 0.0 && self.t1.is_finite()) || !self.t2.is_finite() {
            return bad(format!("temperature needs t1 > 0 and finite t2, got ({}, {})", self.t1, self.t2));
        }
        if let Sampling::Exponential { gamma } = self.sampling {
            if !(gamma > 0.0 && gamma.is_finite()) {
                return bad(format!("exponential sampling needs gamma > 0, got {gamma}"));
            }
        }
        self.sample_size.validate()?;
        if self.max_passes == 0 {
            return bad("max_passes must be at least 1".into());
        }
        if self.resample == ResamplePeriod::Steps(0) {
            return bad("resample period must be at least one step".into());
        }
        if !(self.negative_ratio >= 0.0 && self.negative_ratio.is_finite()) {
            return bad("negative_ratio must be >= 0".into());
        }
        if self.rd_top_k == 0 {
            return bad("rd_top_k must be at least 1".into());
        }
        Ok(())
    }

    /// Whether the KD term is computed at all.
    pub fn uses_kd(&self) -> bool {
        match self.objective {
            Objective::Cd => self.lambda != 0.0,
            Objective::Rd => self.rho != 0.0,
        }
    }
}

/// Named student training recipes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Positive-only CF loss alone (`lambda = 0`).
    Plain,
    /// CD with uniformly random soft-target items.
    CdBase,
    /// CD, teacher ranks and samples.
    CdTg,
    /// CD, student ranks and samples, teacher labels.
    CdSg,
    /// Rank distillation: teacher top-K quantized to positives.
    Rd,
    /// RD losses with rank-aware sampling instead of top-K.
    RdRank,
}

impl Variant {
    pub const ALL: [Variant; 6] =
        [Variant::Plain, Variant::CdBase, Variant::CdTg, Variant::CdSg, Variant::Rd, Variant::RdRank];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::CdBase => "cd-base",
            Variant::CdTg => "cd-tg",
            Variant::CdSg => "cd-sg",
            Variant::Rd => "rd",
            Variant::RdRank => "rd-rank",
        }
    }

    pub fn needs_teacher(&self) -> bool {
        *self != Variant::Plain
    }

    /// Applies the variant on top of `base`. Hyperparameters the variant
    /// does not pin (lambda, rho, temperatures, sample size, gamma,
    /// resample period) are kept; a rank-aware variant keeps the base
    /// sampler if it is rank-aware and falls back to linear otherwise.
    pub fn configure(&self, base: &DistillConfig) -> DistillConfig {
        let rank_aware = if base.sampling.is_rank_aware() { base.sampling } else { Sampling::Linear };
        let mut c = base.clone();
        match self {
            Variant::Plain => {
                c.objective = Objective::Cd;
                c.lambda = 0.0;
            }
            Variant::CdBase => {
                c.objective = Objective::Cd;
                c.sampling = Sampling::Random;
                c.tactic = Tactic::TeacherGuided;
                c.soft_target = SoftTargetMode::Tempered;
            }
            Variant::CdTg | Variant::CdSg => {
                c.objective = Objective::Cd;
                c.sampling = rank_aware;
                c.tactic = if *self == Variant::CdTg { Tactic::TeacherGuided } else { Tactic::StudentGuided };
                c.soft_target = SoftTargetMode::Tempered;
            }
            Variant::Rd | Variant::RdRank => {
                c.objective = Objective::Rd;
                c.sampling = if *self == Variant::Rd { Sampling::TopK } else { rank_aware };
                c.tactic = Tactic::TeacherGuided;
                c.soft_target = SoftTargetMode::Quantized;
                c.sample_size = SampleSize::Count(base.rd_top_k);
            }
        }
        c
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
