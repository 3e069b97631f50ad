//! Run configuration shared by the command-line tools: data preparation,
//! teacher and student training, evaluation, and hyperparameter grids.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::synthetic::BlockSpec;
use crate::data::TextFormat;
use crate::distill::{DistillConfig, SampleSize, Sampling, StudentConfig, TeacherConfig, Variant};
use crate::error::{Error, Result};
use crate::eval::{DEFAULT_CUTOFF, DEFAULT_WARMUP};
use crate::models::{ModelKind, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// Where interactions come from and how they are cleaned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Raw `user, item, [rating,] timestamp` file; ignored when `synthetic` is set.
    pub input: Option<PathBuf>,
    /// Inferred from the file extension when absent.
    pub format: Option<TextFormat>,
    pub has_header: bool,
    pub min_user: usize,
    pub min_item: usize,
    pub synthetic: Option<BlockSpec>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { input: None, format: None, has_header: false, min_user: 10, min_item: 5, synthetic: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherSection {
    pub model: ModelSpec,
    pub train: TeacherConfig,
}

impl Default for TeacherSection {
    fn default() -> Self {
        TeacherSection { model: ModelSpec::mf(32).with_init_std(0.1), train: TeacherConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudentSection {
    pub model: ModelSpec,
    pub train: StudentConfig,
    /// Teacher checkpoint used by every variant except `plain`.
    pub teacher_checkpoint: Option<PathBuf>,
}

impl Default for StudentSection {
    fn default() -> Self {
        StudentSection { model: ModelSpec::mf(4).with_init_std(0.1), train: StudentConfig::default(), teacher_checkpoint: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub cutoff: usize,
    /// Latency repetitions recorded by `evaluate`; 0 leaves latency out of
    /// the report so it stays reproducible.
    pub latency_reps: usize,
    pub warmup: usize,
    /// Users scored per latency repetition; all test users when absent.
    pub latency_users: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { cutoff: DEFAULT_CUTOFF, latency_reps: 0, warmup: DEFAULT_WARMUP, latency_users: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub precision: Precision,
    pub data: DataConfig,
    pub teacher: TeacherSection,
    pub student: StudentSection,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.min_user == 0 || self.data.min_item == 0 {
            return Err(Error::Config("min_user and min_item must be at least 1".into()));
        }
        self.teacher.model.validate()?;
        self.teacher.train.validate()?;
        self.student.model.validate()?;
        self.student.train.validate()?;
        if self.eval.cutoff == 0 {
            return Err(Error::Config("eval cutoff must be at least 1".into()));
        }
        Ok(())
    }

    /// Propagates the run seed into every training section.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.teacher.train.seed = seed;
        self.student.train.seed = seed;
        if let Some(s) = self.data.synthetic.as_mut() {
            s.seed = seed;
        }
        self
    }
}

/// Student size relative to the teacher's parameter count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SizeLabel {
    XS,
    S,
    M,
}

impl SizeLabel {
    pub fn fraction(self) -> f64 {
        match self {
            SizeLabel::XS => 0.1,
            SizeLabel::S => 0.2,
            SizeLabel::M => 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StudentSize {
    Dim(usize),
    Label(SizeLabel),
}

impl fmt::Display for StudentSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StudentSize::Dim(d) => write!(f, "d{d}"),
            StudentSize::Label(l) => write!(f, "{l:?}"),
        }
    }
}

/// Largest dimension whose `kind` model has at most `fraction` of
/// `teacher_params` parameters; at least 1.
pub fn dim_for_fraction(kind: ModelKind, teacher_params: usize, num_users: usize, num_items: usize, fraction: f64) -> usize {
    let budget = fraction * teacher_params as f64;
    let (per_dim, fixed) = match kind {
        ModelKind::Mf => (num_users + num_items, num_items),
        ModelKind::Cdae => (2 * num_items + num_users + 1, num_items),
    };
    (((budget - fixed as f64) / per_dim as f64).floor() as i64).max(1) as usize
}

/// Grid over student hyperparameters. Empty axes keep the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: RunConfig,
    #[serde(default = "default_sweep_variants")]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub lambda: Vec<f64>,
    /// Sampling ratio over unrated items.
    #[serde(default)]
    pub delta: Vec<f64>,
    #[serde(default)]
    pub t1: Vec<f64>,
    #[serde(default)]
    pub t2: Vec<f64>,
    /// Exponential sampler slopes; switches rank-aware variants to it.
    #[serde(default)]
    pub gamma: Vec<f64>,
    #[serde(default)]
    pub student_size: Vec<StudentSize>,
    /// Latency repetitions per cell; 0 skips the latency columns.
    #[serde(default)]
    pub latency_reps: usize,
}

fn default_sweep_variants() -> Vec<Variant> {
    vec![Variant::CdTg]
}

/// One point of a sweep grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub variant: Variant,
    pub lambda: Option<f64>,
    pub delta: Option<f64>,
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    pub gamma: Option<f64>,
    pub size: Option<StudentSize>,
}

impl SweepCell {
    pub fn label(&self) -> String {
        let mut s = self.variant.name().to_string();
        let mut add = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                s.push_str(&format!("_{k}{v}"));
            }
        };
        add("lambda", self.lambda.map(|v| v.to_string()));
        add("delta", self.delta.map(|v| v.to_string()));
        add("t1-", self.t1.map(|v| v.to_string()));
        add("t2-", self.t2.map(|v| v.to_string()));
        add("gamma", self.gamma.map(|v| v.to_string()));
        add("size-", self.size.map(|v| v.to_string()));
        s
    }

    /// Student model spec and training config of this cell.
    pub fn apply(&self, base: &RunConfig, num_users: usize, num_items: usize) -> Result<(ModelSpec, StudentConfig)> {
        let mut train = base.student.train.clone();
        let d: &mut DistillConfig = &mut train.distill;
        if let Some(v) = self.lambda {
            d.lambda = v;
        }
        if let Some(v) = self.delta {
            d.sample_size = SampleSize::FractionOfUnrated(v);
        }
        if let Some(v) = self.t1 {
            d.t1 = v;
        }
        if let Some(v) = self.t2 {
            d.t2 = v;
        }
        if let Some(gamma) = self.gamma {
            d.sampling = Sampling::Exponential { gamma };
        }
        train.distill = self.variant.configure(&train.distill);
        train.validate()?;
        let mut model = base.student.model.clone();
        match self.size {
            Some(StudentSize::Dim(dim)) => model.dim = dim,
            Some(StudentSize::Label(l)) => {
                let teacher_params = base.teacher.model.param_count(num_users, num_items);
                model.dim = dim_for_fraction(model.kind, teacher_params, num_users, num_items, l.fraction());
            }
            None => {}
        }
        model.validate()?;
        Ok((model, train))
    }
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SweepConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base.validate()?;
        if cfg.variants.is_empty() {
            return Err(Error::Config("sweep needs at least one variant".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SweepConfig::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Cartesian product of all axes, variants outermost.
    pub fn cells(&self) -> Vec<SweepCell> {
        fn axis<T: Copy>(v: &[T]) -> Vec<Option<T>> {
            if v.is_empty() {
                vec![None]
            } else {
                v.iter().copied().map(Some).collect()
            }
        }
        let mut out = Vec::new();
        for &variant in &self.variants {
            for lambda in axis(&self.lambda) {
                for delta in axis(&self.delta) {
                    for t1 in axis(&self.t1) {
                        for t2 in axis(&self.t2) {
                            for gamma in axis(&self.gamma) {
                                for size in axis(&self.student_size) {
                                    out.push(SweepCell { variant, lambda, delta, t1, t2, gamma, size });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}
