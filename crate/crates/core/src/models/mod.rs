//! Point-wise CF models producing a logit `z_ui`, with analytic gradients,
//! optimizers and checkpoints.
//!
//! Parameters of every model live in one flat row-major buffer split into
//! named segments, which keeps the optimizer, checkpointing and
//! finite-difference checks model-agnostic.

mod cdae;
pub mod checkpoint;
mod mf;
mod optim;

use serde::{Deserialize, Serialize};

pub use cdae::CdaeStyle;
pub use checkpoint::{load_checkpoint, read_width, save_checkpoint, CheckpointHeader, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use mf::MfLogistic;
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind, ADAGRAD_EPS};

use crate::error::{Error, Result};
use crate::rng::{stream, Rng, Stream};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Mf,
    Cdae,
}

/// Contiguous slice of the flat parameter buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub name: &'static str,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, r: usize) -> std::ops::Range<usize> {
        let start = self.offset + r * self.cols;
        start..start + self.cols
    }
}

/// Lays segments out back to back.
pub(crate) fn layout(specs: &[(&'static str, usize, usize)]) -> Vec<Segment> {
    let mut offset = 0;
    specs
        .iter()
        .map(|&(name, rows, cols)| {
            let s = Segment { name, offset, rows, cols };
            offset += rows * cols;
            s
        })
        .collect()
}

/// Weighted input vector of a user (CDAE reads the user's positives; MF
/// ignores it).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UserInput<S> {
    pub entries: Vec<(usize, S)>,
}

impl<S: Scalar> UserInput<S> {
    pub fn empty() -> Self {
        UserInput { entries: Vec::new() }
    }

    pub fn from_items(items: &[usize]) -> Self {
        UserInput { entries: items.iter().map(|&i| (i, S::one())).collect() }
    }
}

/// Sparse parameter gradient: non-overlapping blocks of the flat buffer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradient<S> {
    blocks: Vec<(usize, usize, usize)>,
    values: Vec<S>,
}

impl<S: Scalar> Gradient<S> {
    pub fn new() -> Self {
        Gradient { blocks: Vec::new(), values: Vec::new() }
    }

    /// Appends a zeroed block at `offset` and returns it for filling.
    pub fn block_mut(&mut self, offset: usize, len: usize) -> &mut [S] {
        let start = self.values.len();
        self.blocks.push((offset, start, len));
        self.values.resize(start + len, S::zero());
        &mut self.values[start..]
    }

    pub fn push(&mut self, offset: usize, values: &[S]) {
        self.block_mut(offset, values.len()).copy_from_slice(values);
    }

    pub fn blocks(&self) -> impl Iterator<Item = (usize, &[S])> + '_ {
        self.blocks.iter().map(move |&(off, start, len)| (off, &self.values[start..start + len]))
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, k: S) {
        self.values.iter_mut().for_each(|v| *v *= k);
    }

    pub fn to_dense(&self, len: usize) -> Vec<S> {
        let mut out = vec![S::zero(); len];
        for (off, vals) in self.blocks() {
            for (o, &v) in out[off..off + vals.len()].iter_mut().zip(vals) {
                *o += v;
            }
        }
        out
    }
}

/// A point-wise CF model mapping `(user, item)` to a logit.
pub trait CfModel<S: Scalar>: Send + Sync {
    fn kind(&self) -> ModelKind;
    fn num_users(&self) -> usize;
    fn num_items(&self) -> usize;
    fn dim(&self) -> usize;
    fn segments(&self) -> Vec<Segment>;
    fn params(&self) -> &[S];
    fn params_mut(&mut self) -> &mut [S];

    fn param_count(&self) -> usize {
        self.params().len()
    }

    /// Inference-time input for a user with the given training positives.
    fn input(&self, positives: &[usize]) -> UserInput<S>;

    /// Training-time input; may apply stochastic corruption.
    fn training_input(&self, positives: &[usize], rng: &mut Rng) -> UserInput<S>;

    /// Logits for `items`, in order.
    fn logits(&self, user: usize, input: &UserInput<S>, items: &[usize]) -> Result<Vec<S>>;

    /// Logits for every item `0..num_items`.
    fn logits_all(&self, user: usize, input: &UserInput<S>) -> Result<Vec<S>>;

    /// Parameter gradient of a loss whose derivative w.r.t. the logits of
    /// `items` is `dz` (items must be distinct).
    fn backward(&self, user: usize, input: &UserInput<S>, items: &[usize], dz: &[S]) -> Result<Gradient<S>>;

    fn forward_logit(&self, user: usize, input: &UserInput<S>, item: usize) -> Result<S> {
        Ok(self.logits(user, input, &[item])?[0])
    }
}

pub(crate) fn check_index(what: &'static str, index: usize, len: usize) -> Result<()> {
    if index < len {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { what, index, len })
    }
}

pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Fills `out` with i.i.d. `N(0, std^2)` draws, deterministic in `(seed, stream_id)`.
pub fn init_gaussian<S: Scalar>(out: &mut [S], seed: u64, stream_id: u64, std: f64) -> Result<()> {
    use rand_distr::{Distribution, StandardNormal};
    if !(std > 0.0 && std.is_finite()) {
        return Err(Error::Precondition(format!("init std must be positive, got {std}")));
    }
    let mut rng = stream(seed, Stream::Init, stream_id, 0);
    for v in out.iter_mut() {
        let x: f64 = StandardNormal.sample(&mut rng);
        *v = S::of(x * std);
    }
    Ok(())
}

/// Either supported architecture, for checkpoint loading and the CLI.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel<S> {
    Mf(MfLogistic<S>),
    Cdae(CdaeStyle<S>),
}

macro_rules! delegate {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            AnyModel::Mf($m) => $e,
            AnyModel::Cdae($m) => $e,
        }
    };
}

impl<S: Scalar> CfModel<S> for AnyModel<S> {
    fn kind(&self) -> ModelKind {
        delegate!(self, m => m.kind())
    }
    fn num_users(&self) -> usize {
        delegate!(self, m => m.num_users())
    }
    fn num_items(&self) -> usize {
        delegate!(self, m => m.num_items())
    }
    fn dim(&self) -> usize {
        delegate!(self, m => m.dim())
    }
    fn segments(&self) -> Vec<Segment> {
        delegate!(self, m => m.segments())
    }
    fn params(&self) -> &[S] {
        delegate!(self, m => m.params())
    }
    fn params_mut(&mut self) -> &mut [S] {
        delegate!(self, m => m.params_mut())
    }
    fn input(&self, positives: &[usize]) -> UserInput<S> {
        delegate!(self, m => m.input(positives))
    }
    fn training_input(&self, positives: &[usize], rng: &mut Rng) -> UserInput<S> {
        delegate!(self, m => m.training_input(positives, rng))
    }
    fn logits(&self, user: usize, input: &UserInput<S>, items: &[usize]) -> Result<Vec<S>> {
        delegate!(self, m => m.logits(user, input, items))
    }
    fn logits_all(&self, user: usize, input: &UserInput<S>) -> Result<Vec<S>> {
        delegate!(self, m => m.logits_all(user, input))
    }
    fn backward(&self, user: usize, input: &UserInput<S>, items: &[usize], dz: &[S]) -> Result<Gradient<S>> {
        delegate!(self, m => m.backward(user, input, items, dz))
    }
}

/// Architecture and size of a model to build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub dim: usize,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    #[serde(default = "default_corruption")]
    pub corruption_ratio: f64,
}

fn default_init_std() -> f64 {
    1.0
}

fn default_corruption() -> f64 {
    0.1
}

impl ModelSpec {
    pub fn mf(dim: usize) -> Self {
        ModelSpec { kind: ModelKind::Mf, dim, init_std: default_init_std(), corruption_ratio: 0.0 }
    }

    pub fn cdae(dim: usize) -> Self {
        ModelSpec { kind: ModelKind::Cdae, dim, init_std: default_init_std(), corruption_ratio: default_corruption() }
    }

    pub fn with_init_std(mut self, std: f64) -> Self {
        self.init_std = std;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("model dim must be at least 1".into()));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return Err(Error::Config("init_std must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.corruption_ratio) {
            return Err(Error::Config("corruption_ratio must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn build<S: Scalar>(&self, num_users: usize, num_items: usize, seed: u64) -> Result<AnyModel<S>> {
        self.validate()?;
        Ok(match self.kind {
            ModelKind::Mf => AnyModel::Mf(MfLogistic::new(num_users, num_items, self.dim, seed, self.init_std)?),
            ModelKind::Cdae => AnyModel::Cdae(CdaeStyle::new(
                num_users,
                num_items,
                self.dim,
                self.corruption_ratio,
                seed,
                self.init_std,
            )?),
        })
    }

    /// Parameter count of the model this spec builds.
    pub fn param_count(&self, num_users: usize, num_items: usize) -> usize {
        let d = self.dim;
        match self.kind {
            ModelKind::Mf => d * (num_users + num_items) + num_items,
            ModelKind::Cdae => 2 * num_items * d + num_users * d + d + num_items,
        }
    }
}
