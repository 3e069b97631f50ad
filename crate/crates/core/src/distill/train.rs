//! Teacher and student training loops.
//!
//! One optimizer step per user visit; users are visited in a seeded random
//! order each epoch. All randomness comes from per-(user, epoch) streams.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{DistillConfig, Objective};
use super::loss::{cf_loss_cd, kd_loss_cd, kd_loss_rd, pointwise_bce, total_loss_cd, total_loss_rd, uniform_weights};
use super::sampling::sample_unrated;
use super::select::{Selector, UserTargets};
use crate::data::InteractionDataset;
use crate::error::{Error, Result};
use crate::models::{CfModel, Optimizer, OptimizerConfig, UserInput};
use crate::rng::{stream, Stream};
use crate::scalar::Scalar;

/// One line of a loss trace: per-user mean losses over an epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub epoch: usize,
    pub step: u64,
    pub cf_loss: f64,
    pub kd_loss: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherConfig {
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    /// Uniform negatives per user per epoch, as a fraction of `|I_u^+|`.
    pub negative_ratio: f64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig { epochs: 50, seed: 0, optimizer: OptimizerConfig::default(), negative_ratio: 0.5 }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if !(self.negative_ratio >= 0.0 && self.negative_ratio.is_finite()) {
            return Err(Error::Config("negative_ratio must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudentConfig {
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub distill: DistillConfig,
}

impl Default for StudentConfig {
    fn default() -> Self {
        StudentConfig { epochs: 50, seed: 0, optimizer: OptimizerConfig::default(), distill: DistillConfig::default() }
    }
}

impl StudentConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.distill.validate()
    }
}

/// Loss of one user with `dL/dz` merged per distinct item.
#[derive(Debug, Clone, PartialEq)]
pub struct UserObjective<S> {
    pub cf: S,
    pub kd: S,
    pub total: S,
    pub items: Vec<usize>,
    pub dz: Vec<S>,
}

/// Sums gradient contributions per item, sorted by item.
fn merge<S: Scalar>(mut pairs: Vec<(usize, S)>) -> (Vec<usize>, Vec<S>) {
    pairs.sort_by_key(|&(i, _)| i);
    let mut items: Vec<usize> = Vec::with_capacity(pairs.len());
    let mut dz: Vec<S> = Vec::with_capacity(pairs.len());
    for (i, g) in pairs {
        if items.last() == Some(&i) {
            *dz.last_mut().unwrap() += g;
        } else {
            items.push(i);
            dz.push(g);
        }
    }
    (items, dz)
}

fn scaled<'a, S: Scalar>(items: &'a [usize], dz: &'a [S], k: S) -> impl Iterator<Item = (usize, S)> + 'a {
    items.iter().copied().zip(dz.iter().map(move |&g| g * k))
}

/// Hard-label objective: BCE on positives and sampled negatives.
pub fn teacher_objective<S: Scalar, M: CfModel<S> + ?Sized>(
    model: &M,
    user: usize,
    input: &UserInput<S>,
    positives: &[usize],
    negatives: &[usize],
) -> Result<UserObjective<S>> {
    let pz = model.logits(user, input, positives)?;
    let nz = model.logits(user, input, negatives)?;
    let l = pointwise_bce(&pz, &nz)?;
    let all: Vec<usize> = positives.iter().chain(negatives).copied().collect();
    let (items, dz) = merge(scaled(&all, &l.dz, S::one()).collect());
    Ok(UserObjective { cf: l.value, kd: S::zero(), total: l.value, items, dz })
}

/// Student objective for one user.
///
/// CD: `cf_loss_cd(I_u^+) + lambda * kd_loss_cd(targets)`.
/// RD: `(1 - rho) * bce(I_u^+, negatives) + rho * kd_loss_rd(targets, 1/K)`.
/// `targets = None` drops the KD term.
pub fn student_objective<S: Scalar, M: CfModel<S> + ?Sized>(
    student: &M,
    user: usize,
    input: &UserInput<S>,
    positives: &[usize],
    negatives: &[usize],
    targets: Option<&UserTargets<S>>,
    cfg: &DistillConfig,
) -> Result<UserObjective<S>> {
    let pz = student.logits(user, input, positives)?;
    let tz = match targets {
        Some(t) => {
            t.ensure_unrated(user, positives)?;
            student.logits(user, input, &t.items)?
        }
        None => Vec::new(),
    };
    let mut pairs = Vec::new();
    let (cf, kd, total) = match cfg.objective {
        Objective::Cd => {
            let lambda = S::of(cfg.lambda);
            let cf = cf_loss_cd(&pz);
            pairs.extend(scaled(positives, &cf.dz, S::one()));
            let kd = match targets {
                Some(t) => {
                    let kd = kd_loss_cd(&tz, &t.q)?;
                    pairs.extend(scaled(&t.items, &kd.dz, lambda));
                    kd.value
                }
                None => S::zero(),
            };
            (cf.value, kd, total_loss_cd(cf.value, kd, lambda))
        }
        Objective::Rd => {
            let rho = S::of(cfg.rho);
            let nz = student.logits(user, input, negatives)?;
            let cf = pointwise_bce(&pz, &nz)?;
            let all: Vec<usize> = positives.iter().chain(negatives).copied().collect();
            pairs.extend(scaled(&all, &cf.dz, S::one() - rho));
            let kd = match targets {
                Some(t) if !t.is_empty() => {
                    let kd = kd_loss_rd(&tz, &uniform_weights(t.len()))?;
                    pairs.extend(scaled(&t.items, &kd.dz, rho));
                    kd.value
                }
                _ => S::zero(),
            };
            (cf.value, kd, total_loss_rd(cf.value, kd, rho))
        }
    };
    let (items, dz) = merge(pairs);
    Ok(UserObjective { cf, kd, total, items, dz })
}

fn negatives_for(num_items: usize, positives: &[usize], ratio: f64, seed: u64, user: usize, epoch: usize) -> Vec<usize> {
    let k = (ratio * positives.len() as f64).ceil() as usize;
    let mut rng = stream(seed, Stream::Negatives, user as u64, epoch as u64);
    let mut neg = sample_unrated(num_items, positives, k, &mut rng);
    neg.sort_unstable();
    neg
}

fn user_order(num_users: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..num_users).collect();
    order.shuffle(&mut stream(seed, Stream::Shuffle, 0, epoch as u64));
    order
}

fn check_shapes<S: Scalar, M: CfModel<S> + ?Sized>(model: &M, data: &InteractionDataset) -> Result<()> {
    if model.num_users() != data.num_users() || model.num_items() != data.num_items() {
        return Err(Error::Precondition(format!(
            "model is {}x{} but data is {}x{}",
            model.num_users(),
            model.num_items(),
            data.num_users(),
            data.num_items()
        )));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset(": no training interactions".into()));
    }
    Ok(())
}

struct EpochAcc {
    cf: f64,
    kd: f64,
    total: f64,
    users: usize,
}

impl EpochAcc {
    fn new() -> Self {
        EpochAcc { cf: 0.0, kd: 0.0, total: 0.0, users: 0 }
    }

    fn add<S: Scalar>(&mut self, o: &UserObjective<S>) {
        self.cf += o.cf.f64();
        self.kd += o.kd.f64();
        self.total += o.total.f64();
        self.users += 1;
    }

    fn record(&self, epoch: usize, step: u64) -> TraceRecord {
        let n = self.users.max(1) as f64;
        TraceRecord { epoch, step, cf_loss: self.cf / n, kd_loss: self.kd / n, total: self.total / n }
    }
}

/// Restores `params` and reports divergence.
fn diverged<S: Scalar>(params: &mut [S], good: &[S], epoch: usize, msg: String) -> Error {
    params.copy_from_slice(good);
    Error::Divergence { epoch, msg }
}

/// Trains a model on hard labels (positives plus uniform negatives).
///
/// On a non-finite loss or gradient the parameters are rolled back to the
/// start of the failing epoch and [`Error::Divergence`] is returned.
pub fn train_teacher<S: Scalar, M: CfModel<S> + ?Sized>(
    model: &mut M,
    data: &InteractionDataset,
    cfg: &TeacherConfig,
) -> Result<Vec<TraceRecord>> {
    cfg.validate()?;
    check_shapes(model, data)?;
    let mut opt = Optimizer::new(&cfg.optimizer, model.param_count());
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let good = model.params().to_vec();
        let mut acc = EpochAcc::new();
        for user in user_order(data.num_users(), cfg.seed, epoch) {
            let positives = data.positives(user);
            if positives.is_empty() {
                continue;
            }
            step += 1;
            let negatives = negatives_for(data.num_items(), positives, cfg.negative_ratio, cfg.seed, user, epoch);
            let input =
                model.training_input(positives, &mut stream(cfg.seed, Stream::Corruption, user as u64, epoch as u64));
            let obj = teacher_objective(model, user, &input, positives, &negatives)?;
            if !obj.total.is_finite() {
                return Err(diverged(model.params_mut(), &good, epoch, "non-finite loss".into()));
            }
            let grad = model.backward(user, &input, &obj.items, &obj.dz)?;
            if let Err(e) = opt.step(model.params_mut(), &grad) {
                return Err(diverged(model.params_mut(), &good, epoch, e.to_string()));
            }
            acc.add(&obj);
        }
        let rec = acc.record(epoch, step);
        log::info!("teacher epoch {epoch}: loss {:.5}", rec.total);
        trace.push(rec);
    }
    Ok(trace)
}

/// Trains a student with the configured distillation objective and tactic.
///
/// A user whose soft-target selection fails is trained on the CF term only
/// for that step and a warning is logged.
pub fn train_student<S: Scalar, St: CfModel<S> + ?Sized, T: CfModel<S> + ?Sized>(
    student: &mut St,
    teacher: Option<&T>,
    data: &InteractionDataset,
    cfg: &StudentConfig,
) -> Result<Vec<TraceRecord>> {
    cfg.validate()?;
    check_shapes(student, data)?;
    let dc = &cfg.distill;
    let teacher = match (dc.uses_kd(), teacher) {
        (false, _) => None,
        (true, Some(t)) => {
            check_shapes(t, data)?;
            Some(t)
        }
        (true, None) => return Err(Error::Precondition("distillation needs a teacher model".into())),
    };
    let mut opt = Optimizer::new(&cfg.optimizer, student.param_count());
    let mut selector = Selector::<S>::new(dc, cfg.seed, data.num_users());
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;
    let mut warned = 0usize;
    for epoch in 0..cfg.epochs {
        let good = student.params().to_vec();
        let mut acc = EpochAcc::new();
        for user in user_order(data.num_users(), cfg.seed, epoch) {
            let positives = data.positives(user);
            if positives.is_empty() {
                continue;
            }
            step += 1;
            let targets = match teacher {
                Some(t) => match selector.select(t, &*student, user, positives, epoch as u64, step) {
                    Ok(targets) => Some(targets.clone()),
                    Err(e) => {
                        if warned < 10 {
                            log::warn!("user {user}: soft-target selection failed ({e}); KD term skipped");
                        }
                        warned += 1;
                        None
                    }
                },
                None => None,
            };
            let negatives = match dc.objective {
                Objective::Rd => negatives_for(data.num_items(), positives, dc.negative_ratio, cfg.seed, user, epoch),
                Objective::Cd => Vec::new(),
            };
            let input = student
                .training_input(positives, &mut stream(cfg.seed, Stream::Corruption, user as u64, epoch as u64));
            let obj = student_objective(&*student, user, &input, positives, &negatives, targets.as_ref(), dc)?;
            if !obj.total.is_finite() {
                return Err(diverged(student.params_mut(), &good, epoch, "non-finite loss".into()));
            }
            let grad = student.backward(user, &input, &obj.items, &obj.dz)?;
            if let Err(e) = opt.step(student.params_mut(), &grad) {
                return Err(diverged(student.params_mut(), &good, epoch, e.to_string()));
            }
            acc.add(&obj);
        }
        let rec = acc.record(epoch, step);
        log::info!(
            "student epoch {epoch}: cf {:.5} kd {:.5} total {:.5}",
            rec.cf_loss,
            rec.kd_loss,
            rec.total
        );
        trace.push(rec);
    }
    if warned > 0 {
        log::warn!("{warned} soft-target selections failed during training");
    }
    Ok(trace)
}
