//! Soft-target selection for the two training tactics.

use super::config::{DistillConfig, ResamplePeriod, Sampling, SoftTargetMode, Tactic};
use super::loss::tempered_logistic;
use super::sampling::{rank_unrated, sample_random, sample_rank_aware, top_k};
use crate::data::complement;
use crate::error::{Error, Result};
use crate::models::CfModel;
use crate::rng::{stream, Rng, Stream};
use crate::scalar::Scalar;

/// Selected unrated items of one user with the teacher's logits and the
/// targets derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct UserTargets<S> {
    pub items: Vec<usize>,
    pub teacher_logits: Vec<S>,
    pub q: Vec<S>,
}

impl<S: Scalar> UserTargets<S> {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Errors if any selected item is a training positive of `user`.
    pub fn ensure_unrated(&self, user: usize, positives: &[usize]) -> Result<()> {
        match self.items.iter().find(|i| positives.binary_search(i).is_ok()) {
            Some(&item) => Err(Error::Overlap { user, item }),
            None => Ok(()),
        }
    }
}

/// Picks unrated items for `user` using `ranker`'s scores where the
/// sampler needs a ranking.
pub fn select_items<S: Scalar, M: CfModel<S> + ?Sized>(
    ranker: &M,
    user: usize,
    positives: &[usize],
    cfg: &DistillConfig,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    let n_unrated = ranker.num_items() - positives.len();
    let k = cfg.sample_size.resolve(n_unrated, positives.len());
    match cfg.sampling {
        Sampling::Random => Ok(sample_random(&complement(positives, ranker.num_items()), k, rng)),
        sampling => {
            let scores = ranker.logits_all(user, &ranker.input(positives))?;
            let ranked = rank_unrated(&scores, positives);
            match sampling.rank_scheme() {
                Some(scheme) => Ok(sample_rank_aware(&ranked, k, scheme, cfg.max_passes, rng)),
                None => top_k(&ranked, k),
            }
        }
    }
}

/// Queries the teacher for `items` and converts logits to targets.
pub fn label_items<S: Scalar, T: CfModel<S> + ?Sized>(
    teacher: &T,
    user: usize,
    positives: &[usize],
    items: Vec<usize>,
    cfg: &DistillConfig,
) -> Result<UserTargets<S>> {
    let teacher_logits = teacher.logits(user, &teacher.input(positives), &items)?;
    let (t1, t2) = (S::of(cfg.t1), S::of(cfg.t2));
    let q = match cfg.soft_target {
        SoftTargetMode::Tempered => teacher_logits.iter().map(|&z| tempered_logistic(z, t1, t2)).collect(),
        SoftTargetMode::Quantized => vec![S::one(); items.len()],
    };
    Ok(UserTargets { items, teacher_logits, q })
}

/// Teacher ranks and samples; teacher labels.
pub fn select_teacher_guided<S: Scalar, T: CfModel<S> + ?Sized>(
    teacher: &T,
    user: usize,
    positives: &[usize],
    cfg: &DistillConfig,
    rng: &mut Rng,
) -> Result<UserTargets<S>> {
    let items = select_items(teacher, user, positives, cfg, rng)?;
    label_items(teacher, user, positives, items, cfg)
}

/// Student ranks and samples by its current scores; teacher labels.
pub fn select_student_guided<S: Scalar, St: CfModel<S> + ?Sized, T: CfModel<S> + ?Sized>(
    student: &St,
    teacher: &T,
    user: usize,
    positives: &[usize],
    cfg: &DistillConfig,
    rng: &mut Rng,
) -> Result<UserTargets<S>> {
    let items = select_items(student, user, positives, cfg, rng)?;
    label_items(teacher, user, positives, items, cfg)
}

/// Per-user cache of the current soft targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftTargetSet<S> {
    entries: Vec<Option<(UserTargets<S>, u64, u64)>>,
}

impl<S: Scalar> SoftTargetSet<S> {
    pub fn new(num_users: usize) -> Self {
        SoftTargetSet { entries: vec![None; num_users] }
    }

    pub fn get(&self, user: usize) -> Option<&UserTargets<S>> {
        self.entries.get(user)?.as_ref().map(|(t, _, _)| t)
    }

    pub fn num_users(&self) -> usize {
        self.entries.len()
    }
}

/// Drives selection for a training run: applies the configured tactic and
/// refreshes each user's targets once per resample period.
pub struct Selector<S> {
    cfg: DistillConfig,
    seed: u64,
    cache: SoftTargetSet<S>,
    refreshes: u64,
}

impl<S: Scalar> Selector<S> {
    pub fn new(cfg: &DistillConfig, seed: u64, num_users: usize) -> Self {
        Selector { cfg: cfg.clone(), seed, cache: SoftTargetSet::new(num_users), refreshes: 0 }
    }

    pub fn soft_targets(&self) -> &SoftTargetSet<S> {
        &self.cache
    }

    /// Number of times any user's targets were (re)computed.
    pub fn refreshes(&self) -> u64 {
        self.refreshes
    }

    fn stale(&self, user: usize, epoch: u64, step: u64) -> bool {
        match &self.cache.entries[user] {
            None => true,
            Some((_, e, s)) => match self.cfg.resample {
                ResamplePeriod::Epoch => *e != epoch,
                ResamplePeriod::Steps(n) => step.saturating_sub(*s) >= n,
            },
        }
    }

    /// Current targets of `user` at (`epoch`, global `step`).
    #[allow(clippy::too_many_arguments)]
    pub fn select<T: CfModel<S> + ?Sized, St: CfModel<S> + ?Sized>(
        &mut self,
        teacher: &T,
        student: &St,
        user: usize,
        positives: &[usize],
        epoch: u64,
        step: u64,
    ) -> Result<&UserTargets<S>> {
        if user >= self.cache.entries.len() {
            return Err(Error::IndexOutOfRange { what: "user", index: user, len: self.cache.entries.len() });
        }
        if self.stale(user, epoch, step) {
            let mut rng = stream(self.seed, Stream::Selection, user as u64, step);
            let targets = match self.cfg.tactic {
                Tactic::TeacherGuided => select_teacher_guided(teacher, user, positives, &self.cfg, &mut rng)?,
                Tactic::StudentGuided => {
                    select_student_guided(student, teacher, user, positives, &self.cfg, &mut rng)?
                }
            };
            targets.ensure_unrated(user, positives)?;
            self.cache.entries[user] = Some((targets, epoch, step));
            self.refreshes += 1;
        }
        Ok(self.cache.get(user).unwrap())
    }
}
