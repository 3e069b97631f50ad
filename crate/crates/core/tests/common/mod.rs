//! Fixtures and checkers shared by the integration suites.
#![allow(dead_code)]

use cdistill::data::{Interaction, InteractionDataset, SplitDataset};
use cdistill::distill::{
    cf_loss_cd, kd_loss_cd, kd_loss_rd, pointwise_bce, student_objective, uniform_weights, DistillConfig, Objective,
    UserTargets,
};
use cdistill::models::{AnyModel, CdaeStyle, CfModel, MfLogistic, ModelKind, UserInput};
use cdistill::rng::seeded;
use rand::seq::SliceRandom;
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;
/// Denominator floor of the relative error, so that gradients that are
/// zero up to rounding are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

pub fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn dataset(num_users: usize, num_items: usize, lists: &[Vec<usize>]) -> InteractionDataset {
    let inter = lists
        .iter()
        .enumerate()
        .flat_map(|(u, l)| l.iter().map(move |&i| Interaction { user: u, item: i, timestamp: 0 }));
    InteractionDataset::from_interactions(ids("u", num_users), ids("i", num_items), inter).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    PointwiseBce,
    CfLossCd,
    KdLossCd,
    KdLossRd,
    TotalCd,
    TotalRd,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::PointwiseBce,
        LossKind::CfLossCd,
        LossKind::KdLossCd,
        LossKind::KdLossRd,
        LossKind::TotalCd,
        LossKind::TotalRd,
    ];
}

/// One user's slice of a gradient-check instance.
#[derive(Debug, Clone)]
pub struct UserCase {
    pub user: usize,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
    pub targets: Vec<usize>,
    pub q: Vec<f64>,
}

pub struct GradInstance {
    pub model: AnyModel<f64>,
    pub cases: Vec<UserCase>,
    pub inputs: Vec<UserInput<f64>>,
}

/// Random `num_users x num_items` instance with disjoint positive,
/// negative and target sets per user.
pub fn grad_instance(kind: ModelKind, num_users: usize, num_items: usize, dim: usize, seed: u64) -> GradInstance {
    let mut rng = seeded(seed);
    let model = match kind {
        ModelKind::Mf => AnyModel::Mf(MfLogistic::new(num_users, num_items, dim, seed, 0.5).unwrap()),
        ModelKind::Cdae => AnyModel::Cdae(CdaeStyle::new(num_users, num_items, dim, 0.25, seed, 0.5).unwrap()),
    };
    let mut cases = Vec::new();
    let mut inputs = Vec::new();
    for user in 0..num_users {
        let mut items: Vec<usize> = (0..num_items).collect();
        items.shuffle(&mut rng);
        let np = rng.random_range(1..=3);
        let nn = rng.random_range(1..=2);
        let nt = rng.random_range(1..=3);
        let mut positives = items[..np].to_vec();
        positives.sort_unstable();
        let negatives = items[np..np + nn].to_vec();
        let targets = items[np + nn..np + nn + nt].to_vec();
        let q = (0..nt).map(|_| rng.random_range(0.02..0.98)).collect();
        // fixed (possibly corrupted) input: it is a constant of the objective
        inputs.push(model.training_input(&positives, &mut rng));
        cases.push(UserCase { user, positives, negatives, targets, q });
    }
    GradInstance { model, cases, inputs }
}

pub const CHECK_LAMBDA: f64 = 0.7;
pub const CHECK_RHO: f64 = 0.3;

/// Objective summed over users and its analytic gradient over all params.
pub fn objective(inst: &GradInstance, model: &AnyModel<f64>, kind: LossKind) -> (f64, Vec<f64>) {
    let mut total = 0.0;
    let mut grad = vec![0.0; model.param_count()];
    for (c, input) in inst.cases.iter().zip(&inst.inputs) {
        let z = |items: &[usize]| model.logits(c.user, input, items).unwrap();
        let (value, items, dz): (f64, Vec<usize>, Vec<f64>) = match kind {
            LossKind::PointwiseBce => {
                let l = pointwise_bce(&z(&c.positives), &z(&c.negatives)).unwrap();
                (l.value, [c.positives.clone(), c.negatives.clone()].concat(), l.dz)
            }
            LossKind::CfLossCd => {
                let l = cf_loss_cd(&z(&c.positives));
                (l.value, c.positives.clone(), l.dz)
            }
            LossKind::KdLossCd => {
                let l = kd_loss_cd(&z(&c.targets), &c.q).unwrap();
                (l.value, c.targets.clone(), l.dz)
            }
            LossKind::KdLossRd => {
                let l = kd_loss_rd(&z(&c.targets), &uniform_weights(c.targets.len())).unwrap();
                (l.value, c.targets.clone(), l.dz)
            }
            LossKind::TotalCd | LossKind::TotalRd => {
                let cd = kind == LossKind::TotalCd;
                let cfg = DistillConfig {
                    objective: if cd { Objective::Cd } else { Objective::Rd },
                    lambda: CHECK_LAMBDA,
                    rho: CHECK_RHO,
                    ..DistillConfig::default()
                };
                let t = UserTargets {
                    items: c.targets.clone(),
                    teacher_logits: vec![0.0; c.targets.len()],
                    q: if cd { c.q.clone() } else { vec![1.0; c.targets.len()] },
                };
                let neg: &[usize] = if cd { &[] } else { &c.negatives };
                let o = student_objective(model, c.user, input, &c.positives, neg, Some(&t), &cfg).unwrap();
                (o.total, o.items, o.dz)
            }
        };
        total += value;
        let g = model.backward(c.user, input, &items, &dz).unwrap();
        for (acc, v) in grad.iter_mut().zip(g.to_dense(model.param_count())) {
            *acc += v;
        }
    }
    (total, grad)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Largest per-parameter relative error between the analytic gradient and
/// central differences with step `FD_STEP`.
pub fn max_gradient_error(inst: &GradInstance, kind: LossKind) -> f64 {
    let (_, analytic) = objective(inst, &inst.model, kind);
    let mut probe = inst.model.clone();
    let mut worst: f64 = 0.0;
    for j in 0..probe.param_count() {
        let p0 = probe.params()[j];
        probe.params_mut()[j] = p0 + FD_STEP;
        let up = objective(inst, &probe, kind).0;
        probe.params_mut()[j] = p0 - FD_STEP;
        let down = objective(inst, &probe, kind).0;
        probe.params_mut()[j] = p0;
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(analytic[j], numeric));
    }
    worst
}

/// Random leave-one-out split with every user holding out one unrated item.
pub fn random_split(num_users: usize, num_items: usize, seed: u64) -> SplitDataset {
    let mut rng = seeded(seed);
    let mut lists = Vec::new();
    let mut test = Vec::new();
    for _ in 0..num_users {
        let mut items: Vec<usize> = (0..num_items).collect();
        items.shuffle(&mut rng);
        let k = rng.random_range(1..num_items.clamp(2, 1 + num_items / 3));
        lists.push(items[..k].to_vec());
        test.push(Some(items[k]));
    }
    SplitDataset::new(dataset(num_users, num_items, &lists), test).unwrap()
}

/// MF model whose parameters are snapped to a coarse grid, so that exact
/// score ties are common.
pub fn tied_mf(num_users: usize, num_items: usize, dim: usize, seed: u64) -> MfLogistic<f64> {
    let mut m = MfLogistic::new(num_users, num_items, dim, seed, 1.0).unwrap();
    for p in CfModel::<f64>::params_mut(&mut m) {
        *p = (*p * 2.0).round() / 2.0;
    }
    m
}
