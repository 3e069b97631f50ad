//! Point-wise losses on logits. Each returns the loss value and its
//! derivative with respect to every input logit.
//!
//! Probabilities are clamped into `[PROB_EPS, 1 - PROB_EPS]` before every
//! log. Gradients are the analytic ones of the unclamped expression.

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};

pub const PROB_EPS: f64 = 1e-7;

/// Loss value with `dL/dz` aligned to the input logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Loss<S> {
    pub value: S,
    pub dz: Vec<S>,
}

impl<S: Scalar> Loss<S> {
    pub fn zero() -> Self {
        Loss { value: S::zero(), dz: Vec::new() }
    }
}

pub fn clamp_prob<S: Scalar>(p: S) -> S {
    let eps = S::of(PROB_EPS);
    p.max(eps).min(S::one() - eps)
}

fn ln_p<S: Scalar>(p: S) -> S {
    clamp_prob(p).ln()
}

fn ln_1mp<S: Scalar>(p: S) -> S {
    (S::one() - clamp_prob(p)).ln()
}

/// `q = 1 / (1 + exp(-(z + t2) / t1))`, clamped into the open unit interval.
pub fn tempered_logistic<S: Scalar>(z: S, t1: S, t2: S) -> S {
    clamp_prob(sigmoid((z + t2) / t1))
}

/// Binary cross-entropy with positives labelled 1 and sampled negatives 0:
/// `-sum_pos log p - sum_neg log(1 - p)`.
pub fn pointwise_bce_probs<S: Scalar>(pos: &[S], neg: &[S]) -> Result<S> {
    if pos.is_empty() {
        return Err(Error::Precondition("pointwise loss needs at least one positive".into()));
    }
    let a: S = pos.iter().map(|&p| -ln_p(p)).sum();
    let b: S = neg.iter().map(|&p| -ln_1mp(p)).sum();
    Ok(a + b)
}

/// Logit form of [`pointwise_bce_probs`]; `dz` is positives then negatives.
pub fn pointwise_bce<S: Scalar>(pos_z: &[S], neg_z: &[S]) -> Result<Loss<S>> {
    let pp: Vec<S> = pos_z.iter().map(|&z| sigmoid(z)).collect();
    let pn: Vec<S> = neg_z.iter().map(|&z| sigmoid(z)).collect();
    let value = pointwise_bce_probs(&pp, &pn)?;
    let dz = pp.iter().map(|&p| p - S::one()).chain(pn.iter().copied()).collect();
    Ok(Loss { value, dz })
}

/// Positive-only CF loss `-sum_{i in I_u^+} log p_ui`; missing feedback
/// contributes nothing. An empty positive set gives zero.
pub fn cf_loss_cd_probs<S: Scalar>(pos: &[S]) -> S {
    pos.iter().map(|&p| -ln_p(p)).sum()
}

pub fn cf_loss_cd<S: Scalar>(pos_z: &[S]) -> Loss<S> {
    let p: Vec<S> = pos_z.iter().map(|&z| sigmoid(z)).collect();
    Loss { value: cf_loss_cd_probs(&p), dz: p.iter().map(|&p| p - S::one()).collect() }
}

/// Soft-target cross-entropy over a sampled set:
/// `-sum_i [q_i log p_i + (1 - q_i) log(1 - p_i)]`.
pub fn kd_loss_cd_probs<S: Scalar>(p: &[S], q: &[S]) -> Result<S> {
    if p.len() != q.len() {
        return Err(Error::Precondition("student and soft-target lengths differ".into()));
    }
    Ok(p.iter()
        .zip(q)
        .map(|(&p, &q)| {
            let q = clamp_prob(q);
            -(q * ln_p(p) + (S::one() - q) * ln_1mp(p))
        })
        .sum())
}

/// Logit form; `dL/dz_i = p_i - q_i`.
pub fn kd_loss_cd<S: Scalar>(z: &[S], q: &[S]) -> Result<Loss<S>> {
    let p: Vec<S> = z.iter().map(|&z| sigmoid(z)).collect();
    let value = kd_loss_cd_probs(&p, q)?;
    Ok(Loss { value, dz: p.iter().zip(q).map(|(&p, &q)| p - clamp_prob(q)).collect() })
}

/// Rank-distillation KD term: `-sum_i w_i log p_i` with every selected item
/// treated as a positive. Weights must sum to one.
pub fn kd_loss_rd_probs<S: Scalar>(p: &[S], w: &[S]) -> Result<S> {
    if p.len() != w.len() {
        return Err(Error::Precondition("probability and weight lengths differ".into()));
    }
    if !w.is_empty() {
        let total: S = w.iter().copied().sum();
        if (total - S::one()).abs() > S::of(1e-6) {
            return Err(Error::Precondition(format!("RD weights sum to {total}, expected 1")));
        }
    }
    Ok(p.iter().zip(w).map(|(&p, &w)| -w * ln_p(p)).sum())
}

pub fn kd_loss_rd<S: Scalar>(z: &[S], w: &[S]) -> Result<Loss<S>> {
    let p: Vec<S> = z.iter().map(|&z| sigmoid(z)).collect();
    let value = kd_loss_rd_probs(&p, w)?;
    Ok(Loss { value, dz: p.iter().zip(w).map(|(&p, &w)| w * (p - S::one())).collect() })
}

/// Uniform `1/K` weights.
pub fn uniform_weights<S: Scalar>(k: usize) -> Vec<S> {
    vec![S::one() / S::of(k as f64); k]
}

/// `cf + lambda * kd`.
pub fn total_loss_cd<S: Scalar>(cf: S, kd: S, lambda: S) -> S {
    cf + lambda * kd
}

/// `(1 - rho) * cf + rho * kd`.
pub fn total_loss_rd<S: Scalar>(cf: S, kd: S, rho: S) -> S {
    (S::one() - rho) * cf + rho * kd
}
