//! Item selection over a user's unrated items: rank-aware rejection sampling
//! (linear and exponential), uniform random sampling and deterministic top-K.

use std::cmp::Ordering;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::complement;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Unrated items in descending score order; position `k` has rank `k + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedItemList {
    items: Vec<usize>,
}

impl RankedItemList {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Items from rank 1 downwards.
    pub fn items(&self) -> &[usize] {
        &self.items
    }

    /// 1-based rank of `item`, if it is in the list.
    pub fn rank_of(&self, item: usize) -> Option<usize> {
        self.items.iter().position(|&i| i == item).map(|k| k + 1)
    }

    /// `pi = rank / n`.
    pub fn importance(&self, rank: usize) -> f64 {
        rank as f64 / self.items.len() as f64
    }
}

/// Descending score, ties by ascending item index.
pub fn score_order<S: Scalar>(scores: &[S], a: usize, b: usize) -> Ordering {
    scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b))
}

/// Ranks every item outside `positives` (sorted) by `scores` (indexed by item).
pub fn rank_unrated<S: Scalar>(scores: &[S], positives: &[usize]) -> RankedItemList {
    let mut items = complement(positives, scores.len());
    items.sort_by(|&a, &b| score_order(scores, a, b));
    RankedItemList { items }
}

/// Rank-aware acceptance rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankScheme {
    /// Accept rank `r` iff a uniform competitor ranks strictly below it:
    /// probability `(n - r) / n`.
    Linear,
    /// Accept with probability `exp(-gamma * pi) / exp(-gamma / n)`.
    Exponential { gamma: f64 },
}

impl RankScheme {
    pub fn acceptance(&self, rank: usize, n: usize) -> f64 {
        match *self {
            RankScheme::Linear => (n - rank) as f64 / n as f64,
            RankScheme::Exponential { gamma } => (-gamma * (rank as f64 - 1.0) / n as f64).exp(),
        }
    }

    /// Unnormalized inclusion weight of `rank` (`1 - pi` or `exp(-gamma pi)`).
    pub fn weight(&self, rank: usize, n: usize) -> f64 {
        let pi = rank as f64 / n as f64;
        match *self {
            RankScheme::Linear => 1.0 - pi,
            RankScheme::Exponential { gamma } => (-gamma * pi).exp(),
        }
    }
}

/// Endless stream of accept events: scans the ranked list top to bottom,
/// testing each item once per pass, and yields the ranks (1-based) it
/// accepts. Per-pass acceptance of rank `r` is `scheme.acceptance(r, n)`, so
/// long-run accept counts are proportional to the scheme's weights.
pub struct AcceptStream<'r, R> {
    scheme: RankScheme,
    n: usize,
    pos: usize,
    passes: usize,
    rng: &'r mut R,
}

impl<'r, R: Rng> AcceptStream<'r, R> {
    pub fn new(scheme: RankScheme, n: usize, rng: &'r mut R) -> Self {
        AcceptStream { scheme, n, pos: 0, passes: 0, rng }
    }

    /// Completed passes over the list.
    pub fn passes(&self) -> usize {
        self.passes
    }

    fn advance(&mut self) {
        self.pos += 1;
        if self.pos == self.n {
            self.pos = 0;
            self.passes += 1;
        }
    }

    /// Tests the next item; returns its rank if accepted.
    pub fn test_next(&mut self) -> Option<usize> {
        if self.n == 0 {
            return None;
        }
        let rank = self.pos + 1;
        let accepted = match self.scheme {
            RankScheme::Linear => {
                let competitor = self.rng.random_range(0..self.n) + 1;
                rank < competitor
            }
            RankScheme::Exponential { .. } => {
                let a = self.scheme.acceptance(rank, self.n);
                a >= 1.0 || self.rng.random::<f64>() < a
            }
        };
        self.advance();
        accepted.then_some(rank)
    }
}

impl<R: Rng> Iterator for AcceptStream<'_, R> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.n == 0 || (self.scheme == RankScheme::Linear && self.n == 1) {
            return None;
        }
        loop {
            if let Some(r) = self.test_next() {
                return Some(r);
            }
        }
    }
}

/// Collects up to `k` distinct items by repeated rank-aware passes. Stops
/// early (with fewer than `k`) after `max_passes` passes.
pub fn sample_rank_aware<R: Rng>(
    ranked: &RankedItemList,
    k: usize,
    scheme: RankScheme,
    max_passes: usize,
    rng: &mut R,
) -> Vec<usize> {
    let n = ranked.len();
    let mut taken = vec![false; n];
    let mut out = Vec::with_capacity(k.min(n));
    let mut stream = AcceptStream::new(scheme, n, rng);
    while out.len() < k.min(n) && stream.passes() < max_passes && n > 0 {
        if let Some(rank) = stream.test_next() {
            if !taken[rank - 1] {
                taken[rank - 1] = true;
                out.push(ranked.items[rank - 1]);
            }
        }
    }
    if out.len() < k.min(n) {
        log::debug!("rank-aware sampler filled {} of {} after {} passes", out.len(), k, max_passes);
    }
    out
}

pub fn sample_linear<R: Rng>(ranked: &RankedItemList, k: usize, max_passes: usize, rng: &mut R) -> Vec<usize> {
    sample_rank_aware(ranked, k, RankScheme::Linear, max_passes, rng)
}

pub fn sample_exponential<R: Rng>(
    ranked: &RankedItemList,
    k: usize,
    gamma: f64,
    max_passes: usize,
    rng: &mut R,
) -> Vec<usize> {
    sample_rank_aware(ranked, k, RankScheme::Exponential { gamma }, max_passes, rng)
}

/// Uniform sample without replacement; `k >= n` returns everything.
pub fn sample_random<R: Rng>(candidates: &[usize], k: usize, rng: &mut R) -> Vec<usize> {
    if k >= candidates.len() {
        return candidates.to_vec();
    }
    index::sample(rng, candidates.len(), k).into_iter().map(|j| candidates[j]).collect()
}

/// The `k` highest-ranked items.
pub fn top_k(ranked: &RankedItemList, k: usize) -> Result<Vec<usize>> {
    if k > ranked.len() {
        return Err(Error::Precondition(format!("top-{k} requested from {} unrated items", ranked.len())));
    }
    Ok(ranked.items[..k].to_vec())
}

/// Uniform sample of `k` items outside `positives` (sorted), without
/// replacement. Used for hard-label negatives.
pub fn sample_unrated<R: Rng>(num_items: usize, positives: &[usize], k: usize, rng: &mut R) -> Vec<usize> {
    let n_unrated = num_items - positives.len();
    let k = k.min(n_unrated);
    if k == 0 {
        return Vec::new();
    }
    if 2 * positives.len() > num_items || 4 * k > n_unrated {
        return sample_random(&complement(positives, num_items), k, rng);
    }
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let i = rng.random_range(0..num_items);
        if positives.binary_search(&i).is_err() && !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

/// How many soft-target items to draw per user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleSize {
    Count(usize),
    /// `delta * |I_u^-|`
    FractionOfUnrated(f64),
    /// `delta * |I_u^+|`
    FractionOfPositives(f64),
}

impl SampleSize {
    /// Resolved count, at least 1 and at most `n_unrated`.
    pub fn resolve(&self, n_unrated: usize, n_positives: usize) -> usize {
        let k = match *self {
            SampleSize::Count(k) => k,
            SampleSize::FractionOfUnrated(d) => (d * n_unrated as f64).round() as usize,
            SampleSize::FractionOfPositives(d) => (d * n_positives as f64).round() as usize,
        };
        k.max(1).min(n_unrated)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SampleSize::Count(0) => Err(Error::Config("sample size K must be at least 1".into())),
            SampleSize::FractionOfUnrated(d) | SampleSize::FractionOfPositives(d) if !(d > 0.0 && d <= 1.0) => {
                Err(Error::Config(format!("sampling fraction {d} outside (0, 1]")))
            }
            _ => Ok(()),
        }
    }
}
