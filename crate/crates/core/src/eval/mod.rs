//! Leave-one-out top-N evaluation over all unrated candidates, and
//! per-user inference latency.

use std::hint::black_box;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SplitDataset;
use crate::distill::sampling::score_order;
use crate::error::{Error, Result};
use crate::models::CfModel;
use crate::scalar::Scalar;

pub const DEFAULT_CUTOFF: usize = 50;
pub const DEFAULT_WARMUP: usize = 3;

/// Hit and discounted gain of a single held-out item at `rank` (1-based).
pub fn hit_and_ndcg(rank: usize, n: usize) -> (f64, f64) {
    if rank >= 1 && rank <= n {
        (1.0, 1.0 / ((rank + 1) as f64).log2())
    } else {
        (0.0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_s: f64,
    pub p50_s: f64,
    /// Only reported for at least 20 repetitions.
    pub p95_s: Option<f64>,
    pub repetitions: usize,
    pub users: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n_cutoff: usize,
    pub hr: f64,
    pub ndcg: f64,
    /// `(user, rank of the held-out item)` for every evaluated user.
    pub ranks: Vec<(usize, usize)>,
    pub users_skipped: usize,
    pub latency: Option<LatencyStats>,
    pub param_count: usize,
}

impl EvalReport {
    fn from_ranks(n: usize, ranks: Vec<(usize, usize)>, skipped: usize, param_count: usize) -> Self {
        let (mut hr, mut ndcg) = (0.0, 0.0);
        for &(_, r) in &ranks {
            let (h, g) = hit_and_ndcg(r, n);
            hr += h;
            ndcg += g;
        }
        let m = ranks.len().max(1) as f64;
        EvalReport {
            n_cutoff: n,
            hr: hr / m,
            ndcg: ndcg / m,
            ranks,
            users_skipped: skipped,
            latency: None,
            param_count,
        }
    }

    pub fn record(&self, model_id: &str) -> ReportRecord {
        ReportRecord {
            model_id: model_id.to_string(),
            n: self.n_cutoff,
            hr: self.hr,
            ndcg: self.ndcg,
            latency_mean_s: self.latency.as_ref().map(|l| l.mean_s),
            latency_p95_s: self.latency.as_ref().and_then(|l| l.p95_s),
            param_count: self.param_count,
        }
    }
}

/// Flat report written by the CLI and read back by the sweep tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub model_id: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub hr: f64,
    pub ndcg: f64,
    pub latency_mean_s: Option<f64>,
    pub latency_p95_s: Option<f64>,
    pub param_count: usize,
}

fn check_items<S: Scalar, M: CfModel<S> + ?Sized>(model: &M, split: &SplitDataset) -> Result<()> {
    if model.num_items() != split.train.num_items() {
        return Err(Error::Precondition(format!(
            "model scores {} items, dataset has {}",
            model.num_items(),
            split.train.num_items()
        )));
    }
    Ok(())
}

/// Rank of the held-out item among all items outside the user's training
/// positives: one plus the number of candidates ordered before it
/// (higher score, ties by lower item index).
pub fn test_item_rank<S: Scalar>(scores: &[S], train_positives: &[usize], test_item: usize) -> usize {
    let mut before = 0;
    let mut k = 0;
    for c in 0..scores.len() {
        if k < train_positives.len() && train_positives[k] == c {
            k += 1;
            continue;
        }
        if c != test_item && score_order(scores, c, test_item).is_lt() {
            before += 1;
        }
    }
    before + 1
}

/// HR@N and NDCG@N with all unrated items as candidates. Users outside the
/// model's index range are skipped and counted.
pub fn evaluate<S: Scalar, M: CfModel<S> + ?Sized>(model: &M, split: &SplitDataset, n: usize) -> Result<EvalReport> {
    check_items(model, split)?;
    let pairs: Vec<(usize, usize)> = split.test_pairs().collect();
    let skipped = pairs.iter().filter(|(u, _)| *u >= model.num_users()).count();
    if skipped > 0 {
        log::warn!("{skipped} test users are outside the model's user range and were skipped");
    }
    let ranks = pairs
        .par_iter()
        .filter(|(u, _)| *u < model.num_users())
        .map(|&(u, t)| {
            let positives = split.train.positives(u);
            let scores = model.logits_all(u, &model.input(positives))?;
            Ok((u, test_item_rank(&scores, positives, t)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_ranks(n, ranks, skipped, model.param_count()))
}

/// Brute-force reference evaluator: materializes and fully sorts every
/// user's candidate list. Must agree exactly with [`evaluate`].
pub fn oracle_evaluate<S: Scalar, M: CfModel<S> + ?Sized>(
    model: &M,
    split: &SplitDataset,
    n: usize,
) -> Result<EvalReport> {
    check_items(model, split)?;
    let mut ranks = Vec::new();
    let mut skipped = 0;
    for (u, t) in split.test_pairs() {
        if u >= model.num_users() {
            skipped += 1;
            continue;
        }
        let positives = split.train.positives(u);
        let mut candidates: Vec<(usize, f64)> = Vec::new();
        for i in 0..model.num_items() {
            if !positives.contains(&i) {
                candidates.push((i, model.forward_logit(u, &model.input(positives), i)?.f64()));
            }
        }
        candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let pos = candidates.iter().position(|&(i, _)| i == t).expect("test item is a candidate");
        ranks.push((u, pos + 1));
    }
    Ok(EvalReport::from_ranks(n, ranks, skipped, model.param_count()))
}

/// Wall-clock time of a full scoring pass (all items) per user.
///
/// Each repetition scores every user in `users` once, single-threaded; the
/// per-user time of a repetition is its elapsed time divided by the number
/// of users. `warmup` repetitions run first and are discarded.
pub fn bench_latency<S: Scalar, M: CfModel<S> + ?Sized>(
    model: &M,
    split: &SplitDataset,
    users: &[usize],
    repetitions: usize,
    warmup: usize,
) -> Result<LatencyStats> {
    if users.is_empty() || repetitions == 0 {
        return Err(Error::Precondition("latency bench needs users and at least one repetition".into()));
    }
    let inputs = users
        .iter()
        .map(|&u| {
            if u >= model.num_users() || u >= split.train.num_users() {
                return Err(Error::IndexOutOfRange { what: "user", index: u, len: model.num_users() });
            }
            Ok(model.input(split.train.positives(u)))
        })
        .collect::<Result<Vec<_>>>()?;
    let pass = || -> Result<()> {
        for (&u, inp) in users.iter().zip(&inputs) {
            black_box(model.logits_all(u, black_box(inp))?);
        }
        Ok(())
    };
    for _ in 0..warmup {
        pass()?;
    }
    let mut samples = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let t0 = Instant::now();
        pass()?;
        samples.push(t0.elapsed().as_secs_f64() / users.len() as f64);
    }
    let mean_s = samples.iter().sum::<f64>() / samples.len() as f64;
    samples.sort_by(f64::total_cmp);
    let pct = |p: f64| samples[((p * samples.len() as f64).ceil() as usize).clamp(1, samples.len()) - 1];
    Ok(LatencyStats {
        mean_s,
        p50_s: pct(0.5),
        p95_s: (repetitions >= 20).then(|| pct(0.95)),
        repetitions,
        users: users.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Interaction, InteractionDataset};
    use crate::models::MfLogistic;

    /// 1 user, 4 items; item 0 trained, items 1..3 scored by their bias.
    fn fixture(biases: [f64; 4], test: usize) -> (MfLogistic<f64>, SplitDataset) {
        let mut m = MfLogistic::zeros(1, 4, 1);
        for (i, b) in biases.iter().enumerate() {
            m.set_item_bias(i, *b);
        }
        let ids = |p: &str, n: usize| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
        let train =
            InteractionDataset::from_interactions(ids("u", 1), ids("i", 4), [Interaction { user: 0, item: 0, timestamp: 0 }])
                .unwrap();
        (m, SplitDataset::new(train, vec![Some(test)]).unwrap())
    }

    #[test]
    fn metric_closed_forms() {
        assert_eq!(hit_and_ndcg(1, 50), (1.0, 1.0));
        assert_eq!(hit_and_ndcg(3, 50), (1.0, 0.5));
        assert_eq!(hit_and_ndcg(51, 50), (0.0, 0.0));
        assert_eq!(hit_and_ndcg(50, 50).0, 1.0);
    }

    #[test]
    fn hand_traced_rank() {
        // candidates 1, 2, 3 with scores 0.2, 0.9, 0.5 -> order 2, 3, 1
        let (m, split) = fixture([5.0, 0.2, 0.9, 0.5], 3);
        let r = evaluate(&m, &split, 50).unwrap();
        assert_eq!(r.ranks, vec![(0, 2)]);
        assert!((r.ndcg - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert_eq!(r, oracle_evaluate(&m, &split, 50).unwrap());
        let r = evaluate(&m, &split, 1).unwrap();
        assert_eq!((r.hr, r.ndcg), (0.0, 0.0));
    }

    #[test]
    fn constant_scores_fall_back_to_index_order() {
        let (m, split) = fixture([0.0; 4], 2);
        let r = evaluate(&m, &split, 50).unwrap();
        assert_eq!(r.ranks, vec![(0, 2)]);
        assert_eq!(r, oracle_evaluate(&m, &split, 50).unwrap());
    }

    #[test]
    fn item_count_mismatch_is_an_error() {
        let (_, split) = fixture([0.0; 4], 2);
        let m = MfLogistic::<f64>::zeros(1, 5, 1);
        assert!(evaluate(&m, &split, 10).is_err());
    }

    #[test]
    fn users_outside_model_are_skipped() {
        let ids = |p: &str, n: usize| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
        let train = InteractionDataset::from_interactions(
            ids("u", 2),
            ids("i", 3),
            [Interaction { user: 0, item: 0, timestamp: 0 }, Interaction { user: 1, item: 0, timestamp: 0 }],
        )
        .unwrap();
        let split = SplitDataset::new(train, vec![Some(1), Some(2)]).unwrap();
        let m = MfLogistic::<f64>::zeros(1, 3, 1);
        let r = evaluate(&m, &split, 10).unwrap();
        assert_eq!((r.ranks.len(), r.users_skipped), (1, 1));
        assert_eq!(r, oracle_evaluate(&m, &split, 10).unwrap());
    }

    #[test]
    fn latency_stats_contract() {
        let (m, split) = fixture([0.0; 4], 2);
        let one = bench_latency(&m, &split, &[0], 1, 0).unwrap();
        assert!(one.p95_s.is_none() && one.mean_s >= 0.0);
        let many = bench_latency(&m, &split, &[0], 25, 3).unwrap();
        assert!(many.p95_s.unwrap() >= many.p50_s);
        assert!(bench_latency(&m, &split, &[], 5, 0).is_err());
        assert!(bench_latency(&m, &split, &[4], 5, 0).is_err());
    }
}
