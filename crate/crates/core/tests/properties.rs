mod common;

use cdistill::data::{filter_dataset, leave_one_out_split, Interaction, InteractionDataset};
use cdistill::distill::{rank_unrated, sample_random, tempered_logistic, RankScheme, SampleSize};
use cdistill::distill::sampling::{sample_rank_aware, top_k};
use cdistill::eval::{evaluate, oracle_evaluate};
use cdistill::models::{checkpoint, ModelSpec};
use cdistill::rng::seeded;
use proptest::prelude::*;

fn interactions() -> impl Strategy<Value = (usize, usize, Vec<(usize, usize, i64)>)> {
    (1usize..12, 1usize..12).prop_flat_map(|(m, n)| {
        (Just(m), Just(n), prop::collection::vec((0..m, 0..n, 0i64..50), 1..80))
    })
}

fn build(m: usize, n: usize, raw: &[(usize, usize, i64)]) -> InteractionDataset {
    let inter = raw.iter().map(|&(user, item, timestamp)| Interaction { user, item, timestamp });
    InteractionDataset::from_interactions(common::ids("u", m), common::ids("i", n), inter).unwrap()
}

proptest! {
    #[test]
    fn filter_is_idempotent_and_meets_thresholds((m, n, raw) in interactions(), mu in 1usize..4, mi in 1usize..4) {
        let ds = build(m, n, &raw);
        if let Ok(f) = filter_dataset(&ds, mu, mi) {
            prop_assert!((0..f.num_users()).all(|u| f.positives(u).len() >= mu));
            prop_assert!(f.item_degrees().iter().all(|&d| d >= mi));
            let g = filter_dataset(&f, mu, mi).unwrap();
            prop_assert_eq!(g.fingerprint(), f.fingerprint());
            prop_assert_eq!(g.user_ids(), f.user_ids());
        }
    }

    #[test]
    fn split_holds_out_latest_interaction((m, n, raw) in interactions()) {
        let ds = build(m, n, &raw);
        let Ok(ds) = filter_dataset(&ds, 2, 1) else { return Ok(()) };
        let split = leave_one_out_split(&ds).unwrap();
        prop_assert_eq!(split.train.num_interactions() + ds.num_users(), ds.num_interactions());
        for u in 0..ds.num_users() {
            let t = split.test_item(u).unwrap();
            prop_assert!(!split.train.contains(u, t));
            let latest = ds.positives(u).iter().zip(ds.timestamps(u)).map(|(&i, &ts)| (ts, i)).max().unwrap();
            prop_assert_eq!(latest.1, t);
        }
    }

    #[test]
    fn tempered_logistic_shift_symmetry(z in -20.0f64..20.0, t1 in 0.5f64..5.0, t2 in -3.0f64..3.0) {
        let q = tempered_logistic(z, t1, t2);
        let r = tempered_logistic(-z - 2.0 * t2, t1, t2);
        prop_assert!((q + r - 1.0).abs() < 1e-12);
        prop_assert!(tempered_logistic(z + 0.5, t1, t2) >= q);
        prop_assert!(q > 0.0 && q < 1.0);
    }

    #[test]
    fn evaluate_equals_oracle(m in 1usize..15, n in 3usize..40, seed in 0u64..1000, cutoff in 1usize..20) {
        let split = common::random_split(m, n, seed);
        let model = common::tied_mf(m, n, 2, seed + 1);
        prop_assert_eq!(evaluate(&model, &split, cutoff).unwrap(), oracle_evaluate(&model, &split, cutoff).unwrap());
    }

    #[test]
    fn samplers_return_distinct_unrated_items(
        scores in prop::collection::vec(-3.0f64..3.0, 2..60),
        k in 1usize..30,
        seed in 0u64..500,
        gamma in 0.1f64..8.0,
    ) {
        let n = scores.len();
        let positives: Vec<usize> = (0..n).step_by(3).collect();
        let ranked = rank_unrated(&scores, &positives);
        let mut rng = seeded(seed);
        let mut outputs = vec![
            sample_rank_aware(&ranked, k, RankScheme::Linear, 10, &mut rng),
            sample_rank_aware(&ranked, k, RankScheme::Exponential { gamma }, 10, &mut rng),
            sample_random(ranked.items(), k, &mut rng),
        ];
        if k <= ranked.len() {
            outputs.push(top_k(&ranked, k).unwrap());
        }
        for mut s in outputs {
            prop_assert!(s.len() <= k);
            prop_assert!(s.iter().all(|i| !positives.contains(i)));
            s.sort_unstable();
            let len = s.len();
            s.dedup();
            prop_assert_eq!(s.len(), len);
        }
    }

    #[test]
    fn sample_size_stays_in_range(n_unrated in 1usize..500, n_pos in 0usize..50, delta in 0.0f64..2.0, c in 0usize..600) {
        for s in [SampleSize::Count(c), SampleSize::FractionOfUnrated(delta), SampleSize::FractionOfPositives(delta)] {
            let k = s.resolve(n_unrated, n_pos);
            prop_assert!((1..=n_unrated).contains(&k));
        }
    }

    #[test]
    fn checkpoint_roundtrip(dim in 1usize..5, m in 1usize..6, n in 1usize..6, seed in 0u64..100, cdae in any::<bool>()) {
        let spec = if cdae { ModelSpec::cdae(dim) } else { ModelSpec::mf(dim) };
        let model = spec.build::<f64>(m, n, seed).unwrap();
        let (back, header) = checkpoint::decode::<f64>(&checkpoint::encode(&model, seed)).unwrap();
        prop_assert_eq!(back, model);
        prop_assert_eq!(header.seed, seed);
    }
}
