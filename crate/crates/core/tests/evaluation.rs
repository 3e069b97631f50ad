mod common;

use cdistill::data::SplitDataset;
use cdistill::eval::{bench_latency, evaluate, hit_and_ndcg, oracle_evaluate};
use cdistill::models::{CdaeStyle, ModelSpec};
use cdistill::rng::seeded;
use rand::seq::SliceRandom;
use rand::Rng;

#[test]
fn fast_evaluator_matches_oracle_on_random_fixtures() {
    let mut rng = seeded(2024);
    for case in 0..50u64 {
        let m = rng.random_range(1..=50);
        let n = rng.random_range(3..=200);
        let split = common::random_split(m, n, case);
        let cutoff = rng.random_range(1..=60);
        let model = common::tied_mf(m, n, 3, 100 + case);
        let a = evaluate(&model, &split, cutoff).unwrap();
        let b = oracle_evaluate(&model, &split, cutoff).unwrap();
        assert_eq!(a.ranks, b.ranks, "case {case}: {m}x{n}");
        assert_eq!(a, b);
    }
}

#[test]
fn cdae_evaluation_matches_oracle() {
    let split = common::random_split(30, 60, 1);
    let model = ModelSpec::cdae(5).build::<f64>(30, 60, 2).unwrap();
    assert_eq!(evaluate(&model, &split, 10).unwrap(), oracle_evaluate(&model, &split, 10).unwrap());
    let model = CdaeStyle::<f32>::new(30, 60, 5, 0.2, 3, 1.0).unwrap();
    assert_eq!(evaluate(&model, &split, 10).unwrap(), oracle_evaluate(&model, &split, 10).unwrap());
}

#[test]
fn other_users_test_items_do_not_leak() {
    let split = common::random_split(25, 40, 8);
    let model = common::tied_mf(25, 40, 3, 9);
    let base = evaluate(&model, &split, 50).unwrap();
    let mut rng = seeded(1);
    for _ in 0..10 {
        let mut test = split.test_items().to_vec();
        // user 0 keeps its item; others get a fresh unrated one
        for (u, t) in test.iter_mut().enumerate().skip(1) {
            let mut c = split.train.unrated(u);
            c.shuffle(&mut rng);
            *t = Some(c[0]);
        }
        let permuted = SplitDataset::new(split.train.clone(), test).unwrap();
        let r = evaluate(&model, &permuted, 50).unwrap();
        assert_eq!(r.ranks[0], base.ranks[0]);
    }
}

#[test]
fn ndcg_is_non_increasing_in_rank_and_hr_steps_at_cutoff() {
    let n = 10;
    let mut prev = f64::INFINITY;
    for rank in 1..=30 {
        let (hr, g) = hit_and_ndcg(rank, n);
        assert!(g <= prev);
        assert_eq!(hr, if rank <= n { 1.0 } else { 0.0 });
        prev = g;
    }
}

#[test]
fn smaller_model_scores_faster() {
    let split = common::random_split(50, 400, 3);
    let users: Vec<usize> = (0..50).collect();
    let big = ModelSpec::mf(256).build::<f64>(50, 400, 1).unwrap();
    let small = ModelSpec::mf(4).build::<f64>(50, 400, 1).unwrap();
    let tb = bench_latency(&big, &split, &users, 20, 3).unwrap();
    let ts = bench_latency(&small, &split, &users, 20, 3).unwrap();
    assert!(ts.mean_s < tb.mean_s, "{ts:?} vs {tb:?}");
}
