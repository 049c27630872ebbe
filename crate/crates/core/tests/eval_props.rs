use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smcae_core::eval::{
    f1_score, kkt_violation, rank1, rbf_kernel, roc_and_auc, smo, sq_distances, vr_at_far, Averaging, ScoredPairs,
};

fn pairs(seed: u64, n: usize, levels: u32) -> ScoredPairs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut genuine: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
    genuine[0] = true;
    genuine[1] = false;
    // coarse levels force ties
    let scores = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
    ScoredPairs::new(scores, genuine).unwrap()
}

fn brute_rank1(q: &Array2<f64>, g: &Array2<f64>, mates: &[usize]) -> f64 {
    let mut hits = 0;
    for i in 0..q.nrows() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for j in 0..g.nrows() {
            let mut d = 0.0;
            for k in 0..q.ncols() {
                d += (q[[i, k]] - g[[j, k]]).powi(2);
            }
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        if best == mates[i] {
            hits += 1;
        }
    }
    hits as f64 / q.nrows() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn auc_bounded_and_negation_complements(seed in any::<u64>(), n in 2usize..200, levels in 2u32..50) {
        let sp = pairs(seed, n, levels);
        let (_, auc) = roc_and_auc(&sp).unwrap();
        prop_assert!((0.0..=1.0).contains(&auc));
        let neg = ScoredPairs::new(sp.scores.iter().map(|s| -s).collect(), sp.genuine.clone()).unwrap();
        let (_, auc_neg) = roc_and_auc(&neg).unwrap();
        prop_assert!((auc + auc_neg - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vr_monotone_in_far(seed in any::<u64>(), n in 2usize..300, levels in 2u32..1000) {
        let sp = pairs(seed, n, levels);
        let mut prev = 0.0;
        for i in 0..=50 {
            let v = vr_at_far(&sp, i as f64 / 50.0).unwrap();
            prop_assert!(v >= prev);
            prev = v;
        }
        prop_assert_eq!(prev, 1.0);
    }

    #[test]
    fn rank1_matches_double_loop(seed in any::<u64>(), nq in 1usize..30, ng in 1usize..70, dim in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = Array2::from_shape_simple_fn((nq, dim), || rng.random_range(0..4) as f64);
        let g = Array2::from_shape_simple_fn((ng, dim), || rng.random_range(0..4) as f64);
        let mates: Vec<usize> = (0..nq).map(|_| rng.random_range(0..ng)).collect();
        prop_assert_eq!(rank1(q.view(), g.view(), &mates).unwrap(), brute_rank1(&q, &g, &mates));
    }

    #[test]
    fn f1_permutation_invariant(seed in any::<u64>(), n in 1usize..80, k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let act: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let (p2, a2): (Vec<usize>, Vec<usize>) = idx.iter().map(|&i| (pred[i], act[i])).unzip();
        for avg in [Averaging::Macro, Averaging::Micro] {
            let a = f1_score(&pred, &act, avg).unwrap();
            let b = f1_score(&p2, &a2, avg).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn smo_solutions_satisfy_kkt(seed in any::<u64>(), n in 4usize..60, c in 0.01f64..100.0, g in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_simple_fn((n, 3), || rng.random_range(0.0..1.0));
        let mut y: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        y[0] = 1.0;
        y[1] = -1.0;
        let k = rbf_kernel(sq_distances(x.view(), x.view()).unwrap().view(), g);
        let tol = 1e-3;
        let sol = smo(k.view(), &y, c, tol, None).unwrap();
        prop_assert!(sol.converged);
        prop_assert!(sol.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
        let v = kkt_violation(k.view(), &y, &sol, c);
        prop_assert!(v <= tol * (1.0 + 1e-9), "violation {v}");
    }
}
