use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smcae_core::ae::{channel_gradient, channel_objective, decode, encode, kl_sparsity, weight_decay, Affine};
use smcae_core::optim::{finite_diff, relative_errors};
use smcae_core::smcae::{build_variant, layer_objective, smcae_gradient, smcae_objective, train_stack};
use smcae_core::{ChannelParams, SmcaeConfig, SmcaeLayer, SparsityConfig, Variant};

fn unit_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, m), || rng.random_range(0.0..1.0))
}

fn sparsity(rng: &mut ChaCha8Rng) -> SparsityConfig {
    SparsityConfig::new(rng.random_range(0.02..0.5), rng.random_range(0.0..2.0), rng.random_range(0.0..0.1)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn activations_in_unit_interval_and_objective_nonnegative(seed in any::<u64>(), m in 1usize..9, k in 1usize..9, n in 1usize..11) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = ChannelParams::init(m, k, &mut rng);
        let x = unit_matrix(&mut rng, n, m);
        let t = unit_matrix(&mut rng, n, m);
        let h = encode(&p, x.view()).unwrap();
        let y = decode(&p, h.view()).unwrap();
        prop_assert!(h.iter().chain(y.iter()).all(|&v| v > 0.0 && v < 1.0));
        let s = sparsity(&mut rng);
        prop_assert!(channel_objective(&p, x.view(), t.view(), &s).unwrap() >= 0.0);
    }

    #[test]
    fn kl_zero_only_at_target(delta in 0.01f64..0.99, hat in proptest::collection::vec(0.001f64..0.999, 1..8)) {
        let same = Array1::from_elem(hat.len(), delta);
        prop_assert!(kl_sparsity(delta, same.view()).unwrap().abs() < 1e-15);
        let v = kl_sparsity(delta, Array1::from(hat.clone()).view()).unwrap();
        if hat.iter().any(|&h| (h - delta).abs() > 1e-6) {
            prop_assert!(v > 0.0);
        } else {
            prop_assert!(v >= 0.0);
        }
    }

    #[test]
    fn channel_gradient_matches_differences(seed in any::<u64>(), m in 1usize..9, k in 1usize..9, n in 1usize..11) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = ChannelParams::init(m, k, &mut rng);
        let x = unit_matrix(&mut rng, n, m);
        let t = unit_matrix(&mut rng, n, m);
        let s = sparsity(&mut rng);
        let g = channel_gradient(&p, x.view(), t.view(), &s).unwrap().to_flat();
        let fd = finite_diff(
            |w| channel_objective(&ChannelParams::from_flat(w, m, k).unwrap(), x.view(), t.view(), &s).unwrap(),
            &p.to_flat(),
            1e-5,
        );
        let err = relative_errors(&g, &fd).into_iter().fold(0.0, f64::max);
        prop_assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn bare_objective_is_reconstruction_error(seed in any::<u64>(), m in 1usize..9, k in 1usize..9, n in 1usize..11) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = ChannelParams::init(m, k, &mut rng);
        let x = unit_matrix(&mut rng, n, m);
        let y = decode(&p, encode(&p, x.view()).unwrap().view()).unwrap();
        let mse = (&y - &x).mapv(|d| d * d).sum() / n as f64;
        let j = channel_objective(&p, x.view(), x.view(), &SparsityConfig::none()).unwrap();
        prop_assert!((j - mse).abs() <= 1e-12 * mse.max(1.0));
    }

    #[test]
    fn weight_decay_symmetric_in_roles(seed in any::<u64>(), m in 1usize..9, k in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = ChannelParams::init(m, k, &mut rng);
        let swapped = ChannelParams::new(
            Affine::new(p.decoder.weights.clone(), Array1::zeros(m)).unwrap(),
            Affine::new(p.encoder.weights.clone(), Array1::zeros(k)).unwrap(),
        )
        .unwrap();
        prop_assert_eq!(weight_decay(&p), weight_decay(&swapped));
    }

    #[test]
    fn smcae_gradient_matches_differences(seed in any::<u64>(), gi in 0usize..3) {
        let gamma = [0.0, 1.0, 50.0][gi];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, k, n) = (6, 4, 8);
        let layer = SmcaeLayer::init(m, m, k, true, &mut rng);
        let xs = unit_matrix(&mut rng, n, m);
        let xr = unit_matrix(&mut rng, n, m);
        let s = sparsity(&mut rng);
        let g = smcae_gradient(&layer, xs.view(), xr.view(), &s, gamma).unwrap().to_flat();
        let fd = finite_diff(
            |w| smcae_objective(&layer.from_flat_like(w).unwrap(), xs.view(), xr.view(), &s, gamma).unwrap().0,
            &layer.to_flat(),
            1e-5,
        );
        let err = relative_errors(&g, &fd).into_iter().fold(0.0, f64::max);
        prop_assert!(err < 1e-6, "gamma {gamma}: relative error {err}");
    }

    #[test]
    fn balance_term_nonnegative(seed in any::<u64>(), gamma in 0.0f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layer = SmcaeLayer::init(5, 5, 3, true, &mut rng);
        let xs = unit_matrix(&mut rng, 7, 5);
        let xr = unit_matrix(&mut rng, 7, 5);
        let data = build_variant(Variant::Smcae, xs.view(), xr.view()).unwrap();
        let o = layer_objective(&layer, &data, &sparsity(&mut rng), gamma).unwrap();
        let psi = o.balance();
        prop_assert!(psi >= 0.0);
        prop_assert_eq!(psi == 0.0, Some(o.j_left) == o.j_right);
        let jr = o.j_right.unwrap();
        prop_assert!((o.e - (o.j_left + jr + gamma * psi)).abs() <= 1e-12 * o.e.max(1.0));
    }

    #[test]
    fn zero_gamma_is_sum_of_channels(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layer = SmcaeLayer::init(5, 5, 3, true, &mut rng);
        let xs = unit_matrix(&mut rng, 6, 5);
        let xr = unit_matrix(&mut rng, 6, 5);
        let s = sparsity(&mut rng);
        let (e, _, _) = smcae_objective(&layer, xs.view(), xr.view(), &s, 0.0).unwrap();
        let left = ChannelParams::new(layer.encoder.clone(), layer.left.clone()).unwrap();
        let right = ChannelParams::new(layer.encoder.clone(), layer.right.clone().unwrap()).unwrap();
        let sum = channel_objective(&left, xs.view(), xr.view(), &s).unwrap()
            + channel_objective(&right, xr.view(), xr.view(), &s).unwrap();
        prop_assert!((e - sum).abs() <= 1e-12 * sum);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn stack_training_deterministic_and_transform_bounded(seed in any::<u64>(), vi in 0usize..4) {
        let variant = Variant::ALL[vi];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs = unit_matrix(&mut rng, 12, 6);
        let xr = unit_matrix(&mut rng, 12, 6);
        let cfg = SmcaeConfig {
            layer_sizes: vec![4, 3],
            max_iterations: 15,
            rng_seed: seed,
            ..SmcaeConfig::default()
        };
        let a = train_stack(xs.view(), xr.view(), variant, &cfg).unwrap();
        let b = train_stack(xs.view(), xr.view(), variant, &cfg).unwrap();
        prop_assert_eq!(&a.layers, &b.layers);
        let probe = unit_matrix(&mut rng, 9, 6) * 4.0 - 2.0;
        let t = a.transform(probe.view()).unwrap();
        prop_assert_eq!(t.dim(), (9, 6));
        prop_assert!(t.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
