use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smcae_core::optim::minimize;
use smcae_core::LbfgsOptions;

/// Random `f(x) = ½ xᵀAx − bᵀx` with `A = MᵀM + I`.
fn quadratic(seed: u64, d: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let b = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    (m.transpose() * &m + DMatrix::identity(d, d), b)
}

fn quad_fg<'a>(a: &'a DMatrix<f64>, b: &'a DVector<f64>) -> impl FnMut(&[f64], &mut [f64]) -> f64 + 'a {
    move |x, g| {
        let x = DVector::from_column_slice(x);
        let ax = a * &x;
        g.copy_from_slice((&ax - b).as_slice());
        0.5 * x.dot(&ax) - b.dot(&x)
    }
}

fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
    let mut f = 0.0;
    g.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..x.len() - 1 {
        let (a, b) = (1.0 - x[i], x[i + 1] - x[i] * x[i]);
        f += a * a + 100.0 * b * b;
        g[i] += -2.0 * a - 400.0 * x[i] * b;
        g[i + 1] += 200.0 * b;
    }
    f
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn never_worse_than_start(x0 in proptest::collection::vec(-2.0f64..2.0, 2..8), iters in 1usize..60) {
        let mut g = vec![0.0; x0.len()];
        let f0 = rosenbrock(&x0, &mut g);
        let r = minimize(rosenbrock, &x0, &LbfgsOptions::default().with_max_iterations(iters)).unwrap();
        prop_assert!(r.f <= f0);
        prop_assert!(r.trace.iter().all(|t| t.f <= f0));
        prop_assert_eq!(rosenbrock(&r.x, &mut g), r.f);
    }

    #[test]
    fn identical_inputs_identical_trace(seed in any::<u64>(), d in 1usize..7) {
        let (a, b) = quadratic(seed, d);
        let x0 = vec![0.5; d];
        let opts = LbfgsOptions::default();
        let r1 = minimize(quad_fg(&a, &b), &x0, &opts).unwrap();
        let r2 = minimize(quad_fg(&a, &b), &x0, &opts).unwrap();
        prop_assert_eq!(r1.trace, r2.trace);
        prop_assert_eq!(r1.x, r2.x);
    }

    #[test]
    fn quadratic_in_d_plus_one_steps(seed in any::<u64>(), d in 1usize..7) {
        let (a, b) = quadratic(seed, d);
        let x_star = a.clone().cholesky().unwrap().solve(&b);
        let f_star = -0.5 * b.dot(&x_star);
        let opts = LbfgsOptions {
            c1: 1e-10,
            c2: 1e-8,
            memory: d.max(1),
            tolerance: 0.0,
            ..LbfgsOptions::default()
        }
        .with_max_iterations(d + 1);
        let r = minimize(quad_fg(&a, &b), &vec![0.0; d], &opts).unwrap();
        prop_assert!(r.iterations <= d + 1);
        prop_assert!((r.f - f_star).abs() <= 1e-12 * f_star.abs().max(1.0), "f {} vs {}", r.f, f_star);
    }
}
