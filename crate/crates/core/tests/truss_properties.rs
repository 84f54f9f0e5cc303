use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use epitruss::symmat::eig_sym;
use epitruss::truss::{eliminate_overlaps, generate_ground_structure, Support};

mod common;
use common::random_model;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn assembled_matrices_are_psd(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, true);
        let x = DVector::from_fn(model.num_vars(), |_, _| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..2.0) });
        for m in [model.stiffness().eval(&x).unwrap(), model.mass().eval(&x).unwrap()] {
            let s = eig_sym(&m).unwrap();
            prop_assert!(s.min() >= -1e-12 * (1.0 + m.max_abs()), "min eigenvalue {}", s.min());
        }
    }

    #[test]
    fn volume_is_linear_in_the_design(seed in any::<u64>(), a in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, false);
        let x = DVector::from_fn(model.num_vars(), |_, _| rng.random_range(0.0..1.0));
        let y = DVector::from_fn(model.num_vars(), |_, _| rng.random_range(0.0..1.0));
        let lhs = model.volume(&(&x * a + &y));
        let rhs = a * model.volume(&x) + model.volume(&y);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
    }

    #[test]
    fn overlap_elimination_is_idempotent(nx in 2usize..6, ny in 2usize..5) {
        let gs = generate_ground_structure(nx, ny, 1.0, |i, _| if i == 0 { Support::PINNED } else { Support::FREE }).unwrap();
        let again = eliminate_overlaps(gs.nodes(), gs.bars(), gs.spacing());
        prop_assert_eq!(again.as_slice(), gs.bars());
        for &(a, b) in gs.bars() {
            prop_assert!(a < b);
        }
    }
}
