mod common;

use common::invariants::{attention_instance, pool_instance};
use mktcube::autodiff::{maxpool_with_indices, softmax, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn attention_is_a_convex_combination(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(attention_instance(&mut rng), Ok(()));
    }

    #[test]
    fn pool_unpool_invariants(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(pool_instance(&mut rng), Ok(()));
    }

    #[test]
    fn softmax_is_shift_invariant(xs in prop::collection::vec(-50.0f64..50.0, 1..20), c in -100.0f64..100.0) {
        let a = softmax(&xs);
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let b = softmax(&shifted);
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_survives_extreme_logits(xs in prop::collection::vec(-1e300f64..1e300, 1..10)) {
        let p = softmax(&xs);
        prop_assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pooled_values_bound_their_windows(xs in prop::collection::vec(-10.0f64..10.0, 1..30), window in 1usize..5) {
        let x = Tensor::vector(xs.clone());
        let rec = maxpool_with_indices(&x, window, 0).unwrap();
        for (p, chunk) in xs.chunks(window).enumerate() {
            prop_assert!(chunk.iter().all(|&v| v <= rec.output.data()[p]));
            prop_assert_eq!(xs[rec.indices.argmax[p]], rec.output.data()[p]);
        }
    }
}
