//! Property tests for the op invariants: the conv/transposed-conv adjoint
//! identity, softmax normalization and shift invariance, and purity.

use proptest::prelude::*;
use vsci_tensor::ops::{conv3d, softmax, transposed_conv3d, ConvSpec};
use vsci_tensor::Tensor;

fn small_values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-2.0..2.0f64, n..=n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_adjoint_identity_on_random_shapes(
        mt in 1usize..3,
        mh in 2usize..5,
        mw in 2usize..5,
        ci in 1usize..3,
        co in 1usize..3,
        sh in 1usize..3,
        kt in 1usize..3,
        seed in any::<u64>(),
    ) {
        // Fix the measurement-side extents first; the transposed output then
        // always maps back onto them under the forward formula.
        let spec = ConvSpec::new([kt, 3, 3], [1, sh, sh], [kt - 1, 1, 1], ci, co).unwrap();
        let n = spec.transposed_out_extents([mt, mh, mw]);
        let mut rng = seed;
        let mut next = move || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let x = Tensor::from_fn(&[n[0], n[1], n[2], ci], |_| next());
        let wt = Tensor::from_fn(&[kt, 3, 3, ci, co], |_| next());
        let y = Tensor::from_fn(&[mt, mh, mw, co], |_| next());

        let cx = conv3d(&x, &wt, None, &spec).unwrap();
        prop_assert_eq!(cx.shape(), y.shape());
        let lhs = cx.dot(&y).unwrap();
        let ty = transposed_conv3d(&y, &wt, None, &spec).unwrap();
        prop_assert_eq!(ty.shape(), x.shape());
        let rhs = x.dot(&ty).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()),
            "adjoint identity violated: {} vs {}", lhs, rhs);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant(
        rows in 1usize..5,
        cols in 1usize..7,
        shift in -50.0..50.0f64,
        seed in any::<u64>(),
    ) {
        let mut rng = seed;
        let mut next = move || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng >> 11) as f64 / (1u64 << 53) as f64) * 8.0 - 4.0
        };
        let x = Tensor::from_fn(&[rows, cols], |_| next());
        let y = softmax(&x, 1).unwrap();
        for row in y.data().chunks_exact(cols) {
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
        }
        let shifted = softmax(&x.map(|v| v + shift), 1).unwrap();
        prop_assert!(y.max_abs_diff(&shifted).unwrap() < 1e-6);
    }

    #[test]
    fn ops_are_pure(data in small_values(36)) {
        let x = Tensor::new(vec![1, 3, 3, 4], data).unwrap();
        let w = Tensor::from_fn(&[1, 3, 3, 4, 2], |i| (i as f64).sin());
        let spec = ConvSpec::new([1, 3, 3], [1, 1, 1], [0, 1, 1], 4, 2).unwrap();
        let a = conv3d(&x, &w, None, &spec).unwrap();
        let b = conv3d(&x, &w, None, &spec).unwrap();
        prop_assert_eq!(a.data(), b.data());
    }
}
