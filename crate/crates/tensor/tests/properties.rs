//! Randomized shapes and configurations for the convolution family.

use lhdr_tensor::gradcheck::check_gradients;
use lhdr_tensor::{ConvSpec, Dims, Ops, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform(rng: &mut ChaCha8Rng, dims: impl Into<Dims>) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| rng.random_range(-1.0..1.0))
}

/// Up to 2x4x8x8 input, kernel 1 or 3, groups dividing both channel counts.
fn conv_case() -> impl Strategy<Value = (Dims, ConvSpec, u64)> {
    (1usize..=2, prop::sample::select(vec![1usize, 2, 4]), 1usize..=2, 2usize..=8, 2usize..=8, any::<bool>(), any::<bool>(), any::<u64>())
        .prop_map(|(n, groups, per_group, h, w, wide, strided, seed)| {
            let cin = groups * if groups == 4 { 1 } else { per_group };
            let cout = groups * per_group;
            let spec = if wide { ConvSpec::same(cin, cout, 3) } else { ConvSpec::pointwise(cin, cout) };
            let spec = spec.with_groups(groups);
            let spec = if strided { spec.with_stride(2) } else { spec };
            (Dims::new(n, cin, h, w), spec, seed)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conv_gradients((x, spec, seed) in conv_case()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = vec![uniform(&mut rng, x), uniform(&mut rng, spec.weight_dims()), uniform(&mut rng, spec.bias_dims())];
        let (oh, ow) = spec.output_hw(x.h, x.w).unwrap();
        let r = uniform(&mut rng, [x.n, spec.out_channels, oh, ow]);
        let report = check_gradients(&inputs, 1e-3, None, |t, v| {
            let y = t.conv2d(&v[0], &spec, &v[1], Some(&v[2]))?;
            let r = t.constant(r.clone());
            let p = t.mul(&y, &r)?;
            Ok(t.sum(&p))
        }).unwrap();
        prop_assert!(report.max_rel_error < 1e-4, "{:?}", report);
    }

    #[test]
    fn conv_is_linear_in_input((x, spec, seed) in conv_case(), k in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (uniform(&mut rng, x), uniform(&mut rng, x));
        let wt = uniform(&mut rng, spec.weight_dims());
        let conv = |t: &Tensor<f64>| lhdr_tensor::conv::conv2d(t, &spec, &wt, None).unwrap();
        let mix = lhdr_tensor::ops::add(&a, &b.map(|v| k * v)).unwrap();
        let lhs = conv(&mix);
        let rhs = lhdr_tensor::ops::add(&conv(&a), &conv(&b).map(|v| k * v)).unwrap();
        for (p, q) in lhs.data().iter().zip(rhs.data()) {
            prop_assert!((p - q).abs() < 1e-9);
        }
    }
}
