//! Analytic gradients against central finite differences (eps = 1e-3, f64).

use lhdr_tensor::gradcheck::check_gradients;
use lhdr_tensor::{ConvSpec, Dims, Ops, Result, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-3;
const TOL: f64 = 1e-4;

fn uniform(rng: &mut ChaCha8Rng, dims: impl Into<Dims>) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| rng.random_range(-1.0..1.0))
}

/// Values with magnitude in [0.1, 1], keeping piecewise-linear ops away from their kinks.
fn off_kink(rng: &mut ChaCha8Rng, dims: impl Into<Dims>) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| {
        let m = rng.random_range(0.1..1.0);
        if rng.random_bool(0.5) { m } else { -m }
    })
}

/// Scalar probe `sum(r ⊙ y)` with a fixed random `r`, so the loss is smooth in `y`.
fn probe(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = uniform(&mut rng, tape.get(y).dims());
    let r = tape.constant(r);
    let p = tape.mul(&y, &r)?;
    Ok(tape.sum(&p))
}

fn assert_close<F>(name: &str, inputs: &[Tensor<f64>], f: F)
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let report = check_gradients(inputs, EPS, None, f).unwrap();
    assert!(
        report.max_rel_error < TOL,
        "{name}: rel error {:.3e} at {:?} (analytic {}, numeric {})",
        report.max_rel_error,
        report.worst,
        report.analytic,
        report.numeric
    );
}

fn conv_case(name: &str, spec: ConvSpec, x: Dims, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = vec![
        uniform(&mut rng, x),
        uniform(&mut rng, spec.weight_dims()),
        uniform(&mut rng, spec.bias_dims()),
    ];
    assert_close(name, &inputs, |t, v| {
        let y = t.conv2d(&v[0], &spec, &v[1], Some(&v[2]))?;
        probe(t, y, seed)
    });
}

#[test]
fn conv_plain() {
    conv_case("conv 3x3", ConvSpec::same(4, 4, 3), Dims::new(2, 4, 8, 8), 1);
}

#[test]
fn conv_grouped() {
    conv_case("conv 3x3 g4", ConvSpec::same(4, 8, 3).with_groups(4), Dims::new(2, 4, 8, 8), 2);
}

#[test]
fn conv_pointwise() {
    conv_case("conv 1x1", ConvSpec::pointwise(4, 3), Dims::new(2, 4, 8, 8), 3);
}

#[test]
fn conv_strided() {
    conv_case("conv 3x3 s2", ConvSpec::same(3, 4, 3).with_stride(2), Dims::new(1, 3, 8, 8), 4);
}

#[test]
fn partial_conv() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let spec = ConvSpec::same(4, 4, 3).with_groups(2);
    // Soft mask with a hole, a soft band, and valid pixels.
    let mask = Tensor::from_fn([2, 1, 8, 8], |[n, _, y, x]| {
        let d = (y as f64 - 3.5).abs().max((x as f64 - 3.5 - n as f64).abs());
        ((d - 1.0) / 2.0).clamp(0.0, 1.0)
    });
    let inputs = vec![
        uniform(&mut rng, [2, 4, 8, 8]),
        uniform(&mut rng, spec.weight_dims()),
        uniform(&mut rng, spec.bias_dims()),
    ];
    assert_close("partial conv", &inputs, |t, v| {
        let (y, _) = t.partial_conv2d(&v[0], &mask, &spec, &v[1], &v[2])?;
        probe(t, y, 5)
    });
}

#[test]
fn sft_and_channel_modulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let inputs = vec![
        uniform(&mut rng, [2, 4, 8, 8]),
        uniform(&mut rng, [2, 4, 8, 8]),
        uniform(&mut rng, [2, 4, 8, 8]),
    ];
    assert_close("sft", &inputs, |t, v| {
        let y = t.sft(&v[0], &v[1], &v[2])?;
        probe(t, y, 6)
    });

    let inputs = vec![
        uniform(&mut rng, [2, 4, 8, 8]),
        uniform(&mut rng, [2, 4, 1, 1]),
        uniform(&mut rng, [2, 4, 1, 1]),
    ];
    assert_close("channel modulation", &inputs, |t, v| {
        let y = t.channel_affine(&v[0], &v[1], &v[2])?;
        probe(t, y, 7)
    });
}

#[test]
fn resampling_pooling_concat() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let inputs = vec![uniform(&mut rng, [2, 4, 8, 8]), uniform(&mut rng, [2, 3, 8, 8])];
    assert_close("down2", &inputs[..1], |t, v| {
        let y = t.down2(&v[0])?;
        probe(t, y, 8)
    });
    assert_close("up2", &inputs[..1], |t, v| {
        let y = t.up2(&v[0]);
        probe(t, y, 9)
    });
    assert_close("global pool", &inputs[..1], |t, v| {
        let y = t.global_avg_pool(&v[0])?;
        probe(t, y, 10)
    });
    assert_close("concat + slice", &inputs, |t, v| {
        let y = t.concat_channels(&v[0], &v[1])?;
        let s = t.slice_channels(&y, 2, 4)?;
        let a = probe(t, y, 11)?;
        let b = probe(t, s, 12)?;
        t.add(&a, &b)
    });
    assert_close("crop", &inputs[..1], |t, v| {
        let y = t.crop(&v[0], 5, 7)?;
        probe(t, y, 13)
    });
}

#[test]
fn activations() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let inputs = vec![off_kink(&mut rng, [2, 4, 8, 8])];
    assert_close("leaky relu", &inputs, |t, v| {
        let y = t.leaky_relu(&v[0], 0.2);
        probe(t, y, 14)
    });
    assert_close("relu", &inputs, |t, v| {
        let y = t.relu(&v[0]);
        probe(t, y, 15)
    });
}

#[test]
fn l1_plus_gradient_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let target = uniform(&mut rng, [2, 3, 8, 8]);
    // Prediction sits away from the target and its gradient maps away from
    // the target's, so no |.| kink lies within eps.
    let tg = lhdr_tensor::ops::grad_map(&target);
    let mut pred = target.clone();
    for y in 0..8 {
        for x in 0..8 {
            for c in 0..3 {
                for n in 0..2 {
                    let v = target.at(n, c, y, x) + 0.3 + 0.25 * x as f64 + 0.9 * y as f64;
                    pred.set(n, c, y, x, v);
                }
            }
        }
    }
    let pg = lhdr_tensor::ops::grad_map(&pred);
    let gap = lhdr_tensor::ops::sub(&pg, &tg).unwrap();
    assert!(gap.data().iter().all(|v| v.abs() > 0.2 || *v == 0.0));
    assert_close("l1 + 0.1 lg", &[pred], |t, v| {
        let tv = t.constant(target.clone());
        let d = t.sub(&v[0], &tv)?;
        let l1 = t.mean_abs(&d);
        let gp = t.grad_map(&v[0]);
        let gt = t.grad_map(&tv);
        let gd = t.sub(&gp, &gt)?;
        let lg = t.mean_abs(&gd);
        let lg = t.scale(&lg, 0.1);
        t.add(&l1, &lg)
    });
}

#[test]
fn composite_block() {
    // conv -> leaky -> grouped conv -> residual add, checked end to end.
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let a = ConvSpec::same(4, 4, 3);
    let b = a.with_groups(4);
    let inputs = vec![
        uniform(&mut rng, [1, 4, 8, 8]),
        uniform(&mut rng, a.weight_dims()),
        uniform(&mut rng, a.bias_dims()),
        uniform(&mut rng, b.weight_dims()),
        uniform(&mut rng, b.bias_dims()),
    ];
    let report = check_gradients(&inputs, 1e-6, None, |t, v| {
        let h = t.conv2d(&v[0], &a, &v[1], Some(&v[2]))?;
        let h = t.leaky_relu(&h, 0.2);
        let h = t.conv2d(&h, &b, &v[3], Some(&v[4]))?;
        let y = t.add(&v[0], &h)?;
        probe(t, y, 17)
    })
    .unwrap();
    assert!(report.max_rel_error < TOL, "{report:?}");
}
