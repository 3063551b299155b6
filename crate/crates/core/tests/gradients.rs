use lrfnet::arch::{build_model, NetworkConfig, Variant};
use lrfnet::autograd::Tape;
use lrfnet::conv::ConvSpec;
use lrfnet::gradcheck::{check_model, check_op};
use lrfnet::selftest::{gradcheck_configs, model_gradient};
use lrfnet::train::LossKind;
use lrfnet::{Shape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random64(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

#[test]
fn every_reduced_variant_passes_finite_differences() {
    for (label, cfg) in gradcheck_configs() {
        let (ok, detail) = model_gradient(&cfg).unwrap();
        println!("{label}: {detail}");
        assert!(ok, "{label}: {detail}");
    }
}

#[test]
fn l1_loss_gradients_match() {
    let cfg = NetworkConfig::new(Variant::S).with_size(2, 3).with_kernel(5);
    let model = build_model::<f64>(&cfg, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random64(Shape::new(2, 3, 9, 8), &mut rng);
    let t = random64(Shape::new(2, 3, 9, 8), &mut rng);
    let r = check_model(&model, &x, &t, LossKind::L1, 60, 1e-6, 3).unwrap();
    assert!(r.passes(1e-3, 50), "{r:?}");
}

/// Full-width default network on a 16x16 input with the L1 loss.
#[test]
fn full_size_baseline_gradients_match() {
    let cfg = NetworkConfig::new(Variant::B);
    let model = build_model::<f64>(&cfg, 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let x = Tensor::from_fn(Shape::new(1, 3, 16, 16), |_| rng.random_range(0.0..1.0));
    let t = Tensor::from_fn(Shape::new(1, 3, 16, 16), |_| rng.random_range(0.0..1.0));
    let r = check_model(&model, &x, &t, LossKind::L1, 60, 1e-6, 23).unwrap();
    println!("{r:?}");
    assert!(r.passes(1e-3, 50), "{r:?}");
}

/// Central differences with step 1e-4 over at least 100 coordinates per op.
#[test]
fn every_op_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = random64(Shape::new(2, 3, 4, 5), &mut rng);
    let b = random64(Shape::new(2, 3, 4, 5), &mut rng);
    let spec = ConvSpec::new(3, 2, 3, 3, 2).unwrap();
    let w = random64(spec.weight_shape(), &mut rng);
    let bias = random64(spec.bias_shape(), &mut rng);
    let h = 1e-4;
    for (name, r) in [
        (
            "add",
            check_op(&[a.clone(), b.clone()], |t, v| t.add(v[0], v[1]), 100, h, 1),
        ),
        (
            "mul",
            check_op(&[a.clone(), b.clone()], |t, v| t.mul(v[0], v[1]), 100, h, 2),
        ),
        (
            "relu",
            check_op(std::slice::from_ref(&a), |t, v| t.relu(v[0]), 100, h, 3),
        ),
        ("sum", check_op(std::slice::from_ref(&a), |t, v| t.sum(v[0]), 100, h, 4)),
        (
            "l1",
            check_op(&[a.clone(), b.clone()], |t, v| t.l1_loss(v[0], v[1]), 100, h, 5),
        ),
        (
            "l2",
            check_op(&[a.clone(), b.clone()], |t, v| t.l2_loss(v[0], v[1]), 100, h, 6),
        ),
        (
            "conv",
            check_op(&[a, w, bias], |t, v| t.conv2d(v[0], v[1], v[2], &spec), 100, h, 7),
        ),
    ] {
        let r = r.unwrap();
        println!(
            "{name}: {} checked, {} skipped, max rel err {:.2e}",
            r.checked, r.skipped, r.max_rel_err
        );
        assert!(r.passes(1e-4, 100), "{name}: {r:?}");
    }
}

#[test]
fn conv_gradients_on_small_dilated_case() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let spec = ConvSpec::square(1, 1, 3, 2).unwrap();
    let x = random64(Shape::new(1, 1, 5, 5), &mut rng);
    let w = random64(spec.weight_shape(), &mut rng);
    let b = random64(spec.bias_shape(), &mut rng);
    let r = check_op(&[x, w, b], |t, v| t.conv2d(v[0], v[1], v[2], &spec), 35, 1e-4, 10).unwrap();
    assert!(r.passes(1e-4, 35), "{r:?}");
}

#[test]
fn l1_gradient_on_random_2x2() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let p = random64(Shape::new(1, 1, 2, 2), &mut rng);
    let t = random64(Shape::new(1, 1, 2, 2), &mut rng);
    let r = check_op(&[p, t], |tape, v| tape.l1_loss(v[0], v[1]), 8, 1e-4, 13).unwrap();
    assert!(r.passes(1e-4, 8), "{r:?}");
}

#[test]
fn shared_inputs_accumulate_gradients() {
    let mut tape = Tape::new();
    let x = tape.leaf(
        Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![3.0f64, -2.0]).unwrap(),
        true,
    );
    let sq = tape.mul(x, x).unwrap();
    let y = tape.add(sq, x).unwrap();
    let s = tape.sum(y).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[7.0, -3.0]);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::<f32>::zeros(Shape::new(1, 1, 2, 2)), true);
    let y = tape.relu(x).unwrap();
    assert!(tape.backward(y).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conv_op_gradients_match(
        kh in prop::sample::select(vec![1usize, 3, 5]),
        kw in prop::sample::select(vec![1usize, 3, 5]),
        d in 1usize..4,
        cin in 1usize..4,
        cout in 1usize..4,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = ConvSpec::new(cin, cout, kh, kw, d).unwrap();
        let x = random64(Shape::new(2, cin, 6, 5), &mut rng);
        let w = random64(spec.weight_shape(), &mut rng);
        let b = random64(spec.bias_shape(), &mut rng);
        let r = check_op(&[x, w, b], |t, v| t.conv2d(v[0], v[1], v[2], &spec), 20, 1e-6, seed).unwrap();
        prop_assert!(r.passes(1e-6, 20), "{:?}", r);
    }
}
