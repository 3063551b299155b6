use lrfnet::arch::{Model, NetworkConfig, Variant};
use lrfnet::data::{make_lr_pair, synthetic, ImageRGB};
use lrfnet::metrics::{evaluate, psnr, rgb_to_y, score, ssim, ColourSpace, EvalReport, ImageScore, Plane, Protocol};
use proptest::prelude::*;

fn plane(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> Plane {
    Plane::new(
        w,
        h,
        (0..h)
            .flat_map(|y| (0..w).map(move |x| (y, x)))
            .map(|(y, x)| f(y, x))
            .collect(),
    )
    .unwrap()
}

#[test]
fn psnr_of_known_error() {
    let a = plane(10, 10, |_, _| 0.5);
    let b = plane(10, 10, |y, x| if (x + y) % 2 == 0 { 0.6 } else { 0.4 });
    // MSE = 0.01 exactly, so PSNR = 20 dB.
    assert!((psnr(&[a.clone()], &[b], 1.0).unwrap() - 20.0).abs() < 1e-9);
    assert_eq!(psnr(&[a.clone()], &[a], 1.0).unwrap(), f64::INFINITY);
}

#[test]
fn luma_uses_studio_swing() {
    let white = ImageRGB::filled(2, 2, [1.0, 1.0, 1.0]).unwrap();
    let black = ImageRGB::filled(2, 2, [0.0, 0.0, 0.0]).unwrap();
    assert!((rgb_to_y(&white).at(0, 0) - 235.0 / 255.0).abs() < 1e-6);
    assert!((rgb_to_y(&black).at(0, 0) - 16.0 / 255.0).abs() < 1e-9);
    let red = ImageRGB::filled(1, 1, [1.0, 0.0, 0.0]).unwrap();
    assert!((rgb_to_y(&red).at(0, 0) - (16.0 + 65.481) / 255.0).abs() < 1e-6);
}

#[test]
fn ssim_basic_properties() {
    let a = plane(32, 24, |y, x| ((x * 7 + y * 3) % 11) as f64 / 10.0);
    let b = plane(32, 24, |y, x| ((x * 5 + y * 2) % 13) as f64 / 12.0);
    assert!((ssim(&a, &a, 1.0).unwrap() - 1.0).abs() < 1e-12);
    let ab = ssim(&a, &b, 1.0).unwrap();
    assert!((ab - ssim(&b, &a, 1.0).unwrap()).abs() < 1e-12);
    assert!(ab < 0.9 && ab > -1.0);
    assert!(ssim(&plane(8, 8, |_, _| 0.0), &plane(8, 8, |_, _| 0.0), 1.0).is_err());
}

#[test]
fn score_quantises_and_shaves() {
    let hr = synthetic::image(40, 32, 4);
    // Sub-quantum perturbation disappears after rounding.
    let nudged = ImageRGB::from_fn(40, 32, |c, y, x| hr.at(c, y, x) + 0.001).unwrap();
    assert_eq!(score(&nudged, &hr, Protocol::benchmark(4)).unwrap().0, f64::INFINITY);

    // Corrupt only the border: shaving hides it.
    let framed = ImageRGB::from_fn(
        40,
        32,
        |c, y, x| if x < 2 { 1.0 - hr.at(c, y, x) } else { hr.at(c, y, x) },
    )
    .unwrap();
    let (p, s) = score(&framed, &hr, Protocol::benchmark(2)).unwrap();
    assert_eq!((p, s), (f64::INFINITY, 1.0));
    assert!(score(
        &framed,
        &hr,
        Protocol {
            colour_space: ColourSpace::Y,
            shave: 0
        }
    )
    .unwrap()
    .0
    .is_finite());
    assert!(score(&framed, &hr, Protocol::rgb(1)).unwrap().0.is_finite());
    assert!(score(&hr.crop(0, 0, 20, 20).unwrap(), &hr, Protocol::benchmark(4)).is_err());
}

#[test]
fn infinite_scores_excluded_from_means() {
    let mk = |name: &str, psnr| ImageScore {
        name: name.into(),
        scale: 4,
        psnr,
        ssim: 0.5,
    };
    let r = EvalReport::from_scores(
        Protocol::benchmark(4),
        4,
        vec![mk("a", 30.0), mk("b", f64::INFINITY), mk("c", 20.0)],
    );
    assert_eq!(r.mean_psnr, 25.0);
    assert_eq!(r.warnings.len(), 1);
    let csv = r.to_csv();
    assert!(csv.starts_with("# colour_space=y shave=4 scale=4 images=3\nname,scale,psnr,ssim\n"));
    assert!(csv.contains("mean,4,25.000000,0.500000"));
    assert!(r.to_table().contains("warning: b"));
}

/// A zero-initialised network is exactly the identity, so its report must be
/// bit-identical to the bicubic baseline.
#[test]
fn zero_model_matches_bicubic_report_exactly() {
    let data: Vec<(String, ImageRGB)> = (0..4)
        .map(|i| (format!("img{i}"), synthetic::image(64 + 8 * i, 48, 30 + i as u64)))
        .collect();
    for v in [Variant::B, Variant::SA] {
        let model = Model::<f32>::zeros(&NetworkConfig::new(v).with_size(2, 4)).unwrap();
        for protocol in [Protocol::benchmark(4), Protocol::rgb(4)] {
            let base = evaluate(None, &data, 4, protocol).unwrap();
            let ident = evaluate(Some(&model), &data, 4, protocol).unwrap();
            assert_eq!(ident.report, base.report);
            assert_eq!(ident.report.to_csv(), base.report.to_csv());
            assert_eq!(ident.outputs, base.outputs);
        }
    }
}

#[test]
fn bicubic_x4_scores_above_x8() {
    let hr = synthetic::image(96, 96, 1);
    let pair = make_lr_pair(&hr, 4).unwrap();
    let (p4, s4) = score(&pair.input, &pair.target, Protocol::benchmark(4)).unwrap();
    let pair8 = make_lr_pair(&hr, 8).unwrap();
    let (p8, s8) = score(&pair8.input, &pair8.target, Protocol::benchmark(8)).unwrap();
    assert!(p4 > p8 && s4 > s8, "x4 {p4}/{s4} x8 {p8}/{s8}");
    assert!(p8 > 10.0 && s8 > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ssim_bounded_and_symmetric(seed_a in any::<u64>(), seed_b in any::<u64>()) {
        let a = rgb_to_y(&synthetic::image(24, 20, seed_a));
        let b = rgb_to_y(&synthetic::image(24, 20, seed_b));
        let s = ssim(&a, &b, 1.0).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert!((s - ssim(&b, &a, 1.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn psnr_decreases_with_noise(seed in any::<u64>(), amp in 0.01f64..0.2) {
        let a = rgb_to_y(&synthetic::image(16, 16, seed));
        let noisy = |k: f64| plane(16, 16, |y, x| a.at(y, x) + k * if (x * 3 + y) % 2 == 0 { 1.0 } else { -1.0 });
        let p1 = psnr(&[a.clone()], &[noisy(amp)], 1.0).unwrap();
        let p2 = psnr(&[a.clone()], &[noisy(2.0 * amp)], 1.0).unwrap();
        prop_assert!((p1 - p2 - 20.0 * 2f64.log10()).abs() < 1e-9);
    }
}
