//! Acceptance suite. Prints one `[PASS]`/`[FAIL]`/`[SKIP]` line per
//! criterion with the measured values, and exits nonzero if any criterion
//! fails. Runs without the libtest harness so the lines are always visible.
//!
//! Set `LRFNET_SET5_DIR` (or place the images in `data/Set5` at the workspace
//! root) to enable the bicubic baseline criterion.

use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lrfnet::arch::{
    build_model, chain_receptive_field, count_parameters, receptive_field, DilationScheme, Model, NetworkConfig,
    Variant,
};
use lrfnet::checkpoint::Checkpoint;
use lrfnet::conv::{self, reference, ConvParams, ConvSpec};
use lrfnet::data::{load_dataset, synthetic, ImageRGB, TrainingSet};
use lrfnet::metrics::{evaluate, Protocol};
use lrfnet::selftest::{gradcheck_configs, model_gradient, KERNELS, PARAMS_B, PARAMS_S};
use lrfnet::train::{LossKind, TrainConfig, Trainer};
use lrfnet::{Shape, Tensor};

const CONV_REL_TOL: f64 = 1e-6;
const GRAD_REL_TOL: f64 = 1e-3;
const GRAD_MIN_PARAMS: usize = 50;

const SET5_X4: (f64, f64) = (28.43, 0.811);
const SET5_X8: (f64, f64) = (24.40, 0.658);
const SET5_PSNR_TOL: f64 = 0.3;
const SET5_SSIM_TOL: f64 = 0.01;

const SMOKE_SEED: u64 = 0;
const SMOKE_EPOCHS: usize = 30;
const SMOKE_IMAGES: usize = 10;
const SMOKE_SIZE: usize = 128;
const SMOKE_PATCH: usize = 16;
const SMOKE_BATCH: usize = 8;
const SMOKE_LR: f32 = 3e-4;
const SMOKE_LOSS_RATIO: f32 = 0.5;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn run(id: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = f();
    let took = start.elapsed();
    let timing = format!("{:.1}s, budget {}s", took.as_secs_f64(), budget.as_secs());
    let over = took > budget;
    let (tag, detail, failed) = match outcome {
        Outcome::Pass(d) if over => ("FAIL", format!("{d}; over time budget"), true),
        Outcome::Pass(d) => ("PASS", d, false),
        Outcome::Fail(d) => ("FAIL", d, true),
        Outcome::Skip(d) => ("SKIP", d, false),
    };
    println!("[{tag}] {id}. {name}: {detail} ({timing})");
    !failed
}

fn params_of(v: Variant, k: usize) -> usize {
    count_parameters(&NetworkConfig::new(v).with_kernel(k)).unwrap()
}

fn parameter_table() -> Outcome {
    let out = Command::new(env!("CARGO_BIN_EXE_lrfnet"))
        .args(["summarize", "--sweep", "kernels", "--variant", "B,S", "--format", "csv"])
        .output()
        .expect("spawn lrfnet");
    if !out.status.success() {
        return Outcome::Fail(format!("summarize exited with {}", out.status));
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    let got: Vec<(String, usize, usize)> = stdout
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap(), f[5].parse().unwrap())
        })
        .collect();
    let mut want = Vec::new();
    for (v, table) in [("B", PARAMS_B), ("S", PARAMS_S)] {
        for (k, p) in KERNELS.iter().zip(table) {
            want.push((v.to_string(), *k, p));
        }
    }
    let matched = got.iter().zip(&want).filter(|(g, w)| g == w).count();
    let shown: Vec<String> = got.iter().map(|(v, k, p)| format!("{v}{k}={p}k")).collect();
    verdict(
        got.len() == want.len() && matched == want.len(),
        format!("{matched}/{} entries exact [{}]", want.len(), shown.join(" ")),
    )
}

fn equal_parameters() -> Outcome {
    let (s9, b3) = (params_of(Variant::S, 9), params_of(Variant::B, 3));
    let dilated: Vec<usize> = DilationScheme::ALL
        .iter()
        .map(|&d| count_parameters(&NetworkConfig::new(Variant::A).with_kernel(3).with_dilation(d)).unwrap())
        .collect();
    let all_equal = dilated.iter().all(|&p| p == dilated[0]);
    verdict(
        s9 == b3 && all_equal,
        format!("S k=9 {s9} vs B k=3 {b3}; A k=3 over 5 dilation schemes {dilated:?}"),
    )
}

fn receptive_fields() -> Outcome {
    let sq = |k, d| ConvSpec::new(1, 1, k, k, d).unwrap();
    let col = |k| ConvSpec::new(1, 1, k, 1, 1).unwrap();
    let two_3x3 = chain_receptive_field(&[sq(3, 1), sq(3, 1)]);
    let two_5x1 = chain_receptive_field(&[col(5), col(5)]);
    let dilated = chain_receptive_field(&[sq(3, 1), sq(3, 2)]);
    let micro_ok = two_3x3 == (5, 5) && two_5x1.0 == 9 && dilated == (7, 7);

    let order = [
        DilationScheme::S148,
        DilationScheme::S135,
        DilationScheme::S123,
        DilationScheme::S12,
        DilationScheme::Uniform,
    ];
    let mut ordering_ok = true;
    let mut at3 = Vec::new();
    for k in KERNELS {
        let rf: Vec<usize> = order
            .iter()
            .map(|&d| {
                receptive_field(&NetworkConfig::new(Variant::A).with_kernel(k).with_dilation(d))
                    .unwrap()
                    .0
            })
            .collect();
        ordering_ok &= rf.windows(2).all(|w| w[0] > w[1]);
        if k == 3 {
            at3 = rf;
        }
    }
    verdict(
        micro_ok && ordering_ok,
        format!(
            "3x3+3x3 -> {}, 5x1+5x1 -> {} vertical, 3x3+3x3@2 -> {}; k=3 RF 1-4-8>1-3-5>1-2-3>1-2>1: {:?}; strict at k=3..11: {ordering_ok}",
            two_3x3.0, two_5x1.0, dilated.0, at3
        ),
    )
}

fn random(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f32> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn rel(a: &Tensor<f32>, b: &Tensor<f32>) -> f64 {
    let scale = b.data().iter().fold(0.0f64, |m, v| m.max(v.abs() as f64)).max(1e-12);
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (*x as f64 - *y as f64).abs())
        .fold(0.0, f64::max)
        / scale
}

fn conv_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = (0.0f64, String::new());
    let mut cases = 0;
    for k in [1, 3, 5, 7, 9, 11] {
        for d in [1, 2, 3, 4, 8] {
            for (kh, kw, shape) in [(k, k, "square"), (1, k, "1xk"), (k, 1, "kx1")] {
                let spec = ConvSpec::new(3, 4, kh, kw, d).unwrap();
                let x = random(Shape::new(2, 3, 18, 17), &mut rng);
                let p = ConvParams {
                    weight: random(spec.weight_shape(), &mut rng),
                    bias: random(spec.bias_shape(), &mut rng),
                };
                let g = random(Shape::new(2, 4, 18, 17), &mut rng);
                let fwd = rel(
                    &conv::forward(&x, &p, &spec).unwrap(),
                    &reference::forward(&x, &p, &spec).unwrap(),
                );
                let gf = conv::backward(&g, &x, &p, &spec).unwrap();
                let gr = reference::backward(&g, &x, &p, &spec).unwrap();
                for e in [
                    fwd,
                    rel(&gf.input, &gr.input),
                    rel(&gf.weight, &gr.weight),
                    rel(&gf.bias, &gr.bias),
                ] {
                    if e > worst.0 {
                        worst = (e, format!("{shape} k={k} d={d}"));
                    }
                }
                cases += 1;
            }
        }
    }
    verdict(
        worst.0 < CONV_REL_TOL,
        format!(
            "{cases} cases, forward+backward, worst rel err {:.2e} at {} (tol {CONV_REL_TOL:.0e})",
            worst.0, worst.1
        ),
    )
}

fn gradients() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (label, cfg) in gradcheck_configs() {
        let (passed, detail) = model_gradient(&cfg).unwrap_or_else(|e| (false, e.to_string()));
        ok &= passed;
        let short = detail.split(" (worst").next().unwrap_or(&detail).to_string();
        parts.push(format!("{label}: {short}"));
    }
    verdict(
        ok,
        format!(
            "64-bit, tol {GRAD_REL_TOL:.0e}, >= {GRAD_MIN_PARAMS} params each; {}",
            parts.join("; ")
        ),
    )
}

fn set5_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("LRFNET_SET5_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/Set5"));
    dir.is_dir().then_some(dir)
}

fn bicubic_baseline() -> Outcome {
    let Some(dir) = set5_dir() else {
        return Outcome::Skip("Set5 not found; set LRFNET_SET5_DIR or populate data/Set5 to run this criterion".into());
    };
    let set = match load_dataset(&dir) {
        Ok(s) => s,
        Err(e) => return Outcome::Fail(format!("loading {}: {e}", dir.display())),
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for (scale, (psnr, ssim)) in [(4, SET5_X4), (8, SET5_X8)] {
        let r = evaluate(None, &set, scale, Protocol::benchmark(scale)).unwrap().report;
        ok &= (r.mean_psnr - psnr).abs() <= SET5_PSNR_TOL && (r.mean_ssim - ssim).abs() <= SET5_SSIM_TOL;
        parts.push(format!(
            "x{scale}: {:.2} dB / {:.4} (expected {psnr} +- {SET5_PSNR_TOL} / {ssim} +- {SET5_SSIM_TOL})",
            r.mean_psnr, r.mean_ssim
        ));
    }
    verdict(ok, format!("{} images; {}", set.len(), parts.join("; ")))
}

fn identity_network() -> Outcome {
    let (dataset, source) = match set5_dir().map(|d| load_dataset(&d)) {
        Some(Ok(set)) => (set, "Set5"),
        _ => (
            synthetic::dataset(4, 64, 56, 17)
                .into_iter()
                .enumerate()
                .map(|(i, img)| (format!("synthetic{i}"), img))
                .collect::<Vec<(String, ImageRGB)>>(),
            "4 synthetic images",
        ),
    };
    let mut ok = true;
    let mut checked = Vec::new();
    for cfg in [NetworkConfig::new(Variant::B), NetworkConfig::new(Variant::SA)] {
        let zero = Model::<f32>::zeros(&cfg).unwrap();
        for scale in [4, 8] {
            for protocol in [Protocol::benchmark(scale), Protocol::rgb(scale)] {
                let a = evaluate(Some(&zero), &dataset, scale, protocol).unwrap();
                let b = evaluate(None, &dataset, scale, protocol).unwrap();
                let same = a.report == b.report && a.outputs == b.outputs && a.report.to_csv() == b.report.to_csv();
                ok &= same;
                checked.push(format!("{}x{scale}{}", cfg.variant, protocol.colour_space));
            }
        }
    }
    verdict(ok, format!("{source}; reports bit-identical for {}", checked.join(" ")))
}

fn smoke_configs() -> [(&'static str, NetworkConfig); 3] {
    [
        ("B k=3", NetworkConfig::new(Variant::B).with_size(2, 8)),
        ("S k=7", NetworkConfig::new(Variant::S).with_kernel(7).with_size(2, 8)),
        (
            "A s148",
            NetworkConfig::new(Variant::A)
                .with_dilation(DilationScheme::S148)
                .with_size(2, 8),
        ),
    ]
}

fn training_smoke() -> Outcome {
    let images = synthetic::dataset(SMOKE_IMAGES, SMOKE_SIZE, SMOKE_SIZE, SMOKE_SEED);
    let named: Vec<(String, ImageRGB)> = images
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, img)| (i.to_string(), img))
        .collect();
    let set = TrainingSet::from_images(&images, &[4], SMOKE_PATCH).unwrap();
    let bicubic = evaluate(None, &named, 4, Protocol::benchmark(4))
        .unwrap()
        .report
        .mean_psnr;
    let train = TrainConfig {
        initial_lr: SMOKE_LR,
        total_epochs: SMOKE_EPOCHS,
        batch_size: SMOKE_BATCH,
        seed: SMOKE_SEED,
        loss: LossKind::L1,
        augment: true,
        ..TrainConfig::default()
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, cfg) in smoke_configs() {
        let mut trainer = Trainer::new(build_model(&cfg, SMOKE_SEED).unwrap(), train).unwrap();
        let initial = trainer.evaluate_loss(&set).unwrap();
        if let Err(e) = trainer.run(&set, &mut ()) {
            ok = false;
            parts.push(format!("{label}: training error {e}"));
            continue;
        }
        let last = trainer.evaluate_loss(&set).unwrap();
        let psnr = evaluate(Some(trainer.model()), &named, 4, Protocol::benchmark(4))
            .unwrap()
            .report
            .mean_psnr;
        let ratio = last / initial;
        ok &= ratio < SMOKE_LOSS_RATIO && psnr > bicubic;
        parts.push(format!(
            "{label}: loss {initial:.4}->{last:.4} (x{ratio:.3}), Y-PSNR {psnr:.3} dB"
        ));
    }
    verdict(
        ok,
        format!(
            "seed {SMOKE_SEED}, {SMOKE_IMAGES} synthetic {SMOKE_SIZE}px images, x4, {SMOKE_EPOCHS} epochs, lr {SMOKE_LR:e}; bicubic {bicubic:.3} dB; {}",
            parts.join("; ")
        ),
    )
}

fn resume_round_trip() -> Outcome {
    let set = TrainingSet::from_images(&synthetic::dataset(3, 48, 48, 9), &[4, 8], 16).unwrap();
    let cfg = NetworkConfig::new(Variant::S).with_kernel(5).with_size(2, 4);
    let train = TrainConfig {
        initial_lr: 1e-3,
        halving_period: 2,
        total_epochs: 4,
        batch_size: 4,
        seed: 11,
        ..TrainConfig::default()
    };
    let fresh = || Trainer::new(build_model(&cfg, 11).unwrap(), train).unwrap();
    let mut full = fresh();
    full.run(&set, &mut ()).unwrap();
    let reference = Checkpoint::from_trainer(&full).to_bytes();
    let total = full.progress().step;
    let mut ok = true;
    let splits = [1, total / 3, total / 2, total - 1];
    for k in splits {
        let mut first = fresh();
        for _ in 0..k {
            first.train_step(&set).unwrap();
        }
        let bytes = Checkpoint::from_trainer(&first).to_bytes();
        let mut resumed = Checkpoint::from_bytes(&bytes).unwrap().into_trainer().unwrap();
        resumed.run(&set, &mut ()).unwrap();
        ok &= Checkpoint::from_trainer(&resumed).to_bytes() == reference;
    }
    verdict(
        ok,
        format!(
            "{total} steps; resumed after steps {splits:?}: final parameters, moments and RNG byte-identical: {ok}"
        ),
    )
}

fn main() {
    // Ignore libtest-style arguments passed by `cargo test`.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    println!(
        "acceptance: {} build",
        if cfg!(feature = "parallel") {
            "parallel"
        } else {
            "sequential"
        }
    );
    let secs = Duration::from_secs;
    let results = [
        run(1, "parameter-count table", secs(1), parameter_table),
        run(2, "equal-parameter claims", secs(1), equal_parameters),
        run(3, "receptive-field arithmetic", secs(1), receptive_fields),
        run(4, "convolution oracle", secs(120), conv_oracle),
        run(5, "gradient correctness", secs(600), gradients),
        run(6, "Set5 bicubic baseline", secs(60), bicubic_baseline),
        run(7, "identity-network protocol", secs(60), identity_network),
        run(8, "desk-scale training smoke", secs(1200), training_smoke),
        run(9, "checkpoint round trip", secs(120), resume_round_trip),
    ];
    println!("[SKIP] 10. trained-model tables and timings: excluded, not reproducible at desk scale");
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} criteria run, {failed} failed", results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
