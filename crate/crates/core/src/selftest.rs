//! Built-in consistency checks run by `lrfnet selftest`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arch::{build_model, count_parameters, DilationScheme, NetworkConfig, ResBlockScheme, Variant};
use crate::conv::{self, ConvParams, ConvSpec};
use crate::data::{resize, synthetic, ImageRGB};
use crate::gradcheck::{self, rel_err};
use crate::train::LossKind;
use crate::{Result, Shape, Tensor};

#[derive(Debug, Clone, Copy, Default)]
pub struct SelfTestOptions {
    /// Perturbs the fast convolution output before it is compared with the
    /// reference. Exists so the failure path can be exercised.
    pub corrupt_conv: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct SelfTestReport {
    pub checks: Vec<CheckResult>,
}

impl SelfTestReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: impl Into<String>, outcome: Result<(bool, String)>) {
        let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        self.checks.push(CheckResult {
            name: name.into(),
            passed,
            detail,
        });
    }
}

impl fmt::Display for SelfTestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "[{}] {}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            )?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

/// Reference parameter counts, in thousands, for k = 3, 5, 7, 9, 11.
pub const PARAMS_B: [usize; 5] = [889, 2462, 4821, 7967, 11899];
pub const PARAMS_S: [usize; 5] = [299, 496, 693, 889, 1086];
pub const KERNELS: [usize; 5] = [3, 5, 7, 9, 11];

pub fn run(opts: SelfTestOptions) -> SelfTestReport {
    let mut report = SelfTestReport::default();
    report.push("conv oracle", conv_oracle(opts));
    report.push("param-count table", param_table());
    report.push("bicubic partition of unity", bicubic_unity());
    report.push("op gradients", op_gradients());
    for (label, cfg) in gradcheck_configs() {
        report.push(format!("gradient check {label}"), model_gradient(&cfg));
    }
    report
}

fn random_tensor(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f32> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn max_rel(a: &Tensor<f32>, b: &Tensor<f32>) -> f64 {
    let scale = b.data().iter().fold(0.0f64, |m, v| m.max(v.abs() as f64)).max(1e-12);
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (*x as f64 - *y as f64).abs() / scale)
        .fold(0.0, f64::max)
}

fn conv_oracle(opts: SelfTestOptions) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let specs = [
        ConvSpec::square(3, 4, 3, 1)?,
        ConvSpec::square(2, 3, 5, 2)?,
        ConvSpec::new(3, 2, 1, 7, 3)?,
        ConvSpec::new(2, 2, 9, 1, 1)?,
    ];
    let mut worst = 0.0f64;
    for spec in &specs {
        let x = random_tensor(Shape::new(2, spec.in_channels, 13, 11), &mut rng);
        let p = ConvParams {
            weight: random_tensor(spec.weight_shape(), &mut rng),
            bias: random_tensor(spec.bias_shape(), &mut rng),
        };
        let mut fast = conv::forward(&x, &p, spec)?;
        if opts.corrupt_conv {
            fast.data_mut()[0] += 0.25;
        }
        let slow = conv::reference::forward(&x, &p, spec)?;
        worst = worst.max(max_rel(&fast, &slow));

        let g = random_tensor(slow.shape(), &mut rng);
        let gf = conv::backward(&g, &x, &p, spec)?;
        let gr = conv::reference::backward(&g, &x, &p, spec)?;
        worst = worst
            .max(max_rel(&gf.input, &gr.input))
            .max(max_rel(&gf.weight, &gr.weight))
            .max(max_rel(&gf.bias, &gr.bias));
    }
    Ok((worst < 1e-6, format!("{} specs, max rel err {worst:.2e}", specs.len())))
}

fn param_table() -> Result<(bool, String)> {
    let mut mismatches = Vec::new();
    for (variant, table) in [(Variant::B, PARAMS_B), (Variant::S, PARAMS_S)] {
        for (k, expected) in KERNELS.iter().zip(table) {
            let got = count_parameters(&NetworkConfig::new(variant).with_kernel(*k))? / 1000;
            if got != expected {
                mismatches.push(format!("{variant} k={k}: {got}k != {expected}k"));
            }
        }
    }
    let detail = if mismatches.is_empty() {
        "10 entries match".to_string()
    } else {
        mismatches.join("; ")
    };
    Ok((mismatches.is_empty(), detail))
}

fn bicubic_unity() -> Result<(bool, String)> {
    let constant = ImageRGB::filled(37, 29, [0.3, 0.6, 0.9])?;
    let mut worst = 0.0f64;
    for (w, h, aa) in [(9, 7, true), (148, 116, false), (12, 10, true), (74, 58, false)] {
        let out = resize::resize_bicubic(&constant, w, h, aa)?;
        for c in 0..3 {
            let v = [0.3f64, 0.6, 0.9][c];
            for &p in out.plane(c) {
                worst = worst.max((p as f64 - v).abs());
            }
        }
    }
    let img = synthetic::image(24, 16, 5);
    let same = resize::resize_bicubic(&img, 24, 16, true)?;
    let identity = same == img;
    Ok((
        worst < 1e-6 && identity,
        format!("constant max deviation {worst:.1e}, same-size identity {identity}"),
    ))
}

fn op_gradients() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut rand64 = |s: Shape| Tensor::<f64>::from_fn(s, |_| rng.random_range(-1.0..1.0));
    let spec = ConvSpec::new(2, 3, 3, 1, 2)?;
    let x = rand64(Shape::new(1, 2, 6, 5));
    let w = rand64(spec.weight_shape());
    let b = rand64(spec.bias_shape());
    let y = rand64(Shape::new(1, 2, 6, 5));
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut record = |r: gradcheck::GradCheckReport| {
        worst = worst.max(r.max_rel_err);
        checked += r.checked;
    };
    record(gradcheck::check_op(
        &[x.clone(), w, b],
        |t, v| t.conv2d(v[0], v[1], v[2], &spec),
        30,
        1e-6,
        1,
    )?);
    record(gradcheck::check_op(
        std::slice::from_ref(&x),
        |t, v| t.relu(v[0]),
        20,
        1e-6,
        2,
    )?);
    record(gradcheck::check_op(
        &[x.clone(), y.clone()],
        |t, v| t.mul(v[0], v[1]),
        20,
        1e-6,
        3,
    )?);
    record(gradcheck::check_op(
        &[x.clone(), y.clone()],
        |t, v| t.l1_loss(v[0], v[1]),
        20,
        1e-6,
        4,
    )?);
    record(gradcheck::check_op(&[x, y], |t, v| t.l2_loss(v[0], v[1]), 20, 1e-6, 5)?);
    Ok((worst < 1e-6, format!("{checked} coordinates, max rel err {worst:.2e}")))
}

/// Reduced networks covering every variant and block scheme.
pub fn gradcheck_configs() -> Vec<(String, NetworkConfig)> {
    let mut out = vec![("B".to_string(), NetworkConfig::new(Variant::B).with_size(2, 4))];
    for scheme in [
        ResBlockScheme::A,
        ResBlockScheme::B,
        ResBlockScheme::C,
        ResBlockScheme::D,
    ] {
        out.push((
            format!("S scheme {scheme}"),
            NetworkConfig::new(Variant::S).with_size(2, 4).with_scheme(scheme),
        ));
    }
    out.push((
        "A s148".to_string(),
        NetworkConfig::new(Variant::A)
            .with_size(3, 4)
            .with_dilation(DilationScheme::S148),
    ));
    out.push(("SA s148".to_string(), NetworkConfig::new(Variant::SA).with_size(3, 4)));
    out
}

/// Finite-difference check of a reduced model at f64: at least 50 sampled
/// parameters, relative error below 1e-3.
pub fn model_gradient(cfg: &NetworkConfig) -> Result<(bool, String)> {
    let model = build_model::<f64>(cfg, 7)?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let shape = Shape::new(1, 3, 16, 16);
    let x = Tensor::<f64>::from_fn(shape, |_| rng.random_range(0.0..1.0));
    let target = Tensor::<f64>::from_fn(shape, |_| rng.random_range(0.0..1.0));
    let r = gradcheck::check_model(&model, &x, &target, LossKind::L2, 60, 1e-6, 9)?;
    let worst = r
        .worst
        .as_ref()
        .map(|(l, a, n)| format!(" (worst {l}: {a:.6e} vs {n:.6e}, {:.1e})", rel_err(*a, *n)))
        .unwrap_or_default();
    Ok((
        r.passes(1e-3, 50),
        format!(
            "{} checked, {} skipped, max rel err {:.2e}{worst}",
            r.checked, r.skipped, r.max_rel_err
        ),
    ))
}
