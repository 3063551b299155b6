//! PSNR, SSIM and the evaluation protocol.
//!
//! Scores are always computed on 8-bit quantised outputs so that re-scoring a
//! saved PNG gives the same number. Benchmark sets are scored on BT.601 luma
//! with a `scale`-pixel border removed; DIV2K-style validation on RGB.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::arch::Model;
use crate::data::{make_lr_pair, ImageRGB};
use crate::{Error, Exec, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColourSpace {
    Rgb,
    Y,
}

impl fmt::Display for ColourSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColourSpace::Rgb => "rgb",
            ColourSpace::Y => "y",
        })
    }
}

impl FromStr for ColourSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rgb" => Ok(ColourSpace::Rgb),
            "y" | "luma" => Ok(ColourSpace::Y),
            other => Err(Error::config(format!(
                "unknown colour space {other:?} (expected y or rgb)"
            ))),
        }
    }
}

/// How images are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Protocol {
    pub colour_space: ColourSpace,
    /// Pixels removed from every side before scoring.
    pub shave: usize,
}

impl Protocol {
    /// Y channel, `scale` pixels shaved.
    pub fn benchmark(scale: usize) -> Self {
        Protocol {
            colour_space: ColourSpace::Y,
            shave: scale,
        }
    }

    /// RGB, `scale` pixels shaved.
    pub fn rgb(scale: usize) -> Self {
        Protocol {
            colour_space: ColourSpace::Rgb,
            shave: scale,
        }
    }
}

/// Single-channel `f64` image.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape(format!(
                "{} samples for a {width}x{height} plane",
                data.len()
            )));
        }
        Ok(Plane { width, height, data })
    }

    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn shave(&self, border: usize) -> Result<Plane> {
        if 2 * border >= self.width || 2 * border >= self.height {
            return Err(Error::shape(format!(
                "cannot shave {border} pixels from a {}x{} image",
                self.width, self.height
            )));
        }
        let (w, h) = (self.width - 2 * border, self.height - 2 * border);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            let row = (y + border) * self.width + border;
            data.extend_from_slice(&self.data[row..row + w]);
        }
        Plane::new(w, h, data)
    }
}

/// BT.601 studio-swing luma in `[16/255, 235/255]`.
pub fn rgb_to_y(img: &ImageRGB) -> Plane {
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let data = r
        .iter()
        .zip(g)
        .zip(b)
        .map(|((&r, &g), &b)| (16.0 + 65.481 * r as f64 + 128.553 * g as f64 + 24.966 * b as f64) / 255.0)
        .collect();
    Plane::new(img.width(), img.height(), data).expect("sized")
}

fn rgb_planes(img: &ImageRGB) -> Vec<Plane> {
    (0..3)
        .map(|c| {
            Plane::new(
                img.width(),
                img.height(),
                img.plane(c).iter().map(|&v| v as f64).collect(),
            )
            .expect("sized")
        })
        .collect()
}

/// PSNR in dB over all samples of all planes; `+∞` for identical inputs.
pub fn psnr(a: &[Plane], b: &[Plane], peak: f64) -> Result<f64> {
    if a.len() != b.len() || a.iter().zip(b).any(|(p, q)| p.width != q.width || p.height != q.height) {
        return Err(Error::shape("psnr: image sizes differ"));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, q) in a.iter().zip(b) {
        sum += p.data.iter().zip(&q.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        n += p.data.len();
    }
    if n == 0 {
        return Err(Error::Empty("psnr of empty images".into()));
    }
    let mse = sum / n as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn gaussian_1d() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.map(|v| v / s)
}

/// Valid-region separable Gaussian filtering.
fn filter_valid(data: &[f64], w: usize, h: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = g.iter().enumerate().map(|(k, &gk)| gk * data[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = g.iter().enumerate().map(|(k, &gk)| gk * tmp[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM with an 11×11 Gaussian window (σ = 1.5) over the valid region.
pub fn ssim(a: &Plane, b: &Plane, peak: f64) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::shape("ssim: image sizes differ"));
    }
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::shape(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            a.width, a.height
        )));
    }
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    let g = gaussian_1d();
    let (w, h) = (a.width, a.height);
    let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(x, y)| x * y).collect() };
    let mu_a = filter_valid(&a.data, w, h, &g);
    let mu_b = filter_valid(&b.data, w, h, &g);
    let aa = filter_valid(&prod(&a.data, &a.data), w, h, &g);
    let bb = filter_valid(&prod(&b.data, &b.data), w, h, &g);
    let ab = filter_valid(&prod(&a.data, &b.data), w, h, &g);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / n as f64)
}

/// Scores `sr` against `hr` after 8-bit quantisation of `sr`. Returns
/// (PSNR, SSIM); RGB SSIM is the mean over channels.
pub fn score(sr: &ImageRGB, hr: &ImageRGB, protocol: Protocol) -> Result<(f64, f64)> {
    if sr.width() != hr.width() || sr.height() != hr.height() {
        return Err(Error::shape(format!(
            "output {}x{} vs ground truth {}x{}",
            sr.width(),
            sr.height(),
            hr.width(),
            hr.height()
        )));
    }
    let sr = sr.quantize();
    let (p, q): (Vec<Plane>, Vec<Plane>) = match protocol.colour_space {
        ColourSpace::Y => (vec![rgb_to_y(&sr)], vec![rgb_to_y(hr)]),
        ColourSpace::Rgb => (rgb_planes(&sr), rgb_planes(hr)),
    };
    let p: Vec<Plane> = p.iter().map(|x| x.shave(protocol.shave)).collect::<Result<_>>()?;
    let q: Vec<Plane> = q.iter().map(|x| x.shave(protocol.shave)).collect::<Result<_>>()?;
    let psnr = psnr(&p, &q, 1.0)?;
    let s = p
        .iter()
        .zip(&q)
        .map(|(x, y)| ssim(x, y, 1.0))
        .collect::<Result<Vec<_>>>()?;
    Ok((psnr, s.iter().sum::<f64>() / s.len() as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageScore {
    pub name: String,
    pub scale: usize,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub scale: usize,
    pub images: Vec<ImageScore>,
    /// Mean over images with finite PSNR.
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn from_scores(protocol: Protocol, scale: usize, images: Vec<ImageScore>) -> Self {
        let mut warnings = Vec::new();
        let kept: Vec<&ImageScore> = images
            .iter()
            .filter(|s| {
                let finite = s.psnr.is_finite();
                if !finite {
                    warnings.push(format!(
                        "{}: output identical to ground truth, excluded from means",
                        s.name
                    ));
                }
                finite
            })
            .collect();
        let n = kept.len() as f64;
        let (mean_psnr, mean_ssim) = if kept.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (
                kept.iter().map(|s| s.psnr).sum::<f64>() / n,
                kept.iter().map(|s| s.ssim).sum::<f64>() / n,
            )
        };
        EvalReport {
            protocol,
            scale,
            images,
            mean_psnr,
            mean_ssim,
            warnings,
        }
    }

    fn header(&self) -> String {
        format!(
            "# colour_space={} shave={} scale={} images={}",
            self.protocol.colour_space,
            self.protocol.shave,
            self.scale,
            self.images.len()
        )
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header();
        s.push_str("\nname,scale,psnr,ssim\n");
        for r in &self.images {
            let _ = writeln!(s, "{},{},{:.6},{:.6}", r.name, r.scale, r.psnr, r.ssim);
        }
        let _ = writeln!(s, "mean,{},{:.6},{:.6}", self.scale, self.mean_psnr, self.mean_ssim);
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = self.header();
        s.push('\n');
        let width = self.images.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
        let _ = writeln!(s, "{:<width$}  {:>9}  {:>7}", "name", "PSNR(dB)", "SSIM");
        for r in &self.images {
            let _ = writeln!(s, "{:<width$}  {:>9.2}  {:>7.4}", r.name, r.psnr, r.ssim);
        }
        let _ = writeln!(
            s,
            "{:<width$}  {:>9.2}  {:>7.4}",
            "mean", self.mean_psnr, self.mean_ssim
        );
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}

/// Runs the network on a bicubic-upscaled input and returns the clipped,
/// quantised output. With no model this is the bicubic baseline.
pub fn super_resolve(model: Option<&Model<f32>>, input: &ImageRGB) -> Result<ImageRGB> {
    let out = match model {
        Some(m) => ImageRGB::from_tensor(&m.forward(&input.to_tensor())?, 0)?,
        None => input.clone(),
    };
    Ok(out.quantize())
}

/// Per-image outputs alongside the report.
pub struct Evaluation {
    pub report: EvalReport,
    pub outputs: Vec<(String, ImageRGB)>,
}

/// Generates LR inputs from HR images, super-resolves them and scores the
/// results. `model = None` scores plain bicubic upscaling.
pub fn evaluate(
    model: Option<&Model<f32>>,
    dataset: &[(String, ImageRGB)],
    scale: usize,
    protocol: Protocol,
) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::Empty("evaluation dataset".into()));
    }
    let results = Exec::default().map(dataset.len(), |i| -> Result<(ImageScore, ImageRGB)> {
        let (name, hr) = &dataset[i];
        let pair = make_lr_pair(hr, scale)?;
        let sr = super_resolve(model, &pair.input)?;
        let (psnr, ssim) = score(&sr, &pair.target, protocol)?;
        Ok((
            ImageScore {
                name: name.clone(),
                scale,
                psnr,
                ssim,
            },
            sr,
        ))
    });
    let mut scores = Vec::with_capacity(results.len());
    let mut outputs = Vec::with_capacity(results.len());
    for (r, (name, _)) in results.into_iter().zip(dataset) {
        let (s, img) = r?;
        scores.push(s);
        outputs.push((name.clone(), img));
    }
    Ok(Evaluation {
        report: EvalReport::from_scores(protocol, scale, scores),
        outputs,
    })
}
