//! Separable bicubic resampling with the conventions of MATLAB's `imresize`:
//! Keys cubic with a = -0.5, pixel-centre alignment, kernel widened by the
//! scale factor when shrinking (antialiasing), taps renormalised to sum to one
//! and border pixels replicated.

use super::ImageRGB;
use crate::{Error, Result};

/// Cubic sharpness parameter.
pub const CUBIC_A: f64 = -0.5;

/// Keys cubic convolution kernel with a = -0.5. W(0) = 1, W(±1) = W(±2) = 0.
pub fn cubic(x: f64) -> f64 {
    let a = CUBIC_A;
    let t = x.abs();
    if t <= 1.0 {
        (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

/// Taps of one output sample along one axis.
#[derive(Debug, Clone)]
struct Contribution {
    indices: Vec<usize>,
    weights: Vec<f64>,
}

fn contributions(in_len: usize, out_len: usize, antialias: bool) -> Vec<Contribution> {
    let scale = out_len as f64 / in_len as f64;
    let shrink = antialias && scale < 1.0;
    let kernel_width = if shrink { 4.0 / scale } else { 4.0 };
    let taps = kernel_width.ceil() as isize + 2;
    (0..out_len)
        .map(|i| {
            // Output pixel centre mapped into input coordinates.
            let u = (i as f64 + 0.5) / scale - 0.5;
            let left = (u - kernel_width / 2.0).floor() as isize;
            let mut indices = Vec::with_capacity(taps as usize);
            let mut weights = Vec::with_capacity(taps as usize);
            for j in 0..taps {
                let idx = left + j;
                let d = u - idx as f64;
                let w = if shrink { scale * cubic(scale * d) } else { cubic(d) };
                if w != 0.0 {
                    indices.push(idx.clamp(0, in_len as isize - 1) as usize);
                    weights.push(w);
                }
            }
            let sum: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= sum;
            }
            Contribution { indices, weights }
        })
        .collect()
}

fn resize_rows(src: &[f32], w: usize, h: usize, out_h: usize, antialias: bool) -> Vec<f32> {
    let table = contributions(h, out_h, antialias);
    let mut out = vec![0.0f32; out_h * w];
    for (y, c) in table.iter().enumerate() {
        for x in 0..w {
            let acc: f64 = c
                .indices
                .iter()
                .zip(&c.weights)
                .map(|(&i, &wt)| wt * src[i * w + x] as f64)
                .sum();
            out[y * w + x] = acc as f32;
        }
    }
    out
}

fn resize_cols(src: &[f32], w: usize, h: usize, out_w: usize, antialias: bool) -> Vec<f32> {
    let table = contributions(w, out_w, antialias);
    let mut out = vec![0.0f32; h * out_w];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for (x, c) in table.iter().enumerate() {
            let acc: f64 = c
                .indices
                .iter()
                .zip(&c.weights)
                .map(|(&i, &wt)| wt * row[i] as f64)
                .sum();
            out[y * out_w + x] = acc as f32;
        }
    }
    out
}

/// Bicubic resize to `out_w × out_h`. The axis with the smaller scale
/// factor is processed first (rows on ties). Output is not clipped.
pub fn resize_bicubic(img: &ImageRGB, out_w: usize, out_h: usize, antialias: bool) -> Result<ImageRGB> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::Empty(format!("resize to {out_w}x{out_h}")));
    }
    let (w, h) = (img.width(), img.height());
    let rows_first = (out_h as f64 / h as f64) <= (out_w as f64 / w as f64);
    let mut data = Vec::with_capacity(3 * out_w * out_h);
    for c in 0..3 {
        let plane = img.plane(c);
        let out = if rows_first {
            let t = resize_rows(plane, w, h, out_h, antialias);
            resize_cols(&t, w, out_h, out_w, antialias)
        } else {
            let t = resize_cols(plane, w, h, out_w, antialias);
            resize_rows(&t, out_w, h, out_h, antialias)
        };
        data.extend(out);
    }
    ImageRGB::new(out_w, out_h, data)
}

/// Shrinks by an integer factor with antialiasing.
pub fn downscale(img: &ImageRGB, factor: usize) -> Result<ImageRGB> {
    resize_bicubic(img, img.width() / factor, img.height() / factor, true)
}

/// Enlarges by an integer factor.
pub fn upscale(img: &ImageRGB, factor: usize) -> Result<ImageRGB> {
    resize_bicubic(img, img.width() * factor, img.height() * factor, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_interpolates_at_integers() {
        assert_eq!(cubic(0.0), 1.0);
        for x in [-2.0, -1.0, 1.0, 2.0, 2.5] {
            assert_eq!(cubic(x), 0.0);
        }
    }

    #[test]
    fn partition_of_unity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let x: f64 = rng.random_range(0.0..1.0);
            let s: f64 = (-3..=3).map(|i| cubic(x - i as f64)).sum();
            assert!((s - 1.0).abs() < 1e-12, "phase {x}: {s}");
        }
    }

    #[test]
    fn unit_scale_is_identity() {
        let img = ImageRGB::from_fn(9, 7, |c, y, x| ((c * 31 + y * 17 + x * 5) % 256) as f32 / 255.0).unwrap();
        let out = resize_bicubic(&img, 9, 7, true).unwrap();
        assert_eq!(out.quantize(), img);
    }

    #[test]
    fn constant_images_stay_constant() {
        let img = ImageRGB::filled(24, 16, [0.25, 0.5, 0.75]).unwrap();
        for (w, h) in [(6, 4), (3, 2), (96, 64), (17, 23)] {
            let out = resize_bicubic(&img, w, h, true).unwrap();
            for c in 0..3 {
                let expect = [0.25, 0.5, 0.75][c];
                assert!(out.plane(c).iter().all(|v| (v - expect).abs() < 1e-6));
            }
        }
    }

    #[test]
    fn zero_size_rejected() {
        let img = ImageRGB::filled(4, 4, [0.0; 3]).unwrap();
        assert!(resize_bicubic(&img, 0, 4, true).is_err());
    }
}
