//! Procedural test images: smooth gradients with a band-limited texture,
//! overlaid with hard-edged discs, rectangles and sinusoidal stripes. They have enough high-frequency content
//! for bicubic upscaling to lose detail, which is what desk-scale training and
//! the self-test need when no real dataset is at hand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ImageRGB;

enum Shape {
    Disc {
        cx: f32,
        cy: f32,
        r: f32,
    },
    Rect {
        x0: f32,
        y0: f32,
        x1: f32,
        y1: f32,
    },
    Stripes {
        angle: f32,
        period: f32,
        cx: f32,
        cy: f32,
        r: f32,
    },
}

pub fn image(width: usize, height: usize, seed: u64) -> ImageRGB {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1a6e);
    let (w, h) = (width as f32, height as f32);
    let base: [[f32; 3]; 2] = [rand_colour(&mut rng), rand_colour(&mut rng)];
    let angle: f32 = rng.random_range(0.0..std::f32::consts::TAU);
    let (ga, gb) = (angle.cos(), angle.sin());
    // (kx, ky, phase, amplitude) of each texture wave.
    let waves: Vec<(f32, f32, f32, f32)> = (0..6)
        .map(|_| {
            let dir: f32 = rng.random_range(0.0..std::f32::consts::TAU);
            let freq = std::f32::consts::TAU / rng.random_range(3.0f32..24.0);
            (
                freq * dir.cos(),
                freq * dir.sin(),
                rng.random_range(0.0..std::f32::consts::TAU),
                rng.random_range(0.01..0.04),
            )
        })
        .collect();

    let count = 6 + (width * height / 2048).min(24);
    let shapes: Vec<(Shape, [f32; 3])> = (0..count)
        .map(|_| {
            let colour = rand_colour(&mut rng);
            let cx = rng.random_range(0.0..w);
            let cy = rng.random_range(0.0..h);
            let size = rng.random_range(0.05..0.3) * w.min(h);
            let shape = match rng.random_range(0..3) {
                0 => Shape::Disc { cx, cy, r: size },
                1 => Shape::Rect {
                    x0: cx - size,
                    y0: cy - size * rng.random_range(0.3..1.0),
                    x1: cx + size * rng.random_range(0.3..1.0),
                    y1: cy + size,
                },
                _ => Shape::Stripes {
                    angle: rng.random_range(0.0..std::f32::consts::PI),
                    period: rng.random_range(3.0..12.0),
                    cx,
                    cy,
                    r: size * 1.5,
                },
            };
            (shape, colour)
        })
        .collect();

    ImageRGB::from_fn(width, height, |c, y, x| {
        let (fx, fy) = (x as f32 + 0.5, y as f32 + 0.5);
        let t = (((fx / w - 0.5) * ga + (fy / h - 0.5) * gb) + 0.5).clamp(0.0, 1.0);
        let mut v = base[0][c] * (1.0 - t) + base[1][c] * t;
        for &(kx, ky, phase, amp) in &waves {
            v += amp * (kx * fx + ky * fy + phase + c as f32).sin();
        }
        for (shape, colour) in &shapes {
            match *shape {
                Shape::Disc { cx, cy, r } => {
                    if (fx - cx).powi(2) + (fy - cy).powi(2) <= r * r {
                        v = colour[c];
                    }
                }
                Shape::Rect { x0, y0, x1, y1 } => {
                    if fx >= x0 && fx <= x1 && fy >= y0 && fy <= y1 {
                        v = colour[c];
                    }
                }
                Shape::Stripes {
                    angle,
                    period,
                    cx,
                    cy,
                    r,
                } => {
                    let (dx, dy) = (fx - cx, fy - cy);
                    if dx.abs() <= r && dy.abs() <= r {
                        let p = dx * angle.cos() + dy * angle.sin();
                        let s = (p * std::f32::consts::TAU / period).sin();
                        v = 0.5 * (v + colour[c] * (0.5 + 0.5 * s));
                    }
                }
            }
        }
        (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
    })
    .expect("non-empty")
}

fn rand_colour(rng: &mut ChaCha8Rng) -> [f32; 3] {
    [
        rng.random_range(0.05..0.95),
        rng.random_range(0.05..0.95),
        rng.random_range(0.05..0.95),
    ]
}

/// `count` images seeded `seed, seed + 1, …`.
pub fn dataset(count: usize, width: usize, height: usize, seed: u64) -> Vec<ImageRGB> {
    (0..count).map(|i| image(width, height, seed + i as u64)).collect()
}
