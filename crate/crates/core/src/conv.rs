//! Same-padded 2-D convolution with rectangular kernels and dilation.
//!
//! The fast path works on whole image rows: for every kernel tap it adds a
//! scaled, shifted input row segment to an output row segment, restricted to
//! the region where the shifted input is in bounds. Zero padding is implicit.
//! [`reference`] holds a plain per-pixel implementation used as the oracle.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Exec, Real, Result, Shape, Tensor};

/// Geometry of one convolution layer. Every layer carries a bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub dilation: usize,
}

impl ConvSpec {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        dilation: usize,
    ) -> Result<Self> {
        let spec = ConvSpec {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            dilation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn square(in_channels: usize, out_channels: usize, k: usize, dilation: usize) -> Result<Self> {
        Self::new(in_channels, out_channels, k, k, dilation)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::config("convolution needs at least one channel"));
        }
        if self.kernel_h == 0 || self.kernel_w == 0 {
            return Err(Error::config("kernel dimensions must be >= 1"));
        }
        if self.dilation == 0 {
            return Err(Error::config("dilation must be >= 1"));
        }
        if self.kernel_h.is_multiple_of(2) || self.kernel_w.is_multiple_of(2) {
            return Err(Error::config(format!(
                "even kernel {}x{} has no centred same-padding",
                self.kernel_h, self.kernel_w
            )));
        }
        let (eh, ew) = self.extent();
        if eh % 2 == 0 || ew % 2 == 0 {
            return Err(Error::config(format!("even effective extent {eh}x{ew}")));
        }
        Ok(())
    }

    /// Effective (dilated) kernel extent per axis.
    pub fn extent(&self) -> (usize, usize) {
        (
            self.dilation * (self.kernel_h - 1) + 1,
            self.dilation * (self.kernel_w - 1) + 1,
        )
    }

    /// Zero padding per side, per axis.
    pub fn padding(&self) -> (usize, usize) {
        let (eh, ew) = self.extent();
        ((eh - 1) / 2, (ew - 1) / 2)
    }

    /// Receptive field of this layer alone, per axis.
    pub fn receptive_field(&self) -> (usize, usize) {
        self.extent()
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(self.out_channels, self.in_channels, self.kernel_h, self.kernel_w)
    }

    pub fn bias_shape(&self) -> Shape {
        Shape::new(self.out_channels, 1, 1, 1)
    }

    pub fn weight_count(&self) -> usize {
        self.weight_shape().len()
    }

    /// Weights plus biases.
    pub fn param_count(&self) -> usize {
        self.weight_count() + self.out_channels
    }

    /// Spatial offsets (dy, dx) of tap (ky, kx) relative to the output pixel.
    #[inline]
    fn tap_offset(&self, ky: usize, kx: usize) -> (isize, isize) {
        let (ph, pw) = self.padding();
        (
            (ky * self.dilation) as isize - ph as isize,
            (kx * self.dilation) as isize - pw as isize,
        )
    }
}

/// Weights `(out, in, kh, kw)` and bias `(out, 1, 1, 1)` of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> ConvParams<T> {
    pub fn zeros(spec: &ConvSpec) -> Self {
        ConvParams {
            weight: Tensor::zeros(spec.weight_shape()),
            bias: Tensor::zeros(spec.bias_shape()),
        }
    }

    /// He-normal weights (std = sqrt(2 / fan_in)) and zero biases.
    pub fn kaiming<R: Rng + ?Sized>(spec: &ConvSpec, rng: &mut R) -> Self {
        let fan_in = (spec.in_channels * spec.kernel_h * spec.kernel_w) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
        let data = (0..spec.weight_count())
            .map(|_| T::of_f64(normal.sample(rng)))
            .collect();
        ConvParams {
            weight: Tensor::from_vec(spec.weight_shape(), data).expect("sized"),
            bias: Tensor::zeros(spec.bias_shape()),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn check(&self, spec: &ConvSpec) -> Result<()> {
        if self.weight.shape() != spec.weight_shape() {
            return Err(Error::shape(format!(
                "weight {} does not match spec {}",
                self.weight.shape(),
                spec.weight_shape()
            )));
        }
        if self.bias.shape() != spec.bias_shape() {
            return Err(Error::shape(format!(
                "bias {} does not match spec {}",
                self.bias.shape(),
                spec.bias_shape()
            )));
        }
        Ok(())
    }
}

/// Gradients of a convolution with respect to its three inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

fn check_input<T: Real>(x: &Tensor<T>, p: &ConvParams<T>, spec: &ConvSpec) -> Result<()> {
    spec.validate()?;
    p.check(spec)?;
    if x.shape().c != spec.in_channels {
        return Err(Error::config(format!(
            "input has {} channels, convolution expects {}",
            x.shape().c,
            spec.in_channels
        )));
    }
    Ok(())
}

/// Half-open range of output positions `i` with `i + off` inside `0..len`.
#[inline]
fn valid_range(len: usize, off: isize) -> (usize, usize) {
    let lo = (-off).max(0) as usize;
    let hi = (len as isize - off).clamp(0, len as isize) as usize;
    (lo.min(hi), hi)
}

#[inline]
fn axpy<T: Real>(dst: &mut [T], src: &[T], a: T) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + a * s;
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> f64 {
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        acc += x.as_f64() * y.as_f64();
    }
    acc
}

pub fn forward<T: Real>(x: &Tensor<T>, p: &ConvParams<T>, spec: &ConvSpec) -> Result<Tensor<T>> {
    forward_with(Exec::default(), x, p, spec)
}

pub fn forward_with<T: Real>(exec: Exec, x: &Tensor<T>, p: &ConvParams<T>, spec: &ConvSpec) -> Result<Tensor<T>> {
    check_input(x, p, spec)?;
    let xs = x.shape();
    let (h, w) = (xs.h, xs.w);
    let plane = xs.plane();
    let cin = spec.in_channels;
    let taps = spec.kernel_h * spec.kernel_w;
    let out_shape = Shape::new(xs.n, spec.out_channels, h, w);
    let mut out = Tensor::zeros(out_shape);
    let xd = x.data();
    let wd = p.weight.data();
    let bd = p.bias.data();

    // One chunk per (batch item, output channel) plane.
    exec.for_each_chunk(out.data_mut(), plane, |idx, dst| {
        let n = idx / spec.out_channels;
        let o = idx % spec.out_channels;
        dst.fill(bd[o]);
        for i in 0..cin {
            let src = &xd[(n * cin + i) * plane..][..plane];
            let wo = &wd[(o * cin + i) * taps..][..taps];
            for ky in 0..spec.kernel_h {
                for kx in 0..spec.kernel_w {
                    let wv = wo[ky * spec.kernel_w + kx];
                    let (dy, dx) = spec.tap_offset(ky, kx);
                    let (y0, y1) = valid_range(h, dy);
                    let (x0, x1) = valid_range(w, dx);
                    if x0 >= x1 {
                        continue;
                    }
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let sx0 = (x0 as isize + dx) as usize;
                        axpy(
                            &mut dst[y * w + x0..y * w + x1],
                            &src[sy * w + sx0..sy * w + sx0 + (x1 - x0)],
                            wv,
                        );
                    }
                }
            }
        }
    });
    Ok(out)
}

pub fn backward<T: Real>(
    grad_out: &Tensor<T>,
    x: &Tensor<T>,
    p: &ConvParams<T>,
    spec: &ConvSpec,
) -> Result<ConvGrads<T>> {
    backward_with(Exec::default(), grad_out, x, p, spec)
}

pub fn backward_with<T: Real>(
    exec: Exec,
    grad_out: &Tensor<T>,
    x: &Tensor<T>,
    p: &ConvParams<T>,
    spec: &ConvSpec,
) -> Result<ConvGrads<T>> {
    check_input(x, p, spec)?;
    let xs = x.shape();
    let expected = Shape::new(xs.n, spec.out_channels, xs.h, xs.w);
    if grad_out.shape() != expected {
        return Err(Error::shape(format!(
            "grad_out {} does not match forward output {expected}",
            grad_out.shape()
        )));
    }
    let (h, w) = (xs.h, xs.w);
    let plane = xs.plane();
    let (cin, cout) = (spec.in_channels, spec.out_channels);
    let taps = spec.kernel_h * spec.kernel_w;
    let xd = x.data();
    let gd = grad_out.data();
    let wd = p.weight.data();

    // Input gradient: transposed convolution, one chunk per (n, input channel).
    let mut gx = Tensor::zeros(xs);
    exec.for_each_chunk(gx.data_mut(), plane, |idx, dst| {
        let n = idx / cin;
        let i = idx % cin;
        for o in 0..cout {
            let g = &gd[(n * cout + o) * plane..][..plane];
            let wo = &wd[(o * cin + i) * taps..][..taps];
            for ky in 0..spec.kernel_h {
                for kx in 0..spec.kernel_w {
                    let wv = wo[ky * spec.kernel_w + kx];
                    let (dy, dx) = spec.tap_offset(ky, kx);
                    let (y0, y1) = valid_range(h, dy);
                    let (x0, x1) = valid_range(w, dx);
                    if x0 >= x1 {
                        continue;
                    }
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let sx0 = (x0 as isize + dx) as usize;
                        axpy(
                            &mut dst[sy * w + sx0..sy * w + sx0 + (x1 - x0)],
                            &g[y * w + x0..y * w + x1],
                            wv,
                        );
                    }
                }
            }
        }
    });

    // Weight gradient: one chunk per output channel, holding cin * taps
    // weights. Spatial reductions accumulate in f64.
    let mut gw = Tensor::zeros(spec.weight_shape());
    exec.for_each_chunk(gw.data_mut(), cin * taps, |o, dst| {
        let mut wide = vec![0.0f64; cin * taps];
        for n in 0..xs.n {
            let g = &gd[(n * cout + o) * plane..][..plane];
            for i in 0..cin {
                let src = &xd[(n * cin + i) * plane..][..plane];
                for ky in 0..spec.kernel_h {
                    for kx in 0..spec.kernel_w {
                        let (dy, dx) = spec.tap_offset(ky, kx);
                        let (y0, y1) = valid_range(h, dy);
                        let (x0, x1) = valid_range(w, dx);
                        if x0 >= x1 {
                            continue;
                        }
                        let mut acc = 0.0f64;
                        for y in y0..y1 {
                            let sy = (y as isize + dy) as usize;
                            let sx0 = (x0 as isize + dx) as usize;
                            acc += dot(&g[y * w + x0..y * w + x1], &src[sy * w + sx0..sy * w + sx0 + (x1 - x0)]);
                        }
                        wide[i * taps + ky * spec.kernel_w + kx] += acc;
                    }
                }
            }
        }
        for (d, v) in dst.iter_mut().zip(wide) {
            *d = T::of_f64(v);
        }
    });

    let mut gb = Tensor::zeros(spec.bias_shape());
    for (o, b) in gb.data_mut().iter_mut().enumerate() {
        let total: f64 = (0..xs.n)
            .map(|n| {
                gd[(n * cout + o) * plane..][..plane]
                    .iter()
                    .map(|v| v.as_f64())
                    .sum::<f64>()
            })
            .sum();
        *b = T::of_f64(total);
    }

    Ok(ConvGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}

/// Naive per-pixel convolution, kept independent of the row-based fast path.
pub mod reference {
    use super::*;

    fn tap(x: &Tensor<f64>, n: usize, c: usize, y: isize, xx: isize) -> f64 {
        let s = x.shape();
        if y < 0 || xx < 0 || y >= s.h as isize || xx >= s.w as isize {
            0.0
        } else {
            x.at(n, c, y as usize, xx as usize)
        }
    }

    /// Direct evaluation of out[o] = b[o] + Σ w·x over every tap, in `f64`.
    pub fn forward<T: Real>(x: &Tensor<T>, p: &ConvParams<T>, spec: &ConvSpec) -> Result<Tensor<T>> {
        check_input(x, p, spec)?;
        let (x, wt, b) = (x.cast::<f64>(), p.weight.cast::<f64>(), p.bias.cast::<f64>());
        let s = x.shape();
        let d = spec.dilation as isize;
        let cy = (spec.kernel_h / 2) as isize;
        let cx = (spec.kernel_w / 2) as isize;
        let out = Tensor::from_fn(Shape::new(s.n, spec.out_channels, s.h, s.w), |[n, o, y, xx]| {
            let mut acc = b.at(o, 0, 0, 0);
            for i in 0..spec.in_channels {
                for ky in 0..spec.kernel_h {
                    for kx in 0..spec.kernel_w {
                        let sy = y as isize + d * (ky as isize - cy);
                        let sx = xx as isize + d * (kx as isize - cx);
                        acc += wt.at(o, i, ky, kx) * tap(&x, n, i, sy, sx);
                    }
                }
            }
            acc
        });
        Ok(out.cast())
    }

    /// Adjoints computed by scattering every forward term, in `f64`.
    pub fn backward<T: Real>(
        grad_out: &Tensor<T>,
        x: &Tensor<T>,
        p: &ConvParams<T>,
        spec: &ConvSpec,
    ) -> Result<ConvGrads<T>> {
        check_input(x, p, spec)?;
        let s = x.shape();
        if grad_out.shape() != Shape::new(s.n, spec.out_channels, s.h, s.w) {
            return Err(Error::shape("grad_out does not match forward output"));
        }
        let (x, wt, g) = (x.cast::<f64>(), p.weight.cast::<f64>(), grad_out.cast::<f64>());
        let mut gx = Tensor::<f64>::zeros(s);
        let mut gw = Tensor::<f64>::zeros(spec.weight_shape());
        let mut gb = Tensor::<f64>::zeros(spec.bias_shape());
        let d = spec.dilation as isize;
        let cy = (spec.kernel_h / 2) as isize;
        let cx = (spec.kernel_w / 2) as isize;
        for n in 0..s.n {
            for o in 0..spec.out_channels {
                for y in 0..s.h {
                    for xx in 0..s.w {
                        let go = g.at(n, o, y, xx);
                        *gb.at_mut(o, 0, 0, 0) += go;
                        for i in 0..spec.in_channels {
                            for ky in 0..spec.kernel_h {
                                for kx in 0..spec.kernel_w {
                                    let sy = y as isize + d * (ky as isize - cy);
                                    let sx = xx as isize + d * (kx as isize - cx);
                                    if sy < 0 || sx < 0 || sy >= s.h as isize || sx >= s.w as isize {
                                        continue;
                                    }
                                    let (sy, sx) = (sy as usize, sx as usize);
                                    *gw.at_mut(o, i, ky, kx) += go * x.at(n, i, sy, sx);
                                    *gx.at_mut(n, i, sy, sx) += go * wt.at(o, i, ky, kx);
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(ConvGrads {
            input: gx.cast(),
            weight: gw.cast(),
            bias: gb.cast(),
        })
    }
}
