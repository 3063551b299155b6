//! Large receptive field networks for high-scale single-image super-resolution.
//!
//! The crate is a small, self-contained deep-learning engine specialised for
//! one family of networks: a 26-layer residual network operating on bicubic
//! upscaled images, whose residual blocks use square, 1-D (1×k then k×1) or
//! dilated convolutions.
//!
//! * [`tensor`] and [`autograd`]: dense NCHW tensors and a reverse-mode tape.
//! * [`conv`]: same-padded dilated convolution with rectangular kernels.
//! * [`arch`]: network configurations, model construction, parameter and
//!   receptive-field arithmetic.
//! * [`data`]: PNG I/O, bicubic resampling, LR generation, patches and batches.
//! * [`metrics`]: PSNR/SSIM and the benchmark evaluation protocol.
//! * [`train`] and [`checkpoint`]: Adam, the halving schedule, the training loop
//!   and resumable checkpoints.
//!
//! Heavy loops run on rayon when the `parallel` feature is enabled (the
//! default); every parallel section has a sequential twin selected through
//! [`Exec`].

pub mod arch;
pub mod autograd;
pub mod checkpoint;
pub mod config;
pub mod conv;
pub mod data;
mod error;
pub mod gradcheck;
pub mod metrics;
mod par;
pub mod selftest;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use par::Exec;
pub use tensor::{Real, Shape, Tensor};
