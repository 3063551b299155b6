//! Images, low-resolution pair generation, patches, augmentation and batching.

mod image;
pub mod resize;
pub mod synthetic;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use self::image::{list_images, load_dataset, ImageRGB};
pub use resize::{cubic, resize_bicubic};

use crate::{Error, Result, Shape, Tensor};

/// Training patch side length.
pub const PATCH_SIZE: usize = 128;

/// Scales trained jointly by default.
pub const DEFAULT_SCALES: [usize; 2] = [4, 8];

/// One super-resolution example at HR geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct LrPair {
    pub scale: usize,
    /// 8-bit quantised low-resolution image.
    pub lr: ImageRGB,
    /// Bicubic upscale of `lr`, clipped to `[0, 1]`: the network input.
    pub input: ImageRGB,
    /// HR ground truth cropped to a multiple of `scale`.
    pub target: ImageRGB,
}

/// Low-resolution image for `hr` at `scale` (HR is cropped to a multiple of
/// `scale` first), quantised to 8 bits as if stored to disk.
pub fn make_lr(hr: &ImageRGB, scale: usize) -> Result<ImageRGB> {
    check_scale(scale)?;
    let target = hr.crop_to_multiple(scale)?;
    Ok(resize::downscale(&target, scale)?.quantize())
}

/// Network input for a low-resolution image: bicubic upscale, clipped.
pub fn upscale_input(lr: &ImageRGB, scale: usize) -> Result<ImageRGB> {
    check_scale(scale)?;
    Ok(resize::upscale(lr, scale)?.clamp01())
}

/// Builds (input, target) for `hr`: target is the cropped HR image, input the
/// antialiased bicubic downscale by `scale` upscaled back to target size.
pub fn make_lr_pair(hr: &ImageRGB, scale: usize) -> Result<LrPair> {
    check_scale(scale)?;
    let target = hr.crop_to_multiple(scale)?;
    let lr = resize::downscale(&target, scale)?.quantize();
    let input = upscale_input(&lr, scale)?;
    Ok(LrPair {
        scale,
        lr,
        input,
        target,
    })
}

fn check_scale(scale: usize) -> Result<()> {
    if scale < 2 {
        return Err(Error::config(format!("upscaling factor must be >= 2, got {scale}")));
    }
    Ok(())
}

/// Aligned input/target patch of one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub scale: usize,
    pub input: ImageRGB,
    pub target: ImageRGB,
}

/// Non-overlapping `size × size` tiles in row-major order; remainders are
/// discarded and an image smaller than one tile yields nothing.
pub fn extract_patches(pair: &LrPair, size: usize) -> Result<Vec<PatchPair>> {
    let (w, h) = (pair.target.width(), pair.target.height());
    let mut out = Vec::with_capacity((h / size) * (w / size));
    for ty in 0..h / size {
        for tx in 0..w / size {
            let (x0, y0) = (tx * size, ty * size);
            out.push(PatchPair {
                scale: pair.scale,
                input: pair.input.crop(x0, y0, size, size)?,
                target: pair.target.crop(x0, y0, size, size)?,
            });
        }
    }
    Ok(out)
}

/// The eight symmetries of the square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dihedral {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    FlipH,
    FlipV,
    Transpose,
    AntiTranspose,
}

impl Dihedral {
    pub const ALL: [Dihedral; 8] = [
        Dihedral::Identity,
        Dihedral::Rot90,
        Dihedral::Rot180,
        Dihedral::Rot270,
        Dihedral::FlipH,
        Dihedral::FlipV,
        Dihedral::Transpose,
        Dihedral::AntiTranspose,
    ];

    pub fn inverse(self) -> Self {
        match self {
            Dihedral::Rot90 => Dihedral::Rot270,
            Dihedral::Rot270 => Dihedral::Rot90,
            other => other,
        }
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::ALL[rng.random_range(0..8)]
    }

    /// Source pixel of output pixel (y, x) in an `n × n` image.
    fn source(self, y: usize, x: usize, n: usize) -> (usize, usize) {
        let m = n - 1;
        match self {
            Dihedral::Identity => (y, x),
            Dihedral::Rot90 => (x, m - y),
            Dihedral::Rot180 => (m - y, m - x),
            Dihedral::Rot270 => (m - x, y),
            Dihedral::FlipH => (y, m - x),
            Dihedral::FlipV => (m - y, x),
            Dihedral::Transpose => (x, y),
            Dihedral::AntiTranspose => (m - x, m - y),
        }
    }

    pub fn apply(self, img: &ImageRGB) -> Result<ImageRGB> {
        let n = img.width();
        if img.height() != n {
            return Err(Error::shape(format!(
                "dihedral transforms need square images, got {}x{}",
                img.width(),
                img.height()
            )));
        }
        ImageRGB::from_fn(n, n, |c, y, x| {
            let (sy, sx) = self.source(y, x, n);
            img.at(c, sy, sx)
        })
    }
}

/// Applies one uniformly drawn symmetry identically to input and target.
pub fn augment<R: Rng + ?Sized>(patch: &PatchPair, rng: &mut R) -> Result<PatchPair> {
    let t = Dihedral::sample(rng);
    Ok(PatchPair {
        scale: patch.scale,
        input: t.apply(&patch.input)?,
        target: t.apply(&patch.target)?,
    })
}

/// Single-scale batch of `(N, 3, P, P)` tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchBatch {
    pub scale: usize,
    pub inputs: Tensor<f32>,
    pub targets: Tensor<f32>,
}

/// Patches of every HR image, grouped by scale.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    patch_size: usize,
    scales: Vec<usize>,
    patches: Vec<Vec<PatchPair>>,
}

impl TrainingSet {
    /// HR images are cropped to a multiple of every scale so that all scales
    /// share identical targets.
    pub fn from_images(images: &[ImageRGB], scales: &[usize], patch_size: usize) -> Result<Self> {
        if scales.is_empty() {
            return Err(Error::config("at least one scale is required"));
        }
        if patch_size == 0 {
            return Err(Error::config("patch size must be >= 1"));
        }
        let mut scales = scales.to_vec();
        scales.sort_unstable();
        scales.dedup();
        let lcm = scales.iter().fold(1, |acc, &s| lcm(acc, s));
        let mut patches = vec![Vec::new(); scales.len()];
        for hr in images {
            let Ok(hr) = hr.crop_to_multiple(lcm) else {
                continue;
            };
            for (si, &s) in scales.iter().enumerate() {
                patches[si].extend(extract_patches(&make_lr_pair(&hr, s)?, patch_size)?);
            }
        }
        let set = TrainingSet {
            patch_size,
            scales,
            patches,
        };
        if set.is_empty() {
            return Err(Error::Empty(format!(
                "no {patch_size}x{patch_size} patches in the dataset"
            )));
        }
        Ok(set)
    }

    pub fn scales(&self) -> &[usize] {
        &self.scales
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn patches(&self, scale_index: usize) -> &[PatchPair] {
        &self.patches[scale_index]
    }

    pub fn len(&self) -> usize {
        self.patches.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Deterministic batch order for `epoch`: each scale's patches are
    /// shuffled and chunked, then batches of different scales interleave
    /// round-robin.
    pub fn epoch_plan(&self, batch_size: usize, seed: u64, epoch: usize) -> Vec<BatchPlan> {
        let batch_size = batch_size.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1 + epoch as u64);
        let mut per_scale: Vec<std::vec::IntoIter<BatchPlan>> = self
            .patches
            .iter()
            .enumerate()
            .map(|(si, p)| {
                let mut order: Vec<usize> = (0..p.len()).collect();
                order.shuffle(&mut rng);
                order
                    .chunks(batch_size)
                    .map(|c| BatchPlan {
                        scale_index: si,
                        scale: self.scales[si],
                        indices: c.to_vec(),
                    })
                    .collect::<Vec<_>>()
                    .into_iter()
            })
            .collect();
        let mut plan = Vec::new();
        loop {
            let before = plan.len();
            for it in &mut per_scale {
                if let Some(b) = it.next() {
                    plan.push(b);
                }
            }
            if plan.len() == before {
                break;
            }
        }
        plan
    }

    /// Stacks the planned patches, augmenting each when `rng` is given.
    pub fn assemble(&self, plan: &BatchPlan, mut rng: Option<&mut ChaCha8Rng>) -> Result<PatchBatch> {
        let p = self.patch_size;
        let shape = Shape::new(plan.indices.len(), 3, p, p);
        let mut inputs = Vec::with_capacity(shape.len());
        let mut targets = Vec::with_capacity(shape.len());
        for &i in &plan.indices {
            let patch = &self.patches[plan.scale_index][i];
            let patch = match rng.as_deref_mut() {
                Some(r) => augment(patch, r)?,
                None => patch.clone(),
            };
            inputs.extend_from_slice(patch.input.data());
            targets.extend_from_slice(patch.target.data());
        }
        Ok(PatchBatch {
            scale: plan.scale,
            inputs: Tensor::from_vec(shape, inputs)?,
            targets: Tensor::from_vec(shape, targets)?,
        })
    }

    /// Un-augmented batches of one epoch in planned order.
    pub fn batch_iterator(
        &self,
        batch_size: usize,
        seed: u64,
        epoch: usize,
    ) -> impl Iterator<Item = Result<PatchBatch>> + '_ {
        self.epoch_plan(batch_size, seed, epoch)
            .into_iter()
            .map(move |plan| self.assemble(&plan, None))
    }
}

/// Which patches form one batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    pub scale_index: usize,
    pub scale: usize,
    pub indices: Vec<usize>,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}
