use std::path::{Path, PathBuf};

use image::{ImageBuffer, Rgb};
use walkdir::WalkDir;

use crate::{Error, Real, Result, Shape, Tensor};

/// RGB image with channel-planar `f32` samples, nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRGB {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ImageRGB {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Empty(format!("image of size {width}x{height}")));
        }
        if data.len() != 3 * width * height {
            return Err(Error::shape(format!(
                "{} samples for a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(ImageRGB { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Result<Self> {
        let plane = width * height;
        let data = (0..3 * plane).map(|i| rgb[i / plane.max(1)]).collect();
        Self::new(width, height, data)
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(3 * width * height);
        for c in 0..3 {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Top-left `width × height` region.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::shape(format!(
                "crop {width}x{height}+{x0}+{y0} outside {}x{}",
                self.width, self.height
            )));
        }
        Self::from_fn(width, height, |c, y, x| self.at(c, y0 + y, x0 + x))
    }

    /// Crops the bottom/right remainder so both sides are multiples of `m`.
    pub fn crop_to_multiple(&self, m: usize) -> Result<Self> {
        let (w, h) = (self.width / m * m, self.height / m * m);
        if w == 0 || h == 0 {
            return Err(Error::Empty(format!(
                "{}x{} image is smaller than {m}",
                self.width, self.height
            )));
        }
        self.crop(0, 0, w, h)
    }

    pub fn clamp01(&self) -> Self {
        ImageRGB {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    /// Clips to `[0, 1]` and rounds to the nearest 8-bit level.
    pub fn quantize(&self) -> Self {
        ImageRGB {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| to_u8(v) as f32 / 255.0).collect(),
        }
    }

    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::from_vec(
            Shape::new(1, 3, self.height, self.width),
            self.data.iter().map(|&v| T::of_f64(v as f64)).collect(),
        )
        .expect("sized")
    }

    /// Converts batch item `n` of a 3-channel tensor.
    pub fn from_tensor<T: Real>(t: &Tensor<T>, n: usize) -> Result<Self> {
        let s = t.shape();
        if s.c != 3 || n >= s.n {
            return Err(Error::shape(format!("tensor {s} has no RGB item {n}")));
        }
        let len = 3 * s.plane();
        let data = t.data()[n * len..(n + 1) * len]
            .iter()
            .map(|v| v.as_f64() as f32)
            .collect();
        Self::new(s.w, s.h, data)
    }

    pub fn to_rgb8(&self) -> ImageBuffer<Rgb<u8>, Vec<u8>> {
        ImageBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
            let (x, y) = (x as usize, y as usize);
            Rgb([0, 1, 2].map(|c| to_u8(self.at(c, y, x))))
        })
    }

    pub fn from_rgb8(img: &ImageBuffer<Rgb<u8>, Vec<u8>>) -> Result<Self> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        Self::from_fn(w, h, |c, y, x| img.get_pixel(x as u32, y as u32)[c] as f32 / 255.0)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_rgb8(&img.to_rgb8())
    }

    /// Writes an 8-bit PNG (clipped and rounded).
    pub fn save_png(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
        }
        self.to_rgb8()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }
}

pub(crate) fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Lists dataset images. A directory is searched recursively for `.png`
/// files; a file is read as a manifest of paths relative to its directory.
/// The result is sorted by path for directories and kept in manifest order.
pub fn list_images(source: &Path) -> Result<Vec<PathBuf>> {
    if source.is_dir() {
        let mut paths = Vec::new();
        for entry in WalkDir::new(source).follow_links(true) {
            let entry = entry.map_err(|e| {
                let path = e.path().unwrap_or(source).to_path_buf();
                Error::io(path, e.into())
            })?;
            let is_png = entry.path().extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
            if entry.file_type().is_file() && is_png {
                paths.push(entry.into_path());
            }
        }
        paths.sort();
        Ok(paths)
    } else {
        let text = std::fs::read_to_string(source).map_err(|e| Error::io(source, e))?;
        let base = source.parent().unwrap_or(Path::new("."));
        Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| base.join(l))
            .collect())
    }
}

/// Loads every listed image, keyed by file stem.
pub fn load_dataset(source: &Path) -> Result<Vec<(String, ImageRGB)>> {
    let paths = list_images(source)?;
    if paths.is_empty() {
        return Err(Error::Empty(format!("no PNG images under {}", source.display())));
    }
    paths
        .iter()
        .map(|p| {
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok((name, ImageRGB::load(p)?))
        })
        .collect()
}
