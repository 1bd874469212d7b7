//! Image decoding, resizing and patch partitioning.
//!
//! Every consumer (pixel metrics, the Dice term, the backends) reads the
//! same [`ImageTensor`]: an `H x W x 3` row-major buffer of values in `[0, 1]`.
//! Mean/std normalization is only ever applied on the way into a backend,
//! see [`to_normalized_chw`].

use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use image::{ImageFormat, Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{luma, Scalar};

pub const CHANNELS: usize = 3;

#[derive(Debug, Error)]
pub enum ImageryError {
    #[error("image file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported image format in {path}: {detail}")]
    UnsupportedFormat { path: PathBuf, detail: String },
    #[error("corrupt image {path}: {detail}")]
    CorruptImage { path: PathBuf, detail: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid preprocessing spec: {0}")]
    InvalidSpec(String),
    #[error("invalid image tensor: {0}")]
    InvalidTensor(String),
    #[error("patch index {index} out of range (patch count {count})")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("image is {height}x{width}, patch grid expects {expected}x{expected}")]
    GridMismatch {
        height: usize,
        width: usize,
        expected: usize,
    },
}

/// Decoded RGB image with channel values in `[0, 1]`, stored row-major (HWC).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> ImageTensor<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self, ImageryError> {
        if height == 0 || width == 0 {
            return Err(ImageryError::InvalidTensor("empty image".into()));
        }
        if data.len() != height * width * CHANNELS {
            return Err(ImageryError::InvalidTensor(format!(
                "data length {} != {height}x{width}x{CHANNELS}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(**v >= T::zero() && **v <= T::one())) {
            return Err(ImageryError::InvalidTensor(format!(
                "value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Image where every channel of every pixel equals `value` (clamped into `[0, 1]`).
    pub fn constant(height: usize, width: usize, value: T) -> Self {
        let v = value.max(T::zero()).min(T::one());
        Self {
            height,
            width,
            data: vec![v; height * width * CHANNELS],
        }
    }

    /// Builds an image from a per-pixel closure; outputs are clamped into `[0, 1]`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                for c in 0..CHANNELS {
                    data.push(f(y, x, c).max(T::zero()).min(T::one()));
                }
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    /// Row-major single-channel luma plane.
    pub fn luminance(&self) -> Vec<T> {
        self.data
            .chunks_exact(CHANNELS)
            .map(|px| luma(px[0], px[1], px[2]))
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> ImageTensor<U> {
        ImageTensor {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.as_f64()).unwrap_or_else(U::zero))
                .collect(),
        }
    }

    /// Quantizes back to 8-bit RGB.
    pub fn to_rgb8(&self) -> RgbImage {
        RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let (x, y) = (x as usize, y as usize);
            let q = |c| (self.get(y, x, c).as_f64() * 255.0).round().clamp(0.0, 255.0) as u8;
            Rgb([q(0), q(1), q(2)])
        })
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        let scale = T::lit(255.0);
        let data = img
            .as_raw()
            .iter()
            .map(|&v| T::from_u8(v).unwrap() / scale)
            .collect();
        Self {
            height: img.height() as usize,
            width: img.width() as usize,
            data,
        }
    }
}

/// Decodes a PNG or JPEG file into `[0, 1]` RGB. Alpha is discarded.
pub fn decode_image<T: Scalar>(path: impl AsRef<Path>) -> Result<ImageTensor<T>, ImageryError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => ImageryError::FileNotFound(path.to_path_buf()),
        _ => ImageryError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    let unsupported = |detail: String| ImageryError::UnsupportedFormat {
        path: path.to_path_buf(),
        detail,
    };
    let format = image::guess_format(&bytes).map_err(|_| unsupported("unrecognized content".into()))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(unsupported(format!("{format:?}")));
    }
    let decoded = image::load_from_memory_with_format(&bytes, format).map_err(|e| ImageryError::CorruptImage {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    Ok(ImageTensor::from_rgb8(&decoded.to_rgb8()))
}

/// Writes the tensor as an 8-bit PNG.
pub fn encode_png<T: Scalar>(img: &ImageTensor<T>, path: impl AsRef<Path>) -> Result<(), ImageryError> {
    let path = path.as_ref();
    img.to_rgb8()
        .save_with_format(path, ImageFormat::Png)
        .map_err(|e| ImageryError::CorruptImage {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResizeFilter {
    #[default]
    Bilinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessSpec {
    pub target_size: usize,
    pub resize_filter: ResizeFilter,
    pub channel_mean: [f64; 3],
    pub channel_std: [f64; 3],
}

impl Default for PreprocessSpec {
    fn default() -> Self {
        Self {
            target_size: 224,
            resize_filter: ResizeFilter::Bilinear,
            channel_mean: [0.485, 0.456, 0.406],
            channel_std: [0.229, 0.224, 0.225],
        }
    }
}

impl PreprocessSpec {
    pub fn validate(&self) -> Result<(), ImageryError> {
        if self.target_size == 0 {
            return Err(ImageryError::InvalidSpec("target_size must be positive".into()));
        }
        if self.channel_std.iter().any(|s| !(*s > 0.0)) {
            return Err(ImageryError::InvalidSpec("channel_std must be strictly positive".into()));
        }
        Ok(())
    }
}

/// Bilinear resize to `target_size x target_size` with half-pixel centers and edge clamping.
pub fn resize<T: Scalar>(img: &ImageTensor<T>, spec: &PreprocessSpec) -> Result<ImageTensor<T>, ImageryError> {
    spec.validate()?;
    let size = spec.target_size;
    if img.height == size && img.width == size {
        return Ok(img.clone());
    }
    let (ys, xs) = (
        sample_positions(img.height, size),
        sample_positions(img.width, size),
    );
    let mut data = Vec::with_capacity(size * size * CHANNELS);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..CHANNELS {
                let top = img.get(y0, x0, c) * (T::one() - fx) + img.get(y0, x1, c) * fx;
                let bottom = img.get(y1, x0, c) * (T::one() - fx) + img.get(y1, x1, c) * fx;
                let v = top * (T::one() - fy) + bottom * fy;
                data.push(v.max(T::zero()).min(T::one()));
            }
        }
    }
    Ok(ImageTensor {
        height: size,
        width: size,
        data,
    })
}

fn sample_positions<T: Scalar>(src: usize, dst: usize) -> Vec<(usize, usize, T)> {
    let scale = src as f64 / dst as f64;
    let max = (src - 1) as f64;
    (0..dst)
        .map(|i| {
            let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, T::lit(s - lo as f64))
        })
        .collect()
}

/// Square patch partition of a square image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub patches_per_side: usize,
}

impl PatchGrid {
    pub fn new(image_size: usize, patch_size: usize) -> Result<Self, ImageryError> {
        if patch_size == 0 || image_size == 0 || !image_size.is_multiple_of(patch_size) {
            return Err(ImageryError::InvalidSpec(format!(
                "image size {image_size} is not a positive multiple of patch size {patch_size}"
            )));
        }
        Ok(Self {
            patch_size,
            patches_per_side: image_size / patch_size,
        })
    }

    pub fn patch_count(&self) -> usize {
        self.patches_per_side * self.patches_per_side
    }

    pub fn image_size(&self) -> usize {
        self.patch_size * self.patches_per_side
    }

    /// `(row, col)` of a patch index in the grid.
    pub fn position(&self, index: usize) -> (usize, usize) {
        (index / self.patches_per_side, index % self.patches_per_side)
    }

    pub fn check_image<T: Scalar>(&self, img: &ImageTensor<T>) -> Result<(), ImageryError> {
        let expected = self.image_size();
        if img.height != expected || img.width != expected {
            return Err(ImageryError::GridMismatch {
                height: img.height,
                width: img.width,
                expected,
            });
        }
        Ok(())
    }
}

/// Raw `[0, 1]` pixels of one patch, row-major within the patch, channels interleaved.
pub fn extract_pixel_patch<T: Scalar>(
    img: &ImageTensor<T>,
    grid: &PatchGrid,
    index: usize,
) -> Result<Vec<T>, ImageryError> {
    if index >= grid.patch_count() {
        return Err(ImageryError::IndexOutOfRange {
            index,
            count: grid.patch_count(),
        });
    }
    grid.check_image(img)?;
    let p = grid.patch_size;
    let (row, col) = grid.position(index);
    let mut out = Vec::with_capacity(p * p * CHANNELS);
    for y in row * p..(row + 1) * p {
        let start = (y * img.width + col * p) * CHANNELS;
        out.extend_from_slice(&img.data[start..start + p * CHANNELS]);
    }
    Ok(out)
}

/// Planar `1 x 3 x H x W` buffer normalized with per-channel mean/std, for backend input.
pub fn to_normalized_chw<T: Scalar>(img: &ImageTensor<T>, mean: [f64; 3], std: [f64; 3]) -> Vec<f32> {
    let plane = img.height * img.width;
    let mut out = vec![0f32; plane * CHANNELS];
    for (i, px) in img.data.chunks_exact(CHANNELS).enumerate() {
        for c in 0..CHANNELS {
            out[c * plane + i] = ((px[c].as_f64() - mean[c]) / std[c]) as f32;
        }
    }
    out
}
