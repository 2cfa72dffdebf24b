//! Grayscale rasters, synthetic Gaussian noise, and fidelity metrics.

use alloc::vec;
use alloc::vec::Vec;

use crate::rng::BoxMuller;
use crate::{Error, Result};

/// Row-major grayscale raster with intensities on the `[0, 1]` scale.
///
/// Values may leave `[0, 1]` after noise is added; clipping only happens
/// when the image is quantized for storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::BadImageBuffer {
                height,
                width,
                len: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    /// Image from 8-bit samples, each divided by 255.
    pub fn from_bytes(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(
            height,
            width,
            bytes.iter().map(|&b| f64::from(b) / 255.0).collect(),
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Pixel count `n`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// `(row, col)` of linear pixel index `j`.
    pub fn coords(&self, j: usize) -> (usize, usize) {
        (j / self.width, j % self.width)
    }

    /// Clamp to `[0, 1]` and quantize with `round(v * 255)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize_sample(v)).collect()
    }

    /// The image as it would read back after an 8-bit round trip.
    pub fn quantized(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|&v| f64::from(quantize_sample(v)) / 255.0)
                .collect(),
        }
    }

    pub(crate) fn same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                left: self.dims(),
                right: other.dims(),
            });
        }
        Ok(())
    }
}

pub fn quantize_sample(v: f64) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    libm::round(v * 255.0) as u8
}

/// Additive white Gaussian noise with standard deviation `sigma` on the
/// `[0, 1]` intensity scale, reproducible from `seed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    sigma: f64,
    seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::param("sigma", "must be finite and >= 0"));
        }
        Ok(Self { sigma, seed })
    }

    /// `sigma` given on the 8-bit scale, e.g. `20.0` for 20/255.
    pub fn from_byte_sigma(sigma: f64, seed: u64) -> Result<Self> {
        Self::new(sigma / 255.0, seed)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// `img + e` with `e ~ N(0, sigma^2)` drawn pixel by pixel in row-major
/// order. The result is not clipped.
pub fn add_gaussian_noise(img: &Image, spec: &NoiseSpec) -> Image {
    if spec.sigma == 0.0 {
        return img.clone();
    }
    let mut gauss = BoxMuller::new(spec.seed);
    let data = img
        .data
        .iter()
        .map(|&v| v + spec.sigma * gauss.next_standard())
        .collect();
    Image {
        height: img.height,
        width: img.width,
        data,
    }
}

/// Mean squared error `(1/n) sum (a_i - b_i)^2`.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.same_dims(b)?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.len() as f64)
}

/// PSNR in dB with peak 1.0; identical images give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * libm::log10(mse)
    }
}
