//! Square patch extraction and aggregation with periodic boundaries.
//!
//! `extract_patch` is the operator `P_j` reading a `side x side` window
//! centred at pixel `j`, and [`aggregate`] is `sum_j P_j^T w_j`. Because the
//! window wraps around the image edges, `sum_j P_j^T P_j = d I` holds exactly
//! for every image size.

use alloc::vec;
use alloc::vec::Vec;

use crate::image::Image;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchConfig {
    side: usize,
}

impl PatchConfig {
    pub fn new(side: usize) -> Result<Self> {
        if side == 0 || side.is_multiple_of(2) {
            return Err(Error::param("side", "patch side must be odd and >= 1"));
        }
        Ok(Self { side })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn radius(&self) -> usize {
        self.side / 2
    }

    /// Pixels per patch, `side^2`.
    pub fn d(&self) -> usize {
        self.side * self.side
    }
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self { side: 5 }
    }
}

/// `n` vectors of a common dimension stored contiguously, row `j` being the
/// vector attached to pixel `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchStack {
    dim: usize,
    data: Vec<f64>,
}

impl PatchStack {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::param("data", "length must be a multiple of dim"));
        }
        Ok(Self { dim, data })
    }

    pub fn zeros(count: usize, dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; count * dim],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.as_ref().len() != dim {
                return Err(Error::param("rows", "rows must share one length"));
            }
            data.extend_from_slice(r.as_ref());
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn rows(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Columns `start..start + dim` of every row.
    pub fn columns(&self, start: usize, dim: usize) -> PatchStack {
        let data = self
            .rows()
            .flat_map(|r| r[start..start + dim].iter().copied())
            .collect();
        PatchStack { dim, data }
    }
}

/// Linear pixel indices read by `P_j`, in row-major window order.
fn window_indices(height: usize, width: usize, j: usize, cfg: &PatchConfig) -> impl Iterator<Item = usize> {
    let r0 = (j / width) as isize;
    let c0 = (j % width) as isize;
    let rad = cfg.radius() as isize;
    let (h, w) = (height as isize, width as isize);
    (-rad..=rad).flat_map(move |dr| {
        let r = (r0 + dr).rem_euclid(h);
        (-rad..=rad).map(move |dc| (r * w + (c0 + dc).rem_euclid(w)) as usize)
    })
}

fn check_index(img: &Image, j: usize) -> Result<()> {
    if j >= img.len() {
        return Err(Error::IndexOutOfRange {
            index: j,
            len: img.len(),
        });
    }
    Ok(())
}

/// `P_j y`: the wrapped `side x side` window at pixel `j`, flattened
/// row-major.
pub fn extract_patch(img: &Image, j: usize, cfg: &PatchConfig) -> Result<Vec<f64>> {
    check_index(img, j)?;
    let data = img.data();
    Ok(window_indices(img.height(), img.width(), j, cfg)
        .map(|q| data[q])
        .collect())
}

/// Every patch of the image, row `j` holding `P_j y`.
pub fn extract_all(img: &Image, cfg: &PatchConfig) -> PatchStack {
    let d = cfg.d();
    let src = img.data();
    let mut data = Vec::with_capacity(img.len() * d);
    for j in 0..img.len() {
        data.extend(window_indices(img.height(), img.width(), j, cfg).map(|q| src[q]));
    }
    PatchStack { dim: d, data }
}

/// `sum_j P_j^T w_j`, scattering the patches back in ascending `j`.
pub fn aggregate(patches: &PatchStack, cfg: &PatchConfig, height: usize, width: usize) -> Result<Image> {
    let n = height * width;
    if patches.len() != n || patches.dim() != cfg.d() {
        return Err(Error::DimensionMismatch {
            left: (patches.len(), patches.dim()),
            right: (n, cfg.d()),
        });
    }
    let mut out = vec![0.0; n];
    for (j, w) in patches.rows().enumerate() {
        for (q, v) in window_indices(height, width, j, cfg).zip(w) {
            out[q] += v;
        }
    }
    Image::new(height, width, out)
}

/// Diagonal of `sum_j P_j^T P_j`, equal to `d` everywhere under wrapping.
pub fn overlap_count(cfg: &PatchConfig, height: usize, width: usize) -> Image {
    let mut out = vec![0.0; height * width];
    for j in 0..height * width {
        for q in window_indices(height, width, j, cfg) {
            out[q] += 1.0;
        }
    }
    Image::new(height, width, out).expect("buffer sized from dims")
}

/// Pixel coordinate `x_j` (optional) concatenated with the intensity patch.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedPatch {
    pub spatial: Option<[f64; 2]>,
    pub intensity: Vec<f64>,
}

impl GeneralizedPatch {
    pub fn dim(&self) -> usize {
        self.intensity.len() + if self.spatial.is_some() { 2 } else { 0 }
    }

    /// `[x_j; y_j]` as one vector.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        if let Some(x) = self.spatial {
            v.extend_from_slice(&x);
        }
        v.extend_from_slice(&self.intensity);
        v
    }

    /// Value of the centre pixel of the intensity patch.
    pub fn center(&self) -> f64 {
        self.intensity[self.intensity.len() / 2]
    }
}

pub fn generalized_patch(img: &Image, j: usize, cfg: &PatchConfig, include_spatial: bool) -> Result<GeneralizedPatch> {
    let intensity = extract_patch(img, j, cfg)?;
    let spatial = include_spatial.then(|| {
        let (r, c) = img.coords(j);
        [r as f64, c as f64]
    });
    Ok(GeneralizedPatch { spatial, intensity })
}

/// All generalized patches stacked, dimension `2 + d` or `d`.
pub fn generalized_patches(img: &Image, cfg: &PatchConfig, include_spatial: bool) -> PatchStack {
    if !include_spatial {
        return extract_all(img, cfg);
    }
    let y = extract_all(img, cfg);
    let p = cfg.d() + 2;
    let mut data = Vec::with_capacity(img.len() * p);
    for (j, patch) in y.rows().enumerate() {
        let (r, c) = img.coords(j);
        data.push(r as f64);
        data.push(c as f64);
        data.extend_from_slice(patch);
    }
    PatchStack { dim: p, data }
}
