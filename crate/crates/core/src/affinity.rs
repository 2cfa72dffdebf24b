//! Kernel weights between generalized patches and sparse affinity matrices.
//!
//! All kernels are unnormalized Gaussians of a distance, so every
//! self-weight is exactly 1 and every matrix built here is symmetric.

use alloc::vec::Vec;

use crate::image::Image;
use crate::patch::{extract_all, GeneralizedPatch, PatchConfig, PatchStack};
use crate::sparse::AffinityMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelVariant {
    /// `exp(-|x_j - x_i|^2 / 2 h_s^2)`
    Gaussian,
    /// spatial Gaussian times a range Gaussian on the centre pixels
    Bilateral,
    /// `exp(-|y_j - y_i|^2 / 2 h_r^2)` on whole patches
    Nlm,
    /// spatial Gaussian times the NLM patch kernel
    SpatiallyRegulatedNlm,
}

impl KernelVariant {
    pub fn uses_spatial(self) -> bool {
        !matches!(self, KernelVariant::Nlm)
    }

    pub fn uses_range(self) -> bool {
        !matches!(self, KernelVariant::Gaussian)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub variant: KernelVariant,
    /// spatial bandwidth in pixels
    pub h_s: f64,
    /// range bandwidth in intensity units
    pub h_r: f64,
    /// Chebyshev search radius in pixels; `None` searches the whole image
    pub window_radius: Option<usize>,
    /// weights below this are not stored (the diagonal always is)
    pub truncation_eps: f64,
}

pub const DEFAULT_TRUNCATION_EPS: f64 = 1e-8;

impl KernelSpec {
    pub fn new(variant: KernelVariant, h_s: f64, h_r: f64, window_radius: Option<usize>) -> Result<Self> {
        let spec = Self {
            variant,
            h_s,
            h_r,
            window_radius,
            truncation_eps: DEFAULT_TRUNCATION_EPS,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_truncation(mut self, eps: f64) -> Result<Self> {
        self.truncation_eps = eps;
        self.validate()?;
        Ok(self)
    }

    pub fn with_h_r(mut self, h_r: f64) -> Result<Self> {
        self.h_r = h_r;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.variant.uses_spatial() && !(self.h_s > 0.0) {
            return Err(Error::param("h_s", "must be > 0"));
        }
        if self.variant.uses_range() && !(self.h_r > 0.0) {
            return Err(Error::param("h_r", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.truncation_eps) {
            return Err(Error::param("truncation_eps", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Smallest radius whose excluded spatial tail `exp(-(r+1)^2 / 2 h_s^2)`
    /// is below `truncation_eps`.
    pub fn tail_radius(&self) -> Option<usize> {
        if !self.variant.uses_spatial() || self.truncation_eps == 0.0 {
            return None;
        }
        let reach = self.h_s * libm::sqrt(-2.0 * libm::log(self.truncation_eps));
        Some(libm::ceil(reach) as usize)
    }

    fn spatial_factor(&self, sq_dist: f64) -> f64 {
        if self.variant.uses_spatial() {
            libm::exp(-sq_dist / (2.0 * self.h_s * self.h_s))
        } else {
            1.0
        }
    }

    fn range_factor(&self, sq_dist: f64) -> f64 {
        if self.variant.uses_range() {
            libm::exp(-sq_dist / (2.0 * self.h_r * self.h_r))
        } else {
            1.0
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Unnormalized kernel weight in `(0, 1]` between two generalized patches.
pub fn kernel_weight(p_i: &GeneralizedPatch, p_j: &GeneralizedPatch, spec: &KernelSpec) -> Result<f64> {
    if p_i.intensity.len() != p_j.intensity.len() {
        return Err(Error::DimensionMismatch {
            left: (p_i.intensity.len(), 1),
            right: (p_j.intensity.len(), 1),
        });
    }
    let spatial = if spec.variant.uses_spatial() {
        match (p_i.spatial, p_j.spatial) {
            (Some(a), Some(b)) => sq_dist(&a, &b),
            _ => return Err(Error::param("patch", "kernel variant needs spatial coordinates")),
        }
    } else {
        0.0
    };
    let range = match spec.variant {
        KernelVariant::Gaussian => 0.0,
        KernelVariant::Bilateral => {
            let t = p_i.center() - p_j.center();
            t * t
        }
        KernelVariant::Nlm | KernelVariant::SpatiallyRegulatedNlm => sq_dist(&p_i.intensity, &p_j.intensity),
    };
    Ok(spec.spatial_factor(spatial) * spec.range_factor(range))
}

/// Squared patch distances for every pixel pair inside a Chebyshev window.
///
/// Building this once and calling [`PatchDistances::affinity`] for several
/// bandwidths avoids recomputing the distances in parameter sweeps.
#[derive(Debug, Clone)]
pub struct PatchDistances {
    height: usize,
    width: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    /// `|y_i - y_j|^2` over whole patches
    sq_patch: Vec<f64>,
    /// `(y_i - y_j)^2` of the centre pixels
    sq_center: Vec<f64>,
}

impl PatchDistances {
    pub fn new(img: &Image, cfg: &PatchConfig, radius: usize) -> Self {
        let patches = extract_all(img, cfg);
        Self::from_patches(img, &patches, radius)
    }

    fn from_patches(img: &Image, patches: &PatchStack, radius: usize) -> Self {
        let (h, w) = img.dims();
        let n = img.len();
        let side = (2 * radius + 1).min(h.max(w));
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(n * side * side);
        let mut sq_patch = Vec::with_capacity(n * side * side);
        let mut sq_center = Vec::with_capacity(n * side * side);
        let y = img.data();
        row_ptr.push(0);
        for i in 0..n {
            let (ri, ci) = (i / w, i % w);
            let pi = patches.row(i);
            for r in ri.saturating_sub(radius)..(ri + radius + 1).min(h) {
                for c in ci.saturating_sub(radius)..(ci + radius + 1).min(w) {
                    let j = r * w + c;
                    cols.push(j as u32);
                    sq_patch.push(sq_dist(pi, patches.row(j)));
                    let t = y[i] - y[j];
                    sq_center.push(t * t);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            height: h,
            width: w,
            row_ptr,
            cols,
            sq_patch,
            sq_center,
        }
    }

    pub fn n(&self) -> usize {
        self.height * self.width
    }

    /// Weights for `spec`; its `window_radius` is ignored in favour of the
    /// radius the distances were built with.
    pub fn affinity(&self, spec: &KernelSpec) -> AffinityMatrix {
        let n = self.n();
        let w = self.width;
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(self.cols.len());
        let mut vals = Vec::with_capacity(self.cols.len());
        row_ptr.push(0);
        for i in 0..n {
            let (ri, ci) = ((i / w) as f64, (i % w) as f64);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k] as usize;
                let (dr, dc) = ((j / w) as f64 - ri, (j % w) as f64 - ci);
                let range = match spec.variant {
                    KernelVariant::Gaussian => 0.0,
                    KernelVariant::Bilateral => self.sq_center[k],
                    _ => self.sq_patch[k],
                };
                let weight = spec.spatial_factor(dr * dr + dc * dc) * spec.range_factor(range);
                if i == j || weight >= spec.truncation_eps && weight > 0.0 {
                    cols.push(j as u32);
                    vals.push(weight);
                }
            }
            row_ptr.push(cols.len());
        }
        AffinityMatrix::from_parts(n, row_ptr, cols, vals)
    }
}

/// `W_ij` for all pixels `j` within `window_radius` (Chebyshev) of `i`.
pub fn build_affinity(img: &Image, cfg: &PatchConfig, spec: &KernelSpec) -> AffinityMatrix {
    let radius = spec.window_radius.unwrap_or(img.height().max(img.width()));
    PatchDistances::new(img, cfg, radius).affinity(spec)
}
