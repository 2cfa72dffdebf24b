//! The GMM symmetric smoothing filter.
//!
//! A mixture with fixed covariance is fitted to the generalized patches of
//! the noisy image. Each patch `j` is then replaced by `w_j`, the
//! responsibility-weighted average of the cluster means, the patches are
//! averaged back into an image `u`, and `u` is blended with the input:
//!
//! `z(lambda) = d/(d+lambda) u + lambda/(d+lambda) y`.
//!
//! The blend weight can be fixed or picked by minimizing SURE with the
//! responsibilities held fixed. The cluster count can be fixed or chosen by
//! [`cv::select_k_auto`].

pub mod cv;
pub mod sure;

use alloc::vec;
use alloc::vec::Vec;

use crate::affinity::{build_affinity, KernelSpec};
use crate::balancing::{col_normalize, modified_em_step_sparse, row_normalize};
use crate::gmm::{fit, CovarianceSpec, EmOptions, GmmModel, Responsibilities};
use crate::image::{mse, psnr, Image};
use crate::patch::{aggregate, extract_all, generalized_patches, PatchConfig, PatchStack};
use crate::{Error, Result};

pub use cv::{cluster_covariance, cv_score, select_k, select_k_auto, select_k_with, CvNormalization, CvOptions, KSelection};
pub use sure::{divergence_u, optimal_lambda, sure};

/// `w_j = sum_i gamma_ij mu_i` over the `k` range means.
pub fn compute_w(gamma: &Responsibilities, mu_range: &PatchStack) -> Result<PatchStack> {
    if gamma.k() != mu_range.len() {
        return Err(Error::DimensionMismatch {
            left: (gamma.k(), gamma.n()),
            right: (mu_range.len(), mu_range.dim()),
        });
    }
    let d = mu_range.dim();
    let mut out = PatchStack::zeros(gamma.n(), d);
    for (j, g) in gamma.patches().enumerate() {
        let w = out.row_mut(j);
        for (&gi, mu) in g.iter().zip(mu_range.rows()) {
            if gi != 0.0 {
                w.iter_mut().zip(mu).for_each(|(a, m)| *a += gi * m);
            }
        }
    }
    Ok(out)
}

/// `u = (1/d) sum_j P_j^T w_j`.
pub fn compute_u(w: &PatchStack, cfg: &PatchConfig, height: usize, width: usize) -> Result<Image> {
    let mut u = aggregate(w, cfg, height, width)?;
    let inv = 1.0 / cfg.d() as f64;
    u.data_mut().iter_mut().for_each(|v| *v *= inv);
    Ok(u)
}

/// Responsibility-weighted means of `patches`; clusters without mass get a
/// zero mean (they never contribute to `w`).
pub fn cluster_means(gamma: &Responsibilities, patches: &PatchStack) -> Result<PatchStack> {
    if gamma.n() != patches.len() {
        return Err(Error::DimensionMismatch {
            left: (gamma.k(), gamma.n()),
            right: (patches.len(), patches.dim()),
        });
    }
    let (k, d) = (gamma.k(), patches.dim());
    let mut acc_t = vec![0.0; d * k];
    for (g, x) in gamma.patches().zip(patches.rows()) {
        for l in 0..d {
            let v = x[l];
            acc_t[l * k..(l + 1) * k].iter_mut().zip(g).for_each(|(a, w)| *a += w * v);
        }
    }
    let mass = gamma.cluster_mass();
    let mut means = PatchStack::zeros(k, d);
    for i in 0..k {
        if mass[i] > 0.0 {
            let row = means.row_mut(i);
            for l in 0..d {
                row[l] = acc_t[l * k + i] / mass[i];
            }
        }
    }
    Ok(means)
}

/// `d/(d+lambda) u + lambda/(d+lambda) y`; `lambda = inf` returns `y`.
pub fn blend(u: &Image, y: &Image, lambda: f64, d: usize) -> Result<Image> {
    if u.dims() != y.dims() {
        return Err(Error::DimensionMismatch {
            left: u.dims(),
            right: y.dims(),
        });
    }
    if !(lambda >= 0.0) {
        return Err(Error::param("lambda", "must be >= 0"));
    }
    if lambda.is_infinite() {
        return Ok(y.clone());
    }
    let d = d as f64;
    let (a, b) = (d / (d + lambda), lambda / (d + lambda));
    let data = u.data().iter().zip(y.data()).map(|(u, y)| a * u + b * y).collect();
    Image::new(y.height(), y.width(), data)
}

const CG_TOL: f64 = 1e-10;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `(sum_j P_j^T P_j + lambda I) z = sum_j P_j^T w_j + lambda y` by
/// conjugate gradients on the patch operator, to a relative residual of
/// `1e-10`.
pub fn solve_normal_equation(
    gamma: &Responsibilities,
    mu_range: &PatchStack,
    y: &Image,
    lambda: f64,
    cfg: &PatchConfig,
) -> Result<Image> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::param("lambda", "must be finite and >= 0"));
    }
    let (h, wd) = y.dims();
    let w = compute_w(gamma, mu_range)?;
    let apply = |z: &[f64]| -> Result<Vec<f64>> {
        let img = Image::new(h, wd, z.to_vec())?;
        let mut out = aggregate(&extract_all(&img, cfg), cfg, h, wd)?.into_data();
        out.iter_mut().zip(z).for_each(|(o, v)| *o += lambda * v);
        Ok(out)
    };
    let mut b = aggregate(&w, cfg, h, wd)?.into_data();
    b.iter_mut().zip(y.data()).for_each(|(v, yv)| *v += lambda * yv);
    let b_norm = libm::sqrt(dot(&b, &b));
    let mut x = vec![0.0; b.len()];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let max_iter = 10 * b.len().max(10);
    let mut iterations = 0;
    while libm::sqrt(rr) > CG_TOL * b_norm {
        if iterations == max_iter {
            return Err(Error::SolverStalled {
                iterations,
                residual: libm::sqrt(rr) / b_norm,
            });
        }
        let ap = apply(&p)?;
        let alpha = rr / dot(&p, &ap);
        x.iter_mut().zip(&p).for_each(|(xv, pv)| *xv += alpha * pv);
        r.iter_mut().zip(&ap).for_each(|(rv, av)| *rv -= alpha * av);
        let next = dot(&r, &r);
        let beta = next / rr;
        rr = next;
        p.iter_mut().zip(&r).for_each(|(pv, rv)| *pv = rv + beta * *pv);
        iterations += 1;
    }
    Image::new(h, wd, x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClusterCount {
    Fixed(usize),
    /// secant search over `delta(k)` from the default bracket
    Auto(CvOptions),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda {
    Fixed(f64),
    /// minimizer of SURE with responsibilities from the fit on `y`
    Sure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsfParams {
    pub patch: PatchConfig,
    pub h_s: f64,
    pub h_r: f64,
    /// noise standard deviation, same units as the image
    pub sigma: f64,
    pub k: ClusterCount,
    pub lambda: Lambda,
    pub seed: u64,
    pub em: EmOptions,
    /// include pixel coordinates in the patches (and hence `h_s`)
    pub spatial: bool,
}

impl GsfParams {
    /// Defaults used throughout: 5x5 patches, `h_s = 10`, `h_r = sigma`,
    /// SURE-chosen blend weight.
    pub fn new(sigma: f64, k: ClusterCount) -> Self {
        Self {
            patch: PatchConfig::default(),
            h_s: 10.0,
            h_r: sigma,
            sigma,
            k,
            lambda: Lambda::Sure,
            seed: 0,
            em: EmOptions::default(),
            spatial: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::param("sigma", "must be finite and >= 0"));
        }
        if let Lambda::Fixed(l) = self.lambda {
            if !(l >= 0.0) {
                return Err(Error::param("lambda", "must be >= 0"));
            }
        }
        if let ClusterCount::Fixed(0) = self.k {
            return Err(Error::param("k", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseReport {
    /// zero when no mixture was fitted
    pub chosen_k: usize,
    pub chosen_lambda: f64,
    /// `NaN` when `sigma = 0`
    pub sure_value: f64,
    pub divergence: f64,
    /// `(1/n) |u - y|^2`
    pub sigma_hat_sq: f64,
    pub em_iterations: usize,
    pub psnr_vs_reference: Option<f64>,
    pub k_search: Option<KSelection>,
}

impl DenoiseReport {
    pub fn attach_reference(&mut self, output: &Image, reference: &Image) -> Result<()> {
        self.psnr_vs_reference = Some(psnr(&output.quantized(), &reference.quantized())?);
        Ok(())
    }
}

/// Intermediate quantities of a fit, kept so that several blend weights can
/// be evaluated without refitting.
#[derive(Debug, Clone)]
pub struct GsfFit {
    pub model: GmmModel,
    pub patches: PatchStack,
    pub gamma: Responsibilities,
    pub mu_range: PatchStack,
    pub u: Image,
    pub divergence: f64,
    pub sigma_hat_sq: f64,
    pub em_iterations: usize,
    pub k_search: Option<KSelection>,
}

/// Fits the mixture to `y` and builds `u`. Range means are recomputed from
/// the final responsibilities, so `u` is linear in `y` for frozen `gamma`.
pub fn gsf_fit(y: &Image, params: &GsfParams) -> Result<GsfFit> {
    params.validate()?;
    let cfg = params.patch;
    let patches = generalized_patches(y, &cfg, params.spatial);
    let spatial_dims = if params.spatial { 2 } else { 0 };
    let cov = CovarianceSpec::new(spatial_dims, cfg.d(), params.h_s, params.h_r)?;
    let (k, k_search) = match params.k {
        ClusterCount::Fixed(k) => (k, None),
        ClusterCount::Auto(opts) => {
            let opts = CvOptions { seed: params.seed, em: params.em, ..opts };
            let sel = select_k_auto(&patches, cov, &opts)?;
            (sel.k, Some(sel))
        }
    };
    let (model, gamma, log) = fit(&patches, cov, k, params.em, params.seed)?;
    let mu_range = cluster_means(&gamma, &extract_all(y, &cfg))?;
    let w = compute_w(&gamma, &mu_range)?;
    let u = compute_u(&w, &cfg, y.height(), y.width())?;
    Ok(GsfFit {
        divergence: sure::divergence_nonempty(&gamma),
        sigma_hat_sq: mse(&u, y)?,
        model,
        patches,
        gamma,
        mu_range,
        u,
        em_iterations: log.iterations,
        k_search,
    })
}

impl GsfFit {
    pub fn cv_score(&self, norm: CvNormalization) -> Result<f64> {
        cv_score(&self.model, &self.gamma, &self.patches, norm)
    }

    pub fn optimal_lambda(&self, sigma: f64, d: usize) -> f64 {
        optimal_lambda(self.sigma_hat_sq, sigma, self.u.len(), self.divergence, d)
    }

    pub fn denoise(&self, y: &Image, lambda: f64, sigma: f64, d: usize) -> Result<(Image, DenoiseReport)> {
        let z = blend(&self.u, y, lambda, d)?;
        let sure_value = if sigma > 0.0 {
            sure(lambda, &self.u, y, sigma, self.divergence, d)?
        } else {
            f64::NAN
        };
        Ok((
            z,
            DenoiseReport {
                chosen_k: self.gamma.k(),
                chosen_lambda: lambda,
                sure_value,
                divergence: self.divergence,
                sigma_hat_sq: self.sigma_hat_sq,
                em_iterations: self.em_iterations,
                psnr_vs_reference: None,
                k_search: self.k_search.clone(),
            },
        ))
    }
}

/// Full pipeline. With `sigma = 0` and a SURE-chosen weight the optimal
/// blend is the input itself, which is returned without fitting.
pub fn gsf_denoise(y: &Image, params: &GsfParams) -> Result<(Image, DenoiseReport)> {
    params.validate()?;
    let d = params.patch.d();
    if params.sigma == 0.0 && params.lambda == Lambda::Sure {
        return Ok((
            y.clone(),
            DenoiseReport {
                chosen_k: 0,
                chosen_lambda: f64::INFINITY,
                sure_value: f64::NAN,
                divergence: 0.0,
                sigma_hat_sq: 0.0,
                em_iterations: 0,
                psnr_vs_reference: None,
                k_search: None,
            },
        ));
    }
    let fitted = gsf_fit(y, params)?;
    let lambda = match params.lambda {
        Lambda::Fixed(l) => l,
        Lambda::Sure => fitted.optimal_lambda(params.sigma, d),
    };
    fitted.denoise(y, lambda, params.sigma, d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegenerateMode {
    /// responsibilities equal to the affinity weights
    Original,
    /// responsibilities normalized over clusters once
    OneStep,
    /// this many modified EM steps from the one-step responsibilities
    FullSinkhorn(usize),
}

/// Pixel-level GSF with one cluster per pixel and cluster centres at the
/// noisy pixels. Each output pixel is the responsibility-weighted mean of
/// `y` for its cluster.
pub fn degenerate_filter(y: &Image, mode: DegenerateMode, cfg: &PatchConfig, spec: &KernelSpec) -> Result<Image> {
    let w = build_affinity(y, cfg, spec);
    let beta = match mode {
        DegenerateMode::Original | DegenerateMode::FullSinkhorn(0) => row_normalize(&w)?,
        DegenerateMode::OneStep => row_normalize(&col_normalize(&w)?)?,
        DegenerateMode::FullSinkhorn(t) => {
            let mut gamma = col_normalize(&w)?;
            let mut beta = None;
            for _ in 0..t {
                let (b, g) = modified_em_step_sparse(&gamma)?;
                gamma = g;
                beta = Some(b);
            }
            beta.expect("t >= 1")
        }
    };
    Image::new(y.height(), y.width(), beta.matvec(y.data()))
}
