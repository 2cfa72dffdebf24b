//! Gaussian mixture over generalized patches with a fixed, shared diagonal
//! covariance `diag(h_s^2 I, h_r^2 I)`, learned by EM.
//!
//! Responsibilities are held patch-major so the per-patch loops over
//! clusters are contiguous.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::index::sample;

use crate::dense::DenseMatrix;
use crate::patch::PatchStack;
use crate::rng::seeded;
use crate::{Error, Result};

pub const DEFAULT_EM_TOL: f64 = 1e-6;
pub const DEFAULT_EM_MAX_ITER: usize = 100;
const MASS_FLOOR: f64 = 1e-12;
const PI_FLOOR: f64 = 1e-12;
// log-weights this far below the column maximum contribute < 5e-18
const LOG_CUTOFF: f64 = -40.0;

/// Fixed covariance: the first `spatial_dims` coordinates have variance
/// `h_s^2`, the remaining `range_dims` have variance `h_r^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceSpec {
    pub spatial_dims: usize,
    pub range_dims: usize,
    pub h_s: f64,
    pub h_r: f64,
}

impl CovarianceSpec {
    pub fn new(spatial_dims: usize, range_dims: usize, h_s: f64, h_r: f64) -> Result<Self> {
        if spatial_dims > 0 && !(h_s > 0.0 && h_s.is_finite()) {
            return Err(Error::param("h_s", "must be > 0"));
        }
        if range_dims == 0 {
            return Err(Error::param("range_dims", "must be >= 1"));
        }
        if !(h_r > 0.0 && h_r.is_finite()) {
            return Err(Error::param("h_r", "must be > 0"));
        }
        Ok(Self {
            spatial_dims,
            range_dims,
            h_s,
            h_r,
        })
    }

    pub fn dim(&self) -> usize {
        self.spatial_dims + self.range_dims
    }

    /// Standard deviation of coordinate `l`.
    pub fn scale(&self, l: usize) -> f64 {
        if l < self.spatial_dims {
            self.h_s
        } else {
            self.h_r
        }
    }

    /// `-(p/2) log(2 pi) - (1/2) log |Sigma|`
    pub fn log_norm(&self) -> f64 {
        let mut c = -0.5 * self.dim() as f64 * libm::log(2.0 * PI) - self.range_dims as f64 * libm::log(self.h_r);
        if self.spatial_dims > 0 {
            c -= self.spatial_dims as f64 * libm::log(self.h_s);
        }
        c
    }

    /// `|a - b|^2` in the metric `Sigma^{-1}`.
    pub fn mahalanobis_sq(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(l, (x, y))| {
                let t = (x - y) / self.scale(l);
                t * t
            })
            .sum()
    }

    fn whiten(&self, stack: &PatchStack) -> Vec<f64> {
        let inv: Vec<f64> = (0..self.dim()).map(|l| 1.0 / self.scale(l)).collect();
        stack
            .rows()
            .flat_map(|r| r.iter().zip(&inv).map(|(v, s)| v * s))
            .collect()
    }

    fn check(&self, patches: &PatchStack) -> Result<()> {
        if patches.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                left: (patches.len(), patches.dim()),
                right: (patches.len(), self.dim()),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub cov: CovarianceSpec,
    pub pi: Vec<f64>,
    /// `k` rows of dimension `cov.dim()`, spatial part first
    pub means: PatchStack,
}

impl GmmModel {
    pub fn new(cov: CovarianceSpec, pi: Vec<f64>, means: PatchStack) -> Result<Self> {
        cov.check(&means)?;
        if pi.len() != means.len() || pi.is_empty() {
            return Err(Error::param("pi", "needs one weight per mean"));
        }
        if pi.iter().any(|&w| !(w >= 0.0)) || libm::fabs(pi.iter().sum::<f64>() - 1.0) > 1e-9 {
            return Err(Error::param("pi", "weights must be >= 0 and sum to 1"));
        }
        Ok(Self { cov, pi, means })
    }

    pub fn k(&self) -> usize {
        self.pi.len()
    }

    /// Range part of every mean, `k x d`.
    pub fn range_means(&self) -> PatchStack {
        self.means.columns(self.cov.spatial_dims, self.cov.range_dims)
    }

    /// Per-cluster column log-weights `log pi_i + log N(.|mu_i)` for whitened
    /// points, sharing the whitened transposed means.
    fn scorer(&self) -> Scorer {
        let (k, p) = (self.k(), self.cov.dim());
        let white = self.cov.whiten(&self.means);
        let mut means_t = vec![0.0; p * k];
        for i in 0..k {
            for l in 0..p {
                means_t[l * k + i] = white[i * p + l];
            }
        }
        let norm = self.cov.log_norm();
        Scorer {
            k,
            p,
            means_t,
            log_pi: self.pi.iter().map(|&w| libm::log(w) + norm).collect(),
        }
    }
}

struct Scorer {
    k: usize,
    p: usize,
    means_t: Vec<f64>,
    log_pi: Vec<f64>,
}

impl Scorer {
    /// Fills `out` with normalized posteriors of whitened point `x` and
    /// returns its log-density.
    fn posterior(&self, x: &[f64], out: &mut [f64]) -> f64 {
        out.fill(0.0);
        for l in 0..self.p {
            let v = x[l];
            let row = &self.means_t[l * self.k..(l + 1) * self.k];
            for (acc, &m) in out.iter_mut().zip(row) {
                let t = v - m;
                *acc += t * t;
            }
        }
        let mut max = f64::NEG_INFINITY;
        for (acc, &lp) in out.iter_mut().zip(&self.log_pi) {
            *acc = lp - 0.5 * *acc;
            max = max.max(*acc);
        }
        let mut total = 0.0;
        for acc in out.iter_mut() {
            let t = *acc - max;
            *acc = if t > LOG_CUTOFF { libm::exp(t) } else { 0.0 };
            total += *acc;
        }
        let inv = 1.0 / total;
        out.iter_mut().for_each(|g| *g *= inv);
        max + libm::log(total)
    }
}

/// Posterior cluster probabilities `gamma_ij` of every patch.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    k: usize,
    n: usize,
    // n x k, row j holds gamma_{.j}
    data: Vec<f64>,
    log_density: Vec<f64>,
}

impl Responsibilities {
    /// From a column-stochastic `k x n` matrix. Log-densities are unknown
    /// and set to zero.
    pub fn from_matrix(gamma: &DenseMatrix) -> Result<Self> {
        let (k, n) = gamma.shape();
        if gamma.as_slice().iter().any(|&g| !(0.0..=1.0 + 1e-12).contains(&g)) {
            return Err(Error::param("gamma", "entries must lie in [0, 1]"));
        }
        if gamma.col_sums().iter().any(|s| libm::fabs(s - 1.0) > 1e-9) {
            return Err(Error::param("gamma", "columns must sum to 1"));
        }
        Ok(Self {
            k,
            n,
            data: gamma.transpose().as_slice().to_vec(),
            log_density: vec![0.0; n],
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.k + i]
    }

    /// `gamma_{.j}`: the posterior over clusters of patch `j`.
    pub fn patch(&self, j: usize) -> &[f64] {
        &self.data[j * self.k..(j + 1) * self.k]
    }

    pub fn patches(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.k)
    }

    /// `log f(p_j)` under the model that produced these responsibilities.
    pub fn log_density(&self) -> &[f64] {
        &self.log_density
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_density.iter().sum()
    }

    /// `sum_j gamma_ij` for every cluster.
    pub fn cluster_mass(&self) -> Vec<f64> {
        let mut mass = vec![0.0; self.k];
        for g in self.patches() {
            mass.iter_mut().zip(g).for_each(|(m, v)| *m += v);
        }
        mass
    }

    /// `sum_j gamma_ij^2` for every cluster.
    pub fn cluster_sq_mass(&self) -> Vec<f64> {
        let mut mass = vec![0.0; self.k];
        for g in self.patches() {
            mass.iter_mut().zip(g).for_each(|(m, v)| *m += v * v);
        }
        mass
    }

    /// `k x n` view.
    pub fn to_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.k, self.n, |i, j| self.get(i, j))
    }
}

/// Uniform weights and `k` distinct patches drawn without replacement.
pub fn init_model(patches: &PatchStack, cov: CovarianceSpec, k: usize, seed: u64) -> Result<GmmModel> {
    cov.check(patches)?;
    if k == 0 || k > patches.len() {
        return Err(Error::param("k", "must satisfy 1 <= k <= number of patches"));
    }
    let mut rng = seeded(seed);
    let picks = sample(&mut rng, patches.len(), k);
    let mut means = Vec::with_capacity(k * cov.dim());
    for j in picks.iter() {
        means.extend_from_slice(patches.row(j));
    }
    GmmModel::new(cov, vec![1.0 / k as f64; k], PatchStack::new(cov.dim(), means)?)
}

pub fn e_step(model: &GmmModel, patches: &PatchStack) -> Result<Responsibilities> {
    model.cov.check(patches)?;
    let (k, n, p) = (model.k(), patches.len(), model.cov.dim());
    let scorer = model.scorer();
    let white = model.cov.whiten(patches);
    let mut data = vec![0.0; n * k];
    let mut log_density = Vec::with_capacity(n);
    for (x, out) in white.chunks_exact(p).zip(data.chunks_exact_mut(k)) {
        log_density.push(scorer.posterior(x, out));
    }
    Ok(Responsibilities {
        k,
        n,
        data,
        log_density,
    })
}

/// `sum_j log sum_i pi_i N(p_j | mu_i, Sigma)`.
pub fn log_likelihood(model: &GmmModel, patches: &PatchStack) -> Result<f64> {
    model.cov.check(patches)?;
    let scorer = model.scorer();
    let white = model.cov.whiten(patches);
    let mut buf = vec![0.0; model.k()];
    Ok(white.chunks_exact(model.cov.dim()).map(|x| scorer.posterior(x, &mut buf)).sum())
}

/// `-log f(p)`.
pub fn neg_log_density(model: &GmmModel, p: &[f64]) -> Result<f64> {
    let stack = PatchStack::new(p.len(), p.to_vec())?;
    Ok(-log_likelihood(model, &stack)?)
}

/// Weight and mean updates for fixed covariance. Clusters with mass below
/// `1e-12 n` are re-seeded at the worst-explained patches with a floored
/// weight, keeping `k` unchanged.
pub fn m_step(gamma: &Responsibilities, patches: &PatchStack, cov: CovarianceSpec) -> Result<GmmModel> {
    cov.check(patches)?;
    if gamma.n() != patches.len() {
        return Err(Error::DimensionMismatch {
            left: (gamma.k(), gamma.n()),
            right: (patches.len(), patches.dim()),
        });
    }
    let (k, n, p) = (gamma.k(), gamma.n(), cov.dim());
    let mut mass = vec![0.0; k];
    let mut acc_t = vec![0.0; p * k];
    for (g, x) in gamma.patches().zip(patches.rows()) {
        mass.iter_mut().zip(g).for_each(|(m, v)| *m += v);
        for l in 0..p {
            let v = x[l];
            for (a, w) in acc_t[l * k..(l + 1) * k].iter_mut().zip(g) {
                *a += w * v;
            }
        }
    }
    let mut means = vec![0.0; k * p];
    let mut pi: Vec<f64> = mass.iter().map(|m| m / n as f64).collect();
    let mut degenerate = Vec::new();
    for i in 0..k {
        if mass[i] < MASS_FLOOR * n as f64 {
            degenerate.push(i);
            continue;
        }
        for l in 0..p {
            means[i * p + l] = acc_t[l * k + i] / mass[i];
        }
    }
    if !degenerate.is_empty() {
        let mut worst: Vec<usize> = (0..n).collect();
        worst.sort_by(|&a, &b| gamma.log_density[a].total_cmp(&gamma.log_density[b]));
        for (slot, &i) in degenerate.iter().enumerate() {
            let j = worst[slot % n];
            means[i * p..(i + 1) * p].copy_from_slice(patches.row(j));
            pi[i] = pi[i].max(PI_FLOOR);
        }
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|w| *w /= total);
    }
    Ok(GmmModel {
        cov,
        pi,
        means: PatchStack::new(p, means)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitLog {
    /// log-likelihood before each update and after the last one
    pub log_likelihood: Vec<f64>,
    /// number of M-steps taken
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_EM_TOL,
            max_iter: DEFAULT_EM_MAX_ITER,
        }
    }
}

/// EM from [`init_model`] until the relative change of the log-likelihood
/// is at most `opts.tol` or `opts.max_iter` M-steps were taken. The returned
/// responsibilities belong to the returned model.
pub fn fit(
    patches: &PatchStack,
    cov: CovarianceSpec,
    k: usize,
    opts: EmOptions,
    seed: u64,
) -> Result<(GmmModel, Responsibilities, FitLog)> {
    let model = init_model(patches, cov, k, seed)?;
    fit_from(model, patches, opts)
}

pub fn fit_from(
    mut model: GmmModel,
    patches: &PatchStack,
    opts: EmOptions,
) -> Result<(GmmModel, Responsibilities, FitLog)> {
    let mut log = FitLog {
        log_likelihood: Vec::new(),
        iterations: 0,
        converged: false,
    };
    loop {
        let gamma = e_step(&model, patches)?;
        let ll = gamma.log_likelihood();
        if let Some(&prev) = log.log_likelihood.last() {
            if libm::fabs(ll - prev) <= opts.tol * libm::fabs(prev).max(f64::MIN_POSITIVE) {
                log.converged = true;
            }
        }
        log.log_likelihood.push(ll);
        if log.converged || log.iterations >= opts.max_iter {
            return Ok((model, gamma, log));
        }
        model = m_step(&gamma, patches, model.cov)?;
        log.iterations += 1;
    }
}

/// Majorizer of `-log f(p)` built at `p_prime`:
/// `-log f(p') + sum_i gamma_i(p') (|p - mu_i|^2 - |p' - mu_i|^2) / 2`
/// with distances in the `Sigma^{-1}` metric. Equal to `-log f(p)` at
/// `p = p'` and never below it.
pub fn surrogate_objective(p: &[f64], p_prime: &[f64], model: &GmmModel) -> Result<f64> {
    let stack = PatchStack::new(p_prime.len(), p_prime.to_vec())?;
    if p.len() != p_prime.len() {
        return Err(Error::DimensionMismatch {
            left: (p.len(), 1),
            right: (p_prime.len(), 1),
        });
    }
    let g = e_step(model, &stack)?;
    let mut h = -g.log_density[0];
    for (i, mu) in model.means.rows().enumerate() {
        let w = g.get(i, 0);
        if w > 0.0 {
            h += 0.5 * w * (model.cov.mahalanobis_sq(p, mu) - model.cov.mahalanobis_sq(p_prime, mu));
        }
    }
    Ok(h)
}
