//! Monte-Carlo PSNR benchmarks and one-parameter sweeps.
//!
//! Noise levels and `h_r` values in rows and tables are on the 0..255
//! intensity scale; images are processed on `[0, 1]`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use symfilt_core::affinity::{KernelSpec, KernelVariant, PatchDistances};
use symfilt_core::balancing::{sinkhorn, smooth_denoise, DEFAULT_MAX_ITER, DEFAULT_TOL};
use symfilt_core::gmm::EmOptions;
use symfilt_core::gsf::{
    blend, gsf_denoise, gsf_fit, sure, ClusterCount, CvNormalization, CvOptions, GsfParams, Lambda,
};
use symfilt_core::image::{add_gaussian_noise, mse, psnr, Image, NoiseSpec};
use symfilt_core::patch::PatchConfig;
use symfilt_core::Result;

use crate::parallel::map_jobs;

pub const BYTE: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Nlm,
    OneStep,
    Sinkhorn,
    Gsf,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Nlm, Method::OneStep, Method::Sinkhorn, Method::Gsf];

    pub fn name(self) -> &'static str {
        match self {
            Method::Nlm => "nlm",
            Method::OneStep => "onestep",
            Method::Sinkhorn => "sinkhorn",
            Method::Gsf => "gsf",
        }
    }

    pub fn is_nlm_family(self) -> bool {
        self != Method::Gsf
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected nlm, onestep, sinkhorn or gsf)"))
    }
}

/// Settings shared by the row-normalized, one-step and Sinkhorn smoothers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlmConfig {
    pub variant: KernelVariant,
    pub h_s: f64,
    pub window_radius: usize,
    pub patch: PatchConfig,
    /// fixed number of balancing passes; `None` balances to convergence
    pub sinkhorn_iters: Option<usize>,
}

impl Default for NlmConfig {
    fn default() -> Self {
        Self {
            variant: KernelVariant::SpatiallyRegulatedNlm,
            h_s: 10.0,
            window_radius: 10,
            patch: PatchConfig::default(),
            sinkhorn_iters: None,
        }
    }
}

impl NlmConfig {
    /// `h_r = mult * sigma * sqrt(d)`, on the unit intensity scale.
    pub fn h_r(&self, mult: f64, sigma: f64) -> f64 {
        mult * sigma * (self.patch.d() as f64).sqrt()
    }

    pub fn kernel(&self, h_r: f64) -> Result<KernelSpec> {
        KernelSpec::new(self.variant, self.h_s, h_r, Some(self.window_radius))
    }

    pub fn distances(&self, y: &Image) -> PatchDistances {
        PatchDistances::new(y, &self.patch, self.window_radius)
    }

    /// One NLM-family estimate from precomputed distances.
    pub fn denoise_with(&self, dist: &PatchDistances, y: &Image, method: Method, h_r: f64) -> Result<Image> {
        let w = dist.affinity(&self.kernel(h_r)?);
        match method {
            Method::Nlm => smooth_denoise(&w, y, 0),
            Method::OneStep => smooth_denoise(&w, y, 1),
            Method::Sinkhorn => match self.sinkhorn_iters {
                Some(t) => smooth_denoise(&w, y, t),
                None => {
                    let (b, _) = sinkhorn(&w, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
                    smooth_denoise(&b, y, 0)
                }
            },
            Method::Gsf => Err(symfilt_core::Error::InvalidParameter {
                name: "method",
                reason: "gsf is not a kernel smoother",
            }),
        }
    }

    pub fn denoise(&self, y: &Image, method: Method, h_r: f64) -> Result<Image> {
        self.denoise_with(&self.distances(y), y, method, h_r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsfConfig {
    pub k: ClusterCount,
    pub lambda: Lambda,
    pub h_s: f64,
    /// `h_r = h_r_mult * sigma`
    pub h_r_mult: f64,
    pub patch: PatchConfig,
    pub em: EmOptions,
    pub spatial: bool,
}

impl Default for GsfConfig {
    fn default() -> Self {
        Self {
            k: ClusterCount::Auto(CvOptions::default()),
            lambda: Lambda::Sure,
            h_s: 10.0,
            h_r_mult: 1.0,
            patch: PatchConfig::default(),
            em: EmOptions::default(),
            spatial: true,
        }
    }
}

impl GsfConfig {
    pub fn params(&self, sigma: f64, seed: u64) -> GsfParams {
        GsfParams {
            patch: self.patch,
            h_s: self.h_s,
            h_r: self.h_r_mult * sigma,
            sigma,
            k: self.k,
            lambda: self.lambda,
            seed,
            em: self.em,
            spatial: self.spatial,
        }
    }
}

/// PSNR of the quantized estimate against the quantized reference.
pub fn quantized_psnr(estimate: &Image, reference: &Image) -> Result<f64> {
    psnr(&estimate.quantized(), &reference.quantized())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Trial {
    Index(usize),
    Mean,
    Best,
}

impl fmt::Display for Trial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trial::Index(i) => write!(f, "{i}"),
            Trial::Mean => f.write_str("mean"),
            Trial::Best => f.write_str("best"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub image: String,
    pub method: Method,
    pub sigma: f64,
    pub h_r: f64,
    pub trial: Trial,
    pub psnr: f64,
}

pub const CSV_HEADER: &str = "image,method,sigma,h_r,trial,psnr";

impl Row {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{:.4},{},{:.4}",
            self.image, self.method, self.sigma, self.h_r, self.trial, self.psnr
        )
    }
}

pub fn write_rows(rows: &[Row], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv())?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub methods: Vec<Method>,
    pub images: Vec<(String, Image)>,
    /// 0..255 scale
    pub sigmas: Vec<f64>,
    pub trials: usize,
    /// multipliers of `sigma * sqrt(d)` for the NLM family
    pub hr_grid: Vec<f64>,
    pub nlm: NlmConfig,
    pub gsf: GsfConfig,
    pub seed: u64,
}

pub fn default_hr_grid() -> Vec<f64> {
    (0..8).map(|i| 0.55 + 0.05 * i as f64).collect()
}

struct Job {
    image: usize,
    sigma: usize,
    trial: usize,
}

fn run_job(run: &BenchmarkRun, job: &Job) -> Result<Vec<(Method, usize, f64)>> {
    let clean = &run.images[job.image].1;
    let sigma = run.sigmas[job.sigma] / BYTE;
    let seed = run.seed + job.trial as u64;
    let y = add_gaussian_noise(clean, &NoiseSpec::new(sigma, seed)?);
    let mut out = Vec::new();
    if run.methods.iter().any(|m| m.is_nlm_family()) {
        let dist = run.nlm.distances(&y);
        for (g, &mult) in run.hr_grid.iter().enumerate() {
            for &m in run.methods.iter().filter(|m| m.is_nlm_family()) {
                let z = run.nlm.denoise_with(&dist, &y, m, run.nlm.h_r(mult, sigma))?;
                out.push((m, g, quantized_psnr(&z, clean)?));
            }
        }
    }
    if run.methods.contains(&Method::Gsf) {
        let (z, _) = gsf_denoise(&y, &run.gsf.params(sigma, seed))?;
        out.push((Method::Gsf, 0, quantized_psnr(&z, clean)?));
    }
    Ok(out)
}

/// Every trial row, then per `(image, method, sigma, h_r)` a `mean` row and
/// per `(image, method, sigma)` a `best` row holding the `h_r` with the
/// highest mean. Output order does not depend on the thread count.
pub fn run_benchmark(run: &BenchmarkRun, threads: usize) -> Result<Vec<Row>> {
    if run.trials == 0 {
        return Err(symfilt_core::Error::InvalidParameter {
            name: "trials",
            reason: "must be >= 1",
        });
    }
    let mut jobs = Vec::new();
    for image in 0..run.images.len() {
        for sigma in 0..run.sigmas.len() {
            for trial in 0..run.trials {
                jobs.push(Job { image, sigma, trial });
            }
        }
    }
    let results = map_jobs(&jobs, threads, |j| run_job(run, j));
    // (image, sigma, method, grid point) -> psnr per trial
    let mut cells: BTreeMap<(usize, usize, Method, usize), Vec<f64>> = BTreeMap::new();
    for (job, res) in jobs.iter().zip(results) {
        for (m, g, p) in res? {
            cells.entry((job.image, job.sigma, m, g)).or_default().push(p);
        }
    }
    let mut rows = Vec::new();
    let mut best: Option<Row> = None;
    let mut cells = cells.into_iter().peekable();
    while let Some(((im, si, m, g), psnrs)) = cells.next() {
        let sigma = run.sigmas[si];
        let h_r = if m == Method::Gsf {
            run.gsf.h_r_mult * sigma
        } else {
            run.nlm.h_r(run.hr_grid[g], sigma)
        };
        let row = |trial, psnr| Row {
            image: run.images[im].0.clone(),
            method: m,
            sigma,
            h_r,
            trial,
            psnr,
        };
        for (t, &p) in psnrs.iter().enumerate() {
            rows.push(row(Trial::Index(t), p));
        }
        let mean = row(Trial::Mean, psnrs.iter().sum::<f64>() / psnrs.len() as f64);
        if best.as_ref().is_none_or(|b| mean.psnr > b.psnr) {
            best = Some(Row {
                trial: Trial::Best,
                ..mean.clone()
            });
        }
        rows.push(mean);
        let group_ends = cells.peek().is_none_or(|((i2, s2, m2, _), _)| (*i2, *s2, *m2) != (im, si, m));
        if group_ends {
            rows.push(best.take().expect("group has a mean row"));
        }
    }
    Ok(rows)
}

/// `best` PSNR of `method` at `sigma` for each image, in row order.
pub fn best_by_image(rows: &[Row], method: Method, sigma: f64) -> Vec<(String, f64)> {
    rows.iter()
        .filter(|r| r.trial == Trial::Best && r.method == method && r.sigma == sigma)
        .map(|r| (r.image.clone(), r.psnr))
        .collect()
}

pub fn mean_best(rows: &[Row], method: Method, sigma: f64) -> f64 {
    let v = best_by_image(rows, method, sigma);
    v.iter().map(|(_, p)| p).sum::<f64>() / v.len() as f64
}

/// Named numeric columns for plotting. Non-finite cells print empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Vec<f64> {
        let c = self.header.iter().position(|h| *h == name).expect("known column");
        self.rows.iter().map(|r| r[c]).collect()
    }

    pub fn write_csv(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "{}", self.header.join(","))?;
        for r in &self.rows {
            let cells: Vec<String> = r
                .iter()
                .map(|v| if v.is_finite() { format!("{v:.6}") } else { String::new() })
                .collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Mean PSNR of the row-normalized and one-step smoothers over the `h_r`
/// grid, with the gain of one-step over row normalization.
pub fn sweep_hr(clean: &Image, sigma_byte: f64, grid: &[f64], cfg: &NlmConfig, trials: usize, seed: u64, threads: usize) -> Result<Table> {
    let sigma = sigma_byte / BYTE;
    let trial_ids: Vec<usize> = (0..trials.max(1)).collect();
    let per_trial = map_jobs(&trial_ids, threads, |&t| -> Result<Vec<(f64, f64)>> {
        let y = add_gaussian_noise(clean, &NoiseSpec::new(sigma, seed + t as u64)?);
        let dist = cfg.distances(&y);
        grid.iter()
            .map(|&mult| {
                let h_r = cfg.h_r(mult, sigma);
                let a = quantized_psnr(&cfg.denoise_with(&dist, &y, Method::Nlm, h_r)?, clean)?;
                let b = quantized_psnr(&cfg.denoise_with(&dist, &y, Method::OneStep, h_r)?, clean)?;
                Ok((a, b))
            })
            .collect()
    });
    let per_trial = per_trial.into_iter().collect::<Result<Vec<_>>>()?;
    let n = per_trial.len() as f64;
    let rows = grid
        .iter()
        .enumerate()
        .map(|(g, &mult)| {
            let nlm = per_trial.iter().map(|t| t[g].0).sum::<f64>() / n;
            let one = per_trial.iter().map(|t| t[g].1).sum::<f64>() / n;
            vec![mult, cfg.h_r(mult, sigma) * BYTE, nlm, one, one - nlm]
        })
        .collect();
    Ok(Table {
        header: vec!["hr_mult", "h_r", "psnr_nlm", "psnr_onestep", "gain"],
        rows,
    })
}

/// PSNR after `0..=max_iters` balancing passes at one `h_r`.
pub fn sweep_sinkhorn_iters(clean: &Image, sigma_byte: f64, hr_mult: f64, max_iters: usize, cfg: &NlmConfig, seed: u64) -> Result<Table> {
    let sigma = sigma_byte / BYTE;
    let y = add_gaussian_noise(clean, &NoiseSpec::new(sigma, seed)?);
    let w = cfg.distances(&y).affinity(&cfg.kernel(cfg.h_r(hr_mult, sigma))?);
    let rows = (0..=max_iters)
        .map(|t| Ok(vec![t as f64, quantized_psnr(&smooth_denoise(&w, &y, t)?, clean)?]))
        .collect::<Result<_>>()?;
    Ok(Table {
        header: vec!["sinkhorn_iters", "psnr"],
        rows,
    })
}

/// `n` logarithmically spaced values over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// SURE and (with a reference) true MSE and PSNR of the blend over a
/// `lambda` grid, for one fit on `noisy`. MSE values are on the 0..255
/// scale. The final row holds the SURE-optimal `lambda`.
pub fn sweep_lambda(noisy: &Image, clean: Option<&Image>, sigma_byte: f64, grid: &[f64], cfg: &GsfConfig, seed: u64) -> Result<Table> {
    let sigma = sigma_byte / BYTE;
    let d = cfg.patch.d();
    let fit = gsf_fit(noisy, &cfg.params(sigma, seed))?;
    let star = fit.optimal_lambda(sigma, d);
    let mut rows = Vec::with_capacity(grid.len() + 1);
    for (&lambda, is_star) in grid.iter().map(|l| (l, 0.0)).chain(std::iter::once((&star, 1.0))) {
        let z = blend(&fit.u, noisy, lambda, d)?;
        let s = sure(lambda, &fit.u, noisy, sigma, fit.divergence, d)? * BYTE * BYTE;
        let (m, p) = match clean {
            Some(c) => (mse(&z, c)? * BYTE * BYTE, quantized_psnr(&z, c)?),
            None => (f64::NAN, f64::NAN),
        };
        rows.push(vec![lambda, s, m, p, is_star]);
    }
    Ok(Table {
        header: vec!["lambda", "sure", "mse", "psnr", "sure_optimal"],
        rows,
    })
}

/// `delta(k)` and the PSNR of the SURE-blended estimate for every `k`.
#[allow(clippy::too_many_arguments)]
pub fn sweep_k(
    noisy: &Image,
    clean: Option<&Image>,
    sigma_byte: f64,
    grid: &[usize],
    cfg: &GsfConfig,
    norm: CvNormalization,
    seed: u64,
    threads: usize,
) -> Result<Table> {
    let sigma = sigma_byte / BYTE;
    let d = cfg.patch.d();
    let rows = map_jobs(grid, threads, |&k| -> Result<Vec<f64>> {
        let cfg = GsfConfig {
            k: ClusterCount::Fixed(k),
            ..*cfg
        };
        let fit = gsf_fit(noisy, &cfg.params(sigma, seed))?;
        let delta = fit.cv_score(norm)?;
        let lambda = match cfg.lambda {
            Lambda::Fixed(l) => l,
            Lambda::Sure => fit.optimal_lambda(sigma, d),
        };
        let z = blend(&fit.u, noisy, lambda, d)?;
        let p = clean.map_or(Ok(f64::NAN), |c| quantized_psnr(&z, c))?;
        Ok(vec![k as f64, delta, p])
    });
    Ok(Table {
        header: vec!["k", "delta", "psnr"],
        rows: rows.into_iter().collect::<Result<_>>()?,
    })
}
