//! Choosing the number of clusters by matching the spread of each cluster
//! to the prescribed covariance.

use alloc::vec;
use alloc::vec::Vec;

use crate::dense::DenseMatrix;
use crate::gmm::{fit, CovarianceSpec, EmOptions, GmmModel, Responsibilities};
use crate::patch::PatchStack;
use crate::{Error, Result};

/// Divisor applied to `trace(Sigma^{-1} Sigma_hat_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CvNormalization {
    /// full generalized-patch dimension; `delta_i = 1` when the cluster
    /// spread equals the model covariance
    #[default]
    PatchDim,
    /// intensity dimension only
    RangeDim,
}

fn check(gamma: &Responsibilities, patches: &PatchStack, model: &GmmModel) -> Result<()> {
    if gamma.n() != patches.len() || gamma.k() != model.k() || patches.dim() != model.cov.dim() {
        return Err(Error::DimensionMismatch {
            left: (gamma.k(), gamma.n()),
            right: (model.k(), patches.len()),
        });
    }
    Ok(())
}

/// `Sigma_hat_i = sum_j gamma_ij (p_j - mu_i)(p_j - mu_i)^T / sum_j gamma_ij`.
pub fn cluster_covariance(gamma: &Responsibilities, patches: &PatchStack, model: &GmmModel) -> Result<Vec<DenseMatrix>> {
    check(gamma, patches, model)?;
    let p = patches.dim();
    let mass = gamma.cluster_mass();
    let mut out = Vec::with_capacity(model.k());
    for (i, mu) in model.means.rows().enumerate() {
        if !(mass[i] > 0.0) {
            return Err(Error::EmptyCluster(i));
        }
        let mut s = DenseMatrix::zeros(p, p);
        let mut diff = vec![0.0; p];
        for (j, x) in patches.rows().enumerate() {
            let g = gamma.get(i, j);
            if g == 0.0 {
                continue;
            }
            diff.iter_mut().zip(x.iter().zip(mu)).for_each(|(d, (a, b))| *d = a - b);
            let m = s.as_mut_slice();
            for a in 0..p {
                for b in 0..p {
                    m[a * p + b] += g * diff[a] * diff[b];
                }
            }
        }
        s.as_mut_slice().iter_mut().for_each(|v| *v /= mass[i]);
        out.push(s);
    }
    Ok(out)
}

/// Per-cluster `trace(Sigma^{-1} Sigma_hat_i)`, only the diagonal of
/// `Sigma_hat_i` being needed. Clusters without mass yield `None`.
fn normalized_traces(gamma: &Responsibilities, patches: &PatchStack, model: &GmmModel) -> Vec<Option<f64>> {
    let (k, p) = (model.k(), patches.dim());
    let inv_var: Vec<f64> = (0..p).map(|l| 1.0 / (model.cov.scale(l) * model.cov.scale(l))).collect();
    // transposed means keep the inner loop over clusters contiguous
    let mut means_t = vec![0.0; p * k];
    for (i, mu) in model.means.rows().enumerate() {
        for l in 0..p {
            means_t[l * k + i] = mu[l];
        }
    }
    let mut acc = vec![0.0; k];
    let mut dist = vec![0.0; k];
    for (g, x) in gamma.patches().zip(patches.rows()) {
        dist.fill(0.0);
        for l in 0..p {
            let (v, w) = (x[l], inv_var[l]);
            for (dst, &m) in dist.iter_mut().zip(&means_t[l * k..(l + 1) * k]) {
                let t = v - m;
                *dst += w * t * t;
            }
        }
        acc.iter_mut().zip(g.iter().zip(&dist)).for_each(|(a, (w, dd))| *a += w * dd);
    }
    acc.iter()
        .zip(gamma.cluster_mass())
        .map(|(a, m)| (m > 0.0).then(|| a / m))
        .collect()
}

/// `delta(k)`: mean over non-empty clusters of the normalized trace ratio.
/// Values above one mean clusters are wider than the model covariance.
pub fn cv_score(model: &GmmModel, gamma: &Responsibilities, patches: &PatchStack, norm: CvNormalization) -> Result<f64> {
    check(gamma, patches, model)?;
    let divisor = match norm {
        CvNormalization::PatchDim => model.cov.dim(),
        CvNormalization::RangeDim => model.cov.range_dims,
    } as f64;
    let traces: Vec<f64> = normalized_traces(gamma, patches, model).into_iter().flatten().collect();
    if traces.is_empty() {
        return Err(Error::EmptyCluster(0));
    }
    Ok(traces.iter().sum::<f64>() / (divisor * traces.len() as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KSelection {
    pub k: usize,
    pub delta: f64,
    /// every `(k, delta(k))` evaluated, in evaluation order
    pub trace: Vec<(usize, f64)>,
    /// the evaluation budget ran out before the bracket closed
    pub exhausted: bool,
}

/// Secant search for `delta(k) = 1` on integers, given `delta(k_lo) > 1 >
/// delta(k_hi)`. Each new point is rounded and kept strictly inside the
/// current bracket. Stops when the bracket is within `tol` of the new point
/// on both sides, when a point hits one exactly, or after `budget` new
/// evaluations. Returns the evaluated `k` whose `delta` is closest to one.
pub fn select_k_with<F>(mut delta: F, k_lo: usize, k_hi: usize, tol: usize, budget: usize) -> Result<KSelection>
where
    F: FnMut(usize) -> Result<f64>,
{
    if k_lo == 0 || k_lo >= k_hi {
        return Err(Error::param("k_lo", "bracket needs 1 <= k_lo < k_hi"));
    }
    let (mut a, mut b) = (k_lo, k_hi);
    let (mut da, mut db) = (delta(a)?, delta(b)?);
    let mut trace = vec![(a, da), (b, db)];
    if !(da > 1.0 && db < 1.0) {
        return Err(Error::InvalidBracket {
            k_lo,
            k_hi,
            delta_lo: da,
            delta_hi: db,
        });
    }
    let mut exhausted = false;
    let mut spent = 0;
    while b - a > 1 {
        if spent == budget {
            exhausted = true;
            break;
        }
        let raw = (a as f64 * (db - 1.0) - b as f64 * (da - 1.0)) / (db - da);
        let c = (libm::round(raw) as usize).clamp(a + 1, b - 1);
        let dc = delta(c)?;
        spent += 1;
        trace.push((c, dc));
        if dc == 1.0 {
            break;
        }
        let done = c - a <= tol && b - c <= tol;
        if dc > 1.0 {
            a = c;
            da = dc;
        } else {
            b = c;
            db = dc;
        }
        if done {
            break;
        }
    }
    let &(k, d) = trace
        .iter()
        .min_by(|x, y| libm::fabs(x.1 - 1.0).total_cmp(&libm::fabs(y.1 - 1.0)))
        .expect("trace holds the bracket");
    Ok(KSelection {
        k,
        delta: d,
        trace,
        exhausted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvOptions {
    pub tol: usize,
    pub budget: usize,
    pub em: EmOptions,
    pub seed: u64,
    pub norm: CvNormalization,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            tol: 8,
            budget: 12,
            em: EmOptions::default(),
            seed: 0,
            norm: CvNormalization::PatchDim,
        }
    }
}

/// `delta(k)` of an EM fit with `k` clusters.
pub fn delta_for_k(patches: &PatchStack, cov: CovarianceSpec, k: usize, opts: &CvOptions) -> Result<f64> {
    let (model, gamma, _) = fit(patches, cov, k, opts.em, opts.seed)?;
    cv_score(&model, &gamma, patches, opts.norm)
}

/// [`select_k_with`] driven by full EM fits.
pub fn select_k(patches: &PatchStack, cov: CovarianceSpec, k_lo: usize, k_hi: usize, opts: &CvOptions) -> Result<KSelection> {
    select_k_with(|k| delta_for_k(patches, cov, k, opts), k_lo, k_hi, opts.tol, opts.budget)
}

/// `max(8, n/512) ..= min(n/4, 4096)`, clipped to `1..=n`.
pub fn default_bracket(n: usize) -> (usize, usize) {
    let lo = (n / 512).max(8).min(n.max(1));
    let hi = (n / 4).min(4096).max(lo + 1).min(n);
    (lo, hi)
}

/// Bracket search with geometric widening: `k_lo` is halved while
/// `delta(k_lo) <= 1` and `k_hi` doubled (up to `n`) while `delta(k_hi) >= 1`.
pub fn select_k_auto(patches: &PatchStack, cov: CovarianceSpec, opts: &CvOptions) -> Result<KSelection> {
    let n = patches.len();
    let (mut lo, mut hi) = default_bracket(n);
    let mut cache: Vec<(usize, f64)> = Vec::new();
    let mut eval = |k: usize| -> Result<f64> {
        if let Some(&(_, d)) = cache.iter().find(|(kk, _)| *kk == k) {
            return Ok(d);
        }
        let d = delta_for_k(patches, cov, k, opts)?;
        cache.push((k, d));
        Ok(d)
    };
    while lo > 1 && eval(lo)? <= 1.0 {
        lo = (lo / 2).max(1);
    }
    while hi < n && eval(hi)? >= 1.0 {
        hi = (hi * 2).min(n);
    }
    if lo >= hi {
        return Err(Error::InvalidBracket {
            k_lo: lo,
            k_hi: hi,
            delta_lo: eval(lo)?,
            delta_hi: eval(hi)?,
        });
    }
    select_k_with(eval, lo, hi, opts.tol, opts.budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::BoxMuller;
    use approx::assert_abs_diff_eq;

    fn one_cluster(points: &[Vec<f64>], cov: CovarianceSpec, mean: Vec<f64>) -> (GmmModel, Responsibilities, PatchStack) {
        let x = PatchStack::from_rows(points).unwrap();
        let model = GmmModel::new(cov, vec![1.0], PatchStack::new(mean.len(), mean).unwrap()).unwrap();
        let g = Responsibilities::from_matrix(&DenseMatrix::from_fn(1, points.len(), |_, _| 1.0)).unwrap();
        (model, g, x)
    }

    #[test]
    fn covariance_of_identical_patches_is_zero() {
        let cov = CovarianceSpec::new(0, 3, 1.0, 0.5).unwrap();
        let mu = vec![0.1, 0.2, 0.3];
        let (m, g, x) = one_cluster(&[mu.clone(), mu.clone()], cov, mu);
        let s = cluster_covariance(&g, &x, &m).unwrap();
        assert!(s[0].as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(cv_score(&m, &g, &x, CvNormalization::PatchDim).unwrap(), 0.0);
    }

    #[test]
    fn two_point_covariance_is_outer_product() {
        let cov = CovarianceSpec::new(0, 3, 1.0, 0.5).unwrap();
        let mu = [1.0, 2.0, 3.0];
        let v = [0.3, -0.1, 0.2];
        let plus: Vec<f64> = mu.iter().zip(&v).map(|(a, b)| a + b).collect();
        let minus: Vec<f64> = mu.iter().zip(&v).map(|(a, b)| a - b).collect();
        let (m, g, x) = one_cluster(&[plus, minus], cov, mu.to_vec());
        let s = &cluster_covariance(&g, &x, &m).unwrap()[0];
        for a in 0..3 {
            for b in 0..3 {
                assert_abs_diff_eq!(s.get(a, b), v[a] * v[b], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn delta_is_trace_ratio() {
        // points mu +- sqrt(c) * scale_l * e_l give diag(c * Sigma)
        let cov = CovarianceSpec::new(2, 3, 2.0, 0.5).unwrap();
        let mu = vec![0.0; 5];
        for c in [1.0, 4.0] {
            let mut pts = Vec::new();
            for l in 0..5 {
                for s in [-1.0, 1.0] {
                    let mut q = mu.clone();
                    q[l] = s * f64::sqrt(5.0 * c) * cov.scale(l);
                    pts.push(q);
                }
            }
            let (m, g, x) = one_cluster(&pts, cov, mu.clone());
            assert_abs_diff_eq!(cv_score(&m, &g, &x, CvNormalization::PatchDim).unwrap(), c, epsilon = 1e-12);
            assert_abs_diff_eq!(cv_score(&m, &g, &x, CvNormalization::RangeDim).unwrap(), c * 5.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn sample_covariance_approaches_model() {
        let cov = CovarianceSpec::new(2, 4, 3.0, 0.2).unwrap();
        let n = 40_000;
        let mut g = BoxMuller::new(4);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..6).map(|l| 1.0 + cov.scale(l) * g.next_standard()).collect()).collect();
        let (m, gamma, x) = one_cluster(&pts, cov, vec![1.0; 6]);
        let s = &cluster_covariance(&gamma, &x, &m).unwrap()[0];
        for a in 0..6 {
            for b in 0..6 {
                let target = if a == b { cov.scale(a) * cov.scale(a) } else { 0.0 };
                // about four standard errors of a sample (co)variance
                let se = 4.0 * cov.scale(a) * cov.scale(b) * f64::sqrt(2.0 / n as f64);
                assert!((s.get(a, b) - target).abs() < se, "{a},{b}");
            }
        }
        let delta = cv_score(&m, &gamma, &x, CvNormalization::PatchDim).unwrap();
        assert!((delta - 1.0).abs() < 0.02);
    }

    #[test]
    fn diagonal_traces_match_full_covariance() {
        let mut g = BoxMuller::new(9);
        let cov = CovarianceSpec::new(2, 3, 1.5, 0.4).unwrap();
        let x = PatchStack::new(5, (0..5 * 50).map(|_| g.next_standard()).collect()).unwrap();
        let (m, gamma, _) = fit(&x, cov, 4, EmOptions::default(), 1).unwrap();
        let full = cluster_covariance(&gamma, &x, &m).unwrap();
        let expected: f64 = full
            .iter()
            .map(|s| (0..5).map(|l| s.get(l, l) / (cov.scale(l) * cov.scale(l))).sum::<f64>() / 5.0)
            .sum::<f64>()
            / 4.0;
        assert_abs_diff_eq!(cv_score(&m, &gamma, &x, CvNormalization::PatchDim).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn secant_point_from_two_samples() {
        let table = |k: usize| Ok(if k == 100 { 1.2 } else if k == 200 { 0.8 } else { 1.0 - (k as f64 - 150.0) / 250.0 });
        let sel = select_k_with(table, 100, 200, 8, 10).unwrap();
        assert_eq!(sel.trace[2].0, 150);
        assert_eq!(sel.k, 150);
    }

    #[test]
    fn linear_delta_converges_in_one_step() {
        let sel = select_k_with(|k| Ok(1.0 - (k as f64 - 321.0) / 1000.0), 10, 900, 8, 10).unwrap();
        assert_eq!(sel.trace.len(), 3);
        assert_eq!(sel.k, 321);
        assert!(!sel.exhausted);
    }

    #[test]
    fn nonlinear_delta_narrows_bracket() {
        let delta = |k: usize| Ok(f64::sqrt(200.0 / k as f64));
        let sel = select_k_with(delta, 20, 2000, 2, 50).unwrap();
        assert!((sel.k as isize - 200).abs() <= 2, "{}", sel.k);
        assert!(!sel.exhausted);
    }

    #[test]
    fn budget_is_flagged() {
        let delta = |k: usize| Ok(f64::sqrt(200.0 / k as f64));
        let sel = select_k_with(delta, 20, 2000, 1, 1).unwrap();
        assert!(sel.exhausted);
        assert_eq!(sel.trace.len(), 3);
    }

    #[test]
    fn bad_bracket_is_rejected() {
        let err = select_k_with(|_| Ok(0.5), 10, 20, 8, 5).unwrap_err();
        assert!(matches!(err, Error::InvalidBracket { k_lo: 10, k_hi: 20, .. }));
        assert!(select_k_with(|_| Ok(0.5), 20, 20, 8, 5).is_err());
    }

    #[test]
    fn default_bracket_values() {
        assert_eq!(default_bracket(16384), (32, 4096));
        assert_eq!(default_bracket(1024), (8, 256));
        assert_eq!(default_bracket(4 * 4096 * 4), (128, 4096));
    }
}
