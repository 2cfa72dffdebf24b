//! Row/column normalization and Sinkhorn-Knopp balancing of affinity
//! matrices, plus the smoothing denoisers built from them.

use alloc::vec::Vec;

use crate::dense::DenseMatrix;
use crate::image::Image;
use crate::sparse::AffinityMatrix;
use crate::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 1000;

fn reciprocals(sums: &[f64], err: fn(usize) -> Error) -> Result<Vec<f64>> {
    sums.iter()
        .enumerate()
        .map(|(i, &s)| if s > 0.0 { Ok(1.0 / s) } else { Err(err(i)) })
        .collect()
}

fn ones(n: usize) -> Vec<f64> {
    alloc::vec![1.0; n]
}

/// `D_r^{-1} W`: every row sums to one.
pub fn row_normalize(w: &AffinityMatrix) -> Result<AffinityMatrix> {
    let r = reciprocals(&w.row_sums(), Error::ZeroRow)?;
    Ok(w.scaled(&r, &ones(w.n())))
}

/// `W D_c^{-1}`: every column sums to one.
pub fn col_normalize(w: &AffinityMatrix) -> Result<AffinityMatrix> {
    let c = reciprocals(&w.col_sums(), Error::ZeroColumn)?;
    Ok(w.scaled(&ones(w.n()), &c))
}

/// One column-then-row normalization pass.
pub fn sinkhorn_pass(w: &AffinityMatrix) -> Result<AffinityMatrix> {
    row_normalize(&col_normalize(w)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalancingReport {
    /// passes whose change exceeded the tolerance
    pub iterations: usize,
    /// Frobenius norm of the change made by the last pass
    pub final_residual: f64,
    pub row_deviation: f64,
    pub col_deviation: f64,
    pub converged: bool,
}

fn max_deviation(sums: &[f64]) -> f64 {
    sums.iter().map(|s| libm::fabs(s - 1.0)).fold(0.0, f64::max)
}

/// Diagonal scalings `(r, c)` after `passes` column-row passes, or until the
/// change drops to `tol`. Returns the scalings with the report.
fn balance_scales(w: &AffinityMatrix, tol: f64, max_passes: usize) -> Result<(Vec<f64>, Vec<f64>, BalancingReport)> {
    let n = w.n();
    let mut r = ones(n);
    let mut c = ones(n);
    let mut col = alloc::vec![0.0; n];
    let mut report = BalancingReport {
        iterations: 0,
        final_residual: 0.0,
        row_deviation: 0.0,
        col_deviation: 0.0,
        converged: false,
    };
    for _ in 0..max_passes {
        col.iter_mut().for_each(|v| *v = 0.0);
        for (i, j, v) in w.iter() {
            col[j] += r[i] * v;
        }
        let c_new = reciprocals(&col, Error::ZeroColumn)?;
        let mut r_new = Vec::with_capacity(n);
        for i in 0..n {
            let (cols, vals) = w.row(i);
            let s: f64 = cols.iter().zip(vals).map(|(&j, &v)| v * c_new[j as usize]).sum();
            if !(s > 0.0) {
                return Err(Error::ZeroRow(i));
            }
            r_new.push(1.0 / s);
        }
        let mut change = 0.0;
        for (i, j, v) in w.iter() {
            let t = v * (r_new[i] * c_new[j] - r[i] * c[j]);
            change += t * t;
        }
        r = r_new;
        c = c_new;
        report.final_residual = libm::sqrt(change);
        if report.final_residual <= tol {
            report.converged = true;
            break;
        }
        report.iterations += 1;
    }
    Ok((r, c, report))
}

/// Sinkhorn-Knopp balancing. Each pass normalizes columns then rows; the
/// loop stops once a pass changes the matrix by at most `tol` in Frobenius
/// norm. Hitting `max_iter` is reported via `converged = false`.
pub fn sinkhorn(w: &AffinityMatrix, tol: f64, max_iter: usize) -> Result<(AffinityMatrix, BalancingReport)> {
    if !(tol >= 0.0) {
        return Err(Error::param("tol", "must be >= 0"));
    }
    let (r, c, mut report) = balance_scales(w, tol, max_iter)?;
    let out = w.scaled(&r, &c);
    report.row_deviation = max_deviation(&out.row_sums());
    report.col_deviation = max_deviation(&out.col_sums());
    Ok((out, report))
}

/// The filter used by [`smooth_denoise`]: `passes` balancing passes followed
/// by a row normalization, so it is always row-stochastic.
pub fn balanced_filter(w: &AffinityMatrix, passes: usize) -> Result<AffinityMatrix> {
    let (r, c, _) = balance_scales(w, -1.0, passes)?;
    row_normalize(&w.scaled(&r, &c))
}

/// `z = W' y` with `W'` from [`balanced_filter`]. Zero passes is the usual
/// row-normalized smoother; one pass is `D_r^{-1} W D_c^{-1}`.
pub fn smooth_denoise(w: &AffinityMatrix, y: &Image, passes: usize) -> Result<Image> {
    if w.n() != y.len() {
        return Err(Error::DimensionMismatch {
            left: (w.n(), w.n()),
            right: y.dims(),
        });
    }
    let f = balanced_filter(w, passes)?;
    Image::new(y.height(), y.width(), f.matvec(y.data()))
}

fn dense_row_normalize(m: &DenseMatrix) -> Result<DenseMatrix> {
    let r = reciprocals(&m.row_sums(), Error::ZeroRow)?;
    Ok(DenseMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) * r[i]))
}

fn dense_col_normalize(m: &DenseMatrix) -> Result<DenseMatrix> {
    let c = reciprocals(&m.col_sums(), Error::ZeroColumn)?;
    Ok(DenseMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) * c[j]))
}

/// One step of the modified EM recursion on a responsibility-shaped
/// (clusters x pixels) matrix: `beta` is `gamma` with unit row sums, and the
/// new `gamma` is `beta` with unit column sums.
pub fn modified_em_step(gamma: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    let beta = dense_row_normalize(gamma)?;
    let next = dense_col_normalize(&beta)?;
    Ok((beta, next))
}

/// Sparse form of [`modified_em_step`] for square responsibility matrices.
pub fn modified_em_step_sparse(gamma: &AffinityMatrix) -> Result<(AffinityMatrix, AffinityMatrix)> {
    let beta = row_normalize(gamma)?;
    let next = col_normalize(&beta)?;
    Ok((beta, next))
}
