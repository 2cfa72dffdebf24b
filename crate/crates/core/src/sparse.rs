//! Compressed sparse row storage for square nonnegative weight matrices.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Sparse `n x n` matrix with an explicit support set. Stored weights are
/// strictly positive; column indices within a row are ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl AffinityMatrix {
    /// Builds from per-row `(column, weight)` lists. Zero weights are dropped;
    /// duplicate columns are summed.
    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if rows.len() != n {
            return Err(Error::DimensionMismatch {
                left: (rows.len(), n),
                right: (n, n),
            });
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_unstable_by_key(|&(c, _)| c);
            let start = cols.len();
            for (c, w) in row {
                if c >= n {
                    return Err(Error::IndexOutOfRange { index: c, len: n });
                }
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(Error::param("weight", "weights must be finite and >= 0"));
                }
                if w == 0.0 {
                    continue;
                }
                if cols.len() > start && cols[cols.len() - 1] as usize == c {
                    *vals.last_mut().unwrap() += w;
                } else {
                    cols.push(c as u32);
                    vals.push(w);
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(Self {
            n,
            row_ptr,
            cols,
            vals,
        })
    }

    /// Builds from a row-major dense buffer, keeping the nonzero entries.
    pub fn from_dense(n: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != n * n {
            return Err(Error::DimensionMismatch {
                left: (dense.len(), 1),
                right: (n, n),
            });
        }
        let rows = dense
            .chunks_exact(n.max(1))
            .take(n)
            .map(|r| r.iter().copied().enumerate().collect())
            .collect();
        Self::from_rows(n, rows)
    }

    pub(crate) fn from_parts(n: usize, row_ptr: Vec<usize>, cols: Vec<u32>, vals: Vec<f64>) -> Self {
        debug_assert_eq!(row_ptr.len(), n + 1);
        debug_assert_eq!(cols.len(), vals.len());
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            cols: (0..n as u32).collect(),
            vals: vec![1.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[span.clone()], &self.vals[span])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&(j as u32)).map_or(0.0, |k| vals[k])
    }

    /// `(i, j, w)` over stored entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &w)| (i, j as usize, w))
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n];
        for (&j, &w) in self.cols.iter().zip(&self.vals) {
            sums[j as usize] += w;
        }
        sums
    }

    /// `diag(row_scale) W diag(col_scale)` on the same support.
    pub fn scaled(&self, row_scale: &[f64], col_scale: &[f64]) -> Self {
        let mut vals = Vec::with_capacity(self.vals.len());
        for i in 0..self.n {
            let (cols, w) = self.row(i);
            vals.extend(cols.iter().zip(w).map(|(&j, &v)| row_scale[i] * v * col_scale[j as usize]));
        }
        Self {
            n: self.n,
            row_ptr: self.row_ptr.clone(),
            cols: self.cols.clone(),
            vals,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let (cols, w) = self.row(i);
                cols.iter().zip(w).map(|(&j, &v)| v * x[j as usize]).sum()
            })
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n + 1];
        for &j in &self.cols {
            counts[j as usize + 1] += 1;
        }
        for j in 0..self.n {
            counts[j + 1] += counts[j];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut cols = vec![0u32; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for (i, j, w) in self.iter() {
            let slot = next[j];
            cols[slot] = i as u32;
            vals[slot] = w;
            next[j] += 1;
        }
        Self {
            n: self.n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.n];
        for (i, j, w) in self.iter() {
            out[i * self.n + j] = w;
        }
        out
    }

    /// Largest `|W_ij - W_ji|` over the union of both supports.
    pub fn asymmetry(&self) -> f64 {
        self.iter()
            .map(|(i, j, w)| libm::fabs(w - self.get(j, i)))
            .fold(0.0, f64::max)
    }
}
