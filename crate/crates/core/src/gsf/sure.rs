//! Risk estimation for the blended estimator `z(lambda)`.

use crate::gmm::Responsibilities;
use crate::image::{mse, Image};
use crate::{Error, Result};

/// Divergence of `u` with respect to `y` for frozen responsibilities:
/// `sum_i (sum_j gamma_ij^2) / (sum_j gamma_ij)`.
pub fn divergence_u(gamma: &Responsibilities) -> Result<f64> {
    let mass = gamma.cluster_mass();
    if let Some(i) = mass.iter().position(|&m| !(m > 0.0)) {
        return Err(Error::EmptyCluster(i));
    }
    Ok(divergence_nonempty(gamma))
}

/// As [`divergence_u`], skipping clusters that hold no mass (they do not
/// contribute to `u`).
pub(crate) fn divergence_nonempty(gamma: &Responsibilities) -> f64 {
    gamma
        .cluster_sq_mass()
        .iter()
        .zip(gamma.cluster_mass())
        .filter(|(_, m)| *m > 0.0)
        .map(|(s, m)| s / m)
        .sum()
}

/// Unbiased estimate of `(1/n) |z(lambda) - x|^2`. `lambda = inf` gives the
/// identity estimator's risk `sigma^2`.
pub fn sure(lambda: f64, u: &Image, y: &Image, sigma: f64, div: f64, d: usize) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::param("sigma", "must be > 0"));
    }
    if !(lambda >= 0.0) {
        return Err(Error::param("lambda", "must be >= 0"));
    }
    let s2 = sigma * sigma;
    if lambda.is_infinite() {
        return Ok(s2);
    }
    let n = y.len() as f64;
    let d = d as f64;
    let sigma_hat_sq = mse(u, y)?;
    let shrink = d / (d + lambda);
    Ok(-s2 + sigma_hat_sq * shrink * shrink + 2.0 * s2 / n * (div * d + n * lambda) / (d + lambda))
}

/// Minimizer of [`sure`] over `lambda >= 0`.
pub fn optimal_lambda(sigma_hat_sq: f64, sigma: f64, n: usize, div: f64, d: usize) -> f64 {
    let n = n as f64;
    if div >= n {
        return 0.0;
    }
    if sigma == 0.0 {
        return if sigma_hat_sq > 0.0 { f64::INFINITY } else { 0.0 };
    }
    let ratio = sigma_hat_sq / (sigma * sigma) * n / (n - div);
    (d as f64 * (ratio - 1.0)).max(0.0)
}
