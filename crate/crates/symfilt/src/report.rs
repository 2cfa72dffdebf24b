//! Flat CSV records and affinity triplet dumps.

use std::io::{self, Write};

use symfilt_core::gsf::DenoiseReport;
use symfilt_core::sparse::AffinityMatrix;

pub const REPORT_HEADER: &str = "method,sigma,h_r,chosen_k,chosen_lambda,sure,divergence,sigma_hat_sq,em_iterations,psnr";

/// One denoising run as printed by `symfilt denoise`. Intensities are on
/// the 0..255 scale; fields that do not apply to a method stay empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportRecord {
    pub method: String,
    pub sigma: f64,
    pub h_r: f64,
    pub gsf: Option<DenoiseReport>,
    pub psnr: Option<f64>,
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(String::new, |x| format!("{x:.prec$}"))
}

impl ReportRecord {
    pub fn csv_row(&self) -> String {
        let g = self.gsf.as_ref();
        let s2 = 255.0 * 255.0;
        [
            self.method.clone(),
            format!("{:.4}", self.sigma),
            format!("{:.4}", self.h_r),
            g.map_or_else(String::new, |g| g.chosen_k.to_string()),
            opt(g.map(|g| g.chosen_lambda), 6),
            opt(g.map(|g| g.sure_value * s2).filter(|v| v.is_finite()), 6),
            opt(g.map(|g| g.divergence), 4),
            opt(g.map(|g| g.sigma_hat_sq * s2), 6),
            g.map_or_else(String::new, |g| g.em_iterations.to_string()),
            opt(self.psnr, 4),
        ]
        .join(",")
    }
}

/// `i j w` per stored entry, one per line.
pub fn write_triplets(w: &AffinityMatrix, mut out: impl Write) -> io::Result<()> {
    for (i, j, v) in w.iter() {
        writeln!(out, "{i} {j} {v:e}")?;
    }
    Ok(())
}
