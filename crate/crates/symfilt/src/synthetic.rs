//! Piecewise-constant test images.

use symfilt_core::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// left and right halves
    Split,
    /// centred disk of radius `min(h, w) / 3`
    Disk,
    /// centred square of side `min(h, w) / 2`
    Square,
}

/// `inside` on the foreground region, `outside` elsewhere.
pub fn two_region(height: usize, width: usize, region: Region, inside: f64, outside: f64) -> Image {
    let (cy, cx) = ((height as f64 - 1.0) / 2.0, (width as f64 - 1.0) / 2.0);
    let m = height.min(width) as f64;
    Image::from_fn(height, width, |r, c| {
        let (dy, dx) = (r as f64 - cy, c as f64 - cx);
        let fg = match region {
            Region::Split => c < width / 2,
            Region::Disk => dy * dy + dx * dx <= (m / 3.0) * (m / 3.0),
            Region::Square => dy.abs() < m / 4.0 && dx.abs() < m / 4.0,
        };
        if fg {
            inside
        } else {
            outside
        }
    })
}

/// A small fixed set of two-region images at `size x size`.
pub fn two_region_set(size: usize) -> Vec<(String, Image)> {
    [
        ("split", Region::Split, 0.25, 0.75),
        ("disk", Region::Disk, 0.8, 0.3),
        ("square", Region::Square, 0.2, 0.6),
    ]
    .into_iter()
    .map(|(name, region, a, b)| (name.to_string(), two_region(size, size, region, a, b)))
    .collect()
}
