use serde::{Deserialize, Serialize};

use super::{ImageBuf, RgbField};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BilateralConfig {
    pub spatial_sigma: f64,
    pub range_sigma: f64,
}

impl Default for BilateralConfig {
    fn default() -> Self {
        BilateralConfig {
            spatial_sigma: 2.0,
            range_sigma: 0.1,
        }
    }
}

/// Edge-preserving smoothing of an 8-bit image; see [`bilateral_filter_field`].
pub fn bilateral_filter(img: &ImageBuf, spatial_sigma: f64, range_sigma: f64) -> Result<ImageBuf> {
    Ok(bilateral_filter_field(&img.to_field(), spatial_sigma, range_sigma)?.quantize())
}

/// Bilateral filter with a Gaussian spatial kernel truncated at
/// `2 * spatial_sigma` and a per-channel Gaussian range kernel. Neighbors
/// outside the image are skipped and the weights renormalized.
pub fn bilateral_filter_field(f: &RgbField, spatial_sigma: f64, range_sigma: f64) -> Result<RgbField> {
    if !(spatial_sigma > 0.0) || !(range_sigma > 0.0) {
        return Err(Error::Parameter(format!(
            "bilateral sigmas must be positive (spatial {spatial_sigma}, range {range_sigma})"
        )));
    }
    let r = ((2.0 * spatial_sigma).ceil() as isize).max(1);
    let cut = (2.0 * spatial_sigma) * (2.0 * spatial_sigma);
    let mut offsets = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let d2 = (dx * dx + dy * dy) as f64;
            if d2 <= cut {
                offsets.push((dx, dy, (-d2 / (2.0 * spatial_sigma * spatial_sigma)).exp()));
            }
        }
    }
    let inv_range = 1.0 / (2.0 * range_sigma * range_sigma);
    let (w, h) = f.dims();
    let mut out = RgbField::zeros(w, h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let centre = ((y as usize) * w + x as usize) * 3;
            for c in 0..3 {
                let v0 = f.data[centre + c];
                let (mut acc, mut norm) = (0.0, 0.0);
                for &(dx, dy, ws) in &offsets {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let v = f.data[((ny as usize) * w + nx as usize) * 3 + c];
                    let d = v - v0;
                    let wt = ws * (-d * d * inv_range).exp();
                    acc += wt * v;
                    norm += wt;
                }
                out.data[centre + c] = acc / norm;
            }
        }
    }
    Ok(out)
}
