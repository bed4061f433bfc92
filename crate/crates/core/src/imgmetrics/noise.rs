use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{ImageBuf, Plane};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub patch: usize,
    pub sigma_ref: f64,
    pub max_iter: usize,
    pub rel_tol: f64,
    /// The smallest eigenvalue of a covariance estimated from few patches
    /// is biased far low, so a weak-texture set smaller than this many
    /// patches per patch pixel is not used.
    pub min_patches_per_dim: usize,
    /// Chi-square quantile used for the weak-texture variance threshold.
    pub quantile: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            patch: 7,
            sigma_ref: 25.0 / 255.0,
            max_iter: 10,
            rel_tol: 1e-3,
            min_patches_per_dim: 20,
            quantile: 0.999,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate {
    pub sigma_hat: f64,
    pub score: f64,
    pub patches_used: usize,
    /// Set when too few weak-texture patches survived and the estimate fell
    /// back to the eigenvalue of the full patch population.
    pub fallback: bool,
}

impl NoiseEstimate {
    pub fn score_for(sigma_hat: f64, sigma_ref: f64) -> f64 {
        (1.0 - sigma_hat / sigma_ref).clamp(0.0, 1.0)
    }
}

pub fn estimate_noise(img: &ImageBuf) -> Result<NoiseEstimate> {
    estimate_noise_with(img, &NoiseConfig::default())
}

pub fn estimate_noise_with(img: &ImageBuf, cfg: &NoiseConfig) -> Result<NoiseEstimate> {
    estimate_noise_plane(&img.luma(), cfg)
}

struct Patches {
    dim: usize,
    values: Vec<f64>,
    variance: Vec<f64>,
}

impl Patches {
    fn extract(p: &Plane, k: usize) -> Self {
        let dim = k * k;
        let nx = p.width - k + 1;
        let ny = p.height - k + 1;
        let mut values = Vec::with_capacity(nx * ny * dim);
        let mut variance = Vec::with_capacity(nx * ny);
        for y in 0..ny {
            for x in 0..nx {
                let start = values.len();
                for dy in 0..k {
                    values.extend_from_slice(&p.data[(y + dy) * p.width + x..(y + dy) * p.width + x + k]);
                }
                let v = &values[start..];
                let mean = v.iter().sum::<f64>() / dim as f64;
                let ss: f64 = v.iter().map(|s| (s - mean) * (s - mean)).sum();
                variance.push(ss / (dim - 1) as f64);
            }
        }
        Patches { dim, values, variance }
    }

    fn len(&self) -> usize {
        self.variance.len()
    }

    fn patch(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Smallest eigenvalue of the covariance of the selected patches.
    fn min_eigenvalue(&self, idx: &[usize]) -> f64 {
        let d = self.dim;
        let n = idx.len() as f64;
        let mut mean = vec![0.0; d];
        for &i in idx {
            for (m, v) in mean.iter_mut().zip(self.patch(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut cov = DMatrix::<f64>::zeros(d, d);
        let mut centered = vec![0.0; d];
        for &i in idx {
            for ((c, v), m) in centered.iter_mut().zip(self.patch(i)).zip(&mean) {
                *c = v - m;
            }
            for r in 0..d {
                let cr = centered[r];
                for c in r..d {
                    cov[(r, c)] += cr * centered[c];
                }
            }
        }
        for r in 0..d {
            for c in r..d {
                let v = cov[(r, c)] / n;
                cov[(r, c)] = v;
                cov[(c, r)] = v;
            }
        }
        let eig = SymmetricEigen::new(cov);
        eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min).max(0.0)
    }
}

/// Patch-PCA noise level estimate on a single real-valued plane.
pub fn estimate_noise_plane(plane: &Plane, cfg: &NoiseConfig) -> Result<NoiseEstimate> {
    if cfg.patch < 2 || !(cfg.sigma_ref > 0.0) || !(cfg.quantile > 0.0 && cfg.quantile < 1.0) {
        return Err(Error::Parameter(format!("invalid noise config {cfg:?}")));
    }
    let need = 3 * cfg.patch;
    if plane.width < need || plane.height < need {
        return Err(Error::Degenerate(format!(
            "noise estimation needs at least {need}x{need} pixels, got {}x{}",
            plane.width, plane.height
        )));
    }
    let patches = Patches::extract(plane, cfg.patch);
    let dof = (patches.dim - 1) as f64;
    let chi2 = ChiSquared::new(dof).map_err(|e| Error::Parameter(e.to_string()))?;
    let threshold_factor = chi2.inverse_cdf(cfg.quantile) / dof;

    let all: Vec<usize> = (0..patches.len()).collect();
    let global = patches.min_eigenvalue(&all);
    let mut s2 = global;
    let mut used = all.len();
    let mut fallback = false;
    let floor = cfg.min_patches_per_dim.max(1) * patches.dim;
    for _ in 0..cfg.max_iter {
        let threshold = s2 * threshold_factor;
        let kept: Vec<usize> = all.iter().copied().filter(|&i| patches.variance[i] < threshold).collect();
        if kept.len() < floor {
            fallback = true;
            s2 = global;
            used = all.len();
            break;
        }
        let next = patches.min_eigenvalue(&kept);
        let converged = (next - s2).abs() <= cfg.rel_tol * s2;
        s2 = next;
        used = kept.len();
        if converged {
            break;
        }
    }
    let sigma_hat = s2.sqrt();
    Ok(NoiseEstimate {
        sigma_hat,
        score: NoiseEstimate::score_for(sigma_hat, cfg.sigma_ref),
        patches_used: used,
        fallback,
    })
}
