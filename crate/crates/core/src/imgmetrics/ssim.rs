use super::image::check_same_dims;
use super::{ImageBuf, Plane};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - c;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / sum).collect()
}

/// Separable "valid" convolution: output is (w - k + 1) x (h - k + 1).
fn filter_valid(p: &Plane, k: &[f64]) -> Plane {
    let n = k.len();
    let (w, h) = p.dims();
    let ow = w - n + 1;
    let oh = h - n + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let src = &p.data[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&src[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut data = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate() {
                acc += kj * rows[(y + j) * ow + x];
            }
            data[y * ow + x] = acc;
        }
    }
    Plane { width: ow, height: oh, data }
}

fn product(a: &Plane, b: &Plane) -> Plane {
    Plane {
        width: a.width,
        height: a.height,
        data: a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
    }
}

/// Mean local SSIM of two real-valued planes with the default window.
pub fn ssim_planes(a: &Plane, b: &Plane) -> Result<f64> {
    ssim_planes_with(a, b, &SsimConfig::default())
}

pub fn ssim_planes_with(a: &Plane, b: &Plane, cfg: &SsimConfig) -> Result<f64> {
    check_same_dims(a.dims(), b.dims(), "ssim")?;
    if a.width < cfg.window || a.height < cfg.window {
        return Err(Error::Degenerate(format!(
            "ssim window {0}x{0} does not fit a {1}x{2} image",
            cfg.window, a.width, a.height
        )));
    }
    let k = gaussian_kernel(cfg.window, cfg.sigma);
    let c1 = cfg.k1 * cfg.k1;
    let c2 = cfg.k2 * cfg.k2;

    let mu_a = filter_valid(a, &k);
    let mu_b = filter_valid(b, &k);
    let aa = filter_valid(&product(a, a), &k);
    let bb = filter_valid(&product(b, b), &k);
    let ab = filter_valid(&product(a, b), &k);

    // Every expression below is symmetric under a <-> b operation by
    // operation, so swapping the arguments gives a bit-identical result.
    let mut total = 0.0;
    for i in 0..mu_a.data.len() {
        let (ma, mb) = (mu_a.data[i], mu_b.data[i]);
        let ma2 = ma * ma;
        let mb2 = mb * mb;
        let mab = ma * mb;
        let va = aa.data[i] - ma2;
        let vb = bb.data[i] - mb2;
        let cov = ab.data[i] - mab;
        let num = (2.0 * mab + c1) * (2.0 * cov + c2);
        let den = (ma2 + mb2 + c1) * (va + vb + c2);
        total += num / den;
    }
    Ok(total / mu_a.data.len() as f64)
}

/// Mean local SSIM over BT.601 luma (11x11 Gaussian window, sigma 1.5).
pub fn ssim(a: &ImageBuf, b: &ImageBuf) -> Result<f64> {
    check_same_dims(a.dims(), b.dims(), "ssim")?;
    ssim_planes(&a.luma(), &b.luma())
}
