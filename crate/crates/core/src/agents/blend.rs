use std::f64::consts::PI;

use rand::Rng;

use crate::imgmetrics::{bilateral_filter_field, BilateralConfig, ImageBuf, Mask};
use crate::rng::stream;
use crate::{Error, Result};

fn check_dims(a: &ImageBuf, b: &ImageBuf, mask: &Mask, context: &str) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Shape {
            context: context.into(),
            expected: b.dims(),
            found: a.dims(),
        });
    }
    mask.check_dims(b.dims(), context)
}

fn composite(fg: &[f64], bg: &ImageBuf, mask: &Mask) -> ImageBuf {
    let bgf = bg.to_field();
    let mut out = bgf.clone();
    for (i, v) in out.data.iter_mut().enumerate() {
        let m = mask.data[i / 3];
        *v = m * fg[i] + (1.0 - m) * bgf.data[i];
    }
    out.quantize()
}

/// `mask * bilateral(fake) + (1 - mask) * target`; with `filter = None`
/// the fake is used unfiltered.
pub fn blend_postprocess(fake: &ImageBuf, target: &ImageBuf, mask: &Mask, filter: Option<&BilateralConfig>) -> Result<ImageBuf> {
    check_dims(fake, target, mask, "blend_postprocess")?;
    let fg = match filter {
        Some(cfg) => bilateral_filter_field(&fake.to_field(), cfg.spatial_sigma, cfg.range_sigma)?,
        None => fake.to_field(),
    };
    Ok(composite(&fg.data, target, mask))
}

#[derive(Clone, Debug)]
pub struct BlendAugmented {
    pub image: ImageBuf,
    pub mask: Mask,
    /// The input mask was empty, so the output is just the background and
    /// should not be used as a fake-class sample.
    pub degenerate: bool,
}

fn sample_clamped(m: &Mask, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (m.width - 1) as f64);
    let y = y.clamp(0.0, (m.height - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(m.width - 1), (y0 + 1).min(m.height - 1));
    let (tx, ty) = (x - x0 as f64, y - y0 as f64);
    let at = |x: usize, y: usize| m.data[y * m.width + x];
    let top = at(x0, y0) * (1.0 - tx) + at(x1, y0) * tx;
    let bottom = at(x0, y1) * (1.0 - tx) + at(x1, y1) * tx;
    top * (1.0 - ty) + bottom * ty
}

/// Random smooth warp of the mask boundary followed by a small Gaussian
/// feather.
pub fn deform_mask(mask: &Mask, seed: u64) -> Mask {
    let mut rng = stream(seed, &[0x626c_656e_64]);
    let (w, h) = mask.dims();
    let amp = 0.04 * w.min(h) as f64;
    let waves: Vec<[f64; 4]> = (0..4)
        .map(|_| {
            [
                rng.random_range(0.5..2.0),
                rng.random_range(0.5..2.0),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.5..1.0) * amp / 2.0,
            ]
        })
        .collect();
    let disp = |x: f64, y: f64, k: usize| -> f64 {
        waves[2 * k..2 * k + 2]
            .iter()
            .map(|[fx, fy, ph, a]| a * (2.0 * PI * (fx * x / w as f64 + fy * y / h as f64) + ph).sin())
            .sum()
    };
    let mut warped = Mask::filled(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            warped.data[y * w + x] = sample_clamped(mask, xf + disp(xf, yf, 0), yf + disp(xf, yf, 1));
        }
    }
    let sigma: f64 = 1.0;
    let r = 2isize;
    let k: Vec<f64> = (-r..=r).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let blur = |src: &Mask, horizontal: bool| -> Mask {
        let mut out = Mask::filled(w, h, 0.0);
        for y in 0..h as isize {
            for x in 0..w as isize {
                let (mut acc, mut norm) = (0.0, 0.0);
                for (j, kj) in k.iter().enumerate() {
                    let d = j as isize - r;
                    let (sx, sy) = if horizontal { (x + d, y) } else { (x, y + d) };
                    if sx < 0 || sy < 0 || sx >= w as isize || sy >= h as isize {
                        continue;
                    }
                    acc += kj * src.data[sy as usize * w + sx as usize];
                    norm += kj;
                }
                out.data[y as usize * w + x as usize] = acc / norm;
            }
        }
        out
    };
    let mut out = blur(&blur(&warped, true), false);
    for v in &mut out.data {
        if *v < 1e-9 {
            *v = 0.0;
        } else if *v > 1.0 - 1e-9 {
            *v = 1.0;
        }
    }
    out
}

/// Paste the face region of `fake_fg` onto `real_bg` through a randomly
/// deformed, feathered version of `mask`.
pub fn blend_augment(fake_fg: &ImageBuf, real_bg: &ImageBuf, mask: &Mask, seed: u64) -> Result<BlendAugmented> {
    check_dims(fake_fg, real_bg, mask, "blend_augment")?;
    if mask.is_zero() {
        return Ok(BlendAugmented {
            image: real_bg.clone(),
            mask: mask.clone(),
            degenerate: true,
        });
    }
    let m = deform_mask(mask, seed);
    Ok(BlendAugmented {
        image: composite(&fake_fg.to_field().data, real_bg, &m),
        mask: m,
        degenerate: false,
    })
}
