#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::Path;
use std::sync::OnceLock;

use dfgc_core::protocol::{gen_synthetic, Dataset, SynthConfig};
use dfgc_core::{ImageBuf, RgbField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Smooth colored field: a few low-frequency cosines around mid-gray, plus
/// (when `piecewise`) a soft-edged brighter disc.
pub fn smooth_field(seed: u64, size: usize, piecewise: bool) -> RgbField {
    let mut r = rng(seed);
    let waves: Vec<[f64; 4]> = (0..4)
        .map(|_| {
            [
                r.random_range(0.03..0.08),
                r.random_range(0.3..1.5),
                r.random_range(0.3..1.5),
                r.random_range(0.0..2.0 * PI),
            ]
        })
        .collect();
    let tint = [r.random_range(0.9..1.1), 1.0, r.random_range(0.9..1.1)];
    let (cx, cy, rad) = (
        r.random_range(0.3..0.7) * size as f64,
        r.random_range(0.3..0.7) * size as f64,
        r.random_range(0.15..0.3) * size as f64,
    );
    let mut f = RgbField::zeros(size, size);
    for y in 0..size {
        for x in 0..size {
            let (u, v) = (x as f64 / size as f64, y as f64 / size as f64);
            let mut base = 0.45;
            for [a, fx, fy, ph] in &waves {
                base += a * (2.0 * PI * (fx * u + fy * v) + ph).cos();
            }
            if piecewise {
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                base += 0.15 * (1.0 / (1.0 + ((d - rad) / 1.0).exp()));
            }
            for c in 0..3 {
                f.data[(y * size + x) * 3 + c] = (base * tint[c]).clamp(0.05, 0.95);
            }
        }
    }
    f
}

pub fn smooth_image(seed: u64, size: usize) -> ImageBuf {
    smooth_field(seed, size, true).quantize()
}

/// Gray Gaussian noise of standard deviation `sigma` (same draw on all
/// three channels, so luma noise has the same sigma), then 8-bit quantized.
pub fn with_noise(f: &RgbField, sigma: f64, seed: u64) -> ImageBuf {
    let mut r = rng(seed ^ 0x6e6f_6973_65);
    let n = Normal::new(0.0, sigma).unwrap();
    let mut out = f.clone();
    for px in out.data.chunks_mut(3) {
        let e = n.sample(&mut r);
        for v in px {
            *v = (*v + e).clamp(0.0, 1.0);
        }
    }
    out.quantize()
}

pub fn random_image(seed: u64, w: usize, h: usize) -> ImageBuf {
    let mut r = rng(seed);
    ImageBuf::new(w, h, (0..w * h * 3).map(|_| r.random()).collect()).unwrap()
}

/// A generated dataset with the default desk-scale config (N = 100,
/// 64x64), created once per test binary.
pub fn dataset() -> &'static Dataset {
    static DS: OnceLock<(tempfile::TempDir, Dataset)> = OnceLock::new();
    &DS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let ds = gen_synthetic(&SynthConfig::default(), &dir.path().join("ds")).unwrap();
        (dir, ds)
    })
    .1
}

pub fn small_config(seed: u64) -> SynthConfig {
    SynthConfig {
        n_persons: 4,
        n_videos_per_person: 3,
        n_train_videos: 1,
        n_frames: 3,
        image_size: 32,
        n_tasks: 12,
        seed,
        ..SynthConfig::default()
    }
}

pub fn small_dataset(root: &Path, seed: u64) -> Dataset {
    gen_synthetic(&small_config(seed), root).unwrap()
}
