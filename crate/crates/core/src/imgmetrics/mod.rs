//! Pixel-level quality metrics: structural similarity, single-image noise
//! level estimation and the bilateral filter used for post-processing.

mod bilateral;
mod image;
mod noise;
mod resample;
mod ssim;

pub use bilateral::{bilateral_filter, bilateral_filter_field, BilateralConfig};
pub use image::{luma, Ellipse, ImageBuf, Mask, MaskStyle, Plane, RgbField};
pub use noise::{estimate_noise, estimate_noise_plane, estimate_noise_with, NoiseConfig, NoiseEstimate};
pub use resample::Resampler;
pub use ssim::{ssim, ssim_planes, SsimConfig};
