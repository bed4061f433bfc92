use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ExtendedColorType, ImageEncoder};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// BT.601 luma of a unit-range RGB triple.
#[inline]
pub fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// 8-bit RGB raster. Metrics see the samples as reals in [0, 1].
#[derive(Clone, PartialEq, Eq)]
pub struct ImageBuf {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for ImageBuf {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ImageBuf({}x{})", self.width, self.height)
    }
}

impl ImageBuf {
    pub const MIN_SIDE: usize = 8;

    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width < Self::MIN_SIDE || height < Self::MIN_SIDE {
            return Err(Error::Degenerate(format!(
                "image {width}x{height} is smaller than {0}x{0}",
                Self::MIN_SIDE
            )));
        }
        if data.len() != width * height * 3 {
            return Err(Error::Parameter(format!(
                "RGB buffer for {width}x{height} needs {} bytes, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(ImageBuf { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(width, height, data)
    }

    /// Sample `f(x, y)` (unit-range RGB) at every pixel and quantize.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).iter().map(|&v| quantize(v)));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Channel `c` at (x, y) as a unit-range real.
    pub fn value(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * 3 + c] as f64 / 255.0
    }

    pub fn is_constant(&self) -> bool {
        self.data.chunks_exact(3).all(|p| p == &self.data[..3])
    }

    pub fn luma(&self) -> Plane {
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| luma(p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0))
            .collect();
        Plane {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn to_field(&self) -> RgbField {
        RgbField {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v as f64 / 255.0).collect(),
        }
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
            .map_err(|e| Error::Image {
                name: "<png>".into(),
                reason: e.to_string(),
            })?;
        let (width, height) = (img.width() as usize, img.height() as usize);
        let data = match img {
            DynamicImage::ImageRgb8(b) => b.into_raw(),
            DynamicImage::ImageRgba8(b) => b.into_raw().chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
            DynamicImage::ImageLuma8(b) => b.into_raw().iter().flat_map(|&v| [v, v, v]).collect(),
            DynamicImage::ImageLumaA8(b) => b.into_raw().chunks_exact(2).flat_map(|p| [p[0]; 3]).collect(),
            DynamicImage::ImageRgb16(b) => b.into_raw().iter().map(|&v| (v >> 8) as u8).collect(),
            DynamicImage::ImageRgba16(b) => b
                .into_raw()
                .chunks_exact(4)
                .flat_map(|p| [(p[0] >> 8) as u8, (p[1] >> 8) as u8, (p[2] >> 8) as u8])
                .collect(),
            DynamicImage::ImageLuma16(b) => b.into_raw().iter().flat_map(|&v| [(v >> 8) as u8; 3]).collect(),
            DynamicImage::ImageLumaA16(b) => b.into_raw().chunks_exact(2).flat_map(|p| [(p[0] >> 8) as u8; 3]).collect(),
            other => other.to_rgb8().into_raw(),
        };
        Self::new(width, height, data)
    }

    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        image::codecs::png::PngEncoder::new(Cursor::new(&mut out))
            .write_image(&self.data, self.width as u32, self.height as u32, ExtendedColorType::Rgb8)
            .expect("in-memory PNG encoding of a valid RGB buffer");
        out
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_png(&bytes).map_err(|e| match e {
            Error::Image { reason, .. } => Error::Image {
                name: path.display().to_string(),
                reason,
            },
            other => other,
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode_png()).map_err(|e| Error::io(path, e))
    }
}

#[inline]
pub(crate) fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Single-channel real-valued plane (luma, gradients, intermediate maps).
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Parameter(format!(
                "plane {width}x{height} needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Plane { width, height, data })
    }

    pub fn filled(width: usize, height: usize, v: f64) -> Self {
        Plane {
            width,
            height,
            data: vec![v; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane { width, height, data }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Real-valued interleaved RGB image, used where 8-bit quantization would
/// get in the way (gradients, perturbation optimization, filtering).
#[derive(Clone, Debug, PartialEq)]
pub struct RgbField {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl RgbField {
    pub fn zeros(width: usize, height: usize) -> Self {
        RgbField {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn luma(&self) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.chunks_exact(3).map(|p| luma(p[0], p[1], p[2])).collect(),
        }
    }

    /// Clamp to [0, 1] and round to 8 bits.
    pub fn quantize(&self) -> ImageBuf {
        ImageBuf::new(self.width, self.height, self.data.iter().map(|&v| quantize(v)).collect())
            .expect("field dimensions come from a valid image")
    }
}

/// Per-pixel blend weights in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskStyle {
    #[default]
    Full,
    Eroded,
    Feathered,
}

/// Axis-aligned ellipse in pixel coordinates (centers of pixels at x + 0.5).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
}

impl Ellipse {
    /// Normalized radius of the pixel center (x, y); 1.0 on the boundary.
    pub fn radius(&self, x: usize, y: usize) -> f64 {
        let u = (x as f64 + 0.5 - self.cx) / self.rx;
        let v = (y as f64 + 0.5 - self.cy) / self.ry;
        (u * u + v * v).sqrt()
    }

    pub fn mask(&self, width: usize, height: usize, style: MaskStyle) -> Mask {
        let weight = |r: f64| match style {
            MaskStyle::Full => f64::from(u8::from(r <= 1.0)),
            MaskStyle::Eroded => f64::from(u8::from(r <= 0.8)),
            MaskStyle::Feathered => ((1.0 - r) / 0.25).clamp(0.0, 1.0),
        };
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(weight(self.radius(x, y)));
            }
        }
        Mask { width, height, data }
    }
}

impl Mask {
    pub fn filled(width: usize, height: usize, v: f64) -> Self {
        Mask {
            width,
            height,
            data: vec![v.clamp(0.0, 1.0); width * height],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&m| m == 0.0)
    }

    pub fn check_dims(&self, dims: (usize, usize), context: &str) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::Shape {
                context: context.into(),
                expected: dims,
                found: self.dims(),
            });
        }
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png).map_err(|e| Error::Image {
            name: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let gray = img.to_luma8();
        Ok(Mask {
            width: gray.width() as usize,
            height: gray.height() as usize,
            data: gray.into_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.data.iter().map(|&v| quantize(v)).collect();
        let mut out = Vec::new();
        image::codecs::png::PngEncoder::new(Cursor::new(&mut out))
            .write_image(&bytes, self.width as u32, self.height as u32, ExtendedColorType::L8)
            .expect("in-memory PNG encoding of a valid mask");
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn check_same_dims(a: (usize, usize), b: (usize, usize), context: &str) -> Result<()> {
    if a != b {
        return Err(Error::Shape {
            context: context.into(),
            expected: a,
            found: b,
        });
    }
    Ok(())
}
