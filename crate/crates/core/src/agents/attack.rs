use super::detector::Detector;
use crate::imgmetrics::{ImageBuf, Mask, RgbField};
use crate::{Error, Result};

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One signed-gradient step toward "real" on a real-valued field, without
/// clamping: `x - eps * sign(grad) * mask`.
pub fn fgsm_field(f: &RgbField, detector: &dyn Detector, eps: f64, mask: Option<&Mask>) -> Result<RgbField> {
    let wb = detector
        .white_box()
        .ok_or_else(|| Error::Capability(detector.id().to_string()))?;
    if !(eps >= 0.0) {
        return Err(Error::Parameter(format!("eps must be non-negative, got {eps}")));
    }
    if let Some(m) = mask {
        m.check_dims(f.dims(), "fgsm mask")?;
    }
    let g = wb.gradient(f);
    let mut out = f.clone();
    for (i, (v, gi)) in out.data.iter_mut().zip(&g.data).enumerate() {
        let m = mask.map_or(1.0, |m| m.data[i / 3]);
        let step = eps * sign(*gi) * m;
        if step != 0.0 {
            *v -= step;
        }
    }
    Ok(out)
}

/// FGSM on an 8-bit image: `clamp(x - eps * sign(d logit / dx) * mask, 0, 1)`,
/// re-quantized. Pixels with zero mask weight are returned bit-identical.
pub fn fgsm_attack(img: &ImageBuf, detector: &dyn Detector, eps: f64, mask: Option<&Mask>) -> Result<ImageBuf> {
    Ok(fgsm_field(&img.to_field(), detector, eps, mask)?.quantize())
}
