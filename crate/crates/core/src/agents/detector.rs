use std::sync::Arc;

use rayon::prelude::*;

use crate::imgmetrics::{ImageBuf, RgbField};
use crate::protocol::ImageSet;
use crate::{Error, Result};

/// A fakeness scorer: higher scores mean "more likely fake".
pub trait Detector: Send + Sync {
    fn id(&self) -> &str;

    fn score(&self, img: &ImageBuf) -> Result<f64>;

    /// Scores for every item of a set, in set order.
    fn score_set(&self, set: &ImageSet) -> Result<Vec<f64>> {
        set.items.par_iter().map(|it| self.score(&it.image)).collect()
    }

    /// Gradient access, for detectors that expose it.
    fn white_box(&self) -> Option<&dyn WhiteBox> {
        None
    }
}

/// Differentiable access to a detector's fakeness logit on real-valued
/// RGB fields (unit range, unquantized).
pub trait WhiteBox: Send + Sync {
    fn logit(&self, f: &RgbField) -> f64;
    /// d logit / d pixel, same layout as the field.
    fn gradient(&self, f: &RgbField) -> RgbField;
}

pub type DetectorHandle = Arc<dyn Detector>;

/// Score a set and reject any non-finite output, naming the offending image.
pub fn score_checked(detector: &dyn Detector, set: &ImageSet) -> Result<Vec<f64>> {
    let scores = detector.score_set(set)?;
    if scores.len() != set.len() {
        return Err(Error::DetectorFault {
            detector: detector.id().to_string(),
            item: set.label.clone(),
            reason: format!("returned {} scores for {} images", scores.len(), set.len()),
        });
    }
    for (s, it) in scores.iter().zip(&set.items) {
        if !s.is_finite() {
            return Err(Error::DetectorFault {
                detector: detector.id().to_string(),
                item: it.name.clone(),
                reason: format!("non-finite score {s}"),
            });
        }
    }
    Ok(scores)
}

/// Returns the same value for every image.
#[derive(Clone, Debug)]
pub struct ConstantDetector {
    id: String,
    value: f64,
}

impl ConstantDetector {
    pub fn new(id: impl Into<String>, value: f64) -> Self {
        ConstantDetector { id: id.into(), value }
    }
}

impl Detector for ConstantDetector {
    fn id(&self) -> &str {
        &self.id
    }

    fn score(&self, _img: &ImageBuf) -> Result<f64> {
        Ok(self.value)
    }
}

/// Detector backed by an arbitrary scoring closure (scripted agents, tests).
pub struct FnDetector<F> {
    id: String,
    f: F,
}

impl<F> FnDetector<F>
where
    F: Fn(&ImageBuf) -> f64 + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        FnDetector { id: id.into(), f }
    }
}

impl<F> Detector for FnDetector<F>
where
    F: Fn(&ImageBuf) -> f64 + Send + Sync,
{
    fn id(&self) -> &str {
        &self.id
    }

    fn score(&self, img: &ImageBuf) -> Result<f64> {
        Ok((self.f)(img))
    }
}
