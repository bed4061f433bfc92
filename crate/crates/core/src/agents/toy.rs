use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::detector::{Detector, WhiteBox};
use crate::imgmetrics::{ImageBuf, Plane, Resampler, RgbField};
use crate::protocol::ImageSet;
use crate::rng::stream;
use crate::{Error, Result};

pub const FEATURE_SIDE: usize = 16;
pub const N_FEATURES: usize = FEATURE_SIDE * FEATURE_SIDE;
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

fn phi_plane(p: &Plane) -> Vec<f64> {
    let d = Resampler::new(p.dims(), (FEATURE_SIDE, FEATURE_SIDE)).apply(p).data;
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    d.into_iter().map(|v| v - mean).collect()
}

/// Mean-centered 16x16 bilinear downsample of the luma plane.
pub fn features(img: &ImageBuf) -> Vec<f64> {
    phi_plane(&img.luma())
}

pub fn features_field(f: &RgbField) -> Vec<f64> {
    phi_plane(&f.luma())
}

/// Logistic model over [`features`]: logit = w . phi + b.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyDetectorParams {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub trained_on: String,
}

impl ToyDetectorParams {
    pub fn zeros(trained_on: &str) -> Self {
        ToyDetectorParams {
            weights: vec![0.0; N_FEATURES],
            bias: 0.0,
            trained_on: trained_on.to_string(),
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.weights.len() != N_FEATURES {
            return Err(Error::Shape {
                context: "toy detector weights".into(),
                expected: (N_FEATURES, 1),
                found: (self.weights.len(), 1),
            });
        }
        if !self.bias.is_finite() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Parameter("toy detector weights must be finite".into()));
        }
        Ok(())
    }

    pub fn logit_features(&self, phi: &[f64]) -> f64 {
        self.weights.iter().zip(phi).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        p.check()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("params serialize");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// White-box linear detector; its score is the raw logit.
#[derive(Clone, Debug)]
pub struct ToyDetector {
    id: String,
    params: ToyDetectorParams,
}

impl ToyDetector {
    pub fn new(id: impl Into<String>, params: ToyDetectorParams) -> Result<Self> {
        params.check()?;
        Ok(ToyDetector { id: id.into(), params })
    }

    pub fn params(&self) -> &ToyDetectorParams {
        &self.params
    }

    pub fn logit(&self, img: &ImageBuf) -> f64 {
        self.params.logit_features(&features(img))
    }
}

impl Detector for ToyDetector {
    fn id(&self) -> &str {
        &self.id
    }

    fn score(&self, img: &ImageBuf) -> Result<f64> {
        Ok(self.logit(img))
    }

    fn white_box(&self) -> Option<&dyn WhiteBox> {
        Some(self)
    }
}

impl WhiteBox for ToyDetector {
    fn logit(&self, f: &RgbField) -> f64 {
        self.params.logit_features(&features_field(f))
    }

    fn gradient(&self, f: &RgbField) -> RgbField {
        let w = &self.params.weights;
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let centered = Plane {
            width: FEATURE_SIDE,
            height: FEATURE_SIDE,
            data: w.iter().map(|v| v - mean).collect(),
        };
        let g = Resampler::new(f.dims(), (FEATURE_SIDE, FEATURE_SIDE)).transpose(&centered);
        RgbField {
            width: f.width,
            height: f.height,
            data: g.data.iter().flat_map(|&v| LUMA.map(|c| c * v)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub iters: usize,
    pub seed: u64,
    /// Standard deviation of the random initial weights (0 = start at zero).
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.1,
            iters: 500,
            seed: 0,
            init_scale: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub params: ToyDetectorParams,
    pub final_loss: f64,
    pub warning: Option<String>,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic regression by full-batch gradient descent on the mean binary
/// cross-entropy. Features are standardized internally for conditioning and
/// the result is folded back into weights over the raw features.
pub fn train_logistic(x: &[Vec<f64>], y: &[f64], cfg: &TrainConfig, trained_on: &str) -> Result<TrainReport> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Parameter(format!("{} feature rows vs {} labels", x.len(), y.len())));
    }
    if !(cfg.lr > 0.0) {
        return Err(Error::Parameter(format!("learning rate must be positive, got {}", cfg.lr)));
    }
    let d = x[0].len();
    let n = x.len() as f64;
    let mut mu = vec![0.0; d];
    for row in x {
        for (m, v) in mu.iter_mut().zip(row) {
            *m += v;
        }
    }
    mu.iter_mut().for_each(|m| *m /= n);
    let mut sd = vec![0.0; d];
    for row in x {
        for ((s, v), m) in sd.iter_mut().zip(row).zip(&mu) {
            *s += (v - m) * (v - m);
        }
    }
    let scale = mu.iter().map(|m| m.abs()).fold(1e-300, f64::max);
    let mut constant = 0;
    for s in sd.iter_mut() {
        *s = (*s / n).sqrt();
        if *s <= 1e-12 * scale.max(1e-12) {
            *s = 0.0;
            constant += 1;
        }
    }
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|row| {
            row.iter()
                .zip(&mu)
                .zip(&sd)
                .map(|((v, m), s)| if *s > 0.0 { (v - m) / s } else { 0.0 })
                .collect()
        })
        .collect();

    let mut w = vec![0.0; d];
    if cfg.init_scale > 0.0 {
        let normal = Normal::new(0.0, cfg.init_scale).map_err(|e| Error::Parameter(e.to_string()))?;
        let mut rng = stream(cfg.seed, &[0x7261_696e]);
        for (wi, s) in w.iter_mut().zip(&sd) {
            let v = normal.sample(&mut rng);
            if *s > 0.0 {
                *wi = v;
            }
        }
    }
    let mut b = 0.0;
    let mut grad = vec![0.0; d];
    for _ in 0..cfg.iters {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (row, &yi) in z.iter().zip(y) {
            let zi: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
            let r = sigmoid(zi) - yi;
            for (g, a) in grad.iter_mut().zip(row) {
                *g += r * a;
            }
            gb += r;
        }
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi -= cfg.lr * g / n;
        }
        b -= cfg.lr * gb / n;
    }
    let loss = z
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let zi: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
            yi * softplus(-zi) + (1.0 - yi) * softplus(zi)
        })
        .sum::<f64>()
        / n;

    let weights: Vec<f64> = w
        .iter()
        .zip(&sd)
        .map(|(wi, s)| if *s > 0.0 { wi / s } else { 0.0 })
        .collect();
    let bias = b - weights.iter().zip(&mu).map(|(wi, m)| wi * m).sum::<f64>();
    let warning = (constant == d).then(|| "all features are constant; the model cannot separate the classes".to_string());
    let params = ToyDetectorParams {
        weights,
        bias,
        trained_on: trained_on.to_string(),
    };
    if !params.bias.is_finite() || params.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Divergence(format!("training on {trained_on} produced non-finite weights")));
    }
    Ok(TrainReport {
        params,
        final_loss: loss,
        warning,
    })
}

/// Train a toy detector on real (label 0) vs fake (label 1) images.
pub fn train_toy_detector(real: &ImageSet, fake: &ImageSet, cfg: &TrainConfig) -> Result<TrainReport> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::Parameter("training needs both real and fake images".into()));
    }
    let (x, y) = labelled_features(real.images(), fake.images());
    train_logistic(&x, &y, cfg, &format!("{} vs {}", real.label, fake.label))
}

pub(crate) fn labelled_features<'a>(
    real: impl Iterator<Item = &'a ImageBuf>,
    fake: impl Iterator<Item = &'a ImageBuf>,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for img in real {
        x.push(features(img));
        y.push(0.0);
    }
    for img in fake {
        x.push(features(img));
        y.push(1.0);
    }
    (x, y)
}
