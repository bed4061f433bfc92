//! Detection score (mean AUROC over fake datasets) and the four-term
//! creation score, with term-by-term breakdowns.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{score_checked, Detector, DetectorHandle};
use crate::identity::{id_similarity, EmbeddingProvider};
use crate::imgmetrics::{estimate_noise_with, ssim, ImageBuf, NoiseConfig};
use crate::protocol::{ImageItem, ImageSet, SubmissionManifest, SwapTaskList};
use crate::rocstats::{auroc_split, AurocResult};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CreationConfig {
    pub noise_term_enabled: bool,
    pub anti_coeff: f64,
    pub noise: NoiseConfig,
}

impl Default for CreationConfig {
    fn default() -> Self {
        CreationConfig {
            noise_term_enabled: true,
            anti_coeff: 2.0,
            noise: NoiseConfig::default(),
        }
    }
}

/// The detector-independent part of a creation score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityTerms {
    pub ssim_mean: f64,
    pub noise_mean: f64,
    pub id_mean: f64,
    pub n_images: usize,
    /// Images whose identity embedding was degenerate (counted as 0).
    pub n_degenerate_id: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorAuroc {
    pub detector: String,
    pub auroc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreationScoreBreakdown {
    pub ssim_mean: f64,
    pub noise_mean: f64,
    pub id_mean: f64,
    pub anti_detection: f64,
    pub total: f64,
    pub n_detectors_used: usize,
    pub noise_term_enabled: bool,
    pub per_detector: Vec<DetectorAuroc>,
}

impl CreationScoreBreakdown {
    /// Combine cached quality terms with per-detector AUROCs (in detector
    /// order). The total is accumulated as ssim + noise + id + anti.
    pub fn compose(q: &QualityTerms, per_detector: Vec<DetectorAuroc>, cfg: &CreationConfig) -> Self {
        let n_d = per_detector.len();
        let anti_detection = if n_d == 0 {
            0.0
        } else {
            cfg.anti_coeff * per_detector.iter().map(|d| 1.0 - d.auroc).sum::<f64>() / n_d as f64
        };
        let noise_term = if cfg.noise_term_enabled { q.noise_mean } else { 0.0 };
        CreationScoreBreakdown {
            ssim_mean: q.ssim_mean,
            noise_mean: q.noise_mean,
            id_mean: q.id_mean,
            anti_detection,
            total: q.ssim_mean + noise_term + q.id_mean + anti_detection,
            n_detectors_used: n_d,
            noise_term_enabled: cfg.noise_term_enabled,
            per_detector,
        }
    }

    pub fn quality(&self) -> (f64, f64, f64) {
        (self.ssim_mean, self.noise_mean, self.id_mean)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetAuroc {
    pub dataset: String,
    pub auroc: AurocResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionScore {
    pub per_dataset: Vec<DatasetAuroc>,
    pub mean_auroc: f64,
    pub n_datasets: usize,
}

/// SSIM against the target, noise score and identity cosine per image,
/// averaged in task order.
pub fn quality_terms(images: &[ImageBuf], tasks: &SwapTaskList, provider: &dyn EmbeddingProvider, noise: &NoiseConfig) -> Result<QualityTerms> {
    if images.len() != tasks.len() || images.is_empty() {
        return Err(Error::Parameter(format!("{} images for {} tasks", images.len(), tasks.len())));
    }
    let per_image = tasks
        .entries()
        .par_iter()
        .zip(images)
        .map(|(id, img)| {
            let attribute = |e: Error| Error::Image {
                name: id.render(),
                reason: e.to_string(),
            };
            let s = ssim(img, tasks.target(id)).map_err(attribute)?;
            let n = estimate_noise_with(img, noise).map_err(attribute)?.score;
            let c = id_similarity(img, tasks.source_ref(&id.id_s), provider).map_err(attribute)?;
            Ok((s, n, c))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_image.len() as f64;
    let (mut s, mut ns, mut c) = (0.0, 0.0, 0.0);
    let mut degenerate = 0;
    for (si, ni, ci) in &per_image {
        s += si;
        ns += ni;
        c += ci.value;
        degenerate += usize::from(ci.degenerate);
    }
    Ok(QualityTerms {
        ssim_mean: s / n,
        noise_mean: ns / n,
        id_mean: c / n,
        n_images: per_image.len(),
        n_degenerate_id: degenerate,
    })
}

fn manifest_set(manifest: &SubmissionManifest, images: Vec<ImageBuf>) -> ImageSet {
    ImageSet {
        label: format!("{}/{}", manifest.team, manifest.phase),
        items: manifest
            .images
            .iter()
            .zip(images)
            .map(|((id, path), img)| ImageItem {
                name: id.render(),
                path: Some(path.clone()),
                image: Arc::new(img),
            })
            .collect(),
    }
}

/// Scoring with caches: detector-independent creation terms keyed by
/// manifest checksum, and real-set scores keyed by detector id.
pub struct Scorer {
    provider: Arc<dyn EmbeddingProvider>,
    quality: RwLock<HashMap<String, QualityTerms>>,
    real_scores: RwLock<HashMap<(String, String), Arc<Vec<f64>>>>,
}

impl Scorer {
    pub fn new(provider: Arc<dyn EmbeddingProvider>) -> Self {
        Scorer {
            provider,
            quality: RwLock::new(HashMap::new()),
            real_scores: RwLock::new(HashMap::new()),
        }
    }

    pub fn provider(&self) -> &dyn EmbeddingProvider {
        self.provider.as_ref()
    }

    pub fn provider_handle(&self) -> Arc<dyn EmbeddingProvider> {
        self.provider.clone()
    }

    fn real_scores(&self, detector: &dyn Detector, real_set: &ImageSet) -> Result<Arc<Vec<f64>>> {
        let key = (detector.id().to_string(), real_set.label.clone());
        if let Some(s) = self.real_scores.read().unwrap_or_else(|p| p.into_inner()).get(&key) {
            return Ok(s.clone());
        }
        let s = Arc::new(score_checked(detector, real_set)?);
        self.real_scores
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(key, s.clone());
        Ok(s)
    }

    fn detector_auroc(&self, detector: &dyn Detector, real_set: &ImageSet, fake_set: &ImageSet) -> Result<AurocResult> {
        let real = self.real_scores(detector, real_set)?;
        let fake = score_checked(detector, fake_set)?;
        auroc_split(&real, &fake)
    }

    /// Mean AUROC of one detector over several fake datasets against a
    /// shared real set.
    pub fn score_detection(&self, detector: &dyn Detector, real_set: &ImageSet, fake_sets: &[ImageSet]) -> Result<DetectionScore> {
        if real_set.is_empty() {
            return Err(Error::Parameter("the real set is empty".into()));
        }
        if fake_sets.is_empty() {
            return Err(Error::Parameter("no fake datasets to evaluate against".into()));
        }
        let mut per_dataset = Vec::with_capacity(fake_sets.len());
        for set in fake_sets {
            if set.is_empty() {
                return Err(Error::Parameter(format!("fake dataset {} is empty", set.label)));
            }
            per_dataset.push(DatasetAuroc {
                dataset: set.label.clone(),
                auroc: self.detector_auroc(detector, real_set, set)?,
            });
        }
        let mean_auroc = per_dataset.iter().map(|d| d.auroc.auroc).sum::<f64>() / per_dataset.len() as f64;
        Ok(DetectionScore {
            n_datasets: per_dataset.len(),
            per_dataset,
            mean_auroc,
        })
    }

    fn cached_quality(&self, checksum: &str) -> Option<QualityTerms> {
        self.quality.read().unwrap_or_else(|p| p.into_inner()).get(checksum).cloned()
    }

    fn per_detector(&self, detectors: &[DetectorHandle], real_set: &ImageSet, fake: &ImageSet) -> Result<Vec<DetectorAuroc>> {
        detectors
            .iter()
            .map(|d| {
                Ok(DetectorAuroc {
                    detector: d.id().to_string(),
                    auroc: self.detector_auroc(d.as_ref(), real_set, fake)?.auroc,
                })
            })
            .collect()
    }

    pub fn score_creation(
        &self,
        manifest: &SubmissionManifest,
        tasks: &SwapTaskList,
        detectors: &[DetectorHandle],
        real_set: &ImageSet,
        cfg: &CreationConfig,
    ) -> Result<CreationScoreBreakdown> {
        let images = manifest.verify()?;
        let q = match self.cached_quality(&manifest.checksum) {
            Some(q) => q,
            None => {
                let q = quality_terms(&images, tasks, self.provider(), &cfg.noise)?;
                self.quality
                    .write()
                    .unwrap_or_else(|p| p.into_inner())
                    .insert(manifest.checksum.clone(), q.clone());
                q
            }
        };
        let fake = manifest_set(manifest, images);
        let per_detector = if detectors.is_empty() {
            Vec::new()
        } else {
            if real_set.is_empty() {
                return Err(Error::Parameter("the real set is empty".into()));
            }
            self.per_detector(detectors, real_set, &fake)?
        };
        Ok(CreationScoreBreakdown::compose(&q, per_detector, cfg))
    }

    /// Re-score previously validated submissions against a new detector
    /// list. Each submission's images are re-read and must still match its
    /// stored checksum; detector-independent terms come from the cache.
    pub fn rescore(
        &self,
        manifests: &[SubmissionManifest],
        tasks: &SwapTaskList,
        detectors: &[DetectorHandle],
        real_set: &ImageSet,
        cfg: &CreationConfig,
    ) -> Result<Vec<CreationScoreBreakdown>> {
        manifests
            .iter()
            .map(|m| {
                let images = m.verify()?;
                let q = match self.cached_quality(&m.checksum) {
                    Some(q) => q,
                    None => quality_terms(&images, tasks, self.provider(), &cfg.noise)?,
                };
                let fake = manifest_set(m, images);
                let per_detector = self.per_detector(detectors, real_set, &fake)?;
                Ok(CreationScoreBreakdown::compose(&q, per_detector, cfg))
            })
            .collect()
    }
}

/// Uncached detection score.
pub fn score_detection(detector: &dyn Detector, real_set: &ImageSet, fake_sets: &[ImageSet]) -> Result<DetectionScore> {
    Scorer::new(Arc::new(crate::identity::ToyEmbedder)).score_detection(detector, real_set, fake_sets)
}

/// Uncached creation score.
pub fn score_creation(
    manifest: &SubmissionManifest,
    tasks: &SwapTaskList,
    detectors: &[DetectorHandle],
    real_set: &ImageSet,
    cfg: &CreationConfig,
    provider: Arc<dyn EmbeddingProvider>,
) -> Result<CreationScoreBreakdown> {
    Scorer::new(provider).score_creation(manifest, tasks, detectors, real_set, cfg)
}
