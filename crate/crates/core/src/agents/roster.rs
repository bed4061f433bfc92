//! Built-in creator and detector agents, configurable from game scenarios.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::advnoise::{adv_noise_train, AdvNoiseConfig};
use super::attack::fgsm_attack;
use super::blend::blend_postprocess;
use super::defense::{train_adversarial, train_blend_augmented, AugmentConfig};
use super::detector::{ConstantDetector, DetectorHandle};
use super::external::{ExternalConfig, ExternalDetector};
use super::toy::{train_logistic, train_toy_detector, ToyDetector, ToyDetectorParams, TrainConfig};
use crate::imgmetrics::{BilateralConfig, ImageBuf, Mask, MaskStyle};
use crate::protocol::{Dataset, FaceSwapId, ImageSet, SwapTaskList};
use crate::rng::{derive_seed, stream};
use crate::{Error, Result};

/// Shared inputs for building agents: the public training split of a
/// dataset, plus a memo of trained toy models so identical recipes are
/// trained once.
pub struct AgentContext {
    pub dataset: Dataset,
    pub train_real: ImageSet,
    pub train_fake: ImageSet,
    models: Mutex<HashMap<String, ToyDetectorParams>>,
}

impl AgentContext {
    pub fn new(dataset: Dataset) -> Result<Self> {
        Ok(AgentContext {
            train_real: dataset.train_real()?,
            train_fake: dataset.train_fake()?,
            dataset,
            models: Mutex::new(HashMap::new()),
        })
    }

    fn memo(&self, key: String, train: impl FnOnce() -> Result<ToyDetectorParams>) -> Result<ToyDetectorParams> {
        if let Some(p) = self.models.lock().unwrap_or_else(|p| p.into_inner()).get(&key) {
            return Ok(p.clone());
        }
        let p = train()?;
        self.models
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(key, p.clone());
        Ok(p)
    }

    /// Plain logistic detector on the training split.
    pub fn plain_model(&self, cfg: &TrainConfig) -> Result<ToyDetectorParams> {
        let key = format!("plain:{}", serde_json::to_string(cfg).expect("serializable"));
        self.memo(key, || Ok(train_toy_detector(&self.train_real, &self.train_fake, cfg)?.params))
    }

    /// Plain detector on a bootstrap resample of the training split.
    pub fn bootstrap_model(&self, cfg: &TrainConfig, seed: u64) -> Result<ToyDetectorParams> {
        let key = format!("bootstrap:{seed}:{}", serde_json::to_string(cfg).expect("serializable"));
        self.memo(key, || {
            let mut rng = stream(seed, &[0x626f_6f74]);
            let mut pick = |set: &ImageSet| -> Vec<ImageBuf> {
                (0..set.len())
                    .map(|_| set.items[rng.random_range(0..set.len())].image.as_ref().clone())
                    .collect()
            };
            let real = pick(&self.train_real);
            let fake = pick(&self.train_fake);
            let (x, y) = super::toy::labelled_features(real.iter(), fake.iter());
            Ok(train_logistic(&x, &y, cfg, &format!("bootstrap {seed}"))?.params)
        })
    }

    pub fn task_mask(&self, id: &FaceSwapId, style: MaskStyle) -> Result<Mask> {
        self.dataset.mask(&id.render(), style)
    }
}

fn default_eps() -> f64 {
    8.0 / 255.0
}

fn default_surrogates() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CreatorSpec {
    /// Submit the dataset's baseline swaps unchanged.
    Copy,
    /// Submit the target frames themselves.
    CopyTarget,
    /// FGSM against a self-trained surrogate detector.
    Fgsm {
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default)]
        mask: Option<MaskStyle>,
        /// Train the surrogate on a bootstrap resample with this seed
        /// instead of the full training split.
        #[serde(default)]
        bootstrap_seed: Option<u64>,
    },
    /// FGSM, then bilateral filtering and blending of the face region back
    /// into the target frame.
    FgsmBlend {
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default)]
        mask: MaskStyle,
        #[serde(default)]
        filter: BilateralConfig,
        #[serde(default)]
        bootstrap_seed: Option<u64>,
    },
    /// Per-image adversarial noise against several bootstrap surrogates.
    AdvNoise {
        #[serde(default = "default_surrogates")]
        surrogates: usize,
        #[serde(default)]
        noise: AdvNoiseConfig,
    },
}

impl CreatorSpec {
    /// Write one PNG per task into `out`.
    pub fn create(&self, ctx: &AgentContext, tasks: &SwapTaskList, out: &Path, seed: u64) -> Result<()> {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let baseline_dir = ctx.dataset.baseline_dir();
        let entries = tasks.entries();
        let load = |id: &FaceSwapId| ImageBuf::load_png(&baseline_dir.join(id.render()));
        let save = |id: &FaceSwapId, img: &ImageBuf| img.save_png(&out.join(id.render()));
        let surrogate = |bootstrap: &Option<u64>| -> Result<ToyDetector> {
            let cfg = TrainConfig::default();
            let params = match bootstrap {
                Some(s) => ctx.bootstrap_model(&cfg, *s)?,
                None => ctx.plain_model(&cfg)?,
            };
            ToyDetector::new("surrogate", params)
        };
        match self {
            CreatorSpec::Copy => entries.par_iter().try_for_each(|id| {
                let name = id.render();
                std::fs::copy(baseline_dir.join(&name), out.join(&name))
                    .map(|_| ())
                    .map_err(|e| Error::io(baseline_dir.join(&name), e))
            }),
            CreatorSpec::CopyTarget => entries.par_iter().try_for_each(|id| save(id, tasks.target(id))),
            CreatorSpec::Fgsm {
                eps,
                mask,
                bootstrap_seed,
            } => {
                let d = surrogate(bootstrap_seed)?;
                entries.par_iter().try_for_each(|id| {
                    let m = mask.map(|style| ctx.task_mask(id, style)).transpose()?;
                    save(id, &fgsm_attack(&load(id)?, &d, *eps, m.as_ref())?)
                })
            }
            CreatorSpec::FgsmBlend {
                eps,
                mask,
                filter,
                bootstrap_seed,
            } => {
                let d = surrogate(bootstrap_seed)?;
                entries.par_iter().try_for_each(|id| {
                    let m = ctx.task_mask(id, *mask)?;
                    let attacked = fgsm_attack(&load(id)?, &d, *eps, None)?;
                    save(id, &blend_postprocess(&attacked, tasks.target(id), &m, Some(filter))?)
                })
            }
            CreatorSpec::AdvNoise { surrogates, noise } => {
                let cfg = TrainConfig::default();
                let detectors = (0..*surrogates)
                    .map(|k| ToyDetector::new(format!("c{k}"), ctx.bootstrap_model(&cfg, derive_seed(seed, &[k as u64]))?))
                    .collect::<Result<Vec<_>>>()?;
                let fakes = entries.iter().map(load).collect::<Result<Vec<_>>>()?;
                let masks = entries
                    .iter()
                    .map(|id| ctx.task_mask(id, MaskStyle::Full))
                    .collect::<Result<Vec<_>>>()?;
                let reals: Vec<ImageBuf> = ctx.train_real.images().cloned().collect();
                let report = adv_noise_train(&fakes, &reals, &detectors, Some(&masks), noise)?;
                entries
                    .par_iter()
                    .zip(&report.fields)
                    .zip(&fakes)
                    .try_for_each(|((id, field), img)| save(id, &field.apply(img)))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DetectorSpec {
    Constant {
        #[serde(default = "half")]
        value: f64,
    },
    /// Logistic model on the training split.
    Plain {
        #[serde(default)]
        train: TrainConfig,
    },
    /// Logistic model trained with FGSM-augmented fakes.
    Augmented {
        #[serde(default)]
        augment: AugmentConfig,
    },
    /// Logistic model trained with blend-augmented fakes.
    BlendAugmented {
        #[serde(default)]
        train: TrainConfig,
        #[serde(default)]
        seed: u64,
    },
    /// Previously trained parameters stored as JSON.
    Params { path: PathBuf },
    External(ExternalConfig),
}

fn half() -> f64 {
    0.5
}

impl DetectorSpec {
    /// Parse the compact command-line form: `const:0.5`, `plain`,
    /// `augmented`, `blend`, `toy:params.json` or `ext:command arg...`.
    pub fn parse_compact(s: &str) -> Result<Self> {
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        Ok(match head {
            "const" => DetectorSpec::Constant {
                value: if rest.is_empty() {
                    0.5
                } else {
                    rest.parse()
                        .map_err(|_| Error::Parameter(format!("bad constant in detector spec {s:?}")))?
                },
            },
            "plain" => DetectorSpec::Plain {
                train: TrainConfig::default(),
            },
            "augmented" => DetectorSpec::Augmented {
                augment: AugmentConfig::default(),
            },
            "blend" => DetectorSpec::BlendAugmented {
                train: TrainConfig::default(),
                seed: 0,
            },
            "toy" if !rest.is_empty() => DetectorSpec::Params { path: rest.into() },
            "ext" if !rest.is_empty() => {
                let mut parts = rest.split_whitespace().map(str::to_string);
                DetectorSpec::External(ExternalConfig {
                    command: parts.next().unwrap_or_default(),
                    args: parts.collect(),
                    ..ExternalConfig::default()
                })
            }
            _ => return Err(Error::Parameter(format!("unknown detector spec {s:?}"))),
        })
    }

    pub fn needs_dataset(&self) -> bool {
        matches!(
            self,
            DetectorSpec::Plain { .. } | DetectorSpec::Augmented { .. } | DetectorSpec::BlendAugmented { .. }
        )
    }

    /// The trained parameters behind a toy-model spec, if any.
    pub fn toy_params(&self, ctx: Option<&AgentContext>) -> Result<Option<ToyDetectorParams>> {
        let need = || ctx.ok_or_else(|| Error::Parameter("training a detector needs a dataset".into()));
        Ok(match self {
            DetectorSpec::Constant { .. } | DetectorSpec::External(_) => None,
            DetectorSpec::Params { path } => Some(ToyDetectorParams::load(path)?),
            DetectorSpec::Plain { train } => Some(need()?.plain_model(train)?),
            DetectorSpec::Augmented { augment } => {
                let ctx = need()?;
                let key = format!("augmented:{}", serde_json::to_string(augment).expect("serializable"));
                Some(ctx.memo(key, || Ok(train_adversarial(&ctx.train_real, &ctx.train_fake, augment)?.params))?)
            }
            DetectorSpec::BlendAugmented { train, seed } => {
                let ctx = need()?;
                let key = format!("blend:{seed}:{}", serde_json::to_string(train).expect("serializable"));
                Some(ctx.memo(key, || {
                    let masks = ctx
                        .train_fake
                        .items
                        .iter()
                        .map(|it| ctx.dataset.mask(&it.name, MaskStyle::Full))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(train_blend_augmented(&ctx.train_real, &ctx.train_fake, &masks, *seed, train)?.params)
                })?)
            }
        })
    }

    pub fn build(&self, id: &str, ctx: Option<&AgentContext>) -> Result<DetectorHandle> {
        Ok(match self {
            DetectorSpec::Constant { value } => Arc::new(ConstantDetector::new(id, *value)),
            DetectorSpec::External(cfg) => Arc::new(ExternalDetector::spawn(id, cfg.clone())?),
            _ => Arc::new(ToyDetector::new(id, self.toy_params(ctx)?.expect("toy spec"))?),
        })
    }
}
