use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::attack::fgsm_attack;
use super::blend::blend_augment;
use super::toy::{features, labelled_features, train_logistic, ToyDetector, TrainConfig, TrainReport};
use crate::imgmetrics::{ImageBuf, Mask};
use crate::protocol::ImageSet;
use crate::rng::{derive_seed, stream};
use crate::{Error, Result};

/// Adversarial-augmentation recipe: FGSM examples from bootstrap
/// surrogates, then a few rounds of attacking the model being trained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub eps_train: f64,
    pub surrogates: usize,
    pub rounds: usize,
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            eps_train: 12.0 / 255.0,
            surrogates: 3,
            rounds: 2,
            seed: 0,
            train: TrainConfig::default(),
        }
    }
}

fn attacked_features(fakes: &[&ImageBuf], detector: &ToyDetector, eps: f64) -> Result<Vec<Vec<f64>>> {
    fakes
        .par_iter()
        .map(|img| Ok(features(&fgsm_attack(img, detector, eps, None)?)))
        .collect()
}

/// Train on reals vs fakes plus FGSM-attacked copies of the fakes.
pub fn train_adversarial(real: &ImageSet, fake: &ImageSet, cfg: &AugmentConfig) -> Result<TrainReport> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::Parameter("training needs both real and fake images".into()));
    }
    let reals: Vec<&ImageBuf> = real.images().collect();
    let fakes: Vec<&ImageBuf> = fake.images().collect();
    let (mut x, mut y) = labelled_features(reals.iter().copied(), fakes.iter().copied());
    let n_real = reals.len();
    let mut rng = stream(cfg.seed, &[0x6175_67]);
    let tag = format!("{} vs {} + fgsm", real.label, fake.label);

    for k in 0..cfg.surrogates {
        let ri: Vec<usize> = (0..n_real).map(|_| rng.random_range(0..n_real)).collect();
        let fi: Vec<usize> = (0..fakes.len()).map(|_| n_real + rng.random_range(0..fakes.len())).collect();
        let bx: Vec<Vec<f64>> = ri.iter().chain(&fi).map(|&i| x[i].clone()).collect();
        let by: Vec<f64> = ri.iter().chain(&fi).map(|&i| y[i]).collect();
        let tc = TrainConfig {
            seed: derive_seed(cfg.seed, &[k as u64]),
            ..cfg.train.clone()
        };
        let surrogate = ToyDetector::new("surrogate", train_logistic(&bx, &by, &tc, &tag)?.params)?;
        for f in attacked_features(&fakes, &surrogate, cfg.eps_train)? {
            x.push(f);
            y.push(1.0);
        }
    }
    for _ in 0..cfg.rounds {
        let current = ToyDetector::new("current", train_logistic(&x, &y, &cfg.train, &tag)?.params)?;
        for f in attacked_features(&fakes, &current, cfg.eps_train)? {
            x.push(f);
            y.push(1.0);
        }
    }
    train_logistic(&x, &y, &cfg.train, &tag)
}

/// Train on reals vs fakes plus blend-augmented fakes: every training fake's
/// face region pasted onto a randomly chosen real background.
pub fn train_blend_augmented(real: &ImageSet, fake: &ImageSet, fake_masks: &[Mask], seed: u64, train: &TrainConfig) -> Result<TrainReport> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::Parameter("training needs both real and fake images".into()));
    }
    if fake_masks.len() != fake.len() {
        return Err(Error::Parameter(format!("{} masks for {} fakes", fake_masks.len(), fake.len())));
    }
    let reals: Vec<&ImageBuf> = real.images().collect();
    let mut rng = stream(seed, &[0x626c_6e64]);
    let picks: Vec<usize> = (0..fake.len()).map(|_| rng.random_range(0..reals.len())).collect();
    let blended = fake
        .images()
        .zip(fake_masks)
        .zip(&picks)
        .enumerate()
        .map(|(k, ((f, m), &j))| blend_augment(f, reals[j], m, derive_seed(seed, &[k as u64])))
        .collect::<Result<Vec<_>>>()?;
    let extra: Vec<&ImageBuf> = blended.iter().filter(|b| !b.degenerate).map(|b| &b.image).collect();
    let (x, y) = labelled_features(reals.iter().copied(), fake.images().chain(extra));
    train_logistic(&x, &y, train, &format!("{} vs {} + blends", real.label, fake.label))
}
