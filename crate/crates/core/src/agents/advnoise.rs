use rand::Rng;
use serde::{Deserialize, Serialize};

use super::detector::{Detector, WhiteBox};
use super::toy::{features_field, sigmoid, ToyDetector, ToyDetectorParams};
use crate::imgmetrics::{ImageBuf, Mask, RgbField};
use crate::rng::stream;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdvNoiseConfig {
    pub iters: usize,
    pub step: f64,
    pub lambda_reg: f64,
    /// Bound on |delta| per sample.
    pub budget: f64,
    pub update_discriminators: bool,
    pub disc_step: f64,
    /// Half-width of the uniform initial perturbation (0 = start at zero).
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for AdvNoiseConfig {
    fn default() -> Self {
        AdvNoiseConfig {
            iters: 50,
            step: 0.05,
            lambda_reg: 0.01,
            budget: 8.0 / 255.0,
            update_discriminators: false,
            disc_step: 0.05,
            init_scale: 0.0,
            seed: 0,
        }
    }
}

/// Additive perturbation restricted to a mask: `Y_a = clamp(Y + delta * mask)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationField {
    pub width: usize,
    pub height: usize,
    pub delta: Vec<f64>,
    pub mask: Mask,
}

impl PerturbationField {
    pub fn max_abs(&self) -> f64 {
        self.delta.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn apply_field(&self, base: &RgbField) -> RgbField {
        let mut out = base.clone();
        for (i, v) in out.data.iter_mut().enumerate() {
            let d = self.delta[i] * self.mask.data[i / 3];
            if d != 0.0 {
                *v = (*v + d).clamp(0.0, 1.0);
            }
        }
        out
    }

    pub fn apply(&self, img: &ImageBuf) -> ImageBuf {
        self.apply_field(&img.to_field()).quantize()
    }
}

#[derive(Clone, Debug)]
pub struct AdvNoiseReport {
    pub fields: Vec<PerturbationField>,
    /// Mean over images of sum_i [log D_i(Y_a) + log C_i(Y_a)], before each
    /// update and after the last one.
    pub loss_trace: Vec<f64>,
    /// The same plus the regularizer lambda * |delta|^2.
    pub objective_trace: Vec<f64>,
    /// Final state of the evolving discriminators D_i.
    pub discriminators: Vec<ToyDetectorParams>,
}

fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

/// Per-image adversarial noise against frozen white-box detectors C_i and
/// evolving copies D_i, minimizing
/// `sum_i log D_i(Y_a) + log C_i(Y_a) + lambda * |delta|^2`
/// (D and C output fake-probabilities) by proximal gradient steps with
/// projection onto the budget box. With `update_discriminators`, each D_i
/// takes one descent step per iteration on
/// `mean log D_i(X) + mean log(1 - D_i(Y_a))` over the reals X.
pub fn adv_noise_train(
    fakes: &[ImageBuf],
    reals: &[ImageBuf],
    detectors: &[ToyDetector],
    masks: Option<&[Mask]>,
    cfg: &AdvNoiseConfig,
) -> Result<AdvNoiseReport> {
    if detectors.is_empty() {
        return Err(Error::Parameter("adversarial noise needs at least one detector".into()));
    }
    if fakes.is_empty() {
        return Err(Error::Parameter("no images to perturb".into()));
    }
    if !(cfg.step > 0.0) || !(cfg.lambda_reg >= 0.0) || !(cfg.budget >= 0.0) {
        return Err(Error::Parameter(format!("invalid adversarial-noise config {cfg:?}")));
    }
    if cfg.update_discriminators && reals.is_empty() {
        return Err(Error::Parameter("updating discriminators needs real images".into()));
    }
    let masks: Vec<Mask> = match masks {
        Some(m) if m.len() != fakes.len() => {
            return Err(Error::Parameter(format!("{} masks for {} images", m.len(), fakes.len())))
        }
        Some(m) => {
            for (mask, img) in m.iter().zip(fakes) {
                mask.check_dims(img.dims(), "perturbation mask")?;
            }
            m.to_vec()
        }
        None => fakes.iter().map(|f| Mask::filled(f.width(), f.height(), 1.0)).collect(),
    };
    let bases: Vec<RgbField> = fakes.iter().map(ImageBuf::to_field).collect();
    let mut rng = stream(cfg.seed, &[0x6164_76]);
    let mut deltas: Vec<Vec<f64>> = bases
        .iter()
        .zip(&masks)
        .map(|(b, m)| {
            (0..b.data.len())
                .map(|i| {
                    if cfg.init_scale > 0.0 && m.data[i / 3] > 0.0 {
                        rng.random_range(-cfg.init_scale..=cfg.init_scale).clamp(-cfg.budget, cfg.budget)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let frozen: Vec<&ToyDetector> = detectors.iter().collect();
    let mut evolving: Vec<ToyDetector> = detectors.to_vec();
    let real_phi: Vec<Vec<f64>> = reals.iter().map(|r| features_field(&r.to_field())).collect();

    let field = |k: usize, deltas: &[Vec<f64>]| -> RgbField {
        PerturbationField {
            width: bases[k].width,
            height: bases[k].height,
            delta: deltas[k].clone(),
            mask: masks[k].clone(),
        }
        .apply_field(&bases[k])
    };

    let n = fakes.len() as f64;
    let mut loss_trace = Vec::with_capacity(cfg.iters + 1);
    let mut objective_trace = Vec::with_capacity(cfg.iters + 1);
    for t in 0..=cfg.iters {
        let ya: Vec<RgbField> = (0..fakes.len()).map(|k| field(k, &deltas)).collect();
        let mut loss = 0.0;
        let mut reg = 0.0;
        for (k, y) in ya.iter().enumerate() {
            for (d, c) in evolving.iter().zip(&frozen) {
                loss += log_sigmoid(WhiteBox::logit(d, y)) + log_sigmoid(WhiteBox::logit(*c, y));
            }
            reg += deltas[k].iter().map(|v| v * v).sum::<f64>();
        }
        let loss = loss / n;
        let objective = loss + cfg.lambda_reg * reg / n;
        if !objective.is_finite() || objective_trace.first().is_some_and(|&f0: &f64| objective - f0 > 10.0 * f0.abs()) {
            return Err(Error::Divergence(format!(
                "adversarial-noise objective went from {:?} to {objective} at iteration {t}",
                objective_trace.first()
            )));
        }
        loss_trace.push(loss);
        objective_trace.push(objective);
        if t == cfg.iters {
            break;
        }

        let shrink = 1.0 / (1.0 + 2.0 * cfg.step * cfg.lambda_reg);
        for (k, y) in ya.iter().enumerate() {
            let mut grad = vec![0.0; y.data.len()];
            for net in evolving.iter().chain(frozen.iter().copied()) {
                let a = 1.0 - sigmoid(WhiteBox::logit(net, y));
                for (g, v) in grad.iter_mut().zip(&net.gradient(y).data) {
                    *g += a * v;
                }
            }
            let base = &bases[k].data;
            for (i, d) in deltas[k].iter_mut().enumerate() {
                let m = masks[k].data[i / 3];
                if m == 0.0 {
                    continue;
                }
                // Saturated pixels pass no gradient through the clamp.
                let raw = base[i] + *d * m;
                let g = if (0.0..=1.0).contains(&raw) { grad[i] * m } else { 0.0 };
                *d = ((*d - cfg.step * g) * shrink).clamp(-cfg.budget, cfg.budget);
            }
        }

        if cfg.update_discriminators {
            let fake_phi: Vec<Vec<f64>> = ya.iter().map(features_field).collect();
            for d in evolving.iter_mut() {
                let p = d.params().clone();
                let mut gw = vec![0.0; p.weights.len()];
                let mut gb = 0.0;
                for x in &real_phi {
                    let a = (1.0 - sigmoid(p.logit_features(x))) / real_phi.len() as f64;
                    gw.iter_mut().zip(x).for_each(|(g, v)| *g += a * v);
                    gb += a;
                }
                for x in &fake_phi {
                    let a = -sigmoid(p.logit_features(x)) / fake_phi.len() as f64;
                    gw.iter_mut().zip(x).for_each(|(g, v)| *g += a * v);
                    gb += a;
                }
                let next = ToyDetectorParams {
                    weights: p.weights.iter().zip(&gw).map(|(w, g)| w - cfg.disc_step * g).collect(),
                    bias: p.bias - cfg.disc_step * gb,
                    trained_on: p.trained_on,
                };
                *d = ToyDetector::new(d.id().to_string(), next)?;
            }
        }
    }
    let fields = deltas
        .into_iter()
        .zip(masks)
        .zip(&bases)
        .map(|((delta, mask), b)| PerturbationField {
            width: b.width,
            height: b.height,
            delta,
            mask,
        })
        .collect();
    Ok(AdvNoiseReport {
        fields,
        loss_trace,
        objective_trace,
        discriminators: evolving.iter().map(|d| d.params().clone()).collect(),
    })
}
