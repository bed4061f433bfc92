//! Creator and detector agents: the toy white-box detector and its
//! training recipes, FGSM, the adversarial-noise trainer, mask blending,
//! multi-class aggregation and the external-process detector adapter.

mod advnoise;
mod attack;
mod blend;
mod defense;
mod detector;
mod external;
mod multiclass;
mod roster;
mod toy;

pub use advnoise::{adv_noise_train, AdvNoiseConfig, AdvNoiseReport, PerturbationField};
pub use attack::{fgsm_attack, fgsm_field};
pub use blend::{blend_augment, blend_postprocess, deform_mask, BlendAugmented};
pub use defense::{train_adversarial, train_blend_augmented, AugmentConfig};
pub use detector::{score_checked, ConstantDetector, Detector, DetectorHandle, FnDetector, WhiteBox};
pub use external::{ExternalConfig, ExternalDetector, HANDSHAKE};
pub use multiclass::aggregate_multiclass;
pub use roster::{AgentContext, CreatorSpec, DetectorSpec};
pub use toy::{
    features, features_field, train_logistic, train_toy_detector, ToyDetector, ToyDetectorParams, TrainConfig, TrainReport,
    FEATURE_SIDE, N_FEATURES,
};
