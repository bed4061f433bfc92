//! Core of the face-swap creation/detection game: image metrics, rank
//! statistics, identity embeddings, the dataset protocol, scoring, baseline
//! agents and the phase engine.

pub mod agents;
pub mod error;
pub mod game;
pub mod identity;
pub mod imgmetrics;
pub mod protocol;
pub mod rng;
pub mod rocstats;
pub mod scoring;

pub use error::{Error, Result};
pub use imgmetrics::{ImageBuf, Mask, Plane, RgbField};
