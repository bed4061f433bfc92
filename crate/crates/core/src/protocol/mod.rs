//! Dataset contract: the file naming grammar, task lists, submission
//! validation and the synthetic desk-scale dataset generator.

mod images;
mod naming;
mod submission;
mod synth;
mod tasks;

pub use images::{ImageItem, ImageSet};
pub use naming::{FaceSwapId, RealFrameId};
pub use submission::{pixel_digest, validate_submission, ManifestSummary, SubmissionManifest};
pub use synth::{gen_synthetic, Dataset, DatasetMeta, SynthConfig};
pub use tasks::SwapTaskList;
