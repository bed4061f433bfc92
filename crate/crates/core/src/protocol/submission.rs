use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{FaceSwapId, SwapTaskList};
use crate::game::PhaseId;
use crate::imgmetrics::ImageBuf;
use crate::{Error, Result};

/// A validated creation submission: one image per task, in task order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmissionManifest {
    pub team: String,
    pub phase: PhaseId,
    pub dir: PathBuf,
    pub images: Vec<(FaceSwapId, PathBuf)>,
    /// SHA-256 (hex) over every image's name, size and pixels, in task order.
    pub checksum: String,
}

/// The exported manifest record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestSummary {
    pub team: String,
    pub phase: PhaseId,
    pub n: usize,
    pub checksum: String,
}

impl SubmissionManifest {
    pub fn summary(&self) -> ManifestSummary {
        ManifestSummary {
            team: self.team.clone(),
            phase: self.phase,
            n: self.images.len(),
            checksum: self.checksum.clone(),
        }
    }

    /// The same manifest with paths made relative to `root` where they lie
    /// under it.
    pub fn relative_to(&self, root: &Path) -> Self {
        let rel = |p: &PathBuf| p.strip_prefix(root).map(Path::to_path_buf).unwrap_or_else(|_| p.clone());
        SubmissionManifest {
            dir: rel(&self.dir),
            images: self.images.iter().map(|(id, p)| (id.clone(), rel(p))).collect(),
            ..self.clone()
        }
    }

    /// The same manifest with relative paths resolved against `root`.
    pub fn resolved(&self, root: &Path) -> Self {
        let abs = |p: &PathBuf| if p.is_absolute() { p.clone() } else { root.join(p) };
        SubmissionManifest {
            dir: abs(&self.dir),
            images: self.images.iter().map(|(id, p)| (id.clone(), abs(p))).collect(),
            ..self.clone()
        }
    }

    /// Decode all images in task order; the first failure names its task.
    pub fn load_images(&self) -> Result<Vec<ImageBuf>> {
        self.images
            .par_iter()
            .map(|(id, path)| {
                ImageBuf::load_png(path).map_err(|e| Error::Image {
                    name: id.render(),
                    reason: e.to_string(),
                })
            })
            .collect()
    }

    /// Recompute the checksum from disk and compare with the stored one.
    pub fn verify(&self) -> Result<Vec<ImageBuf>> {
        let images = self.load_images()?;
        let found = digest_entries(self.images.iter().map(|(id, _)| id).zip(&images));
        if found != self.checksum {
            return Err(Error::Tamper {
                submission: format!("{}/{}", self.team, self.phase),
                expected: self.checksum.clone(),
                found,
            });
        }
        Ok(images)
    }
}

fn hash_image(h: &mut Sha256, name: &str, img: &ImageBuf) {
    h.update(name.as_bytes());
    h.update([0u8]);
    h.update((img.width() as u32).to_le_bytes());
    h.update((img.height() as u32).to_le_bytes());
    h.update(img.data());
}

fn digest_entries<'a>(entries: impl Iterator<Item = (&'a FaceSwapId, &'a ImageBuf)>) -> String {
    let mut h = Sha256::new();
    for (id, img) in entries {
        hash_image(&mut h, &id.render(), img);
    }
    hex::encode(h.finalize())
}

/// Digest of a set of named images, in the given order.
pub fn pixel_digest<'a>(items: impl Iterator<Item = (&'a str, &'a ImageBuf)>) -> String {
    let mut h = Sha256::new();
    for (name, img) in items {
        hash_image(&mut h, name, img);
    }
    hex::encode(h.finalize())
}

/// Check that `dir` holds exactly one decodable PNG per task, each the
/// size of its target, and build the manifest.
pub fn validate_submission(dir: &Path, tasks: &SwapTaskList, team: &str, phase: PhaseId) -> Result<SubmissionManifest> {
    let mut found: BTreeMap<FaceSwapId, PathBuf> = BTreeMap::new();
    let mut extra = Vec::new();
    let wanted: BTreeSet<&FaceSwapId> = tasks.entries().iter().collect();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let path = entry.path();
        match FaceSwapId::parse(&name) {
            Ok(id) if path.is_file() && wanted.contains(&id) && !found.contains_key(&id) => {
                found.insert(id, path);
            }
            _ => extra.push(name),
        }
    }
    let missing: Vec<String> = tasks
        .entries()
        .iter()
        .filter(|e| !found.contains_key(*e))
        .map(FaceSwapId::render)
        .collect();
    if !missing.is_empty() {
        return Err(Error::Coverage { missing });
    }
    if !extra.is_empty() {
        extra.sort();
        return Err(Error::Extraneous { files: extra });
    }

    let images: Vec<(FaceSwapId, PathBuf)> = tasks
        .entries()
        .iter()
        .map(|id| (id.clone(), found.remove(id).expect("coverage checked")))
        .collect();
    let decoded = images
        .par_iter()
        .map(|(id, path)| {
            let img = ImageBuf::load_png(path).map_err(|e| Error::Image {
                name: id.render(),
                reason: e.to_string(),
            })?;
            let target = tasks.target(id);
            if img.dims() != target.dims() {
                return Err(Error::Shape {
                    context: id.render(),
                    expected: target.dims(),
                    found: img.dims(),
                });
            }
            Ok(img)
        })
        .collect::<Result<Vec<_>>>()?;
    let checksum = digest_entries(images.iter().map(|(id, _)| id).zip(&decoded));
    Ok(SubmissionManifest {
        team: team.to_string(),
        phase,
        dir: dir.to_path_buf(),
        images,
        checksum,
    })
}
