use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::imgmetrics::ImageBuf;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct ImageItem {
    pub name: String,
    /// On-disk location when the image came from (or was written to) a file.
    pub path: Option<PathBuf>,
    pub image: Arc<ImageBuf>,
}

/// A named, ordered collection of images (a real set or one fake dataset).
#[derive(Clone, Debug, Default)]
pub struct ImageSet {
    pub label: String,
    pub items: Vec<ImageItem>,
}

impl ImageSet {
    pub fn new(label: impl Into<String>) -> Self {
        ImageSet {
            label: label.into(),
            items: Vec::new(),
        }
    }

    pub fn from_images(label: impl Into<String>, images: impl IntoIterator<Item = (String, ImageBuf)>) -> Self {
        ImageSet {
            label: label.into(),
            items: images
                .into_iter()
                .map(|(name, img)| ImageItem {
                    name,
                    path: None,
                    image: Arc::new(img),
                })
                .collect(),
        }
    }

    /// Load the given files (decoded in parallel, kept in the given order).
    pub fn load_files(label: impl Into<String>, paths: &[PathBuf]) -> Result<Self> {
        let items = paths
            .par_iter()
            .map(|p| {
                Ok(ImageItem {
                    name: p.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
                    image: Arc::new(ImageBuf::load_png(p)?),
                    path: Some(p.clone()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ImageSet {
            label: label.into(),
            items,
        })
    }

    /// All `*.png` files of a directory, sorted by file name.
    pub fn load_dir(label: impl Into<String>, dir: &Path) -> Result<Self> {
        Self::load_files(label, &png_files(dir)?)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn images(&self) -> impl Iterator<Item = &ImageBuf> {
        self.items.iter().map(|i| i.image.as_ref())
    }

    pub fn push(&mut self, name: impl Into<String>, image: ImageBuf) {
        self.items.push(ImageItem {
            name: name.into(),
            path: None,
            image: Arc::new(image),
        });
    }
}

pub(crate) fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "png") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}
